#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lvseg/layers.hpp"
#include "lvseg/tensor.hpp"

namespace lvseg {

// 2D U-Net, two classes (background, ventricle). The encoder halves the
// resolution and doubles the filter count per level via max pooling; the
// decoder mirrors it with 2x2 transposed convolutions and channel-concat
// skip connections. Every conv is 3x3/same followed by batchnorm + ReLU.

struct UNetConfig {
    int levels = 3;       // paper-scale preset uses 5
    int base_filters = 8;  // paper-scale preset uses 64
    int input_h = 96, input_w = 96;
    int in_channels = 1;
    int out_channels = 2;

    void validate() const;
    bool operator==(const UNetConfig&) const = default;
};

struct ConvBlock {
    Conv2d c1, c2;
    BatchNorm2d bn1, bn2;
};

struct ConvBlockCache {
    Tensor x;        // block input
    Tensor c1_out;   // conv1 output (batchnorm input)
    BnCache bn1;
    Tensor r1_in;    // bn1 output (relu input)
    Tensor r1_out;   // relu output = conv2 input
    Tensor c2_out;
    BnCache bn2;
    Tensor r2_in;    // bn2 output (relu input)
};

struct UNetCache {
    Tensor input;
    std::vector<ConvBlockCache> enc;
    std::vector<std::vector<std::int64_t>> pool_argmax;
    std::vector<std::vector<std::size_t>> pool_in_shape;
    ConvBlockCache bottom;
    std::vector<Tensor> up_in;      // decoder tconv inputs
    std::vector<Tensor> concat;     // concatenated decoder inputs
    std::vector<ConvBlockCache> dec;
    Tensor head_in;
    Tensor probs;
};

// Parameter gradients in the exact order of UNet::param_names().
struct UNetGrads {
    std::vector<Tensor> tensors;
};

class UNet {
public:
    UNetConfig cfg;
    std::vector<ConvBlock> enc;   // levels-1 blocks
    ConvBlock bottom;
    std::vector<TConv2d> up;      // levels-1, deepest first
    std::vector<ConvBlock> dec;   // levels-1, deepest first
    Conv2d head;

    static UNet he_init(const UNetConfig& cfg, std::uint64_t seed);

    // Train mode updates batchnorm running statistics and fills the cache
    // for backward; eval mode uses running statistics. Returns per-pixel
    // class probabilities [N, out_channels, H, W].
    Tensor forward(const Tensor& x, bool train, UNetCache* cache);

    // dprobs is dL/dprobs at the softmax output. Returns parameter grads
    // aligned with params().
    UNetGrads backward(const UNetCache& cache, const Tensor& dprobs);

    // Trainable parameters (weights, biases, batchnorm gamma/beta), in a
    // fixed documented order shared with UNetGrads and the checkpoint.
    std::vector<Tensor*> params();
    std::vector<const Tensor*> params() const;
    std::vector<std::string> param_names() const;

    // Batchnorm running statistics (not trained, checkpointed).
    std::vector<Tensor*> buffers();
    std::vector<const Tensor*> buffers() const;
    std::vector<std::string> buffer_names() const;
};

}  // namespace lvseg
