#pragma once

#include <cstdint>
#include <vector>

#include "lvseg/rng.hpp"
#include "lvseg/tensor.hpp"

namespace lvseg {

// Network layers with explicit forward/backward passes. Conventions:
//   activations are [N, C, H, W]
//   conv: odd square kernel, stride 1, "same" zero padding
//   pool: 2x2 stride 2; transposed conv: 2x2 stride 2 (no output overlap)
// Parallel loops are arranged so every reduction runs in fixed index order
// inside a single task; results are bit-identical for any thread count.

struct Conv2d {
    int in_ch = 0, out_ch = 0, k = 3;
    Tensor w;  // [out_ch, in_ch, k, k]
    Tensor b;  // [out_ch]

    static Conv2d he_init(int in_ch, int out_ch, int k, Rng& rng);
};

Tensor conv2d_fwd(const Conv2d& c, const Tensor& x);
// dx, dw, db are overwritten.
void conv2d_bwd(const Conv2d& c, const Tensor& x, const Tensor& dy, Tensor& dx, Tensor& dw,
                Tensor& db);

// Argmax (flat input index) recorded per output element; ties go to the
// first maximal element in scan order.
Tensor maxpool2x2_fwd(const Tensor& x, std::vector<std::int64_t>& argmax);
Tensor maxpool2x2_bwd(const Tensor& dy, const std::vector<std::int64_t>& argmax,
                      const std::vector<std::size_t>& x_shape);

struct TConv2d {
    int in_ch = 0, out_ch = 0;
    Tensor w;  // [in_ch, out_ch, 2, 2]
    Tensor b;  // [out_ch]

    static TConv2d he_init(int in_ch, int out_ch, Rng& rng);
};

Tensor tconv2x2_fwd(const TConv2d& c, const Tensor& x);
void tconv2x2_bwd(const TConv2d& c, const Tensor& x, const Tensor& dy, Tensor& dx, Tensor& dw,
                  Tensor& db);

struct BatchNorm2d {
    int ch = 0;
    double momentum = 0.9;  // running = momentum * running + (1-momentum) * batch
    double eps = 1e-5;
    Tensor gamma, beta;
    Tensor running_mean, running_var;  // biased batch variance

    static BatchNorm2d init(int ch);
};

struct BnCache {
    std::vector<double> mean, var;  // per channel, train-mode batch stats
    Tensor xhat;
};

// Train mode normalizes with batch statistics and updates the running ones;
// eval mode uses the running statistics and needs no cache.
Tensor batchnorm_fwd(BatchNorm2d& bn, const Tensor& x, bool train, BnCache* cache);
void batchnorm_bwd(const BatchNorm2d& bn, const BnCache& cache, const Tensor& dy, Tensor& dx,
                   Tensor& dgamma, Tensor& dbeta);

Tensor relu_fwd(const Tensor& x);
Tensor relu_bwd(const Tensor& x, const Tensor& dy);

// Softmax over the channel dimension.
Tensor softmax_fwd(const Tensor& logits);
// Given dL/dprobs and the probs, returns dL/dlogits.
Tensor softmax_bwd(const Tensor& probs, const Tensor& dprobs);

// Generalized Dice loss, batch-pooled over N*H*W with per-class weights
// w_l = 1 / (sum_i r_li + eps)^2, eps = 1e-6:
//   GDL = 1 - 2 (sum_l w_l sum_i r_li p_li) / (sum_l w_l sum_i (r_li + p_li))
// target must be one-hot. Returns the loss and fills dprobs.
double generalized_dice_loss(const Tensor& probs, const Tensor& target, Tensor* dprobs);

}  // namespace lvseg
