#pragma once

#include <vector>

#include "lvseg/tensor.hpp"

namespace lvseg {

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    std::vector<Tensor> m, v;
    long t = 0;

    static AdamState for_params(const std::vector<Tensor*>& params);
};

// One bias-corrected Adam update over all parameter tensors.
// https://arxiv.org/abs/1412.6980
void adam_step(std::vector<Tensor*>& params, const std::vector<Tensor>& grads, AdamState& state,
               const AdamConfig& cfg);

}  // namespace lvseg
