#pragma once

#include <string>
#include <vector>

#include "lvseg/unet.hpp"

namespace lvseg {

// Checkpoint file: one JSON manifest line (config, epoch, loss history,
// tensor names + shapes), '\n', then raw little-endian float64 payloads
// concatenated in manifest order. Round trips are bit-exact.

struct ModelCheckpoint {
    UNetConfig config;
    int epoch = 0;                  // epoch the weights were taken from
    int stopped_epoch = 0;          // last epoch run (early stopping included)
    std::vector<double> train_loss_history;
    std::vector<double> val_loss_history;

    UNet model;  // weights + batchnorm statistics
};

void save_checkpoint(const ModelCheckpoint& ckpt, const std::string& path);
ModelCheckpoint load_checkpoint(const std::string& path);

}  // namespace lvseg
