#pragma once

#include <cstdint>
#include <vector>

#include "lvseg/rng.hpp"

namespace lvseg {

// Per-sample 2D affine augmentation about the slice center: rotation,
// scaling, shearing, translation. The image is resampled bilinearly, the
// mask with nearest neighbor (it stays strictly binary); out-of-frame
// samples are zero / background.
struct AugmentConfig {
    double rotate_deg = 10.0;       // +- range
    double scale_lo = 0.9, scale_hi = 1.1;
    double shear_deg = 5.0;         // +- range
    double translate_frac = 0.05;   // +- range, fraction of each dimension
    double probability = 0.5;       // chance a given sample is transformed
};

struct SlicePair {
    int h = 0, w = 0;
    std::vector<double> image;        // h*w row-major
    std::vector<std::uint8_t> mask;   // h*w, 0/1
};

SlicePair augment_pair(const SlicePair& in, const AugmentConfig& cfg, Rng& rng);

// The deterministic transform core, exposed for tests: applies the affine
// map with the given parameters instead of sampled ones.
SlicePair apply_affine(const SlicePair& in, double rot_deg, double scale, double shear_deg,
                       double tx_px, double ty_px);

}  // namespace lvseg
