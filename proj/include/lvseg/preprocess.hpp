#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "lvseg/volume.hpp"

namespace lvseg {

// Pre-processing: polynomial bias-field correction followed by decile
// landmark standardization onto the fixed [0, 1023] scale. Order matters and
// is part of the contract: correct first, standardize second.

// Degree-2 trivariate polynomial over normalized coordinates in [-1, 1]^3.
// Monomial order: 1, x, y, z, x^2, y^2, z^2, xy, xz, yz.
struct BiasModel {
    std::array<double, 10> coeffs{};
    std::size_t shifted_voxels = 0;  // in-brain voxels at <= 0 lifted by +1 for the log fit

    double log_field(double xn, double yn, double zn) const {
        return coeffs[0] + coeffs[1] * xn + coeffs[2] * yn + coeffs[3] * zn +
               coeffs[4] * xn * xn + coeffs[5] * yn * yn + coeffs[6] * zn * zn +
               coeffs[7] * xn * yn + coeffs[8] * xn * zn + coeffs[9] * yn * zn;
    }
};

// Normalized coordinate of voxel index i along an axis of length n.
inline double norm_coord(int i, int n) { return n > 1 ? 2.0 * (i + 0.5) / n - 1.0 : 0.0; }

// Least-squares fit of the degree-2 polynomial to log-intensity over the
// brain. Requires a raw volume and at least 100 brain voxels.
BiasModel estimate_bias(const Volume& v, const BinaryMask& brain);

// Divides in-brain voxels by the fitted field, rescales so the in-brain mean
// is preserved, zeroes everything outside the brain.
Volume correct_bias(const Volume& v, const BiasModel& model, const BinaryMask& brain);

// Piecewise-linear decile map. Source landmarks are the empirical in-brain
// deciles; targets are the fixed 11-point grid 0, 102.3, ..., 1023.
struct StandardizationMap {
    std::array<double, 11> source{};
    std::array<double, 11> target{};

    double apply(double v) const;
    std::string to_json() const;
    static StandardizationMap from_json(const std::string& text);
};

StandardizationMap fit_standardization(const Volume& v, const BinaryMask& brain);

Volume apply_standardization(const Volume& v, const StandardizationMap& map, const BinaryMask& brain);

// correct_bias then fit+apply standardization.
Volume preprocess_volume(const Volume& raw, const BinaryMask& brain, StandardizationMap* map_out = nullptr);

// Empirical decile vector (0%..100%) of in-brain intensities; the quantile
// convention shared by fit_standardization and the alignment tests.
std::array<double, 11> in_brain_deciles(const Volume& v, const BinaryMask& brain);

}  // namespace lvseg
