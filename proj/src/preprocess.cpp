#include "lvseg/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "json.hpp"

namespace lvseg {

namespace {

void require_congruent(const Volume& v, const BinaryMask& brain) {
    if (v.nx != brain.nx || v.ny != brain.ny || v.nz != brain.nz)
        throw std::runtime_error("volume/brain grid mismatch");
}

// Solves the symmetric 10x10 normal equations by Gaussian elimination with
// partial pivoting; near-zero pivots signal a degenerate fit support.
std::array<double, 10> solve10(std::array<std::array<double, 10>, 10> a, std::array<double, 10> b) {
    constexpr int n = 10;
    for (int col = 0; col < n; ++col) {
        int piv = col;
        for (int r = col + 1; r < n; ++r)
            if (std::abs(a[r][col]) > std::abs(a[piv][col])) piv = r;
        if (std::abs(a[piv][col]) < 1e-12)
            throw std::runtime_error("degenerate normal equations: insufficient support");
        std::swap(a[col], a[piv]);
        std::swap(b[col], b[piv]);
        for (int r = col + 1; r < n; ++r) {
            const double f = a[r][col] / a[col][col];
            for (int c = col; c < n; ++c) a[r][c] -= f * a[col][c];
            b[r] -= f * b[col];
        }
    }
    std::array<double, 10> x{};
    for (int r = n - 1; r >= 0; --r) {
        double s = b[r];
        for (int c = r + 1; c < n; ++c) s -= a[r][c] * x[c];
        x[r] = s / a[r][r];
    }
    return x;
}

void monomials(double xn, double yn, double zn, double* m) {
    m[0] = 1.0;
    m[1] = xn; m[2] = yn; m[3] = zn;
    m[4] = xn * xn; m[5] = yn * yn; m[6] = zn * zn;
    m[7] = xn * yn; m[8] = xn * zn; m[9] = yn * zn;
}

}  // namespace

BiasModel estimate_bias(const Volume& v, const BinaryMask& brain) {
    require_congruent(v, brain);
    if (v.intensity_state != IntensityState::raw)
        throw std::runtime_error("estimate_bias expects a raw volume");
    if (brain.count() < 100) throw std::runtime_error("insufficient support: brain mask below 100 voxels");

    std::array<std::array<double, 10>, 10> ata{};
    std::array<double, 10> atb{};
    double m[10];
    BiasModel model;
    for (int k = 0; k < v.nz; ++k) {
        const double zn = norm_coord(k, v.nz);
        for (int j = 0; j < v.ny; ++j) {
            const double yn = norm_coord(j, v.ny);
            for (int i = 0; i < v.nx; ++i) {
                if (!brain.at(i, j, k)) continue;
                double val = v.at(i, j, k);
                if (val <= 0.0) {
                    val += 1.0;
                    ++model.shifted_voxels;
                    if (val <= 0.0) throw std::runtime_error("in-brain intensity below -1");
                }
                monomials(norm_coord(i, v.nx), yn, zn, m);
                const double y = std::log(val);
                for (int r = 0; r < 10; ++r) {
                    atb[r] += m[r] * y;
                    for (int c = r; c < 10; ++c) ata[r][c] += m[r] * m[c];
                }
            }
        }
    }
    for (int r = 0; r < 10; ++r)
        for (int c = 0; c < r; ++c) ata[r][c] = ata[c][r];
    model.coeffs = solve10(ata, atb);
    return model;
}

Volume correct_bias(const Volume& v, const BiasModel& model, const BinaryMask& brain) {
    require_congruent(v, brain);
    Volume out = v;
    out.intensity_state = IntensityState::bias_corrected;

    double sum_in = 0.0, sum_corr = 0.0;
    std::vector<double> corrected(v.size(), 0.0);
    for (int k = 0; k < v.nz; ++k) {
        const double zn = norm_coord(k, v.nz);
        for (int j = 0; j < v.ny; ++j) {
            const double yn = norm_coord(j, v.ny);
            for (int i = 0; i < v.nx; ++i) {
                const std::size_t q = v.index(i, j, k);
                if (!brain.bits[q]) continue;
                const double field = std::exp(model.log_field(norm_coord(i, v.nx), yn, zn));
                if (!(field > 0.0) || !std::isfinite(field))
                    throw std::runtime_error("bias field not strictly positive over brain");
                corrected[q] = v.voxels[q] / field;
                sum_in += v.voxels[q];
                sum_corr += corrected[q];
            }
        }
    }
    const double scale = sum_corr != 0.0 ? sum_in / sum_corr : 1.0;
    for (std::size_t q = 0; q < out.voxels.size(); ++q)
        out.voxels[q] = brain.bits[q] ? static_cast<float>(corrected[q] * scale) : 0.0f;
    return out;
}

std::array<double, 11> in_brain_deciles(const Volume& v, const BinaryMask& brain) {
    require_congruent(v, brain);
    std::vector<double> vals;
    vals.reserve(brain.count());
    for (std::size_t q = 0; q < v.voxels.size(); ++q)
        if (brain.bits[q]) vals.push_back(v.voxels[q]);
    if (vals.size() < 11) throw std::runtime_error("degenerate histogram: fewer than 11 in-brain voxels");
    std::sort(vals.begin(), vals.end());
    std::array<double, 11> d{};
    for (int i = 0; i <= 10; ++i) {
        // linear-interpolation quantile at p = i/10
        const double pos = (vals.size() - 1) * (i / 10.0);
        const std::size_t lo = static_cast<std::size_t>(pos);
        const double frac = pos - static_cast<double>(lo);
        d[i] = lo + 1 < vals.size() ? vals[lo] * (1.0 - frac) + vals[lo + 1] * frac : vals[lo];
    }
    return d;
}

StandardizationMap fit_standardization(const Volume& v, const BinaryMask& brain) {
    if (v.intensity_state != IntensityState::bias_corrected)
        throw std::runtime_error("fit_standardization expects a bias-corrected volume");
    StandardizationMap map;
    map.source = in_brain_deciles(v, brain);
    for (int i = 0; i <= 10; ++i) map.target[i] = 102.3 * i;
    for (int i = 0; i < 10; ++i)
        if (!(map.source[i] < map.source[i + 1]))
            throw std::runtime_error("degenerate histogram: decile landmarks not strictly increasing");
    return map;
}

double StandardizationMap::apply(double v) const {
    if (v <= source[0]) return target[0];
    if (v >= source[10]) return target[10];
    int seg = 0;
    while (seg < 9 && v >= source[seg + 1]) ++seg;
    const double t = (v - source[seg]) / (source[seg + 1] - source[seg]);
    double out = target[seg] + t * (target[seg + 1] - target[seg]);
    return std::clamp(out, 0.0, 1023.0);
}

std::string StandardizationMap::to_json() const {
    nlohmann::json j;
    j["source_landmarks"] = source;
    j["target_landmarks"] = target;
    return j.dump(2);
}

StandardizationMap StandardizationMap::from_json(const std::string& text) {
    auto j = nlohmann::json::parse(text);
    StandardizationMap m;
    m.source = j.at("source_landmarks").get<std::array<double, 11>>();
    m.target = j.at("target_landmarks").get<std::array<double, 11>>();
    return m;
}

Volume apply_standardization(const Volume& v, const StandardizationMap& map, const BinaryMask& brain) {
    require_congruent(v, brain);
    for (int i = 0; i < 10; ++i)
        if (!(map.source[i] < map.source[i + 1]) || !(map.target[i] < map.target[i + 1]))
            throw std::runtime_error("standardization landmarks not strictly increasing");
    Volume out = v;
    out.intensity_state = IntensityState::standardized;
    for (std::size_t q = 0; q < v.voxels.size(); ++q)
        out.voxels[q] = brain.bits[q] ? static_cast<float>(map.apply(v.voxels[q])) : 0.0f;
    return out;
}

Volume preprocess_volume(const Volume& raw, const BinaryMask& brain, StandardizationMap* map_out) {
    const BiasModel model = estimate_bias(raw, brain);
    const Volume corrected = correct_bias(raw, model, brain);
    const StandardizationMap map = fit_standardization(corrected, brain);
    if (map_out) *map_out = map;
    return apply_standardization(corrected, map, brain);
}

}  // namespace lvseg
