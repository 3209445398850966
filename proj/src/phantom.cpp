#include "lvseg/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "lvseg/preprocess.hpp"
#include "lvseg/rng.hpp"

namespace lvseg {

void SiteProfile::validate() const {
    if (!(csf_mean < gm_mean && gm_mean < wm_mean))
        throw std::runtime_error("site profile must order csf < gm < wm");
    if (csf_mean <= 0.0) throw std::runtime_error("tissue means must be positive");
    if (noise_sigma < 0.0) throw std::runtime_error("noise sigma must be nonnegative");
    if (bias_amplitude < 0.0 || bias_amplitude > 0.5)
        throw std::runtime_error("bias amplitude outside [0, 0.5]");
    if (!(contrast_gamma > 0.0)) throw std::runtime_error("contrast gamma must be positive");
    spacing.validate();
}

void PhantomSpec::validate() const {
    for (int d : dims)
        if (d <= 0) throw std::runtime_error("phantom dims must be positive");
    for (double a : brain_axes_mm)
        if (a <= 0.0) throw std::runtime_error("brain axes must be positive");
    const double min_axis = std::min({brain_axes_mm[0], brain_axes_mm[1], brain_axes_mm[2]});
    if (subarachnoid_rim_mm <= 0.0 || subarachnoid_rim_mm >= min_axis)
        throw std::runtime_error("rim must be thinner than the brain semi-axes");
    if (acpc_z_fraction <= 0.0 || acpc_z_fraction >= 1.0)
        throw std::runtime_error("acpc_z_fraction must lie in (0, 1)");
    if (gm_shell_frac <= 0.0 || gm_shell_frac >= 1.0)
        throw std::runtime_error("gm shell fraction must lie in (0, 1)");
}

namespace {

struct Ellipsoid {
    std::array<double, 3> center;
    std::array<double, 3> axes;

    double value(double x, double y, double z) const {
        const double u = (x - center[0]) / axes[0];
        const double v = (y - center[1]) / axes[1];
        const double w = (z - center[2]) / axes[2];
        return u * u + v * v + w * w;
    }
    bool contains(double x, double y, double z) const { return value(x, y, z) <= 1.0; }
};

struct CrescentGeometry {
    std::vector<std::array<double, 3>> centerline;
    std::vector<double> radius;

    bool contains(double x, double y, double z) const {
        for (std::size_t s = 0; s < centerline.size(); ++s) {
            const double dx = x - centerline[s][0];
            const double dy = y - centerline[s][1];
            const double dz = z - centerline[s][2];
            if (dx * dx + dy * dy + dz * dz <= radius[s] * radius[s]) return true;
        }
        return false;
    }
};

CrescentGeometry sample_crescent(const CrescentSpec& c, int side,
                                 const std::array<double, 3>& brain_center) {
    CrescentGeometry g;
    const int samples = 129;
    const std::array<double, 3> arc_center{
        brain_center[0] + side * c.center_offset_mm[0],
        brain_center[1] + c.center_offset_mm[1],
        brain_center[2] + c.center_offset_mm[2]};
    for (int s = 0; s < samples; ++s) {
        const double t = -c.arc_span_rad + 2.0 * c.arc_span_rad * s / (samples - 1);
        g.centerline.push_back({arc_center[0] + side * c.arc_radius_mm * std::cos(t),
                                arc_center[1] + c.arc_radius_mm * std::sin(t),
                                arc_center[2] + c.z_slope_mm * t / c.arc_span_rad});
        const double frac = t / c.arc_span_rad;
        g.radius.push_back(c.tube_radius_mm * (1.0 - c.taper * frac * frac));
    }
    return g;
}

}  // namespace

double crescent_volume_mm3(const CrescentSpec& c) {
    // The crescent is the union of balls B(P(t), rho(t)) along the arc. Its
    // volume is the swept-tube integral Int pi rho(t)^2 ds (exact for a
    // circular arc by Pappus) plus the two hemispherical end caps; the
    // radius-variation term of the canal surface is second order in rho'.
    // ds = sqrt((R dt)^2 + (z_slope/T dt)^2).
    const double ds_dt = std::hypot(c.arc_radius_mm, c.z_slope_mm / c.arc_span_rad);
    const int n = 20000;
    double vol = 0.0;
    const double dt = 2.0 * c.arc_span_rad / n;
    constexpr double pi = 3.14159265358979323846;
    for (int i = 0; i < n; ++i) {
        const double t = -c.arc_span_rad + (i + 0.5) * dt;
        const double frac = t / c.arc_span_rad;
        const double rho = c.tube_radius_mm * (1.0 - c.taper * frac * frac);
        vol += pi * rho * rho * ds_dt * dt;
    }
    const double rho_tip = c.tube_radius_mm * (1.0 - c.taper);
    vol += 4.0 / 3.0 * pi * rho_tip * rho_tip * rho_tip;
    return vol;
}

PhantomCase generate_case(const PhantomSpec& spec, const SiteProfile& profile) {
    spec.validate();
    profile.validate();

    const int nx = spec.dims[0], ny = spec.dims[1], nz = spec.dims[2];
    const Spacing sp = profile.spacing;
    const std::array<double, 3> center{nx * sp.x_mm / 2.0, ny * sp.y_mm / 2.0, nz * sp.z_mm / 2.0};

    const Ellipsoid brain{center, spec.brain_axes_mm};
    const std::array<double, 3> inner_axes{spec.brain_axes_mm[0] - spec.subarachnoid_rim_mm,
                                           spec.brain_axes_mm[1] - spec.subarachnoid_rim_mm,
                                           spec.brain_axes_mm[2] - spec.subarachnoid_rim_mm};
    const Ellipsoid inner{center, inner_axes};
    const Ellipsoid wm_core{center,
                            {inner_axes[0] * (1.0 - spec.gm_shell_frac),
                             inner_axes[1] * (1.0 - spec.gm_shell_frac),
                             inner_axes[2] * (1.0 - spec.gm_shell_frac)}};

    std::vector<CrescentGeometry> crescents;
    if (spec.left.enabled) crescents.push_back(sample_crescent(spec.left, -1, center));
    if (spec.right.enabled) crescents.push_back(sample_crescent(spec.right, +1, center));

    // Ventricles must stay inside the non-rim interior.
    for (const auto& g : crescents)
        for (std::size_t s = 0; s < g.centerline.size(); ++s) {
            const auto& p = g.centerline[s];
            const double margin = g.radius[s];
            for (int axis = 0; axis < 3; ++axis) {
                std::array<double, 3> probe = p;
                for (double dir : {-1.0, 1.0}) {
                    probe[axis] = p[axis] + dir * margin;
                    if (!inner.contains(probe[0], probe[1], probe[2]))
                        throw std::runtime_error("ventricle geometry escaping brain");
                    probe[axis] = p[axis];
                }
            }
        }

    // Anterior bridge between the two crescent tips (the +span ends).
    Ellipsoid bridge_blob{};
    bool has_bridge = spec.bridge && crescents.size() == 2;
    if (has_bridge) {
        const auto& tip_l = crescents[0].centerline.back();
        const auto& tip_r = crescents[1].centerline.back();
        bridge_blob.center = {0.5 * (tip_l[0] + tip_r[0]), 0.5 * (tip_l[1] + tip_r[1]),
                              0.5 * (tip_l[2] + tip_r[2])};
        const double half_gap = 0.5 * std::abs(tip_r[0] - tip_l[0]) + spec.bridge_radius_mm;
        bridge_blob.axes = {half_gap, spec.bridge_radius_mm, spec.bridge_radius_mm};
        if (!inner.contains(bridge_blob.center[0] - half_gap, bridge_blob.center[1], bridge_blob.center[2]) ||
            !inner.contains(bridge_blob.center[0] + half_gap, bridge_blob.center[1], bridge_blob.center[2]))
            throw std::runtime_error("ventricle geometry escaping brain");
    }

    PhantomCase out;
    out.site_id = profile.site_id;
    out.vendor = profile.vendor;
    out.acpc_z = static_cast<int>(std::floor(spec.acpc_z_fraction * nz));
    out.brain_mask = make_mask(nx, ny, nz, sp);
    out.ventricle_mask = make_mask(nx, ny, nz, sp);
    out.image = make_volume(nx, ny, nz, sp);
    out.image.site_id = profile.site_id;
    out.image.intensity_state = IntensityState::raw;
    out.image.acpc_z = out.acpc_z;

    // Tissue labels: 0 background, 1 CSF, 2 GM, 3 WM.
    std::vector<std::uint8_t> label(out.image.size(), 0);
    int vent_min_k = nz;
    for (int k = 0; k < nz; ++k) {
        const double z = (k + 0.5) * sp.z_mm;
        for (int j = 0; j < ny; ++j) {
            const double y = (j + 0.5) * sp.y_mm;
            for (int i = 0; i < nx; ++i) {
                const double x = (i + 0.5) * sp.x_mm;
                if (!brain.contains(x, y, z)) continue;
                const std::size_t q = out.image.index(i, j, k);
                out.brain_mask.bits[q] = 1;
                bool vent = false;
                for (const auto& g : crescents)
                    if (g.contains(x, y, z)) {
                        vent = true;
                        break;
                    }
                if (!vent && has_bridge && bridge_blob.contains(x, y, z)) vent = true;
                if (vent) {
                    out.ventricle_mask.bits[q] = 1;
                    label[q] = 1;
                    vent_min_k = std::min(vent_min_k, k);
                } else if (!inner.contains(x, y, z)) {
                    label[q] = 4;  // subarachnoid rim, partial-volume CSF
                } else if (wm_core.contains(x, y, z)) {
                    label[q] = 3;
                } else {
                    label[q] = 2;
                }
            }
        }
    }
    if (vent_min_k == nz) throw std::runtime_error("ventricle geometry produced no voxels");
    if (vent_min_k <= out.acpc_z)
        throw std::runtime_error("ventricle extent reaches the AC-PC plane");

    // Gamma-adjusted tissue values anchored at the WM mean. Index 4 is the
    // partial-volume rim shade.
    const double g = profile.contrast_gamma;
    auto shade = [&](double mean) { return profile.wm_mean * std::pow(mean / profile.wm_mean, g); };
    const double tissue_value[5] = {
        0.0, shade(profile.csf_mean), shade(profile.gm_mean), shade(profile.wm_mean),
        (1.0 - spec.rim_pv_weight) * shade(profile.csf_mean) + spec.rim_pv_weight * shade(profile.gm_mean)};

    Rng rng(mix_seed(spec.seed, 0x9b1a5f1e1dULL));

    // Smooth multiplicative bias field: degree-2 log-polynomial scaled so
    // max |log field| over the brain equals bias_amplitude.
    BiasModel bias;
    for (int c = 1; c < 10; ++c) bias.coeffs[c] = rng.uniform(-1.0, 1.0);
    double max_abs = 0.0;
    if (profile.bias_amplitude > 0.0) {
        for (int k = 0; k < nz; ++k)
            for (int j = 0; j < ny; ++j)
                for (int i = 0; i < nx; ++i)
                    if (out.brain_mask.at(i, j, k))
                        max_abs = std::max(max_abs, std::abs(bias.log_field(norm_coord(i, nx),
                                                                            norm_coord(j, ny),
                                                                            norm_coord(k, nz))));
        if (max_abs > 0.0)
            for (auto& c : bias.coeffs) c *= profile.bias_amplitude / max_abs;
    } else {
        bias.coeffs = {};
    }

    for (int k = 0; k < nz; ++k) {
        const double zn = norm_coord(k, nz);
        for (int j = 0; j < ny; ++j) {
            const double yn = norm_coord(j, ny);
            for (int i = 0; i < nx; ++i) {
                const std::size_t q = out.image.index(i, j, k);
                if (!label[q]) continue;
                double val = tissue_value[label[q]];
                if (profile.bias_amplitude > 0.0)
                    val *= std::exp(bias.log_field(norm_coord(i, nx), yn, zn));
                if (profile.noise_sigma > 0.0) val += rng.normal(0.0, profile.noise_sigma);
                out.image.voxels[q] = static_cast<float>(std::max(0.0, val));
            }
        }
    }
    return out;
}

std::vector<PhantomCase> generate_cohort(int n, const CohortConfig& cfg) {
    if (n < 1) throw std::runtime_error("cohort size must be at least 1");
    if (cfg.profiles.empty()) throw std::runtime_error("cohort needs at least one site profile");
    std::vector<PhantomCase> cases;
    cases.reserve(n);
    for (int i = 0; i < n; ++i) {
        const std::uint64_t case_seed = mix_seed(cfg.seed, static_cast<std::uint64_t>(i));
        Rng jrng(mix_seed(case_seed, 0x7a77e2ULL));
        PhantomSpec spec = cfg.spec_template;
        spec.seed = case_seed;
        const double j = cfg.anatomy_jitter;
        auto wobble = [&](double v) { return v * (1.0 + jrng.uniform(-j, j)); };
        for (auto& a : spec.brain_axes_mm) a = wobble(a);
        for (CrescentSpec* c : {&spec.left, &spec.right}) {
            c->arc_radius_mm = wobble(c->arc_radius_mm);
            c->tube_radius_mm = wobble(c->tube_radius_mm);
            c->arc_span_rad = wobble(c->arc_span_rad);
            c->z_slope_mm = wobble(c->z_slope_mm);
        }
        const SiteProfile& profile = cfg.profiles[i % cfg.profiles.size()];
        PhantomCase pc = generate_case(spec, profile);
        char buf[16];
        std::snprintf(buf, sizeof(buf), "case%03d", i);
        pc.case_id = buf;
        cases.push_back(std::move(pc));
    }
    return cases;
}

}  // namespace lvseg
