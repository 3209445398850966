#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "lvseg/volume.hpp"

namespace lvseg {

// Synthetic multi-site FLAIR-like brain phantoms with exact ground truth.
// Geometry: ellipsoidal brain, a dark subarachnoid rim just inside the
// surface, a gray-matter shell, a white-matter core, and paired bent-tube
// ventricle crescents joined by a thin anterior bridge so the ventricle
// system is one 26-connected object (as in clinical CSF masks, where partial
// voluming connects the two sides).

struct SiteProfile {
    std::string site_id;
    std::string vendor;       // stratification tag, e.g. Siemens/GE/Phillips
    double csf_mean = 60.0;   // FLAIR ordering: nulled CSF is darkest
    double gm_mean = 125.0;
    double wm_mean = 150.0;
    double noise_sigma = 0.0;
    double bias_amplitude = 0.0;  // max |log bias field| over the brain, <= 0.5
    double contrast_gamma = 1.0;
    Spacing spacing{2.0, 2.0, 5.0};

    void validate() const;
};

// One bent-tube crescent: an arc of radius arc_radius_mm spanning
// [-arc_span_rad, +arc_span_rad], swept by a tube whose radius tapers from
// tube_radius_mm at the middle by `taper` at the tips, with a z drift of
// z_slope_mm across the arc. `side` is -1 (left) or +1 (right).
struct CrescentSpec {
    bool enabled = true;
    std::array<double, 3> center_offset_mm{2.0, 0.0, 8.0};  // arc-circle center rel. brain center
    double arc_radius_mm = 22.0;
    double tube_radius_mm = 14.0;
    double arc_span_rad = 1.25;
    double taper = 0.4;
    double z_slope_mm = 6.0;
};

struct PhantomSpec {
    std::array<int, 3> dims{96, 96, 24};
    std::array<double, 3> brain_axes_mm{70.0, 85.0, 52.0};
    CrescentSpec left;
    CrescentSpec right;
    bool bridge = true;
    double bridge_radius_mm = 5.0;
    double subarachnoid_rim_mm = 3.6;
    // Sulcal CSF at thick slices partial-volumes with cortex: the rim shade
    // is (1-w) csf + w gm. Keeps the rim dark enough to distract the largest
    // object search without handing the bias fit a deep boundary ring.
    double rim_pv_weight = 0.5;
    double gm_shell_frac = 0.26;   // GM shell thickness as a fraction of each inner semi-axis
    double acpc_z_fraction = 0.2;  // AC-PC plane as a fraction of nz
    std::uint64_t seed = 1;

    void validate() const;
};

struct PhantomCase {
    std::string case_id;
    Volume image;              // raw intensity state
    BinaryMask brain_mask;
    BinaryMask ventricle_mask;  // plays the gold-standard role
    int acpc_z = 0;
    std::string site_id;
    std::string vendor;
};

// Deterministic for a fixed spec/profile/seed. Masks are exact by
// construction; the image is gamma-adjusted tissue means times a smooth
// multiplicative bias field plus i.i.d. Gaussian noise, clamped at zero.
PhantomCase generate_case(const PhantomSpec& spec, const SiteProfile& profile);

// Analytic crescent volume in mm^3 (tube integral along the centerline);
// the voxelized mask volume converges to this.
double crescent_volume_mm3(const CrescentSpec& c);

struct CohortConfig {
    PhantomSpec spec_template;
    std::vector<SiteProfile> profiles;  // round-robined across cases
    double anatomy_jitter = 0.08;       // relative jitter on geometry parameters
    std::uint64_t seed = 1;
};

// n cases with per-case seeds mixed from the cohort seed, jittered anatomy,
// and profiles assigned round-robin.
std::vector<PhantomCase> generate_cohort(int n, const CohortConfig& cfg);

}  // namespace lvseg
