#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lvseg/manifest.hpp"
#include "lvseg/morphology.hpp"
#include "lvseg/volume.hpp"

namespace lvseg {

// Rule-based ventricle segmenter. Operates on standardized volumes: CSF is
// the dark tail on FLAIR, so the threshold keeps voxels BELOW csf_threshold.
// Steps, in order:
//   1. csf_total = brain AND (v < csf_threshold)
//   2. core = per-slice erosion of the brain by a disk of
//      erosion_diameter_mm / 2
//   3. rank the connected components of csf_total AND core by size
//   4. walk candidates largest-first; accept the first whose in-plane (x,y)
//      centroid lies within center_distance_mm of the brain centroid
//   5. fill holes in the accepted object
//   6. clear every slice below acpc_z

struct IpbParams {
    double csf_threshold = 200.0;      // standardized units, in (0, 1023)
    double erosion_diameter_mm = 25.0;
    double center_distance_mm = 25.0;
    Connectivity connectivity = Connectivity::twenty_six;
    int acpc_z = 0;

    void validate() const;
};

// Every intermediate artifact, for audit and tests.
struct IpbTrace {
    BinaryMask csf_total;
    BinaryMask eroded_core;
    std::vector<std::int32_t> candidates_by_size;  // labels, largest first
    std::vector<double> candidate_distance_mm;     // in-plane centroid distances, same order
    std::int32_t chosen_label = 0;
    BinaryMask chosen_object;  // after hole filling, before the AC-PC cut
};

struct IpbResult {
    BinaryMask mask;
    IpbTrace trace;
};

IpbResult segment_ventricles(const Volume& v, const BinaryMask& brain, const IpbParams& p);

// Runs the segmenter over every manifest case (expects standardized images).
// Per-case failures are recorded in the output manifest instead of aborting.
// SS masks are written next to the output manifest as <id>_ss.mmask.
Manifest generate_ss_cohort(const Manifest& cases, const std::string& manifest_path,
                            const IpbParams& base_params, const std::string& out_dir,
                            const std::string& trace_dir = "");

}  // namespace lvseg
