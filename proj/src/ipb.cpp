#include "lvseg/ipb.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <stdexcept>

#include "lvseg/parallel.hpp"

namespace lvseg {

namespace fs = std::filesystem;

void IpbParams::validate() const {
    if (!(csf_threshold > 0.0 && csf_threshold < 1023.0))
        throw std::runtime_error("csf threshold must lie in (0, 1023)");
    if (erosion_diameter_mm <= 0.0 || center_distance_mm <= 0.0)
        throw std::runtime_error("erosion diameter and center distance must be positive");
}

IpbResult segment_ventricles(const Volume& v, const BinaryMask& brain, const IpbParams& p) {
    p.validate();
    if (v.intensity_state != IntensityState::standardized)
        throw std::runtime_error("segment_ventricles expects a standardized volume");
    if (v.nx != brain.nx || v.ny != brain.ny || v.nz != brain.nz)
        throw std::runtime_error("volume/brain grid mismatch");
    if (p.acpc_z < 0 || p.acpc_z >= v.nz) throw std::runtime_error("acpc_z outside [0, nz)");

    IpbResult r;
    auto& t = r.trace;

    // 1. total CSF: dark voxels inside the brain
    t.csf_total = make_mask(v.nx, v.ny, v.nz, brain.spacing);
    for (std::size_t q = 0; q < v.voxels.size(); ++q)
        t.csf_total.bits[q] = (brain.bits[q] && v.voxels[q] < p.csf_threshold) ? 1 : 0;

    // 2. keep only the deep-brain core
    t.eroded_core = erode_slicewise(brain, make_disk(p.erosion_diameter_mm / 2.0, brain.spacing));

    // 3. candidate objects, largest first
    BinaryMask cand = t.csf_total;
    for (std::size_t q = 0; q < cand.bits.size(); ++q) cand.bits[q] &= t.eroded_core.bits[q];
    const LabeledComponents cc = connected_components(cand, p.connectivity);
    t.candidates_by_size.resize(cc.count);
    std::iota(t.candidates_by_size.begin(), t.candidates_by_size.end(), 1);
    std::sort(t.candidates_by_size.begin(), t.candidates_by_size.end(),
              [&cc](std::int32_t a, std::int32_t b) {
                  if (cc.sizes[a] != cc.sizes[b]) return cc.sizes[a] > cc.sizes[b];
                  return a < b;
              });

    // 4. in-plane distance test against the brain centroid
    const auto brain_c = centroid_mm(brain);
    for (std::int32_t label : t.candidates_by_size) {
        const auto& c = cc.centroids_mm[label];
        t.candidate_distance_mm.push_back(std::hypot(c[0] - brain_c[0], c[1] - brain_c[1]));
    }
    for (std::size_t i = 0; i < t.candidates_by_size.size(); ++i) {
        if (t.candidate_distance_mm[i] <= p.center_distance_mm) {
            t.chosen_label = t.candidates_by_size[i];
            break;
        }
    }
    if (t.chosen_label == 0) throw std::runtime_error("no central CSF object");

    // 5. hole filling on the accepted object
    t.chosen_object = fill_holes(component_mask(cc, brain, t.chosen_label));

    // 6. AC-PC cut
    r.mask = t.chosen_object;
    const std::size_t slice = static_cast<std::size_t>(v.nx) * v.ny;
    std::fill(r.mask.bits.begin(), r.mask.bits.begin() + slice * p.acpc_z, 0);
    return r;
}

Manifest generate_ss_cohort(const Manifest& cases, const std::string& manifest_path,
                            const IpbParams& base_params, const std::string& out_dir,
                            const std::string& trace_dir) {
    fs::create_directories(out_dir);
    if (!trace_dir.empty()) fs::create_directories(trace_dir);

    struct Slot {
        ManifestCase c;
        bool ok = false;
        std::string reason;
    };
    std::vector<Slot> slots(cases.cases.size());

    parallel_for(cases.cases.size(), [&](std::size_t i) {
        Slot& s = slots[i];
        s.c = cases.cases[i];
        try {
            const Volume v = read_image(resolve_path(manifest_path, s.c.image));
            const BinaryMask brain = read_mask(resolve_path(manifest_path, s.c.brain));
            IpbParams p = base_params;
            p.acpc_z = s.c.acpc_z;
            IpbResult r = segment_ventricles(v, brain, p);
            const std::string ss_name = s.c.id + "_ss.mmask";
            write_volume(r.mask, (fs::path(out_dir) / ss_name).string());
            if (!trace_dir.empty()) {
                write_volume(r.trace.csf_total,
                             (fs::path(trace_dir) / (s.c.id + "_csf_total.mmask")).string());
                write_volume(r.trace.eroded_core,
                             (fs::path(trace_dir) / (s.c.id + "_core.mmask")).string());
                write_volume(r.trace.chosen_object,
                             (fs::path(trace_dir) / (s.c.id + "_chosen.mmask")).string());
            }
            // image/brain/truth stay where they are; reference them relative
            // to the new manifest
            const fs::path out(out_dir);
            s.c.image = fs::proximate(resolve_path(manifest_path, s.c.image), out).string();
            s.c.brain = fs::proximate(resolve_path(manifest_path, s.c.brain), out).string();
            if (!s.c.truth.empty())
                s.c.truth = fs::proximate(resolve_path(manifest_path, s.c.truth), out).string();
            s.c.ss = ss_name;
            s.ok = true;
        } catch (const std::exception& e) {
            s.reason = e.what();
        }
    });

    Manifest out;
    for (const auto& s : slots) {
        if (s.ok) out.cases.push_back(s.c);
        else out.failures.push_back({s.c.id, s.reason});
    }
    save_manifest(out, (fs::path(out_dir) / "manifest.json").string());
    return out;
}

}  // namespace lvseg
