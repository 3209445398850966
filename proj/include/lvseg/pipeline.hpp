#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "lvseg/ipb.hpp"
#include "lvseg/phantom.hpp"
#include "lvseg/report.hpp"
#include "lvseg/training.hpp"

namespace lvseg {

// Bad input (flags, config files, missing data) as opposed to an internal
// failure; the CLI maps UserError to exit code 1 and everything else to 2.
struct UserError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// One JSON document with full defaults; unknown keys are rejected. The
// "desk" profile is the default construction; the "paper" profile swaps in
// the publication-scale network (5 levels, 64 filters, 256x256 inputs).
struct PipelineConfig {
    PhantomSpec phantom;
    std::vector<SiteProfile> sites;  // defaults: three vendor-tagged sites
    int cohort_n = 30;
    double anatomy_jitter = 0.08;
    IpbParams ipb;
    UNetConfig unet;
    TrainConfig train;
    PlanRequest experiments;
    ReportOptions report;

    static PipelineConfig desk_profile();
    static PipelineConfig paper_profile();

    std::string to_json() const;
    // Overlays a user document onto this config; throws UserError on unknown
    // keys or malformed values.
    void merge_json(const std::string& text);
};

PipelineConfig load_pipeline_config(const std::string& profile,
                                    const std::optional<std::string>& config_path);

// Command implementations behind the CLI.
void cmd_phantom(const PipelineConfig& cfg, const std::string& out_dir, int count,
                 std::uint64_t seed);
void cmd_preprocess_volume(const std::string& volume_path, const std::string& brain_path,
                           const std::string& out_path, const std::string& dump_map_path);
void cmd_preprocess_manifest(const std::string& manifest_path, const std::string& out_dir,
                             bool dump_maps);
void cmd_ipb_volume(const PipelineConfig& cfg, const std::string& volume_path,
                    const std::string& brain_path, const std::string& out_path, int acpc_z,
                    const std::string& trace_dir);
void cmd_ipb_manifest(const PipelineConfig& cfg, const std::string& manifest_path,
                      const std::string& out_dir, const std::string& trace_dir);
void cmd_emit_plans(const PipelineConfig& cfg, const std::string& out_dir, std::uint64_t seed);
void cmd_train(const PipelineConfig& cfg, const std::string& plan_path, const std::string& out_dir,
               std::optional<std::uint64_t> seed);
void cmd_eval_run(const std::string& run_dir, const std::string& out_csv);
void cmd_eval_ipb(const std::string& manifest_path, const std::string& dataset,
                  const std::vector<std::string>& ids, const std::string& out_csv);
void cmd_report(const PipelineConfig& cfg, const std::vector<std::string>& metrics_paths,
                const std::string& out_dir);

}  // namespace lvseg
