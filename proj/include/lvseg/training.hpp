#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lvseg/augment.hpp"
#include "lvseg/checkpoint.hpp"
#include "lvseg/manifest.hpp"
#include "lvseg/optim.hpp"
#include "lvseg/unet.hpp"
#include "lvseg/volume.hpp"

namespace lvseg {

// Training schedules and the experiment planner. Case ids inside a plan are
// domain-qualified ("source:case003", "target:case011"): GS phases train on
// the source ids against ground-truth masks, SS phases on the target ids
// against the rule-based silver-standard masks.

enum class Schedule { gs_only, ss_only, gs_then_ss, ss_then_gs };

std::string to_string(Schedule s);
Schedule schedule_from_string(const std::string& s);

enum class CheckpointPolicy { final_epoch, best_val };

struct TrainConfig {
    AdamConfig adam;             // lr defaults to 1e-4
    int batch_size = 16;
    int max_epochs = 50;
    int early_stop_patience = 15;
    AugmentConfig augment;
    CheckpointPolicy checkpoint_policy = CheckpointPolicy::final_epoch;
    std::uint64_t seed = 1;

    void validate() const;
};

struct ExperimentPlan {
    std::string id;
    Schedule schedule = Schedule::gs_only;
    int ss_count = 0;  // 0 for gs_only
    std::string source_manifest;
    std::string target_manifest;
    std::string source_name = "source";
    std::string target_name = "target";
    // domain-qualified case ids
    std::vector<std::string> train_ids;
    std::vector<std::string> val_ids;
    std::vector<std::string> held_out_test_ids;
    std::string stratify_by = "vendor";
    std::uint64_t seed = 1;

    std::string to_json() const;
    static ExperimentPlan from_json(const std::string& text);
    void validate() const;  // no test id may appear in train/val
};

struct PlanRequest {
    std::string source_manifest;
    std::vector<std::string> target_manifests;
    std::vector<std::string> target_names;  // parallel to target_manifests
    std::string source_name = "source";
    std::vector<int> ss_counts;
    std::vector<Schedule> ss_schedules = {Schedule::ss_only, Schedule::gs_then_ss,
                                          Schedule::ss_then_gs};
    int source_train_count = 12;
    int test_count_per_domain = 6;
    double val_fraction = 0.2;
    std::string stratify_by = "vendor";
    std::uint64_t seed = 1;
};

// Full factorial {ss schedule x ss_count x target} plus one gs_only
// baseline. Splits are stratified by the manifest tag (vendor by default)
// with seeded shuffling inside each stratum.
std::vector<ExperimentPlan> plan_experiments(const PlanRequest& req);

struct PhaseRecord {
    std::string mask_role;  // "gs" or "ss"
    std::vector<double> train_loss;
    std::vector<double> val_loss;
    int stopped_epoch = 0;
    int best_epoch = 0;
    double initial_val_loss = 0.0;  // evaluated before the first step
    std::string checkpoint_file;
};

struct RunRecord {
    ExperimentPlan plan;
    std::vector<PhaseRecord> phases;
    double wall_seconds = 0.0;
    std::string final_checkpoint;

    std::string to_json() const;
};

// Trains the plan's schedule and writes plan.json, loss.csv, and per-phase
// checkpoints into out_dir. Deterministic for fixed plan/configs/seed.
RunRecord run_schedule(const ExperimentPlan& plan, const UNetConfig& unet_cfg,
                       const TrainConfig& train_cfg, const std::string& out_dir);

// Slice inference: eval-mode forward per slice, argmax, intersect with the
// brain mask, reassemble the 3D mask.
BinaryMask predict_volume(UNet& model, const Volume& v, const BinaryMask& brain);

// In-memory slice dataset (inputs scaled to [0,1], masks one-hot at loss time).
struct SliceDataset {
    int h = 0, w = 0;
    std::vector<SlicePair> slices;
};

// Loads every slice of the listed cases; mask_role selects truth ("gs") or
// silver-standard ("ss") masks. Slices are center cropped/padded to (h, w).
SliceDataset load_slices(const Manifest& manifest, const std::string& manifest_path,
                         const std::vector<std::string>& ids, const std::string& mask_role,
                         int h, int w);

struct EpochStats {
    std::vector<double> train_loss;
    std::vector<double> val_loss;
    int best_epoch = 0;
    int stopped_epoch = 0;
};

// Mean eval-mode GDL over the dataset, batched in fixed order. Shared by the
// trainer and the phase-continuity checks.
double evaluate_loss(UNet& net, const SliceDataset& ds, int batch_size);

// Core loop shared by both phases: Adam + GDL + augmentation + early
// stopping on validation loss.
EpochStats train_model(UNet& net, const SliceDataset& train, const SliceDataset& val,
                       const TrainConfig& cfg, std::uint64_t phase_salt);

}  // namespace lvseg
