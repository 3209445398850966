#include <cstdio>
#include <exception>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "lvseg/parallel.hpp"
#include "lvseg/pipeline.hpp"

using namespace lvseg;

int main(int argc, char** argv) {
    CLI::App app{"lateral-ventricle segmentation workbench"};
    app.require_subcommand(1);
    app.fallthrough();  // global flags may follow the subcommand

    std::string profile = "desk";
    std::optional<std::string> config_path;
    std::optional<std::uint64_t> seed;
    int jobs = 0;
    app.add_option("--profile", profile, "configuration profile: desk or paper");
    app.add_option("--config", config_path, "JSON config overlay");
    app.add_option("--seed", seed, "master seed override");
    app.add_option("--jobs", jobs, "worker threads (default: hardware)");

    // phantom
    auto* phantom = app.add_subcommand("phantom", "generate a synthetic cohort with ground truth");
    std::string ph_out;
    int ph_count = 0;
    phantom->add_option("--out", ph_out, "output cohort directory")->required();
    phantom->add_option("--count", ph_count, "number of cases (default: config cohort_n)");

    // preprocess
    auto* prep = app.add_subcommand("preprocess", "bias correction + intensity standardization");
    std::string pp_manifest, pp_vol, pp_brain, pp_out, pp_map;
    bool pp_dump_maps = false;
    prep->add_option("--manifest", pp_manifest, "cohort manifest to preprocess");
    prep->add_option("--volume", pp_vol, "single raw volume (.mvol)");
    prep->add_option("--brain", pp_brain, "brain mask for --volume");
    prep->add_option("--out", pp_out, "output directory (manifest mode) or file (volume mode)")
        ->required();
    prep->add_option("--dump-map", pp_map, "write the standardization map JSON here (volume mode)");
    prep->add_flag("--dump-maps", pp_dump_maps, "write per-case map JSONs (manifest mode)");

    // ipb
    auto* ipb = app.add_subcommand("ipb", "rule-based ventricle segmentation (silver standards)");
    std::string ipb_manifest, ipb_vol, ipb_brain, ipb_out, ipb_trace;
    int ipb_acpc = 0;
    double ipb_thr = -1, ipb_ero = -1, ipb_dist = -1;
    ipb->add_option("--manifest", ipb_manifest, "standardized cohort manifest");
    ipb->add_option("--volume", ipb_vol, "single standardized volume");
    ipb->add_option("--brain", ipb_brain, "brain mask for --volume");
    ipb->add_option("--out", ipb_out, "output directory (manifest mode) or mask file")->required();
    ipb->add_option("--threshold", ipb_thr, "CSF threshold in standardized units");
    ipb->add_option("--erosion-mm", ipb_ero, "erosion kernel diameter (mm)");
    ipb->add_option("--distance-mm", ipb_dist, "max centroid distance (mm)");
    ipb->add_option("--acpc-z", ipb_acpc, "AC-PC slice index (volume mode)");
    ipb->add_option("--trace-dir", ipb_trace, "dump intermediate masks here");

    // train
    auto* train = app.add_subcommand("train", "train one experiment plan (or emit plans)");
    std::string tr_plan, tr_out, tr_emit;
    train->add_option("--plan", tr_plan, "plan JSON produced by --emit-plans");
    train->add_option("--out", tr_out, "run output directory");
    train->add_option("--emit-plans", tr_emit, "write the experiment factorial into this directory");

    // eval
    auto* eval = app.add_subcommand("eval", "evaluate a run (or silver standards) on held-out cases");
    std::string ev_run, ev_out, ev_manifest, ev_dataset = "target";
    std::vector<std::string> ev_ids;
    bool ev_ipb = false;
    eval->add_option("--run", ev_run, "run directory from `train`");
    eval->add_flag("--ipb", ev_ipb, "evaluate silver-standard masks instead of a model");
    eval->add_option("--manifest", ev_manifest, "manifest with ss+truth masks (with --ipb)");
    eval->add_option("--dataset", ev_dataset, "dataset label for --ipb rows");
    eval->add_option("--ids", ev_ids, "case ids to evaluate (default: all, with --ipb)");
    eval->add_option("--out", ev_out, "metrics CSV path")->required();

    // report
    auto* report = app.add_subcommand("report", "aggregate metrics into tables and figures");
    std::vector<std::string> rp_metrics;
    std::string rp_out;
    report->add_option("--metrics", rp_metrics, "metrics CSV files")->required();
    report->add_option("--out", rp_out, "report output directory")->required();

    // dump-config
    auto* dump = app.add_subcommand("dump-config", "print the effective configuration JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (jobs > 0) set_jobs(jobs);
        PipelineConfig cfg = load_pipeline_config(profile, config_path);
        if (ipb_thr > 0) cfg.ipb.csf_threshold = ipb_thr;
        if (ipb_ero > 0) cfg.ipb.erosion_diameter_mm = ipb_ero;
        if (ipb_dist > 0) cfg.ipb.center_distance_mm = ipb_dist;
        if (seed) {
            cfg.train.seed = *seed;
            cfg.experiments.seed = *seed;
        }

        if (phantom->parsed()) {
            cmd_phantom(cfg, ph_out, ph_count > 0 ? ph_count : cfg.cohort_n, seed.value_or(1));
        } else if (prep->parsed()) {
            if (!pp_manifest.empty()) cmd_preprocess_manifest(pp_manifest, pp_out, pp_dump_maps);
            else if (!pp_vol.empty() && !pp_brain.empty())
                cmd_preprocess_volume(pp_vol, pp_brain, pp_out, pp_map);
            else throw UserError("preprocess needs --manifest or both --volume and --brain");
        } else if (ipb->parsed()) {
            if (!ipb_manifest.empty()) cmd_ipb_manifest(cfg, ipb_manifest, ipb_out, ipb_trace);
            else if (!ipb_vol.empty() && !ipb_brain.empty())
                cmd_ipb_volume(cfg, ipb_vol, ipb_brain, ipb_out, ipb_acpc, ipb_trace);
            else throw UserError("ipb needs --manifest or both --volume and --brain");
        } else if (train->parsed()) {
            if (!tr_emit.empty()) cmd_emit_plans(cfg, tr_emit, seed.value_or(cfg.experiments.seed));
            else if (!tr_plan.empty() && !tr_out.empty()) cmd_train(cfg, tr_plan, tr_out, seed);
            else throw UserError("train needs --plan and --out, or --emit-plans");
        } else if (eval->parsed()) {
            if (ev_ipb) {
                if (ev_manifest.empty()) throw UserError("eval --ipb needs --manifest");
                cmd_eval_ipb(ev_manifest, ev_dataset, ev_ids, ev_out);
            } else {
                if (ev_run.empty()) throw UserError("eval needs --run (or --ipb --manifest)");
                cmd_eval_run(ev_run, ev_out);
            }
        } else if (report->parsed()) {
            cmd_report(cfg, rp_metrics, rp_out);
        } else if (dump->parsed()) {
            std::printf("%s\n", cfg.to_json().c_str());
        }
    } catch (const UserError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "internal error: %s\n", e.what());
        return 2;
    }
    return 0;
}
