#include "lvseg/pipeline.hpp"

#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "lvseg/preprocess.hpp"

namespace lvseg {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json spacing_json(const Spacing& s) { return {s.x_mm, s.y_mm, s.z_mm}; }

Spacing spacing_from(const json& j) {
    auto a = j.get<std::array<double, 3>>();
    return {a[0], a[1], a[2]};
}

json site_json(const SiteProfile& p) {
    return {{"site_id", p.site_id},   {"vendor", p.vendor},
            {"csf_mean", p.csf_mean}, {"gm_mean", p.gm_mean},
            {"wm_mean", p.wm_mean},   {"noise_sigma", p.noise_sigma},
            {"bias_amplitude", p.bias_amplitude}, {"contrast_gamma", p.contrast_gamma},
            {"spacing", spacing_json(p.spacing)}};
}

json crescent_json(const CrescentSpec& c) {
    return {{"enabled", c.enabled},
            {"center_offset_mm", c.center_offset_mm},
            {"arc_radius_mm", c.arc_radius_mm},
            {"tube_radius_mm", c.tube_radius_mm},
            {"arc_span_rad", c.arc_span_rad},
            {"taper", c.taper},
            {"z_slope_mm", c.z_slope_mm}};
}

std::string schedule_list_string(const std::vector<Schedule>& s) {
    std::string out;
    for (const auto& sc : s) out += (out.empty() ? "" : ",") + to_string(sc);
    return out;
}

json config_json(const PipelineConfig& c) {
    json j;
    j["phantom"] = {{"dims", c.phantom.dims},
                    {"brain_axes_mm", c.phantom.brain_axes_mm},
                    {"left", crescent_json(c.phantom.left)},
                    {"right", crescent_json(c.phantom.right)},
                    {"bridge", c.phantom.bridge},
                    {"bridge_radius_mm", c.phantom.bridge_radius_mm},
                    {"subarachnoid_rim_mm", c.phantom.subarachnoid_rim_mm},
                    {"rim_pv_weight", c.phantom.rim_pv_weight},
                    {"gm_shell_frac", c.phantom.gm_shell_frac},
                    {"acpc_z_fraction", c.phantom.acpc_z_fraction}};
    json sites = json::array();
    for (const auto& s : c.sites) sites.push_back(site_json(s));
    j["sites"] = std::move(sites);
    j["cohort_n"] = c.cohort_n;
    j["anatomy_jitter"] = c.anatomy_jitter;
    j["ipb"] = {{"csf_threshold", c.ipb.csf_threshold},
                {"erosion_diameter_mm", c.ipb.erosion_diameter_mm},
                {"center_distance_mm", c.ipb.center_distance_mm},
                {"connectivity", c.ipb.connectivity == Connectivity::six ? "six" : "twenty_six"}};
    j["unet"] = {{"levels", c.unet.levels},
                 {"base_filters", c.unet.base_filters},
                 {"input_h", c.unet.input_h},
                 {"input_w", c.unet.input_w}};
    j["train"] = {{"lr", c.train.adam.lr},
                  {"batch_size", c.train.batch_size},
                  {"max_epochs", c.train.max_epochs},
                  {"early_stop_patience", c.train.early_stop_patience},
                  {"checkpoint_policy",
                   c.train.checkpoint_policy == CheckpointPolicy::final_epoch ? "final_epoch"
                                                                              : "best_val"},
                  {"seed", c.train.seed},
                  {"augment", {{"rotate_deg", c.train.augment.rotate_deg},
                               {"scale_lo", c.train.augment.scale_lo},
                               {"scale_hi", c.train.augment.scale_hi},
                               {"shear_deg", c.train.augment.shear_deg},
                               {"translate_frac", c.train.augment.translate_frac},
                               {"probability", c.train.augment.probability}}}};
    j["experiments"] = {{"source_manifest", c.experiments.source_manifest},
                        {"target_manifests", c.experiments.target_manifests},
                        {"target_names", c.experiments.target_names},
                        {"source_name", c.experiments.source_name},
                        {"ss_counts", c.experiments.ss_counts},
                        {"ss_schedules", schedule_list_string(c.experiments.ss_schedules)},
                        {"source_train_count", c.experiments.source_train_count},
                        {"test_count_per_domain", c.experiments.test_count_per_domain},
                        {"val_fraction", c.experiments.val_fraction},
                        {"stratify_by", c.experiments.stratify_by},
                        {"seed", c.experiments.seed}};
    j["report"] = {{"baseline_model", c.report.baseline_model},
                   {"source_dataset", c.report.source_dataset}};
    return j;
}

void check_known_keys(const json& user, const json& tmpl, const std::string& path) {
    if (!user.is_object()) return;
    if (!tmpl.is_object()) throw UserError("config: unexpected object at " + path);
    for (const auto& [key, value] : user.items()) {
        if (!tmpl.contains(key)) throw UserError("config: unknown key " + path + key);
        if (value.is_object()) check_known_keys(value, tmpl.at(key), path + key + ".");
    }
}

void apply_config(PipelineConfig& c, const json& j) {
    if (j.contains("phantom")) {
        const auto& p = j.at("phantom");
        if (p.contains("dims")) c.phantom.dims = p.at("dims").get<std::array<int, 3>>();
        if (p.contains("brain_axes_mm"))
            c.phantom.brain_axes_mm = p.at("brain_axes_mm").get<std::array<double, 3>>();
        auto crescent = [](CrescentSpec& cs, const json& cj) {
            if (cj.contains("enabled")) cs.enabled = cj.at("enabled").get<bool>();
            if (cj.contains("center_offset_mm"))
                cs.center_offset_mm = cj.at("center_offset_mm").get<std::array<double, 3>>();
            if (cj.contains("arc_radius_mm")) cs.arc_radius_mm = cj.at("arc_radius_mm").get<double>();
            if (cj.contains("tube_radius_mm")) cs.tube_radius_mm = cj.at("tube_radius_mm").get<double>();
            if (cj.contains("arc_span_rad")) cs.arc_span_rad = cj.at("arc_span_rad").get<double>();
            if (cj.contains("taper")) cs.taper = cj.at("taper").get<double>();
            if (cj.contains("z_slope_mm")) cs.z_slope_mm = cj.at("z_slope_mm").get<double>();
        };
        if (p.contains("left")) crescent(c.phantom.left, p.at("left"));
        if (p.contains("right")) crescent(c.phantom.right, p.at("right"));
        if (p.contains("bridge")) c.phantom.bridge = p.at("bridge").get<bool>();
        if (p.contains("bridge_radius_mm"))
            c.phantom.bridge_radius_mm = p.at("bridge_radius_mm").get<double>();
        if (p.contains("subarachnoid_rim_mm"))
            c.phantom.subarachnoid_rim_mm = p.at("subarachnoid_rim_mm").get<double>();
        if (p.contains("rim_pv_weight")) c.phantom.rim_pv_weight = p.at("rim_pv_weight").get<double>();
        if (p.contains("gm_shell_frac")) c.phantom.gm_shell_frac = p.at("gm_shell_frac").get<double>();
        if (p.contains("acpc_z_fraction"))
            c.phantom.acpc_z_fraction = p.at("acpc_z_fraction").get<double>();
    }
    if (j.contains("sites")) {
        c.sites.clear();
        for (const auto& sj : j.at("sites")) {
            SiteProfile s;
            s.site_id = sj.at("site_id").get<std::string>();
            s.vendor = sj.value("vendor", "Siemens");
            s.csf_mean = sj.value("csf_mean", s.csf_mean);
            s.gm_mean = sj.value("gm_mean", s.gm_mean);
            s.wm_mean = sj.value("wm_mean", s.wm_mean);
            s.noise_sigma = sj.value("noise_sigma", s.noise_sigma);
            s.bias_amplitude = sj.value("bias_amplitude", s.bias_amplitude);
            s.contrast_gamma = sj.value("contrast_gamma", s.contrast_gamma);
            if (sj.contains("spacing")) s.spacing = spacing_from(sj.at("spacing"));
            c.sites.push_back(std::move(s));
        }
    }
    if (j.contains("cohort_n")) c.cohort_n = j.at("cohort_n").get<int>();
    if (j.contains("anatomy_jitter")) c.anatomy_jitter = j.at("anatomy_jitter").get<double>();
    if (j.contains("ipb")) {
        const auto& p = j.at("ipb");
        if (p.contains("csf_threshold")) c.ipb.csf_threshold = p.at("csf_threshold").get<double>();
        if (p.contains("erosion_diameter_mm"))
            c.ipb.erosion_diameter_mm = p.at("erosion_diameter_mm").get<double>();
        if (p.contains("center_distance_mm"))
            c.ipb.center_distance_mm = p.at("center_distance_mm").get<double>();
        if (p.contains("connectivity")) {
            const std::string s = p.at("connectivity").get<std::string>();
            if (s == "six") c.ipb.connectivity = Connectivity::six;
            else if (s == "twenty_six") c.ipb.connectivity = Connectivity::twenty_six;
            else throw UserError("config: unknown connectivity " + s);
        }
    }
    if (j.contains("unet")) {
        const auto& p = j.at("unet");
        if (p.contains("levels")) c.unet.levels = p.at("levels").get<int>();
        if (p.contains("base_filters")) c.unet.base_filters = p.at("base_filters").get<int>();
        if (p.contains("input_h")) c.unet.input_h = p.at("input_h").get<int>();
        if (p.contains("input_w")) c.unet.input_w = p.at("input_w").get<int>();
    }
    if (j.contains("train")) {
        const auto& p = j.at("train");
        if (p.contains("lr")) c.train.adam.lr = p.at("lr").get<double>();
        if (p.contains("batch_size")) c.train.batch_size = p.at("batch_size").get<int>();
        if (p.contains("max_epochs")) c.train.max_epochs = p.at("max_epochs").get<int>();
        if (p.contains("early_stop_patience"))
            c.train.early_stop_patience = p.at("early_stop_patience").get<int>();
        if (p.contains("checkpoint_policy")) {
            const std::string s = p.at("checkpoint_policy").get<std::string>();
            if (s == "final_epoch") c.train.checkpoint_policy = CheckpointPolicy::final_epoch;
            else if (s == "best_val") c.train.checkpoint_policy = CheckpointPolicy::best_val;
            else throw UserError("config: unknown checkpoint policy " + s);
        }
        if (p.contains("seed")) c.train.seed = p.at("seed").get<std::uint64_t>();
        if (p.contains("augment")) {
            const auto& a = p.at("augment");
            if (a.contains("rotate_deg")) c.train.augment.rotate_deg = a.at("rotate_deg").get<double>();
            if (a.contains("scale_lo")) c.train.augment.scale_lo = a.at("scale_lo").get<double>();
            if (a.contains("scale_hi")) c.train.augment.scale_hi = a.at("scale_hi").get<double>();
            if (a.contains("shear_deg")) c.train.augment.shear_deg = a.at("shear_deg").get<double>();
            if (a.contains("translate_frac"))
                c.train.augment.translate_frac = a.at("translate_frac").get<double>();
            if (a.contains("probability")) c.train.augment.probability = a.at("probability").get<double>();
        }
    }
    if (j.contains("experiments")) {
        const auto& p = j.at("experiments");
        auto& e = c.experiments;
        if (p.contains("source_manifest")) e.source_manifest = p.at("source_manifest").get<std::string>();
        if (p.contains("target_manifests"))
            e.target_manifests = p.at("target_manifests").get<std::vector<std::string>>();
        if (p.contains("target_names"))
            e.target_names = p.at("target_names").get<std::vector<std::string>>();
        if (p.contains("source_name")) e.source_name = p.at("source_name").get<std::string>();
        if (p.contains("ss_counts")) e.ss_counts = p.at("ss_counts").get<std::vector<int>>();
        if (p.contains("ss_schedules")) {
            e.ss_schedules.clear();
            std::stringstream ss(p.at("ss_schedules").get<std::string>());
            std::string item;
            while (std::getline(ss, item, ',')) e.ss_schedules.push_back(schedule_from_string(item));
        }
        if (p.contains("source_train_count"))
            e.source_train_count = p.at("source_train_count").get<int>();
        if (p.contains("test_count_per_domain"))
            e.test_count_per_domain = p.at("test_count_per_domain").get<int>();
        if (p.contains("val_fraction")) e.val_fraction = p.at("val_fraction").get<double>();
        if (p.contains("stratify_by")) e.stratify_by = p.at("stratify_by").get<std::string>();
        if (p.contains("seed")) e.seed = p.at("seed").get<std::uint64_t>();
    }
    if (j.contains("report")) {
        const auto& p = j.at("report");
        if (p.contains("baseline_model"))
            c.report.baseline_model = p.at("baseline_model").get<std::string>();
        if (p.contains("source_dataset"))
            c.report.source_dataset = p.at("source_dataset").get<std::string>();
    }
}

}  // namespace

PipelineConfig PipelineConfig::desk_profile() {
    PipelineConfig c;
    const char* vendors[] = {"Siemens", "GE", "Phillips"};
    for (int i = 0; i < 3; ++i) {
        SiteProfile s;
        s.site_id = "site" + std::to_string(i);
        s.vendor = vendors[i];
        s.noise_sigma = 6.0 + 2.0 * i;
        s.bias_amplitude = 0.15 + 0.05 * i;
        s.contrast_gamma = 0.9 + 0.1 * i;
        c.sites.push_back(std::move(s));
    }
    return c;
}

PipelineConfig PipelineConfig::paper_profile() {
    PipelineConfig c = desk_profile();
    c.unet.levels = 5;
    c.unet.base_filters = 64;
    c.unet.input_h = 256;
    c.unet.input_w = 256;
    c.train.max_epochs = 50;
    c.train.early_stop_patience = 15;
    return c;
}

std::string PipelineConfig::to_json() const { return config_json(*this).dump(2); }

void PipelineConfig::merge_json(const std::string& text) {
    json user;
    try {
        user = json::parse(text);
    } catch (const json::exception& e) {
        throw UserError(std::string("config is not valid JSON: ") + e.what());
    }
    check_known_keys(user, config_json(*this), "");
    try {
        apply_config(*this, user);
    } catch (const json::exception& e) {
        throw UserError(std::string("config: ") + e.what());
    }
}

PipelineConfig load_pipeline_config(const std::string& profile,
                                    const std::optional<std::string>& config_path) {
    PipelineConfig cfg;
    if (profile == "desk") cfg = PipelineConfig::desk_profile();
    else if (profile == "paper") cfg = PipelineConfig::paper_profile();
    else throw UserError("unknown profile: " + profile + " (expected desk or paper)");
    if (config_path) {
        std::ifstream in(*config_path);
        if (!in) throw UserError("cannot open config: " + *config_path);
        std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        cfg.merge_json(text);
    }
    return cfg;
}

void cmd_phantom(const PipelineConfig& cfg, const std::string& out_dir, int count,
                 std::uint64_t seed) {
    CohortConfig cc;
    cc.spec_template = cfg.phantom;
    cc.profiles = cfg.sites;
    cc.anatomy_jitter = cfg.anatomy_jitter;
    cc.seed = seed;
    if (cc.profiles.empty()) throw UserError("config has no site profiles");
    auto cases = generate_cohort(count, cc);
    write_cohort(cases, out_dir);
}

void cmd_preprocess_volume(const std::string& volume_path, const std::string& brain_path,
                           const std::string& out_path, const std::string& dump_map_path) {
    const Volume raw = read_image(volume_path);
    const BinaryMask brain = read_mask(brain_path);
    StandardizationMap map;
    const Volume standardized = preprocess_volume(raw, brain, &map);
    write_volume(standardized, out_path);
    if (!dump_map_path.empty()) {
        std::ofstream out(dump_map_path, std::ios::trunc);
        if (!out) throw UserError("cannot write map: " + dump_map_path);
        out << map.to_json() << '\n';
    }
}

void cmd_preprocess_manifest(const std::string& manifest_path, const std::string& out_dir,
                             bool dump_maps) {
    const Manifest in = load_manifest(manifest_path);
    fs::create_directories(out_dir);
    Manifest out = in;
    for (std::size_t i = 0; i < in.cases.size(); ++i) {
        const auto& c = in.cases[i];
        const std::string std_name = c.id + ".mvol";
        cmd_preprocess_volume(resolve_path(manifest_path, c.image),
                              resolve_path(manifest_path, c.brain),
                              (fs::path(out_dir) / std_name).string(),
                              dump_maps ? (fs::path(out_dir) / (c.id + "_map.json")).string() : "");
        out.cases[i].image = std_name;
        out.cases[i].brain =
            fs::proximate(resolve_path(manifest_path, c.brain), out_dir).string();
        if (!c.truth.empty())
            out.cases[i].truth =
                fs::proximate(resolve_path(manifest_path, c.truth), out_dir).string();
        if (!c.ss.empty())
            out.cases[i].ss = fs::proximate(resolve_path(manifest_path, c.ss), out_dir).string();
    }
    save_manifest(out, (fs::path(out_dir) / "manifest.json").string());
}

void cmd_ipb_volume(const PipelineConfig& cfg, const std::string& volume_path,
                    const std::string& brain_path, const std::string& out_path, int acpc_z,
                    const std::string& trace_dir) {
    const Volume v = read_image(volume_path);
    const BinaryMask brain = read_mask(brain_path);
    IpbParams p = cfg.ipb;
    p.acpc_z = acpc_z;
    IpbResult r = segment_ventricles(v, brain, p);
    write_volume(r.mask, out_path);
    if (!trace_dir.empty()) {
        fs::create_directories(trace_dir);
        write_volume(r.trace.csf_total, (fs::path(trace_dir) / "csf_total.mmask").string());
        write_volume(r.trace.eroded_core, (fs::path(trace_dir) / "core.mmask").string());
        write_volume(r.trace.chosen_object, (fs::path(trace_dir) / "chosen.mmask").string());
    }
}

void cmd_ipb_manifest(const PipelineConfig& cfg, const std::string& manifest_path,
                      const std::string& out_dir, const std::string& trace_dir) {
    const Manifest in = load_manifest(manifest_path);
    generate_ss_cohort(in, manifest_path, cfg.ipb, out_dir, trace_dir);
}

void cmd_emit_plans(const PipelineConfig& cfg, const std::string& out_dir, std::uint64_t seed) {
    PlanRequest req = cfg.experiments;
    req.seed = seed;
    if (req.source_manifest.empty()) throw UserError("experiments.source_manifest is not set");
    auto plans = plan_experiments(req);
    fs::create_directories(out_dir);
    for (const auto& p : plans) {
        std::ofstream out(fs::path(out_dir) / (p.id + ".json"));
        out << p.to_json() << '\n';
    }
}

void cmd_train(const PipelineConfig& cfg, const std::string& plan_path, const std::string& out_dir,
               std::optional<std::uint64_t> seed) {
    std::ifstream in(plan_path);
    if (!in) throw UserError("cannot open plan: " + plan_path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    ExperimentPlan plan = ExperimentPlan::from_json(text);
    TrainConfig tc = cfg.train;
    if (seed) tc.seed = *seed;
    run_schedule(plan, cfg.unet, tc, out_dir);
}

void cmd_eval_run(const std::string& run_dir, const std::string& out_csv) {
    std::ifstream in(fs::path(run_dir) / "plan.json");
    if (!in) throw UserError("run directory lacks plan.json: " + run_dir);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const ExperimentPlan plan = ExperimentPlan::from_json(text);

    std::ifstream rin(fs::path(run_dir) / "run.json");
    if (!rin) throw UserError("run directory lacks run.json: " + run_dir);
    json run_j;
    rin >> run_j;
    const std::string ckpt_file = run_j.at("final_checkpoint").get<std::string>();
    ModelCheckpoint ckpt = load_checkpoint((fs::path(run_dir) / ckpt_file).string());

    const std::string model_tag =
        plan.schedule == Schedule::gs_only
            ? "gs_only"
            : to_string(plan.schedule) + "(" + std::to_string(plan.ss_count) + ")";

    const Manifest source = load_manifest(plan.source_manifest);
    const Manifest target = load_manifest(plan.target_manifest);

    std::vector<PairedCase> rows;
    for (const auto& q : plan.held_out_test_ids) {
        const auto colon = q.find(':');
        const std::string domain = q.substr(0, colon);
        const std::string id = q.substr(colon + 1);
        const bool is_source = domain == "source";
        const Manifest& man = is_source ? source : target;
        const std::string& man_path = is_source ? plan.source_manifest : plan.target_manifest;
        const ManifestCase* c = man.find(id);
        if (!c) throw UserError("held-out case missing from manifest: " + q);
        if (c->truth.empty()) throw UserError("held-out case lacks ground truth: " + q);
        const Volume v = read_image(resolve_path(man_path, c->image));
        const BinaryMask brain = read_mask(resolve_path(man_path, c->brain));
        const BinaryMask truth = read_mask(resolve_path(man_path, c->truth));
        const BinaryMask pred = predict_volume(ckpt.model, v, brain);
        PairedCase r;
        r.case_id = id;
        r.model = model_tag;
        r.dataset = is_source ? plan.source_name : plan.target_name;
        r.dsc = dsc(pred, truth);
        r.predicted_ml = mask_volume_ml(pred);
        r.truth_ml = mask_volume_ml(truth);
        rows.push_back(std::move(r));
    }
    write_metrics_csv(rows, out_csv);
}

void cmd_eval_ipb(const std::string& manifest_path, const std::string& dataset,
                  const std::vector<std::string>& ids, const std::string& out_csv) {
    const Manifest man = load_manifest(manifest_path);
    std::vector<PairedCase> rows;
    auto eval_case = [&](const ManifestCase& c) {
        if (c.ss.empty() || c.truth.empty()) return;
        const BinaryMask ss = read_mask(resolve_path(manifest_path, c.ss));
        const BinaryMask truth = read_mask(resolve_path(manifest_path, c.truth));
        PairedCase r;
        r.case_id = c.id;
        r.model = "ipb";
        r.dataset = dataset;
        r.dsc = dsc(ss, truth);
        r.predicted_ml = mask_volume_ml(ss);
        r.truth_ml = mask_volume_ml(truth);
        rows.push_back(std::move(r));
    };
    if (ids.empty()) {
        for (const auto& c : man.cases) eval_case(c);
    } else {
        for (const auto& id : ids) {
            const ManifestCase* c = man.find(id);
            if (!c) throw UserError("case not in manifest: " + id);
            eval_case(*c);
        }
    }
    if (rows.empty()) throw UserError("no evaluable cases (need both ss and truth masks)");
    write_metrics_csv(rows, out_csv);
}

void cmd_report(const PipelineConfig& cfg, const std::vector<std::string>& metrics_paths,
                const std::string& out_dir) {
    std::vector<PairedCase> rows;
    for (const auto& p : metrics_paths) {
        auto part = load_metrics_csv(p);
        rows.insert(rows.end(), part.begin(), part.end());
    }
    if (rows.empty()) throw UserError("no data: metrics files are empty");
    write_report(rows, out_dir, cfg.report);
}

}  // namespace lvseg
