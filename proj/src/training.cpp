#include "lvseg/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>

#include "json.hpp"
#include "lvseg/layers.hpp"

namespace lvseg {

namespace fs = std::filesystem;
using nlohmann::json;

std::string to_string(Schedule s) {
    switch (s) {
        case Schedule::gs_only: return "gs_only";
        case Schedule::ss_only: return "ss_only";
        case Schedule::gs_then_ss: return "gs_then_ss";
        case Schedule::ss_then_gs: return "ss_then_gs";
    }
    throw std::logic_error("bad schedule");
}

Schedule schedule_from_string(const std::string& s) {
    if (s == "gs_only") return Schedule::gs_only;
    if (s == "ss_only") return Schedule::ss_only;
    if (s == "gs_then_ss") return Schedule::gs_then_ss;
    if (s == "ss_then_gs") return Schedule::ss_then_gs;
    throw std::runtime_error("unknown schedule: " + s);
}

void TrainConfig::validate() const {
    if (!(adam.lr > 0.0)) throw std::runtime_error("learning rate must be positive");
    if (batch_size < 1) throw std::runtime_error("batch size must be positive");
    if (max_epochs < 1) throw std::runtime_error("max_epochs must be positive");
    if (early_stop_patience >= max_epochs)
        throw std::runtime_error("early-stop patience must be below max_epochs");
}

std::string ExperimentPlan::to_json() const {
    json j;
    j["id"] = id;
    j["schedule"] = lvseg::to_string(schedule);
    j["ss_count"] = ss_count;
    j["source_manifest"] = source_manifest;
    j["target_manifest"] = target_manifest;
    j["source_name"] = source_name;
    j["target_name"] = target_name;
    j["split"] = {{"train", train_ids}, {"val", val_ids}, {"held_out_test", held_out_test_ids}};
    j["stratify_by"] = stratify_by;
    j["seed"] = seed;
    return j.dump(2);
}

ExperimentPlan ExperimentPlan::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string("malformed plan: ") + e.what());
    }
    ExperimentPlan p;
    p.id = j.at("id").get<std::string>();
    p.schedule = schedule_from_string(j.at("schedule").get<std::string>());
    p.ss_count = j.at("ss_count").get<int>();
    p.source_manifest = j.at("source_manifest").get<std::string>();
    p.target_manifest = j.at("target_manifest").get<std::string>();
    p.source_name = j.value("source_name", "source");
    p.target_name = j.value("target_name", "target");
    p.train_ids = j.at("split").at("train").get<std::vector<std::string>>();
    p.val_ids = j.at("split").at("val").get<std::vector<std::string>>();
    p.held_out_test_ids = j.at("split").at("held_out_test").get<std::vector<std::string>>();
    p.stratify_by = j.value("stratify_by", "vendor");
    p.seed = j.at("seed").get<std::uint64_t>();
    p.validate();
    return p;
}

void ExperimentPlan::validate() const {
    for (const auto& t : held_out_test_ids) {
        for (const auto& x : train_ids)
            if (x == t) throw std::runtime_error("held-out case leaks into training: " + t);
        for (const auto& x : val_ids)
            if (x == t) throw std::runtime_error("held-out case leaks into validation: " + t);
    }
}

namespace {

// Stratified, seeded ordering: shuffle ids inside each stratum, then deal
// strata round-robin. Prefix slices of the result are vendor-balanced.
std::vector<std::string> stratified_order(const Manifest& m, const std::string& key, Rng& rng) {
    std::map<std::string, std::vector<std::string>> strata;
    for (const auto& c : m.cases) {
        const std::string tag = key == "site" ? c.site : c.vendor;
        strata[tag].push_back(c.id);
    }
    for (auto& [tag, ids] : strata) {
        std::sort(ids.begin(), ids.end());
        rng.shuffle(ids);
    }
    std::vector<std::string> out;
    bool more = true;
    for (std::size_t round = 0; more; ++round) {
        more = false;
        for (auto& [tag, ids] : strata)
            if (round < ids.size()) {
                out.push_back(ids[round]);
                more = true;
            }
    }
    return out;
}

std::vector<std::string> qualify(const std::vector<std::string>& ids, const std::string& domain) {
    std::vector<std::string> out;
    out.reserve(ids.size());
    for (const auto& id : ids) out.push_back(domain + ":" + id);
    return out;
}

struct DomainSplit {
    std::vector<std::string> pool;  // training candidates, stratified order
    std::vector<std::string> test;
};

DomainSplit split_domain(const Manifest& m, const std::string& key, int test_count, Rng& rng) {
    std::vector<std::string> order = stratified_order(m, key, rng);
    if (static_cast<int>(order.size()) <= test_count)
        throw std::runtime_error("insufficient cases: need more than " + std::to_string(test_count));
    DomainSplit s;
    s.test.assign(order.begin(), order.begin() + test_count);
    s.pool.assign(order.begin() + test_count, order.end());
    return s;
}

// First val_fraction of a stratified-ordered list becomes validation.
void carve_val(const std::vector<std::string>& ids, double val_fraction,
               std::vector<std::string>& train, std::vector<std::string>& val) {
    const std::size_t n_val = std::max<std::size_t>(1, static_cast<std::size_t>(
                                                            std::floor(ids.size() * val_fraction)));
    if (n_val >= ids.size()) throw std::runtime_error("insufficient cases for a validation split");
    val.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_val));
    train.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_val), ids.end());
}

}  // namespace

std::vector<ExperimentPlan> plan_experiments(const PlanRequest& req) {
    if (req.target_manifests.size() != req.target_names.size())
        throw std::runtime_error("target manifest/name lists differ in length");
    Rng rng(mix_seed(req.seed, 0x9a715ULL));
    const Manifest source = load_manifest(req.source_manifest);
    DomainSplit source_split = split_domain(source, req.stratify_by, req.test_count_per_domain, rng);
    if (static_cast<int>(source_split.pool.size()) < req.source_train_count)
        throw std::runtime_error("insufficient source cases for the requested training count");
    std::vector<std::string> gs_ids(source_split.pool.begin(),
                                    source_split.pool.begin() + req.source_train_count);
    std::vector<std::string> gs_train, gs_val;
    carve_val(gs_ids, req.val_fraction, gs_train, gs_val);

    struct TargetInfo {
        DomainSplit split;
        std::string manifest;
        std::string name;
    };
    std::vector<TargetInfo> targets;
    for (std::size_t t = 0; t < req.target_manifests.size(); ++t) {
        const Manifest m = load_manifest(req.target_manifests[t]);
        for (const auto& c : m.cases)
            if (c.ss.empty())
                throw std::runtime_error("target manifest lacks silver-standard masks: " +
                                         req.target_manifests[t]);
        targets.push_back({split_domain(m, req.stratify_by, req.test_count_per_domain, rng),
                           req.target_manifests[t], req.target_names[t]});
    }

    std::vector<ExperimentPlan> plans;

    // gs_only baseline, evaluated on every domain's held-out set
    {
        ExperimentPlan p;
        p.id = "gs_only";
        p.schedule = Schedule::gs_only;
        p.source_manifest = req.source_manifest;
        p.target_manifest = req.target_manifests.empty() ? req.source_manifest
                                                         : req.target_manifests.front();
        p.source_name = req.source_name;
        p.target_name = targets.empty() ? "target" : targets.front().name;
        p.train_ids = qualify(gs_train, "source");
        p.val_ids = qualify(gs_val, "source");
        p.held_out_test_ids = qualify(source_split.test, "source");
        p.stratify_by = req.stratify_by;
        p.seed = mix_seed(req.seed, 0x6501ULL);
        p.validate();
        plans.push_back(std::move(p));
    }

    for (std::size_t t = 0; t < targets.size(); ++t) {
        for (int count : req.ss_counts) {
            if (static_cast<int>(targets[t].split.pool.size()) < count)
                throw std::runtime_error("insufficient target cases for ss_count " +
                                         std::to_string(count));
            std::vector<std::string> ss_ids(targets[t].split.pool.begin(),
                                            targets[t].split.pool.begin() + count);
            std::vector<std::string> ss_train, ss_val;
            carve_val(ss_ids, req.val_fraction, ss_train, ss_val);
            for (Schedule sched : req.ss_schedules) {
                ExperimentPlan p;
                p.id = lvseg::to_string(sched) + "_n" + std::to_string(count) + "_" +
                       targets[t].name;
                p.schedule = sched;
                p.ss_count = count;
                p.source_manifest = req.source_manifest;
                p.target_manifest = targets[t].manifest;
                p.source_name = req.source_name;
                p.target_name = targets[t].name;
                p.stratify_by = req.stratify_by;
                p.seed = mix_seed(req.seed, mix_seed(0x9e57ULL + t, count) ^
                                                static_cast<std::uint64_t>(sched));
                const bool uses_gs = sched != Schedule::ss_only;
                p.train_ids = qualify(ss_train, "target");
                p.val_ids = qualify(ss_val, "target");
                if (uses_gs) {
                    auto gt = qualify(gs_train, "source");
                    auto gv = qualify(gs_val, "source");
                    p.train_ids.insert(p.train_ids.end(), gt.begin(), gt.end());
                    p.val_ids.insert(p.val_ids.end(), gv.begin(), gv.end());
                }
                p.held_out_test_ids = qualify(targets[t].split.test, "target");
                auto st = qualify(source_split.test, "source");
                p.held_out_test_ids.insert(p.held_out_test_ids.end(), st.begin(), st.end());
                p.validate();
                plans.push_back(std::move(p));
            }
        }
    }
    return plans;
}

namespace {

struct DomainIds {
    std::vector<std::string> source, target;
};

DomainIds split_by_domain(const std::vector<std::string>& qualified) {
    DomainIds d;
    for (const auto& q : qualified) {
        const auto colon = q.find(':');
        if (colon == std::string::npos) throw std::runtime_error("unqualified case id: " + q);
        const std::string domain = q.substr(0, colon);
        const std::string id = q.substr(colon + 1);
        if (domain == "source") d.source.push_back(id);
        else if (domain == "target") d.target.push_back(id);
        else throw std::runtime_error("unknown domain in case id: " + q);
    }
    return d;
}

}  // namespace

SliceDataset load_slices(const Manifest& manifest, const std::string& manifest_path,
                         const std::vector<std::string>& ids, const std::string& mask_role,
                         int h, int w) {
    SliceDataset ds;
    ds.h = h;
    ds.w = w;
    for (const auto& id : ids) {
        const ManifestCase* c = manifest.find(id);
        if (!c) throw std::runtime_error("case not in manifest: " + id);
        const Volume v = read_image(resolve_path(manifest_path, c->image));
        if (v.intensity_state != IntensityState::standardized)
            throw std::runtime_error("training expects standardized volumes: " + id);
        const std::string mask_file = mask_role == "gs" ? c->truth : c->ss;
        if (mask_file.empty())
            throw std::runtime_error("case " + id + " lacks a " + mask_role + " mask");
        const BinaryMask m = read_mask(resolve_path(manifest_path, mask_file));
        if (m.nx != v.nx || m.ny != v.ny || m.nz != v.nz)
            throw std::runtime_error("mask/volume grid mismatch for " + id);

        const int off_y = (v.ny - h) / 2;
        const int off_x = (v.nx - w) / 2;
        for (int k = 0; k < v.nz; ++k) {
            SlicePair s;
            s.h = h;
            s.w = w;
            s.image.assign(static_cast<std::size_t>(h) * w, 0.0);
            s.mask.assign(static_cast<std::size_t>(h) * w, 0);
            for (int y = 0; y < h; ++y) {
                const int sy = y + off_y;
                if (sy < 0 || sy >= v.ny) continue;
                for (int x = 0; x < w; ++x) {
                    const int sx = x + off_x;
                    if (sx < 0 || sx >= v.nx) continue;
                    s.image[static_cast<std::size_t>(y) * w + x] = v.at(sx, sy, k) / 1023.0;
                    s.mask[static_cast<std::size_t>(y) * w + x] = m.at(sx, sy, k) ? 1 : 0;
                }
            }
            ds.slices.push_back(std::move(s));
        }
    }
    return ds;
}

namespace {

// Packs slice index range into batch tensors; target is one-hot.
void fill_batch(const SliceDataset& ds, const std::vector<std::size_t>& order, std::size_t begin,
                std::size_t end, const AugmentConfig* augment, Rng* rng, Tensor& x, Tensor& t) {
    const std::size_t n = end - begin;
    const std::size_t hw = static_cast<std::size_t>(ds.h) * ds.w;
    x = Tensor({n, 1, static_cast<std::size_t>(ds.h), static_cast<std::size_t>(ds.w)});
    t = Tensor({n, 2, static_cast<std::size_t>(ds.h), static_cast<std::size_t>(ds.w)});
    for (std::size_t i = 0; i < n; ++i) {
        const SlicePair* s = &ds.slices[order[begin + i]];
        SlicePair tmp;
        if (augment) {
            tmp = augment_pair(*s, *augment, *rng);
            s = &tmp;
        }
        for (std::size_t q = 0; q < hw; ++q) {
            x.data[i * hw + q] = s->image[q];
            const bool fg = s->mask[q] != 0;
            t.data[(i * 2) * hw + q] = fg ? 0.0 : 1.0;
            t.data[(i * 2 + 1) * hw + q] = fg ? 1.0 : 0.0;
        }
    }
}

}  // namespace

double evaluate_loss(UNet& net, const SliceDataset& ds, int batch_size) {
    if (ds.slices.empty()) throw std::runtime_error("empty evaluation set");
    std::vector<std::size_t> order(ds.slices.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t b = 0; b < order.size(); b += batch_size) {
        const std::size_t e = std::min(order.size(), b + batch_size);
        Tensor x, t;
        fill_batch(ds, order, b, e, nullptr, nullptr, x, t);
        Tensor probs = net.forward(x, false, nullptr);
        total += generalized_dice_loss(probs, t, nullptr);
        ++batches;
    }
    return total / static_cast<double>(batches);
}

EpochStats train_model(UNet& net, const SliceDataset& train, const SliceDataset& val,
                       const TrainConfig& cfg, std::uint64_t phase_salt) {
    cfg.validate();
    if (train.slices.empty()) throw std::runtime_error("empty training set");
    Rng shuffle_rng(mix_seed(cfg.seed, mix_seed(phase_salt, 0x5affULL)));
    Rng augment_rng(mix_seed(cfg.seed, mix_seed(phase_salt, 0xa06ULL)));

    auto params = net.params();
    AdamState adam = AdamState::for_params(params);

    EpochStats stats;
    double best_val = 1e300;
    UNet best_net = net;
    int best_epoch = 0;

    std::vector<std::size_t> order(train.slices.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        shuffle_rng.shuffle(order);
        double epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
            const std::size_t e = std::min(order.size(), b + static_cast<std::size_t>(cfg.batch_size));
            Tensor x, t;
            fill_batch(train, order, b, e, &cfg.augment, &augment_rng, x, t);
            UNetCache cache;
            Tensor probs = net.forward(x, true, &cache);
            Tensor dprobs;
            epoch_loss += generalized_dice_loss(probs, t, &dprobs);
            UNetGrads grads = net.backward(cache, dprobs);
            params = net.params();
            adam_step(params, grads.tensors, adam, cfg.adam);
            ++batches;
        }
        stats.train_loss.push_back(epoch_loss / static_cast<double>(batches));
        const double vloss = evaluate_loss(net, val, cfg.batch_size);
        stats.val_loss.push_back(vloss);
        stats.stopped_epoch = epoch;
        if (vloss < best_val) {
            best_val = vloss;
            best_epoch = epoch;
            if (cfg.checkpoint_policy == CheckpointPolicy::best_val) best_net = net;
        }
        if (epoch - best_epoch >= cfg.early_stop_patience) break;
    }
    stats.best_epoch = best_epoch;
    if (cfg.checkpoint_policy == CheckpointPolicy::best_val) net = best_net;
    return stats;
}

RunRecord run_schedule(const ExperimentPlan& plan, const UNetConfig& unet_cfg,
                       const TrainConfig& train_cfg, const std::string& out_dir) {
    const auto t0 = std::chrono::steady_clock::now();
    plan.validate();
    unet_cfg.validate();
    train_cfg.validate();
    fs::create_directories(out_dir);

    std::vector<std::string> roles;
    switch (plan.schedule) {
        case Schedule::gs_only: roles = {"gs"}; break;
        case Schedule::ss_only: roles = {"ss"}; break;
        case Schedule::gs_then_ss: roles = {"gs", "ss"}; break;
        case Schedule::ss_then_gs: roles = {"ss", "gs"}; break;
    }

    const Manifest source = load_manifest(plan.source_manifest);
    const Manifest target = load_manifest(plan.target_manifest);
    const DomainIds train_ids = split_by_domain(plan.train_ids);
    const DomainIds val_ids = split_by_domain(plan.val_ids);

    RunRecord rec;
    rec.plan = plan;

    UNet net = UNet::he_init(unet_cfg, mix_seed(plan.seed, 0x171ULL));
    {
        std::ofstream plan_out(fs::path(out_dir) / "plan.json");
        plan_out << plan.to_json() << '\n';
    }

    for (std::size_t phase = 0; phase < roles.size(); ++phase) {
        const std::string& role = roles[phase];
        const bool is_gs = role == "gs";
        const Manifest& man = is_gs ? source : target;
        const std::string& man_path = is_gs ? plan.source_manifest : plan.target_manifest;
        const auto& tr = is_gs ? train_ids.source : train_ids.target;
        const auto& va = is_gs ? val_ids.source : val_ids.target;
        if (tr.empty() || va.empty())
            throw std::runtime_error("plan has no " + role + " train/val cases for phase " +
                                     std::to_string(phase + 1));

        SliceDataset train = load_slices(man, man_path, tr, role, unet_cfg.input_h, unet_cfg.input_w);
        SliceDataset val = load_slices(man, man_path, va, role, unet_cfg.input_h, unet_cfg.input_w);

        PhaseRecord pr;
        pr.mask_role = role;
        pr.initial_val_loss = evaluate_loss(net, val, train_cfg.batch_size);

        TrainConfig cfg = train_cfg;
        cfg.seed = mix_seed(train_cfg.seed, mix_seed(plan.seed, phase));
        EpochStats stats = train_model(net, train, val, cfg, phase);
        pr.train_loss = stats.train_loss;
        pr.val_loss = stats.val_loss;
        pr.stopped_epoch = stats.stopped_epoch;
        pr.best_epoch = stats.best_epoch;

        ModelCheckpoint ckpt;
        ckpt.config = unet_cfg;
        ckpt.model = net;
        ckpt.epoch = train_cfg.checkpoint_policy == CheckpointPolicy::best_val ? stats.best_epoch
                                                                               : stats.stopped_epoch;
        ckpt.stopped_epoch = stats.stopped_epoch;
        ckpt.train_loss_history = stats.train_loss;
        ckpt.val_loss_history = stats.val_loss;
        pr.checkpoint_file = "phase" + std::to_string(phase + 1) + ".ckpt";
        save_checkpoint(ckpt, (fs::path(out_dir) / pr.checkpoint_file).string());
        rec.phases.push_back(std::move(pr));
    }

    rec.final_checkpoint = rec.phases.back().checkpoint_file;
    rec.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    {
        std::ofstream loss_csv(fs::path(out_dir) / "loss.csv");
        loss_csv << "phase,role,epoch,train_loss,val_loss\n";
        char buf[64];
        for (std::size_t p = 0; p < rec.phases.size(); ++p) {
            const auto& pr = rec.phases[p];
            for (std::size_t e = 0; e < pr.train_loss.size(); ++e) {
                loss_csv << (p + 1) << ',' << pr.mask_role << ',' << (e + 1) << ',';
                std::snprintf(buf, sizeof(buf), "%.17g", pr.train_loss[e]);
                loss_csv << buf << ',';
                std::snprintf(buf, sizeof(buf), "%.17g", pr.val_loss[e]);
                loss_csv << buf << '\n';
            }
        }
    }
    {
        std::ofstream run_out(fs::path(out_dir) / "run.json");
        run_out << rec.to_json() << '\n';
    }
    return rec;
}

std::string RunRecord::to_json() const {
    json j;
    j["plan_id"] = plan.id;
    j["schedule"] = lvseg::to_string(plan.schedule);
    j["final_checkpoint"] = final_checkpoint;
    j["wall_seconds"] = wall_seconds;
    json phases_j = json::array();
    for (const auto& p : phases) {
        phases_j.push_back({{"role", p.mask_role},
                            {"initial_val_loss", p.initial_val_loss},
                            {"stopped_epoch", p.stopped_epoch},
                            {"best_epoch", p.best_epoch},
                            {"checkpoint", p.checkpoint_file},
                            {"train_loss", p.train_loss},
                            {"val_loss", p.val_loss}});
    }
    j["phases"] = std::move(phases_j);
    return j.dump(2);
}

BinaryMask predict_volume(UNet& model, const Volume& v, const BinaryMask& brain) {
    if (v.intensity_state != IntensityState::standardized)
        throw std::runtime_error("predict_volume expects a standardized volume");
    if (v.nx != brain.nx || v.ny != brain.ny || v.nz != brain.nz)
        throw std::runtime_error("volume/brain grid mismatch");
    const int h = model.cfg.input_h, w = model.cfg.input_w;
    const int off_y = (v.ny - h) / 2;
    const int off_x = (v.nx - w) / 2;

    BinaryMask out = make_mask(v.nx, v.ny, v.nz, brain.spacing);
    const int batch = 16;
    for (int k0 = 0; k0 < v.nz; k0 += batch) {
        const int kn = std::min(v.nz, k0 + batch);
        Tensor x({static_cast<std::size_t>(kn - k0), 1, static_cast<std::size_t>(h),
                  static_cast<std::size_t>(w)});
        for (int k = k0; k < kn; ++k)
            for (int y = 0; y < h; ++y) {
                const int sy = y + off_y;
                if (sy < 0 || sy >= v.ny) continue;
                for (int x_ = 0; x_ < w; ++x_) {
                    const int sx = x_ + off_x;
                    if (sx < 0 || sx >= v.nx) continue;
                    x.at4(k - k0, 0, y, x_) = v.at(sx, sy, k) / 1023.0;
                }
            }
        Tensor probs = model.forward(x, false, nullptr);
        for (int k = k0; k < kn; ++k)
            for (int y = 0; y < h; ++y) {
                const int sy = y + off_y;
                if (sy < 0 || sy >= v.ny) continue;
                for (int x_ = 0; x_ < w; ++x_) {
                    const int sx = x_ + off_x;
                    if (sx < 0 || sx >= v.nx) continue;
                    // argmax with background winning ties
                    if (probs.at4(k - k0, 1, y, x_) > probs.at4(k - k0, 0, y, x_) &&
                        brain.at(sx, sy, k))
                        out.set(sx, sy, k, true);
                }
            }
    }
    return out;
}

}  // namespace lvseg
