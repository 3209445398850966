#include "lvseg/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace lvseg {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), f, v);
    return buf;
}

// family rank + ss count for the canonical model ordering
std::pair<int, int> model_rank(const std::string& model) {
    auto family = [&](const std::string& name) -> int {
        if (name == "ipb") return 0;
        if (name == "gs_only") return 1;
        if (name.rfind("ss_only", 0) == 0) return 2;
        if (name.rfind("gs_then_ss", 0) == 0) return 3;
        if (name.rfind("ss_then_gs", 0) == 0) return 4;
        return 5;
    };
    int count = 0;
    const auto lp = model.find('(');
    if (lp != std::string::npos) count = std::atoi(model.c_str() + lp + 1);
    return {family(model), count};
}

bool model_less(const std::string& a, const std::string& b) {
    const auto ra = model_rank(a), rb = model_rank(b);
    if (ra != rb) return ra < rb;
    return a < b;
}

std::string sanitize(const std::string& name) {
    std::string out;
    for (char c : name)
        out += (std::isalnum(static_cast<unsigned char>(c)) ? c : '_');
    while (!out.empty() && out.back() == '_') out.pop_back();
    return out;
}

// Minimal deterministic SVG writer.
class Svg {
public:
    Svg(int w, int h) : w_(w), h_(h) {
        body_ << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
              << "\" viewBox=\"0 0 " << w << " " << h << "\">\n";
        body_ << "<rect width=\"" << w << "\" height=\"" << h << "\" fill=\"white\"/>\n";
    }
    void line(double x1, double y1, double x2, double y2, const std::string& color,
              double width = 1.0, const std::string& dash = "") {
        body_ << "<line x1=\"" << fmt("%.2f", x1) << "\" y1=\"" << fmt("%.2f", y1) << "\" x2=\""
              << fmt("%.2f", x2) << "\" y2=\"" << fmt("%.2f", y2) << "\" stroke=\"" << color
              << "\" stroke-width=\"" << fmt("%.2f", width) << "\"";
        if (!dash.empty()) body_ << " stroke-dasharray=\"" << dash << "\"";
        body_ << "/>\n";
    }
    void circle(double x, double y, double r, const std::string& color) {
        body_ << "<circle cx=\"" << fmt("%.2f", x) << "\" cy=\"" << fmt("%.2f", y) << "\" r=\""
              << fmt("%.2f", r) << "\" fill=\"" << color << "\"/>\n";
    }
    void text(double x, double y, const std::string& s, int size = 11,
              const std::string& anchor = "start") {
        body_ << "<text x=\"" << fmt("%.2f", x) << "\" y=\"" << fmt("%.2f", y)
              << "\" font-family=\"sans-serif\" font-size=\"" << size << "\" text-anchor=\""
              << anchor << "\">" << s << "</text>\n";
    }
    void save(const std::string& path) {
        std::ofstream out(path, std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write figure: " + path);
        out << body_.str() << "</svg>\n";
    }

private:
    int w_, h_;
    std::ostringstream body_;
};

struct Axis {
    double lo = 0.0, hi = 1.0;
    double px0 = 0.0, px1 = 1.0;
    double to_px(double v) const { return px0 + (v - lo) / (hi - lo) * (px1 - px0); }
};

const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

}  // namespace

void write_metrics_csv(const std::vector<PairedCase>& rows, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write metrics: " + path);
    out << "model,dataset,case_id,dsc,predicted_ml,truth_ml\n";
    for (const auto& r : rows) {
        out << r.model << ',' << r.dataset << ',' << r.case_id << ',' << fmt("%.17g", r.dsc) << ','
            << fmt("%.17g", r.predicted_ml) << ',' << fmt("%.17g", r.truth_ml) << '\n';
    }
}

std::vector<PairedCase> load_metrics_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open metrics: " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("no data: empty metrics file " + path);
    if (line != "model,dataset,case_id,dsc,predicted_ml,truth_ml")
        throw std::runtime_error("missing columns in metrics file " + path);
    std::vector<PairedCase> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        PairedCase r;
        std::string dsc_s, pred_s, truth_s;
        if (!std::getline(ss, r.model, ',') || !std::getline(ss, r.dataset, ',') ||
            !std::getline(ss, r.case_id, ',') || !std::getline(ss, dsc_s, ',') ||
            !std::getline(ss, pred_s, ',') || !std::getline(ss, truth_s, ','))
            throw std::runtime_error("malformed metrics row in " + path + ": " + line);
        r.dsc = std::stod(dsc_s);
        r.predicted_ml = std::stod(pred_s);
        r.truth_ml = std::stod(truth_s);
        rows.push_back(std::move(r));
    }
    return rows;
}

std::vector<SummaryCell> summarize(const std::vector<PairedCase>& rows) {
    if (rows.empty()) throw std::runtime_error("no data: metrics are empty");
    std::map<std::pair<std::string, std::string>, std::vector<const PairedCase*>> cells;
    for (const auto& r : rows) cells[{r.model, r.dataset}].push_back(&r);

    std::vector<std::pair<std::string, std::string>> keys;
    for (const auto& [k, v] : cells) keys.push_back(k);
    std::sort(keys.begin(), keys.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second < b.second;
        return model_less(a.first, b.first);
    });

    std::vector<SummaryCell> out;
    for (const auto& key : keys) {
        const auto& group = cells[key];
        SummaryCell c;
        c.model = key.first;
        c.dataset = key.second;
        c.n = group.size();
        std::vector<double> dscs, truth, pred;
        std::vector<std::pair<double, double>> pairs;
        for (const auto* r : group) {
            dscs.push_back(r->dsc);
            truth.push_back(r->truth_ml);
            pred.push_back(r->predicted_ml);
            pairs.emplace_back(r->predicted_ml, r->truth_ml);
        }
        c.mean_dsc = mean_of(dscs);
        c.cov_dsc = dscs.size() >= 2 && c.mean_dsc != 0.0 ? cov_of(dscs) : 0.0;
        if (pairs.size() >= 2) {
            bool const_x = true;
            for (double t : truth)
                if (t != truth[0]) const_x = false;
            if (!const_x) c.regression = linear_regression(truth, pred);
            c.agreement = bland_altman(pairs);
        }
        out.push_back(std::move(c));
    }
    return out;
}

namespace {

json grouping_json(const std::string& label, const std::vector<std::string>& models,
                   const std::vector<std::vector<double>>& groups) {
    json out;
    out["grouping"] = label;
    out["models"] = models;
    if (groups.size() < 2) {
        out["note"] = "fewer than two groups; ANOVA not applicable";
        return out;
    }
    for (const auto& g : groups)
        if (g.size() < 2) {
            out["note"] = "a group has fewer than two observations; ANOVA not applicable";
            return out;
        }
    const AnovaResult an = one_way_anova(groups);
    out["anova"] = {{"f_stat", an.f_stat},
                    {"df_between", an.df_between},
                    {"df_within", an.df_within},
                    {"p_value", an.p_value},
                    {"mse", an.mse}};
    const TukeyResult tk = tukey_hsd(groups);
    json pairs = json::array();
    for (const auto& p : tk.pairs)
        pairs.push_back({{"model_a", models[p.i]},
                         {"model_b", models[p.j]},
                         {"q_stat", p.q_stat},
                         {"p_value", p.p_value},
                         {"significant_at_0.05", p.significant_at_0_05}});
    out["tukey"] = std::move(pairs);
    return out;
}

// Tukey p-value for model vs baseline inside one grouping; 1.0 when absent.
std::map<std::string, double> tukey_vs_baseline(const std::vector<std::string>& models,
                                                const std::vector<std::vector<double>>& groups,
                                                const std::string& baseline) {
    std::map<std::string, double> out;
    std::size_t base_idx = models.size();
    for (std::size_t i = 0; i < models.size(); ++i)
        if (models[i] == baseline) base_idx = i;
    if (base_idx == models.size() || groups.size() < 2) return out;
    for (const auto& g : groups)
        if (g.size() < 2) return out;
    const TukeyResult tk = tukey_hsd(groups);
    for (const auto& p : tk.pairs) {
        if (p.i == base_idx) out[models[p.j]] = p.p_value;
        if (p.j == base_idx) out[models[p.i]] = p.p_value;
    }
    return out;
}

}  // namespace

void write_report(const std::vector<PairedCase>& rows, const std::string& out_dir,
                  const ReportOptions& opt) {
    if (rows.empty()) throw std::runtime_error("no data: nothing to report");
    fs::create_directories(out_dir);
    fs::create_directories(fs::path(out_dir) / "figs");

    const std::vector<SummaryCell> cells = summarize(rows);

    std::vector<std::string> datasets, models;
    for (const auto& c : cells) {
        if (std::find(datasets.begin(), datasets.end(), c.dataset) == datasets.end())
            datasets.push_back(c.dataset);
        if (std::find(models.begin(), models.end(), c.model) == models.end())
            models.push_back(c.model);
    }
    std::sort(datasets.begin(), datasets.end());
    std::sort(models.begin(), models.end(), model_less);

    // ---- summary.csv
    {
        std::ofstream out(fs::path(out_dir) / "summary.csv");
        out << "model,dataset,n,mean_dsc,cov_dsc,r_squared,intercept,slope,ba_bias,ba_loa_low,ba_loa_high\n";
        for (const auto& c : cells) {
            out << c.model << ',' << c.dataset << ',' << c.n << ',' << fmt("%.6f", c.mean_dsc)
                << ',' << fmt("%.6f", c.cov_dsc) << ',' << fmt("%.6f", c.regression.r_squared)
                << ',' << fmt("%.6f", c.regression.intercept) << ','
                << fmt("%.6f", c.regression.slope) << ',' << fmt("%.6f", c.agreement.mean_diff)
                << ',' << fmt("%.6f", c.agreement.loa_low) << ','
                << fmt("%.6f", c.agreement.loa_high) << '\n';
        }
    }

    // per-dataset DSC groups for ANOVA/Tukey
    auto dsc_groups = [&](const std::string& dataset, std::vector<std::string>& group_models) {
        std::vector<std::vector<double>> groups;
        for (const auto& m : models) {
            std::vector<double> g;
            for (const auto& r : rows)
                if (r.model == m && (dataset.empty() ? r.dataset != opt.source_dataset
                                                     : r.dataset == dataset))
                    g.push_back(r.dsc);
            if (!g.empty()) {
                groups.push_back(std::move(g));
                group_models.push_back(m);
            }
        }
        return groups;
    };

    // ---- anova.json: per-dataset groupings plus the pooled-target grouping
    {
        json out = json::array();
        for (const auto& d : datasets) {
            std::vector<std::string> group_models;
            auto groups = dsc_groups(d, group_models);
            out.push_back(grouping_json("per_dataset:" + d, group_models, groups));
        }
        std::vector<std::string> pooled_models;
        auto pooled = dsc_groups("", pooled_models);
        if (!pooled.empty())
            out.push_back(grouping_json("pooled_targets", pooled_models, pooled));
        std::ofstream f(fs::path(out_dir) / "anova.json");
        f << out.dump(2) << '\n';
    }

    // ---- table.md
    {
        std::map<std::string, std::map<std::string, double>> stars;  // dataset -> model -> p
        for (const auto& d : datasets) {
            std::vector<std::string> group_models;
            auto groups = dsc_groups(d, group_models);
            stars[d] = tukey_vs_baseline(group_models, groups, opt.baseline_model);
        }
        std::map<std::string, double> best;  // dataset -> best mean dsc
        for (const auto& c : cells) {
            auto it = best.find(c.dataset);
            if (it == best.end() || c.mean_dsc > it->second) best[c.dataset] = c.mean_dsc;
        }
        auto cell_of = [&](const std::string& m, const std::string& d) -> const SummaryCell* {
            for (const auto& c : cells)
                if (c.model == m && c.dataset == d) return &c;
            return nullptr;
        };
        std::ofstream out(fs::path(out_dir) / "table.md");
        out << "Performance on held-out test volumes. Bold marks the best DSC for the dataset;\n";
        out << "`*` marks models whose DSC differs from " << opt.baseline_model
            << " at Tukey p < 0.05.\n\n";
        out << "| Model |";
        for (const auto& d : datasets) out << " " << d << " DSC | " << d << " CoV |";
        out << "\n|---|";
        for (std::size_t i = 0; i < datasets.size(); ++i) out << "---|---|";
        out << "\n";
        for (const auto& m : models) {
            out << "| " << m << " |";
            for (const auto& d : datasets) {
                const SummaryCell* c = cell_of(m, d);
                if (!c) {
                    out << " - | - |";
                    continue;
                }
                std::string dsc_s = fmt("%.2f", c->mean_dsc);
                if (c->mean_dsc == best[d]) dsc_s = "**" + dsc_s + "**";
                auto star_it = stars[d].find(m);
                if (star_it != stars[d].end() && star_it->second < 0.05) dsc_s += "*";
                out << " " << dsc_s << " | " << fmt("%.2f", c->cov_dsc) << " |";
            }
            out << "\n";
        }
    }

    // ---- figs/dsc_cov_vs_ss.svg: target-domain mean DSC and CoV by SS count
    {
        struct FamilyLine {
            std::string family;
            std::map<int, std::pair<double, double>> by_count;  // count -> (dsc, cov)
        };
        std::vector<FamilyLine> lines;
        auto line_for = [&lines](const std::string& fam) -> FamilyLine& {
            for (auto& l : lines)
                if (l.family == fam) return l;
            lines.push_back({fam, {}});
            return lines.back();
        };
        for (const auto& m : models) {
            const auto lp = m.find('(');
            if (lp == std::string::npos) continue;
            const std::string fam = m.substr(0, lp);
            const int count = std::atoi(m.c_str() + lp + 1);
            std::vector<double> dscs;
            for (const auto& r : rows)
                if (r.model == m && r.dataset != opt.source_dataset) dscs.push_back(r.dsc);
            if (dscs.empty()) continue;
            const double mean = mean_of(dscs);
            const double cov = dscs.size() >= 2 && mean != 0.0 ? cov_of(dscs) : 0.0;
            line_for(fam).by_count[count] = {mean, cov};
        }
        double base_dsc = -1.0;
        {
            std::vector<double> dscs;
            for (const auto& r : rows)
                if (r.model == opt.baseline_model && r.dataset != opt.source_dataset)
                    dscs.push_back(r.dsc);
            if (!dscs.empty()) base_dsc = mean_of(dscs);
        }

        Svg svg(760, 320);
        int counts_lo = 1 << 30, counts_hi = 0;
        for (const auto& l : lines)
            for (const auto& [c, v] : l.by_count) {
                counts_lo = std::min(counts_lo, c);
                counts_hi = std::max(counts_hi, c);
            }
        if (counts_hi == 0) {
            counts_lo = 0;
            counts_hi = 1;
        }
        Axis xl{static_cast<double>(counts_lo), static_cast<double>(std::max(counts_hi, counts_lo + 1)), 50, 350};
        Axis yl{0.0, 1.0, 280, 30};
        Axis xr{xl.lo, xl.hi, 430, 730};
        Axis yr{0.0, 0.5, 280, 30};
        svg.text(200, 306, "target-domain mean DSC vs SS masks", 11, "middle");
        svg.text(580, 306, "target-domain DSC CoV vs SS masks", 11, "middle");
        for (const Axis& ax : {xl, xr}) {
            svg.line(ax.px0, 280, ax.px1, 280, "#333333");
            svg.line(ax.px0, 280, ax.px0, 30, "#333333");
        }
        if (base_dsc >= 0.0) {
            svg.line(xl.px0, yl.to_px(base_dsc), xl.px1, yl.to_px(base_dsc), "#777777", 1.0, "4,3");
            svg.text(xl.px1 + 4, yl.to_px(base_dsc) + 4, opt.baseline_model, 9);
        }
        int color = 0;
        for (const auto& l : lines) {
            const char* col = kColors[color % 6];
            double px = -1, py = -1, qx = -1, qy = -1;
            for (const auto& [c, v] : l.by_count) {
                const double x1 = xl.to_px(c), y1 = yl.to_px(v.first);
                const double x2 = xr.to_px(c), y2 = yr.to_px(std::min(0.5, v.second));
                svg.circle(x1, y1, 3, col);
                svg.circle(x2, y2, 3, col);
                if (px >= 0) {
                    svg.line(px, py, x1, y1, col, 1.5);
                    svg.line(qx, qy, x2, y2, col, 1.5);
                }
                px = x1; py = y1; qx = x2; qy = y2;
            }
            svg.text(xl.px0 + 6, 42 + 13 * color, l.family, 10);
            svg.circle(xl.px0, 38 + 13 * color, 3, col);
            ++color;
        }
        svg.save((fs::path(out_dir) / "figs" / "dsc_cov_vs_ss.svg").string());
    }

    // ---- per-model regression + Bland-Altman scatter
    for (const auto& m : models) {
        std::vector<std::pair<double, double>> pairs;  // (truth, pred)
        for (const auto& r : rows)
            if (r.model == m) pairs.emplace_back(r.truth_ml, r.predicted_ml);
        if (pairs.size() < 2) continue;
        double lo = 1e300, hi = -1e300;
        for (const auto& [t, p] : pairs) {
            lo = std::min({lo, t, p});
            hi = std::max({hi, t, p});
        }
        if (hi <= lo) hi = lo + 1.0;
        const double pad = 0.05 * (hi - lo);
        Axis ax{lo - pad, hi + pad, 50, 330};
        Axis ay{lo - pad, hi + pad, 280, 30};

        Svg svg(720, 320);
        svg.line(ax.px0, 280, ax.px1, 280, "#333333");
        svg.line(ax.px0, 280, ax.px0, 30, "#333333");
        svg.text(190, 306, m + ": predicted vs true LVV (mL)", 11, "middle");
        svg.line(ax.to_px(ax.lo), ay.to_px(ax.lo), ax.to_px(ax.hi), ay.to_px(ax.hi), "#bbbbbb", 1.0,
                 "4,3");
        for (const auto& [t, p] : pairs) svg.circle(ax.to_px(t), ay.to_px(p), 3, "#1f77b4");
        std::vector<double> xs, ys;
        for (const auto& [t, p] : pairs) {
            xs.push_back(t);
            ys.push_back(p);
        }
        bool const_x = true;
        for (double v : xs)
            if (v != xs[0]) const_x = false;
        if (!const_x) {
            const RegressionResult reg = linear_regression(xs, ys);
            const double y0 = reg.slope * ax.lo + reg.intercept;
            const double y1 = reg.slope * ax.hi + reg.intercept;
            svg.line(ax.to_px(ax.lo), ay.to_px(y0), ax.to_px(ax.hi), ay.to_px(y1), "#d62728", 1.5);
            svg.text(ax.px0 + 6, 40,
                     "R2=" + fmt("%.2f", reg.r_squared) + " slope=" + fmt("%.2f", reg.slope) +
                         " intercept=" + fmt("%.2f", reg.intercept),
                     10);
        }

        // Bland-Altman panel
        const BlandAltman ba = bland_altman([&] {
            std::vector<std::pair<double, double>> pt;
            for (const auto& [t, p] : pairs) pt.emplace_back(p, t);
            return pt;
        }());
        double blo = 1e300, bhi = -1e300, mlo = 1e300, mhi = -1e300;
        for (const auto& [mean, diff] : ba.points) {
            blo = std::min(blo, diff);
            bhi = std::max(bhi, diff);
            mlo = std::min(mlo, mean);
            mhi = std::max(mhi, mean);
        }
        blo = std::min(blo, ba.loa_low);
        bhi = std::max(bhi, ba.loa_high);
        if (bhi <= blo) bhi = blo + 1.0;
        if (mhi <= mlo) mhi = mlo + 1.0;
        const double bpad = 0.1 * (bhi - blo), mpad = 0.05 * (mhi - mlo);
        Axis bx{mlo - mpad, mhi + mpad, 400, 700};
        Axis by{blo - bpad, bhi + bpad, 280, 30};
        svg.line(bx.px0, 280, bx.px1, 280, "#333333");
        svg.line(bx.px0, 280, bx.px0, 30, "#333333");
        svg.text(550, 306, "Bland-Altman: diff vs mean (mL)", 11, "middle");
        for (double yv : {ba.mean_diff, ba.loa_low, ba.loa_high})
            svg.line(bx.px0, by.to_px(yv), bx.px1, by.to_px(yv), "#ff7f0e", 1.0,
                     yv == ba.mean_diff ? "" : "4,3");
        for (const auto& [mean, diff] : ba.points)
            svg.circle(bx.to_px(mean), by.to_px(diff), 3, "#1f77b4");
        svg.text(bx.px0 + 6, 40,
                 "bias=" + fmt("%.2f", ba.mean_diff) + " loa=[" + fmt("%.2f", ba.loa_low) + ", " +
                     fmt("%.2f", ba.loa_high) + "]",
                 10);

        svg.save((fs::path(out_dir) / "figs" / ("regression_" + sanitize(m) + ".svg")).string());
    }
}

}  // namespace lvseg
