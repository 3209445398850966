#include "lvseg/stats.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "lvseg/special_functions.hpp"

namespace lvseg {

double dsc(const BinaryMask& a, const BinaryMask& b) {
    if (!a.same_grid(b)) throw std::runtime_error("dsc: grid mismatch");
    std::size_t na = 0, nb = 0, ni = 0;
    for (std::size_t i = 0; i < a.bits.size(); ++i) {
        na += a.bits[i];
        nb += b.bits[i];
        ni += static_cast<std::size_t>(a.bits[i] & b.bits[i]);
    }
    if (na + nb == 0) return 1.0;  // agreement on absence
    return 2.0 * static_cast<double>(ni) / static_cast<double>(na + nb);
}

double mean_of(const std::vector<double>& values) {
    if (values.empty()) throw std::runtime_error("mean of empty list");
    double s = 0.0;
    for (double v : values) s += v;
    return s / static_cast<double>(values.size());
}

double sample_sd(const std::vector<double>& values) {
    if (values.size() < 2) throw std::runtime_error("sample SD needs n >= 2");
    const double m = mean_of(values);
    double ss = 0.0;
    for (double v : values) ss += (v - m) * (v - m);
    return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

double cov_of(const std::vector<double>& values) {
    if (values.size() < 2) throw std::runtime_error("CoV needs n >= 2");
    const double m = mean_of(values);
    if (m == 0.0) throw std::runtime_error("CoV undefined for zero mean");
    return sample_sd(values) / m;
}

RegressionResult linear_regression(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw std::runtime_error("regression: size mismatch");
    const std::size_t n = x.size();
    if (n < 2) throw std::runtime_error("regression needs n >= 2");
    const double mx = mean_of(x), my = mean_of(y);
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0) throw std::runtime_error("regression undefined for constant x");
    RegressionResult r;
    r.n = n;
    r.slope = sxy / sxx;
    r.intercept = my - r.slope * mx;
    if (syy == 0.0) {
        r.r_squared = 0.0;
    } else {
        double ss_res = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double e = y[i] - (r.slope * x[i] + r.intercept);
            ss_res += e * e;
        }
        r.r_squared = 1.0 - ss_res / syy;
        if (r.r_squared < 0.0) r.r_squared = 0.0;
        if (r.r_squared > 1.0) r.r_squared = 1.0;
    }
    return r;
}

BlandAltman bland_altman(const std::vector<std::pair<double, double>>& pairs) {
    if (pairs.size() < 2) throw std::runtime_error("Bland-Altman needs n >= 2");
    BlandAltman ba;
    std::vector<double> diffs;
    diffs.reserve(pairs.size());
    for (const auto& [pred, truth] : pairs) {
        diffs.push_back(pred - truth);
        ba.points.emplace_back(0.5 * (pred + truth), pred - truth);
    }
    ba.mean_diff = mean_of(diffs);
    ba.sd_diff = sample_sd(diffs);
    ba.loa_low = ba.mean_diff - 1.96 * ba.sd_diff;
    ba.loa_high = ba.mean_diff + 1.96 * ba.sd_diff;
    return ba;
}

namespace {

struct GroupStats {
    std::vector<double> means;
    std::vector<std::size_t> sizes;
    double grand_mean = 0.0;
    double ss_between = 0.0;
    double ss_within = 0.0;
    std::size_t total = 0;
};

GroupStats group_stats(const std::vector<std::vector<double>>& groups) {
    if (groups.size() < 2) throw std::runtime_error("need k >= 2 groups");
    GroupStats g;
    double grand_sum = 0.0;
    for (const auto& grp : groups) {
        if (grp.size() < 2) throw std::runtime_error("each group needs n >= 2");
        g.means.push_back(mean_of(grp));
        g.sizes.push_back(grp.size());
        g.total += grp.size();
        for (double v : grp) grand_sum += v;
    }
    g.grand_mean = grand_sum / static_cast<double>(g.total);
    for (std::size_t i = 0; i < groups.size(); ++i) {
        const double d = g.means[i] - g.grand_mean;
        g.ss_between += static_cast<double>(g.sizes[i]) * d * d;
        for (double v : groups[i]) g.ss_within += (v - g.means[i]) * (v - g.means[i]);
    }
    return g;
}

}  // namespace

AnovaResult one_way_anova(const std::vector<std::vector<double>>& groups) {
    const GroupStats g = group_stats(groups);
    AnovaResult r;
    r.group_means = g.means;
    r.group_sizes = g.sizes;
    r.df_between = static_cast<int>(groups.size()) - 1;
    r.df_within = static_cast<int>(g.total - groups.size());
    r.mse = g.ss_within / r.df_within;
    if (g.ss_within == 0.0) {
        // Degenerate: identical values within every group.
        if (g.ss_between == 0.0) {
            r.f_stat = 0.0;
            r.p_value = 1.0;
        } else {
            r.f_stat = std::numeric_limits<double>::infinity();
            r.p_value = 0.0;
        }
        return r;
    }
    r.f_stat = (g.ss_between / r.df_between) / r.mse;
    r.p_value = f_survival(r.f_stat, r.df_between, r.df_within);
    return r;
}

TukeyResult tukey_hsd(const std::vector<std::vector<double>>& groups) {
    const GroupStats g = group_stats(groups);
    TukeyResult t;
    t.k = static_cast<int>(groups.size());
    t.df_within = static_cast<int>(g.total - groups.size());
    const double mse = g.ss_within / t.df_within;
    for (std::size_t i = 0; i < groups.size(); ++i) {
        for (std::size_t j = i + 1; j < groups.size(); ++j) {
            TukeyPair p;
            p.i = i;
            p.j = j;
            const double se = std::sqrt(mse * 0.5 * (1.0 / g.sizes[i] + 1.0 / g.sizes[j]));
            const double diff = std::abs(g.means[i] - g.means[j]);
            if (se == 0.0) {
                p.q_stat = diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
            } else {
                p.q_stat = diff / se;
            }
            p.p_value = p.q_stat == 0.0 ? 1.0 : studentized_range_sf(p.q_stat, t.k, t.df_within);
            p.significant_at_0_05 = p.p_value < 0.05;
            t.pairs.push_back(p);
        }
    }
    return t;
}

}  // namespace lvseg
