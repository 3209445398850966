#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "lvseg/volume.hpp"

namespace lvseg {

// Evaluation metrics: DSC/CoV, LVV regression, Bland-Altman agreement, and
// one-way ANOVA with Tukey's posthoc. Sample (n-1) standard deviation is
// used throughout.

// One evaluated case: predicted vs ground-truth mask volume plus overlap.
struct PairedCase {
    std::string case_id;
    std::string model;
    std::string dataset;
    double predicted_ml = 0.0;
    double truth_ml = 0.0;
    double dsc = 0.0;
};

struct RegressionResult {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
    std::size_t n = 0;
};

struct BlandAltman {
    double mean_diff = 0.0;  // bias, predicted - truth
    double sd_diff = 0.0;
    double loa_low = 0.0;    // bias - 1.96 sd
    double loa_high = 0.0;   // bias + 1.96 sd
    std::vector<std::pair<double, double>> points;  // (mean, diff) per case
};

struct AnovaResult {
    double f_stat = 0.0;
    int df_between = 0;
    int df_within = 0;
    double p_value = 1.0;
    double mse = 0.0;  // within-group mean square
    std::vector<double> group_means;
    std::vector<std::size_t> group_sizes;
};

struct TukeyPair {
    std::size_t i = 0, j = 0;
    double q_stat = 0.0;
    double p_value = 1.0;
    bool significant_at_0_05 = false;
};

struct TukeyResult {
    int k = 0;
    int df_within = 0;
    std::vector<TukeyPair> pairs;  // all i < j pairs in order
};

// Dice similarity coefficient, 2|A^B| / (|A|+|B|); 1.0 when both empty.
double dsc(const BinaryMask& a, const BinaryMask& b);

// Coefficient of variation: sample SD / mean. Needs n >= 2 and nonzero mean.
double cov_of(const std::vector<double>& values);

double mean_of(const std::vector<double>& values);
double sample_sd(const std::vector<double>& values);

// Ordinary least squares y = slope x + intercept; x must not be constant.
RegressionResult linear_regression(const std::vector<double>& x, const std::vector<double>& y);

// pairs are (predicted, truth).
BlandAltman bland_altman(const std::vector<std::pair<double, double>>& pairs);

AnovaResult one_way_anova(const std::vector<std::vector<double>>& groups);

// Tukey-Kramer: q_ij = |m_i - m_j| / sqrt(MSE/2 (1/n_i + 1/n_j)), p from the
// studentized range with (k, df_within).
TukeyResult tukey_hsd(const std::vector<std::vector<double>>& groups);

}  // namespace lvseg
