#pragma once

#include <string>
#include <vector>

#include "lvseg/stats.hpp"

namespace lvseg {

// Per-case metrics file and the aggregated report bundle (summary table,
// ANOVA/Tukey JSON, markdown table, SVG figures). Everything emitted is a
// pure function of the metrics rows, with deterministic text output.

void write_metrics_csv(const std::vector<PairedCase>& rows, const std::string& path);
std::vector<PairedCase> load_metrics_csv(const std::string& path);

struct SummaryCell {
    std::string model;
    std::string dataset;
    std::size_t n = 0;
    double mean_dsc = 0.0;
    double cov_dsc = 0.0;
    RegressionResult regression;  // truth -> predicted LVV
    BlandAltman agreement;
};

// Deterministic model ordering: ipb, gs_only, then ss_only / gs_then_ss /
// ss_then_gs families ordered by SS count.
std::vector<SummaryCell> summarize(const std::vector<PairedCase>& rows);

struct ReportOptions {
    std::string baseline_model = "gs_only";
    std::string source_dataset = "source";  // excluded from the pooled-target grouping
};

// Writes summary.csv, table.md, anova.json, and figs/*.svg into out_dir.
void write_report(const std::vector<PairedCase>& rows, const std::string& out_dir,
                  const ReportOptions& opt = {});

}  // namespace lvseg
