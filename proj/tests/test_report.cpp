#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "doctest.h"
#include "lvseg/report.hpp"
#include "lvseg/rng.hpp"

using namespace lvseg;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

std::vector<PairedCase> rows_for(const std::string& model, const std::string& dataset,
                                 const std::vector<double>& dscs, double truth0 = 40.0) {
    std::vector<PairedCase> rows;
    for (std::size_t i = 0; i < dscs.size(); ++i) {
        PairedCase r;
        r.model = model;
        r.dataset = dataset;
        r.case_id = "c" + std::to_string(i);
        r.dsc = dscs[i];
        r.truth_ml = truth0 + 2.0 * static_cast<double>(i);
        r.predicted_ml = r.truth_ml * dscs[i];
        rows.push_back(std::move(r));
    }
    return rows;
}

std::size_t count_substr(const std::string& hay, const std::string& needle) {
    std::size_t n = 0;
    for (std::size_t pos = hay.find(needle); pos != std::string::npos;
         pos = hay.find(needle, pos + needle.size()))
        ++n;
    return n;
}

}  // namespace

TEST_CASE("metrics CSV round trip") {
    Rng rng(0x3e7);
    std::vector<PairedCase> rows;
    for (int i = 0; i < 20; ++i) {
        PairedCase r;
        r.model = i % 2 ? "gs_only" : "ss_then_gs(4)";
        r.dataset = i % 3 ? "t1" : "source";
        r.case_id = "case" + std::to_string(i);
        r.dsc = rng.uniform(0.5, 1.0);
        r.predicted_ml = rng.uniform(20, 80);
        r.truth_ml = rng.uniform(20, 80);
        rows.push_back(std::move(r));
    }
    const auto path = fs::temp_directory_path() / "lvseg_metrics_rt.csv";
    write_metrics_csv(rows, path.string());
    auto loaded = load_metrics_csv(path.string());
    REQUIRE(loaded.size() == rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        CHECK(loaded[i].model == rows[i].model);
        CHECK(loaded[i].dsc == rows[i].dsc);  // %.17g survives the round trip
        CHECK(loaded[i].predicted_ml == rows[i].predicted_ml);
    }
}

TEST_CASE("summarize computes per-cell stats and orders models canonically") {
    std::vector<PairedCase> rows = rows_for("ss_then_gs(4)", "t1", {0.8, 0.9, 1.0});
    auto more = rows_for("ipb", "t1", {0.7, 0.7, 0.7});
    rows.insert(rows.end(), more.begin(), more.end());
    auto cells = summarize(rows);
    REQUIRE(cells.size() == 2);
    CHECK(cells[0].model == "ipb");  // family order puts ipb first
    CHECK(cells[1].model == "ss_then_gs(4)");
    CHECK(cells[1].mean_dsc == doctest::Approx(0.9));
    CHECK(cells[1].cov_dsc == doctest::Approx(0.1 / 0.9));
    CHECK(cells[1].n == 3);

    CHECK_THROWS_WITH_AS(summarize({}), doctest::Contains("no data"), std::runtime_error);
}

TEST_CASE("star placement follows the Tukey p-value against the baseline") {
    // baseline ~0.80, one clearly better model, one indistinguishable model
    std::vector<double> base, better, same;
    for (int i = 0; i < 12; ++i) {
        const double eps = (i % 2 ? 0.01 : -0.01) + 0.001 * i;
        base.push_back(0.80 + eps);
        better.push_back(0.92 + eps);
        same.push_back(0.805 + eps);
    }
    std::vector<PairedCase> rows = rows_for("gs_only", "t1", base);
    auto b = rows_for("ss_then_gs(4)", "t1", better);
    auto s = rows_for("ss_only(4)", "t1", same);
    rows.insert(rows.end(), b.begin(), b.end());
    rows.insert(rows.end(), s.begin(), s.end());

    // independent Tukey on the same groups tells us which stars to expect
    auto tk = tukey_hsd({base, better, same});
    double p_better = -1, p_same = -1;
    // groups: 0=base, 1=better, 2=same
    for (const auto& p : tk.pairs) {
        if (p.i == 0 && p.j == 1) p_better = p.p_value;
        if (p.i == 0 && p.j == 2) p_same = p.p_value;
    }
    REQUIRE(p_better >= 0);
    REQUIRE(p_same >= 0);
    REQUIRE(p_better < 0.05);   // the test data is built to separate
    REQUIRE(p_same >= 0.05);

    const fs::path dir = fs::temp_directory_path() / "lvseg_report_stars";
    fs::remove_all(dir);
    write_report(rows, dir.string());
    const std::string table = slurp(dir / "table.md");

    // find the ss_then_gs row: best DSC, so bolded, and starred via Tukey
    std::istringstream ss(table);
    std::string line;
    bool saw_better = false, saw_same = false;
    while (std::getline(ss, line)) {
        if (line.find("| ss_then_gs(4) |") == 0) {
            CHECK(line.find("**") != std::string::npos);   // bold best-of-dataset
            CHECK(line.find("***") != std::string::npos);  // ...plus the significance star
            saw_better = true;
        }
        if (line.find("| ss_only(4) |") == 0) {
            // bold markers also use '*'; strip them before checking
            std::string stripped;
            for (std::size_t i = 0; i < line.size(); ++i) {
                if (line[i] == '*' && i + 1 < line.size() && line[i + 1] == '*') {
                    ++i;
                    continue;
                }
                stripped += line[i];
            }
            CHECK(stripped.find('*') == std::string::npos);
            saw_same = true;
        }
    }
    CHECK(saw_better);
    CHECK(saw_same);
}

TEST_CASE("single-model metrics give a regression SVG with exactly one fitted line") {
    Rng rng(0x3e8);
    std::vector<double> dscs;
    for (int i = 0; i < 10; ++i) dscs.push_back(rng.uniform(0.7, 1.0));
    auto rows = rows_for("gs_only", "t1", dscs);
    const fs::path dir = fs::temp_directory_path() / "lvseg_report_single";
    fs::remove_all(dir);
    write_report(rows, dir.string());
    const std::string svg = slurp(dir / "figs" / "regression_gs_only.svg");
    CHECK(count_substr(svg, "stroke=\"#d62728\"") == 1);  // the fitted line
    CHECK(count_substr(svg, "stroke=\"#ff7f0e\"") == 3);  // bias + two LoA lines
}

TEST_CASE("report output is byte-deterministic") {
    std::vector<PairedCase> rows = rows_for("gs_only", "t1", {0.8, 0.85, 0.9, 0.87});
    auto more = rows_for("ss_then_gs(2)", "t1", {0.9, 0.92, 0.91, 0.93});
    rows.insert(rows.end(), more.begin(), more.end());
    const fs::path a = fs::temp_directory_path() / "lvseg_report_det_a";
    const fs::path b = fs::temp_directory_path() / "lvseg_report_det_b";
    fs::remove_all(a);
    fs::remove_all(b);
    write_report(rows, a.string());
    write_report(rows, b.string());
    for (const char* f : {"summary.csv", "table.md", "anova.json"})
        CHECK(slurp(a / f) == slurp(b / f));
    CHECK(slurp(a / "figs" / "dsc_cov_vs_ss.svg") == slurp(b / "figs" / "dsc_cov_vs_ss.svg"));
}

TEST_CASE("anova.json carries per-dataset and pooled-target groupings with valid p-values") {
    std::vector<PairedCase> rows;
    for (const char* ds : {"source", "t1", "t2"}) {
        auto a = rows_for("gs_only", ds, {0.80, 0.82, 0.81, 0.84});
        auto b = rows_for("ss_then_gs(2)", ds, {0.88, 0.90, 0.89, 0.91});
        rows.insert(rows.end(), a.begin(), a.end());
        rows.insert(rows.end(), b.begin(), b.end());
    }
    const fs::path dir = fs::temp_directory_path() / "lvseg_report_anova";
    fs::remove_all(dir);
    write_report(rows, dir.string());
    const std::string text = slurp(dir / "anova.json");
    CHECK(text.find("per_dataset:source") != std::string::npos);
    CHECK(text.find("per_dataset:t1") != std::string::npos);
    CHECK(text.find("pooled_targets") != std::string::npos);
    CHECK(text.find("\"p_value\"") != std::string::npos);
}
