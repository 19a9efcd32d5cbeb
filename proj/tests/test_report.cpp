#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "lexprobe/report.hpp"
#include "test_util.hpp"

using namespace lexprobe;

namespace {

// Validation scores of the ten fine-tuning seeds on the standard split.
std::vector<SweepRow> reported_sweep() {
    return {{9999, .738, .676, .706}, {314, .760, .667, .710}, {999, .736, .689, .712}, {7, .706, .721, .713},
            {5555, .674, .763, .716}, {42, .681, .755, .716},  {8765, .740, .696, .717}, {2025, .750, .692, .719},
            {1234, .743, .718, .731}, {777, .719, .749, .734}};
}

}  // namespace

TEST(Sweep, ReportedSummary) {
    auto rows = reported_sweep();
    std::reverse(rows.begin(), rows.end());
    const auto s = summarize_sweep(rows);
    EXPECT_EQ(format_metric(s.mean_precision), ".725");
    // Reported as .712, presumably from unrounded recalls; the rounded rows average .7126.
    EXPECT_NEAR(s.mean_recall, .712, .001);
    EXPECT_EQ(format_metric(s.mean_f1), ".717");
    EXPECT_EQ(format_metric(s.std_precision), ".029");
    EXPECT_EQ(format_metric(s.std_recall), ".034");
    EXPECT_EQ(format_metric(s.std_f1), ".009");
    EXPECT_EQ(s.selected_row().seed, 42u);
    for (std::size_t i = 1; i < s.rows.size(); ++i) EXPECT_LE(s.rows[i - 1].f1, s.rows[i].f1);
}

TEST(Sweep, SampleStdOracle) {
    const std::vector<SweepRow> rows = {{1, .5, .5, .2}, {2, .5, .5, .4}, {3, .5, .5, .9}};
    const auto s = summarize_sweep(rows);
    const double mean = 1.5 / 3;
    const double var = ((.2 - mean) * (.2 - mean) + (.4 - mean) * (.4 - mean) + (.9 - mean) * (.9 - mean)) / 2;
    EXPECT_NEAR(s.std_f1, std::sqrt(var), 1e-12);
    EXPECT_EQ(s.std_precision, 0.0);
    EXPECT_EQ(s.selected_row().seed, 2u);
}

TEST(Sweep, EvenCountTakesLowerMiddle) {
    const std::vector<SweepRow> rows = {{1, .5, .5, .1}, {2, .5, .5, .2}, {3, .5, .5, .3}, {4, .5, .5, .4}};
    EXPECT_EQ(summarize_sweep(rows).selected_row().seed, 2u);
    EXPECT_EQ(summarize_sweep({{8, .5, .5, .5}}).selected_row().seed, 8u);
    EXPECT_THROW(summarize_sweep({}), InputError);
}

TEST(Sweep, TsvRoundTrip) {
    const auto rows = reported_sweep();
    std::stringstream ss;
    write_sweep_tsv(ss, rows);
    EXPECT_EQ(read_sweep_tsv(ss), rows);
}

TEST(SweepTable, SortedWithFooterAndFlag) {
    const auto t = sweep_table(reported_sweep());
    ASSERT_EQ(t.rows.size(), 12u);
    EXPECT_EQ(t.rows.front()[0], "9999");
    EXPECT_EQ(t.rows[9][0], "777");
    EXPECT_EQ(t.rows[10], (std::vector<std::string>{"Mean", ".725", ".713", ".717", ""}));
    EXPECT_EQ(t.rows[11], (std::vector<std::string>{"Std", ".029", ".034", ".009", ""}));
    std::size_t flagged = 0;
    for (const auto& r : t.rows) {
        if (r[4] == "*") {
            ++flagged;
            EXPECT_EQ(r[0], "42");
        }
    }
    EXPECT_EQ(flagged, 1u);
}

TEST(FormatPercent, RoundsHalfUp) {
    EXPECT_EQ(format_percent(10, 11), "91%");
    EXPECT_EQ(format_percent(1, 8), "13%");  // 12.5
    EXPECT_EQ(format_percent(0, 0), kGap);
}

TEST(Tables, MissingInputsLeaveMarkedGaps) {
    const auto t1 = lemma_table(std::nullopt, {});
    EXPECT_TRUE(t1.rows.empty());
    EXPECT_EQ(t1.notes, (std::vector<std::string>{"missing input: splits/manifest.json"}));
    const auto t2 = dataset_table(std::nullopt);
    ASSERT_EQ(t2.rows.size(), 5u);
    EXPECT_EQ(t2.rows[0][1], kGap);
    const auto t4 = performance_table(std::nullopt, std::nullopt);
    ASSERT_EQ(t4.rows.size(), 8u);
    for (const auto& r : t4.rows) EXPECT_EQ(r[4], kGap);
    const auto t5 = geometry_table(std::nullopt);
    EXPECT_EQ(t5.rows.size(), 4u);
    EXPECT_EQ(t5.notes.size(), 1u);
}

TEST(Tables, PerformanceRowsInFixedOrder) {
    std::vector<ReportRow> scores = {{"random", "exposed", random_baseline(0.5)},
                                     {"full", "held_out", prf_from_counts({8, 2, 2, 8})},
                                     {"full", "exposed", prf_from_counts({10, 0, 0, 10})}};
    std::vector<CorrelationRow> corr = {{"exposed", {0.42, 0.0209, 30, {}}}};
    const auto t = performance_table(scores, corr);
    EXPECT_EQ(t.rows[0], (std::vector<std::string>{"full", "exposed", "1.000", "1.000", "1.000"}));
    EXPECT_EQ(t.rows[1], (std::vector<std::string>{"full", "held_out", ".800", ".800", ".800"}));
    EXPECT_EQ(t.rows[6], (std::vector<std::string>{"random", "exposed", ".500", ".500", ".500"}));
    EXPECT_EQ(t.rows[7][2], kGap);
    ASSERT_EQ(t.notes.size(), 1u);
    EXPECT_EQ(t.notes[0], "F1 vs. frequency (exposed): rho = .420, p = .021, n = 30");
}

TEST(Tables, LemmaTableShowsEvalMetaphoricity) {
    SplitManifest m;
    m.exposed_selection.met_biased = {{"set", 12, 9}};
    m.held_out_selection.lit_biased = {{"go", 660, 145}};
    std::map<std::string, std::vector<Instance>> evals;
    for (int i = 0; i < 10; ++i) evals["exposed"].push_back(testutil::make_instance("s" + std::to_string(i), "set", i < 8));
    const auto t = lemma_table(m, evals);
    ASSERT_EQ(t.rows.size(), 2u);
    EXPECT_EQ(t.rows[0], (std::vector<std::string>{"exposed", "met_biased", "set", "12", "75%", "80%"}));
    EXPECT_EQ(t.rows[1], (std::vector<std::string>{"held_out", "lit_biased", "go", "660", "22%", kGap}));
    EXPECT_EQ(t.notes, (std::vector<std::string>{"missing input: splits/held_out_eval.jsonl"}));
}

TEST(Tables, TextAlignsMultibyteCells) {
    Table t{"x", "T", {"a", "b"}, {{"⟨MASK⟩", "1"}, {"ab", "2"}}, {"note"}};
    const auto text = t.to_text();
    EXPECT_EQ(text, "T\na       b\n---------\n⟨MASK⟩  1\nab      2\n  note\n");
    EXPECT_EQ(t.to_tsv(), "a\tb\n⟨MASK⟩\t1\nab\t2\n");
}

TEST(ResultFiles, GeometryAndCorrelationRoundTrip) {
    const std::vector<GeometryRow> geo = {{"full", "exposed", 0.789, 0.788}, {"context_only", "held_out", 0.5, 0.25}};
    std::stringstream g;
    write_geometry_tsv(g, geo);
    const auto back = read_geometry_tsv(g);
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back[1].condition, "context_only");
    EXPECT_NEAR(back[0].purity, 0.789, 1e-9);

    const std::vector<CorrelationRow> corr = {{"held_out", {-0.127, 0.504, 30, {"foo", "bar"}}}};
    std::stringstream c;
    write_correlation_tsv(c, corr);
    const auto cback = read_correlation_tsv(c);
    ASSERT_EQ(cback.size(), 1u);
    EXPECT_NEAR(cback[0].result.rho, -0.127, 1e-9);
    EXPECT_EQ(cback[0].result.n, 30u);
    EXPECT_EQ(cback[0].result.missing_lemmas.size(), 2u);
}

TEST(ResultFiles, ScoresRoundTripAtDisplayPrecision) {
    const std::vector<ReportRow> rows = {{"word_only", "held_out", prf_from_counts({5, 3, 4, 9})}};
    std::stringstream ss;
    write_report_rows(ss, rows);
    const auto back = read_report_rows(ss);
    ASSERT_EQ(back.size(), 1u);
    EXPECT_EQ(format_metric(back[0].metrics.f1), format_metric(rows[0].metrics.f1));
}
