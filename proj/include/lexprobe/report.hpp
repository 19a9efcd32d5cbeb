#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lexprobe/corpus.hpp"
#include "lexprobe/freq_analysis.hpp"
#include "lexprobe/metrics.hpp"
#include "lexprobe/split_builder.hpp"

namespace lexprobe {

inline constexpr const char* kGap = "n/a";

// ---------------------------------------------------------------------------
// Seed sweep

struct SweepRow {
    std::uint64_t seed = 0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;

    friend bool operator==(const SweepRow&, const SweepRow&) = default;
};

struct SweepSummary {
    std::vector<SweepRow> rows;  // ascending F1
    double mean_precision = 0.0, mean_recall = 0.0, mean_f1 = 0.0;
    double std_precision = 0.0, std_recall = 0.0, std_f1 = 0.0;  // sample std (n - 1)
    std::size_t selected = 0;  // index into rows
    const SweepRow& selected_row() const { return rows[selected]; }
};

/// F1 recomputed from precision and recall; finer-grained than a rounded f1.
inline double harmonic_f1(const SweepRow& row) {
    const double s = row.precision + row.recall;
    return s > 0.0 ? 2.0 * row.precision * row.recall / s : 0.0;
}

/// Sorts by F1 and picks the median run: the lower-middle rank, and among
/// runs tied with it on F1, the one with the better recomputed F1.
inline SweepSummary summarize_sweep(std::vector<SweepRow> rows) {
    if (rows.empty()) throw InputError("seed sweep has no runs");
    std::sort(rows.begin(), rows.end(), [](const SweepRow& a, const SweepRow& b) {
        if (a.f1 != b.f1) return a.f1 < b.f1;
        const double ha = harmonic_f1(a);
        const double hb = harmonic_f1(b);
        if (ha != hb) return ha < hb;
        return a.seed > b.seed;
    });
    SweepSummary s;
    s.rows = std::move(rows);
    const double n = static_cast<double>(s.rows.size());
    for (const auto& r : s.rows) {
        s.mean_precision += r.precision / n;
        s.mean_recall += r.recall / n;
        s.mean_f1 += r.f1 / n;
    }
    if (s.rows.size() > 1) {
        for (const auto& r : s.rows) {
            s.std_precision += (r.precision - s.mean_precision) * (r.precision - s.mean_precision);
            s.std_recall += (r.recall - s.mean_recall) * (r.recall - s.mean_recall);
            s.std_f1 += (r.f1 - s.mean_f1) * (r.f1 - s.mean_f1);
        }
        s.std_precision = std::sqrt(s.std_precision / (n - 1));
        s.std_recall = std::sqrt(s.std_recall / (n - 1));
        s.std_f1 = std::sqrt(s.std_f1 / (n - 1));
    }
    const std::size_t lower_middle = (s.rows.size() - 1) / 2;
    s.selected = lower_middle;
    // Rows are sorted ascending, so the last row tied with the median F1 is the best of the tie.
    while (s.selected + 1 < s.rows.size() && s.rows[s.selected + 1].f1 == s.rows[lower_middle].f1) ++s.selected;
    return s;
}

inline void write_sweep_tsv(std::ostream& out, const std::vector<SweepRow>& rows) {
    out << "seed\tprecision\trecall\tf1\n";
    char buf[96];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%.6f\t%.6f\t%.6f", r.precision, r.recall, r.f1);
        out << r.seed << '\t' << buf << '\n';
    }
}

inline std::vector<SweepRow> read_sweep_tsv(std::istream& in) {
    std::vector<SweepRow> rows;
    std::size_t line_no = 1;
    for (const auto& f : detail::read_tsv_columns(in, {"seed", "precision", "recall", "f1"})) {
        ++line_no;
        SweepRow r;
        r.seed = static_cast<std::uint64_t>(detail::parse_double(f[0], line_no));
        r.precision = detail::parse_double(f[1], line_no);
        r.recall = detail::parse_double(f[2], line_no);
        r.f1 = detail::parse_double(f[3], line_no);
        rows.push_back(r);
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Result files

struct GeometryRow {
    std::string condition;
    std::string set;
    double purity = 0.0;
    double knn_f1 = 0.0;
};

inline void write_geometry_tsv(std::ostream& out, const std::vector<GeometryRow>& rows) {
    out << "condition\tset\tpurity\tknn_f1\n";
    for (const auto& r : rows) {
        out << r.condition << '\t' << r.set << '\t' << format_metric(r.purity) << '\t' << format_metric(r.knn_f1)
            << '\n';
    }
}

inline std::vector<GeometryRow> read_geometry_tsv(std::istream& in) {
    std::vector<GeometryRow> rows;
    std::size_t line_no = 1;
    for (const auto& f : detail::read_tsv_columns(in, {"condition", "set", "purity", "knn_f1"})) {
        ++line_no;
        rows.push_back({f[0], f[1], detail::parse_double(f[2], line_no), detail::parse_double(f[3], line_no)});
    }
    return rows;
}

inline std::vector<ReportRow> read_report_rows(std::istream& in) {
    std::vector<ReportRow> rows;
    std::size_t line_no = 1;
    for (const auto& f : detail::read_tsv_columns(in, {"condition", "set", "precision", "recall", "f1"})) {
        ++line_no;
        ReportRow r{f[0], f[1], {}};
        r.metrics.precision = detail::parse_double(f[2], line_no);
        r.metrics.recall = detail::parse_double(f[3], line_no);
        r.metrics.f1 = detail::parse_double(f[4], line_no);
        rows.push_back(std::move(r));
    }
    return rows;
}

struct CorrelationRow {
    std::string set;
    CorrelationResult result;
};

inline void write_correlation_tsv(std::ostream& out, const std::vector<CorrelationRow>& rows) {
    out << "set\trho\tp_value\tn\tmissing\n";
    char buf[64];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%.6f\t%.6f", r.result.rho, r.result.p_value);
        std::string missing;
        for (const auto& m : r.result.missing_lemmas) missing += (missing.empty() ? "" : ",") + m;
        out << r.set << '\t' << buf << '\t' << r.result.n << '\t' << missing << '\n';
    }
}

inline std::vector<CorrelationRow> read_correlation_tsv(std::istream& in) {
    std::vector<CorrelationRow> rows;
    std::size_t line_no = 1;
    for (const auto& f : detail::read_tsv_columns(in, {"set", "rho", "p_value", "n", "missing"})) {
        ++line_no;
        CorrelationRow r;
        r.set = f[0];
        r.result.rho = detail::parse_double(f[1], line_no);
        r.result.p_value = detail::parse_double(f[2], line_no);
        r.result.n = static_cast<std::size_t>(detail::parse_double(f[3], line_no));
        std::istringstream missing(f[4]);
        for (std::string lemma; std::getline(missing, lemma, ',');) r.result.missing_lemmas.push_back(lemma);
        rows.push_back(std::move(r));
    }
    return rows;
}

inline nlohmann::json stats_json(const DatasetStats& s) {
    return {{"n_samples", s.n_samples}, {"n_metaphorical", s.n_metaphorical}, {"n_lemmas", s.n_lemmas}};
}

// ---------------------------------------------------------------------------
// Tables

struct Table {
    std::string name;   // file stem
    std::string title;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> notes;

    std::string to_tsv() const {
        std::ostringstream out;
        auto line = [&](const std::vector<std::string>& cells) {
            for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "\t" : "") << cells[i];
            out << '\n';
        };
        line(header);
        for (const auto& r : rows) line(r);
        return out.str();
    }

    std::string to_text() const {
        std::vector<std::size_t> width(header.size(), 0);
        auto measure = [&](const std::vector<std::string>& cells) {
            for (std::size_t i = 0; i < cells.size() && i < width.size(); ++i) {
                width[i] = std::max(width[i], display_width(cells[i]));
            }
        };
        measure(header);
        for (const auto& r : rows) measure(r);
        std::ostringstream out;
        out << title << '\n';
        auto line = [&](const std::vector<std::string>& cells) {
            for (std::size_t i = 0; i < cells.size(); ++i) {
                out << (i ? "  " : "") << cells[i];
                if (i + 1 < cells.size()) out << std::string(width[i] - display_width(cells[i]), ' ');
            }
            out << '\n';
        };
        line(header);
        std::size_t total = 0;
        for (auto w : width) total += w + 2;
        out << std::string(total > 2 ? total - 2 : 0, '-') << '\n';
        for (const auto& r : rows) line(r);
        for (const auto& n : notes) out << "  " << n << '\n';
        return out.str();
    }

private:
    static std::size_t display_width(const std::string& s) {
        std::size_t n = 0;
        for (unsigned char c : s) n += (c & 0xC0) != 0x80;
        return n;
    }
};

inline std::string format_percent(std::size_t num, std::size_t den) {
    if (den == 0) return kGap;
    return std::to_string(round_half_up(100, Ratio{static_cast<std::int64_t>(num), static_cast<std::int64_t>(den)})) +
           "%";
}

/// Selected lemmas with train counts and eval metaphoricity.
inline Table lemma_table(const std::optional<SplitManifest>& manifest,
                         const std::map<std::string, std::vector<Instance>>& eval_sets) {
    Table t{"lemmas", "Selected target lemmas",
            {"set", "category", "lemma", "n_vua", "met_pct_vua", "met_pct_eval"}, {}, {}};
    if (!manifest) {
        t.notes.push_back("missing input: splits/manifest.json");
        return t;
    }
    for (const auto& [set, sel] : {std::pair<std::string, const LemmaSelection*>{"exposed", &manifest->exposed_selection},
                                   {"held_out", &manifest->held_out_selection}}) {
        std::map<std::string, std::pair<std::size_t, std::size_t>> eval_counts;  // lemma -> (n, n_met)
        const auto it = eval_sets.find(set);
        if (it != eval_sets.end()) {
            for (const auto& inst : it->second) {
                auto& c = eval_counts[inst.lemma];
                ++c.first;
                c.second += inst.label == 1;
            }
        } else {
            t.notes.push_back("missing input: splits/" + set + "_eval.jsonl");
        }
        for (const auto& [category, rows] : {std::pair<std::string, const std::vector<LemmaRow>*>{"met_biased", &sel->met_biased},
                                             {"balanced", &sel->balanced},
                                             {"lit_biased", &sel->lit_biased}}) {
            for (const auto& row : *rows) {
                std::string eval_pct = kGap;
                if (auto c = eval_counts.find(row.lemma); c != eval_counts.end()) {
                    eval_pct = format_percent(c->second.second, c->second.first);
                }
                t.rows.push_back({set, category, row.lemma, std::to_string(row.n), format_percent(row.n_met, row.n), eval_pct});
            }
        }
    }
    return t;
}

inline Table dataset_table(const std::optional<nlohmann::json>& stats) {
    Table t{"dataset_stats", "Dataset statistics", {"split", "n_samples", "met_pct", "n_lemmas"}, {}, {}};
    const std::vector<std::pair<std::string, std::string>> splits = {{"train", "Train"},
                                                                     {"test", "Test"},
                                                                     {"filtered_train", "Filtered Train"},
                                                                     {"exposed_eval", "Exposed Eval."},
                                                                     {"held_out_eval", "Held-out Eval."}};
    if (!stats) t.notes.push_back("missing input: splits/stats.json");
    for (const auto& [key, label] : splits) {
        if (stats && stats->contains(key)) {
            const auto& s = stats->at(key);
            const auto n = s.at("n_samples").get<std::size_t>();
            t.rows.push_back({label, std::to_string(n), format_percent(s.at("n_metaphorical").get<std::size_t>(), n),
                              std::to_string(s.at("n_lemmas").get<std::size_t>())});
        } else {
            t.rows.push_back({label, kGap, kGap, kGap});
        }
    }
    return t;
}

inline Table sweep_table(const std::optional<std::vector<SweepRow>>& sweep) {
    Table t{"seed_sweep", "Seed sweep (validation split), sorted by F1",
            {"seed", "precision", "recall", "f1", "selected"}, {}, {}};
    if (!sweep || sweep->empty()) {
        t.notes.push_back("missing input: results/sweep.tsv");
        return t;
    }
    const auto s = summarize_sweep(*sweep);
    for (std::size_t i = 0; i < s.rows.size(); ++i) {
        const auto& r = s.rows[i];
        t.rows.push_back({std::to_string(r.seed), format_metric(r.precision), format_metric(r.recall),
                          format_metric(r.f1), i == s.selected ? "*" : ""});
    }
    t.rows.push_back({"Mean", format_metric(s.mean_precision), format_metric(s.mean_recall), format_metric(s.mean_f1), ""});
    t.rows.push_back({"Std", format_metric(s.std_precision), format_metric(s.std_recall), format_metric(s.std_f1), ""});
    t.notes.push_back("* median run (seed " + std::to_string(s.selected_row().seed) + ")");
    return t;
}

inline Table performance_table(const std::optional<std::vector<ReportRow>>& scores,
                               const std::optional<std::vector<CorrelationRow>>& correlations) {
    Table t{"performance", "Performance on the Exposed and Held-out evaluation sets",
            {"condition", "set", "precision", "recall", "f1"}, {}, {}};
    if (!scores) t.notes.push_back("missing input: results/scores.tsv");
    auto find = [&](const std::string& cond, const std::string& set) -> const ReportRow* {
        if (!scores) return nullptr;
        for (const auto& r : *scores) {
            if (r.condition == cond && r.set == set) return &r;
        }
        return nullptr;
    };
    for (const std::string cond : {"full", "context_only", "word_only", "random"}) {
        for (const std::string set : {"exposed", "held_out"}) {
            if (const auto* r = find(cond, set)) {
                t.rows.push_back({cond, set, format_metric(r->metrics.precision), format_metric(r->metrics.recall),
                                  format_metric(r->metrics.f1)});
            } else {
                t.rows.push_back({cond, set, kGap, kGap, kGap});
            }
        }
    }
    if (correlations) {
        for (const auto& c : *correlations) {
            t.notes.push_back("F1 vs. frequency (" + c.set + "): rho = " + format_metric(c.result.rho) +
                              ", p = " + format_metric(c.result.p_value) + ", n = " + std::to_string(c.result.n));
        }
    }
    return t;
}

inline Table geometry_table(const std::optional<std::vector<GeometryRow>>& geometry) {
    Table t{"geometry", "Neighbourhood purity and k-NN F1", {"condition", "set", "purity", "knn_f1"}, {}, {}};
    if (!geometry) t.notes.push_back("missing input: results/geometry.tsv");
    for (const std::string cond : {"full", "context_only"}) {
        for (const std::string set : {"exposed", "held_out"}) {
            const GeometryRow* hit = nullptr;
            if (geometry) {
                for (const auto& r : *geometry) {
                    if (r.condition == cond && r.set == set) hit = &r;
                }
            }
            if (hit) {
                t.rows.push_back({cond, set, format_metric(hit->purity), format_metric(hit->knn_f1)});
            } else {
                t.rows.push_back({cond, set, kGap, kGap});
            }
        }
    }
    return t;
}

}  // namespace lexprobe
