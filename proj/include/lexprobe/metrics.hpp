#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "lexprobe/corpus.hpp"
#include "lexprobe/error.hpp"

namespace lexprobe {

inline constexpr double kDecisionThreshold = 0.5;

struct PredictionRecord {
    std::string id;
    int pred = 0;
    std::optional<double> score;  // probability of class 1

    friend bool operator==(const PredictionRecord&, const PredictionRecord&) = default;
};

struct Confusion {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    std::size_t tn = 0;

    std::size_t total() const noexcept { return tp + fp + fn + tn; }
    Confusion& operator+=(const Confusion& o) noexcept {
        tp += o.tp;
        fp += o.fp;
        fn += o.fn;
        tn += o.tn;
        return *this;
    }
    friend Confusion operator+(Confusion a, const Confusion& b) noexcept { return a += b; }
    friend bool operator==(const Confusion&, const Confusion&) = default;
};

/// Precision, recall and F1 of the positive (metaphorical) class.
struct PRF {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    Confusion counts;
};

/// Undefined precision or recall is reported as 0, and f1 is 0 when p + r = 0.
inline PRF prf_from_counts(const Confusion& c) {
    PRF out;
    out.counts = c;
    const auto pp = c.tp + c.fp;
    const auto ap = c.tp + c.fn;
    out.precision = pp ? static_cast<double>(c.tp) / static_cast<double>(pp) : 0.0;
    out.recall = ap ? static_cast<double>(c.tp) / static_cast<double>(ap) : 0.0;
    const double denom = out.precision + out.recall;
    out.f1 = denom > 0.0 ? 2.0 * out.precision * out.recall / denom : 0.0;
    return out;
}

inline void validate_prediction(const PredictionRecord& rec) {
    if (rec.pred != 0 && rec.pred != 1) throw ValidationError("prediction '" + rec.id + "': pred must be 0 or 1");
    if (rec.score) {
        if (!(*rec.score >= 0.0 && *rec.score <= 1.0)) {
            throw ValidationError("prediction '" + rec.id + "': score outside [0,1]");
        }
        if ((*rec.score >= kDecisionThreshold) != (rec.pred == 1)) {
            throw ValidationError("prediction '" + rec.id + "': pred disagrees with score");
        }
    }
}

namespace detail {

/// Maps every gold id to its prediction, or throws CoverageError.
inline std::vector<int> align_predictions(std::span<const PredictionRecord> preds, std::span<const Instance> gold) {
    std::unordered_map<std::string_view, int> by_id;
    by_id.reserve(preds.size());
    std::vector<std::string> extra;
    for (const auto& p : preds) {
        validate_prediction(p);
        if (!by_id.emplace(p.id, p.pred).second) extra.push_back(p.id);
    }
    std::vector<std::string> missing;
    std::vector<int> aligned;
    aligned.reserve(gold.size());
    std::unordered_set<std::string_view> gold_ids;
    for (const auto& inst : gold) {
        gold_ids.insert(inst.id);
        auto it = by_id.find(inst.id);
        if (it == by_id.end()) {
            missing.push_back(inst.id);
            aligned.push_back(0);
        } else {
            aligned.push_back(it->second);
        }
    }
    for (const auto& p : preds) {
        if (!gold_ids.count(p.id)) extra.push_back(p.id);
    }
    if (!missing.empty() || !extra.empty()) throw CoverageError(std::move(missing), std::move(extra));
    return aligned;
}

inline void tally(Confusion& c, int gold, int pred) noexcept {
    if (gold == 1) {
        (pred == 1 ? c.tp : c.fn) += 1;
    } else {
        (pred == 1 ? c.fp : c.tn) += 1;
    }
}

}  // namespace detail

inline Confusion confusion(std::span<const PredictionRecord> preds, std::span<const Instance> gold) {
    const auto aligned = detail::align_predictions(preds, gold);
    Confusion c;
    for (std::size_t i = 0; i < gold.size(); ++i) detail::tally(c, gold[i].label, aligned[i]);
    return c;
}

/// Binary metrics for the metaphorical class. Prediction ids must match the
/// gold ids one-to-one.
inline PRF score(std::span<const PredictionRecord> preds, std::span<const Instance> gold) {
    return prf_from_counts(confusion(preds, gold));
}

inline std::map<std::string, PRF> per_lemma_f1(std::span<const PredictionRecord> preds,
                                               std::span<const Instance> gold) {
    const auto aligned = detail::align_predictions(preds, gold);
    std::map<std::string, Confusion> counts;
    for (std::size_t i = 0; i < gold.size(); ++i) detail::tally(counts[gold[i].lemma], gold[i].label, aligned[i]);
    std::map<std::string, PRF> out;
    for (const auto& [lemma, c] : counts) out.emplace(lemma, prf_from_counts(c));
    return out;
}

/// Expected metrics of a uniform coin-flip predictor: precision equals the
/// positive rate, recall is one half.
inline PRF random_baseline(double pos_rate) {
    if (!(pos_rate > 0.0 && pos_rate < 1.0)) throw DomainError("positive rate must lie in (0, 1)");
    PRF out;
    out.precision = pos_rate;
    out.recall = 0.5;
    out.f1 = 2.0 * pos_rate * 0.5 / (pos_rate + 0.5);
    return out;
}

inline double random_baseline_f1(double pos_rate) { return random_baseline(pos_rate).f1; }

inline PredictionRecord parse_prediction(std::string_view line, std::size_t line_no = 1) {
    nlohmann::json obj;
    try {
        obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(line_no, std::string("invalid JSON: ") + e.what());
    }
    if (!obj.is_object()) throw ParseError(line_no, "expected a JSON object");
    PredictionRecord rec;
    const auto id = obj.find("id");
    if (id == obj.end() || !id->is_string()) throw ParseError(line_no, "key 'id' must be a string");
    rec.id = id->get<std::string>();
    const auto pred = obj.find("pred");
    if (pred == obj.end() || !pred->is_number_integer()) throw ParseError(line_no, "key 'pred' must be 0 or 1");
    rec.pred = pred->get<int>();
    if (const auto sc = obj.find("score"); sc != obj.end() && !sc->is_null()) {
        if (!sc->is_number()) throw ParseError(line_no, "key 'score' must be a number");
        rec.score = sc->get<double>();
    }
    try {
        validate_prediction(rec);
    } catch (const ValidationError& e) {
        throw ValidationError("line " + std::to_string(line_no) + ": " + e.what());
    }
    return rec;
}

inline std::vector<PredictionRecord> read_predictions(std::istream& in) {
    std::vector<PredictionRecord> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::blank(line)) continue;
        out.push_back(parse_prediction(line, line_no));
    }
    return out;
}

inline std::vector<PredictionRecord> read_predictions_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open prediction file " + path.string());
    return read_predictions(in);
}

inline void write_predictions(std::ostream& out, std::span<const PredictionRecord> preds) {
    for (const auto& p : preds) {
        nlohmann::json obj = {{"id", p.id}, {"pred", p.pred}};
        if (p.score) obj["score"] = *p.score;
        out << obj.dump() << '\n';
    }
}

/// Three decimals without the leading zero (".716", "1.000", "-.127").
/// Thousandths are rounded half to even after scaling, so 0.7165 -> ".716".
inline std::string format_metric(double value) {
    const double scaled = std::nearbyint(value * 1000.0);
    const auto milli = static_cast<long long>(std::fabs(scaled));
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s%lld.%03lld", scaled < 0 && milli != 0 ? "-" : "", milli / 1000, milli % 1000);
    std::string s(buf);
    if (milli < 1000) s.erase(s.find('0'), 1);
    return s;
}

/// One (condition, set) row of a metrics report.
struct ReportRow {
    std::string condition;
    std::string set;
    PRF metrics;
};

inline void write_report_rows(std::ostream& out, std::span<const ReportRow> rows) {
    out << "condition\tset\tprecision\trecall\tf1\n";
    for (const auto& r : rows) {
        out << r.condition << '\t' << r.set << '\t' << format_metric(r.metrics.precision) << '\t'
            << format_metric(r.metrics.recall) << '\t' << format_metric(r.metrics.f1) << '\n';
    }
}

/// TSV with columns lemma, tp, fp, fn, tn, precision, recall, f1.
inline void write_per_lemma_tsv(std::ostream& out, const std::map<std::string, PRF>& per_lemma) {
    out << "lemma\ttp\tfp\tfn\ttn\tprecision\trecall\tf1\n";
    char buf[96];
    for (const auto& [lemma, prf] : per_lemma) {
        std::snprintf(buf, sizeof buf, "%.6f\t%.6f\t%.6f", prf.precision, prf.recall, prf.f1);
        out << lemma << '\t' << prf.counts.tp << '\t' << prf.counts.fp << '\t' << prf.counts.fn << '\t'
            << prf.counts.tn << '\t' << buf << '\n';
    }
}

}  // namespace lexprobe
