#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "lexprobe/corpus.hpp"
#include "lexprobe/error.hpp"
#include "lexprobe/metrics.hpp"

namespace lexprobe {

struct CorrelationResult {
    double rho = 0.0;
    double p_value = 1.0;
    std::size_t n = 0;
    std::vector<std::string> missing_lemmas;
};

/// 1-based ranks; tied values share the mean of the ranks they span.
inline std::vector<double> average_ranks(std::span<const double> values) {
    const std::size_t n = values.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<double> ranks(n);
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i + 1;
        while (j < n && values[order[j]] == values[order[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1 .. j
        for (std::size_t t = i; t < j; ++t) ranks[order[t]] = avg;
        i = j;
    }
    return ranks;
}

namespace detail {

inline constexpr double kBetaTolerance = 1e-10;
inline constexpr int kBetaMaxIterations = 10000;

/// Continued fraction for the regularized incomplete beta (modified Lentz).
inline double beta_continued_fraction(double a, double b, double x) {
    constexpr double tiny = 1e-300;
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kBetaMaxIterations; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kBetaTolerance) return h;
    }
    throw NumericError("incomplete beta continued fraction did not converge");
}

}  // namespace detail

/// Regularized incomplete beta I_x(a, b) for a, b > 0 and x in [0, 1].
inline double regularized_incomplete_beta(double a, double b, double x) {
    if (!(a > 0.0 && b > 0.0)) throw DomainError("incomplete beta requires a, b > 0");
    if (!(x >= 0.0 && x <= 1.0)) throw DomainError("incomplete beta requires x in [0, 1]");
    if (x == 0.0 || x == 1.0) return x;
    const double front =
        std::exp(std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x));
    if (x < (a + 1.0) / (a + b + 2.0)) return front * detail::beta_continued_fraction(a, b, x) / a;
    return 1.0 - front * detail::beta_continued_fraction(b, a, 1.0 - x) / b;
}

/// P(|T| >= |t|) for Student's t with `df` degrees of freedom.
inline double student_t_two_sided_p(double t, double df) {
    if (!(df > 0.0)) throw DomainError("degrees of freedom must be positive");
    if (std::isinf(t)) return 0.0;
    return regularized_incomplete_beta(0.5 * df, 0.5, df / (df + t * t));
}

/// Two-sided p of a rank correlation via t = rho * sqrt((n-2) / (1-rho^2)).
inline double spearman_p_value(double rho, std::size_t n) {
    if (n < 3) throw InputError("p-value needs at least 3 pairs");
    const double df = static_cast<double>(n - 2);
    const double denom = 1.0 - rho * rho;
    if (denom <= 0.0) return 0.0;
    return student_t_two_sided_p(rho * std::sqrt(df / denom), df);
}

inline CorrelationResult spearman(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw InputError("spearman: inputs differ in length");
    if (x.size() < 3) throw InputError("spearman: at least 3 pairs required");
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!std::isfinite(x[i]) || !std::isfinite(y[i])) throw InputError("spearman: non-finite input");
    }
    const auto rx = average_ranks(x);
    const auto ry = average_ranks(y);
    const double n = static_cast<double>(x.size());
    const double mean = (n + 1.0) / 2.0;  // ranks always average to (n+1)/2
    double sxy = 0.0;
    double sxx = 0.0;
    double syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = rx[i] - mean;
        const double dy = ry[i] - mean;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) throw UndefinedCorrelationError("spearman: constant input");
    CorrelationResult out;
    out.n = x.size();
    out.rho = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
    out.p_value = spearman_p_value(out.rho, out.n);
    return out;
}

/// Lemma -> frequency estimate; lookups are case-insensitive.
class FreqTable {
public:
    void set(const std::string& lemma, double frequency) {
        if (!(frequency >= 0.0) || !std::isfinite(frequency)) {
            throw ValidationError("frequency for '" + lemma + "' must be finite and nonnegative");
        }
        values_[to_lower_ascii(lemma)] = frequency;
    }

    std::optional<double> lookup(std::string_view lemma) const {
        auto it = values_.find(to_lower_ascii(lemma));
        if (it == values_.end()) return std::nullopt;
        return it->second;
    }

    std::size_t size() const noexcept { return values_.size(); }

private:
    std::map<std::string, double> values_;
};

namespace detail {

inline std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, '\t')) out.push_back(field);
    if (!line.empty() && line.back() == '\t') out.emplace_back();
    return out;
}

inline double parse_double(const std::string& text, std::size_t line_no) {
    try {
        std::size_t used = 0;
        const double v = std::stod(text, &used);
        if (used != text.size()) throw std::invalid_argument(text);
        return v;
    } catch (const std::exception&) {
        throw ParseError(line_no, "not a number: '" + text + "'");
    }
}

/// Reads a headed TSV and returns, per row, the values of the named columns.
inline std::vector<std::vector<std::string>> read_tsv_columns(std::istream& in,
                                                              const std::vector<std::string>& columns) {
    std::string line;
    if (!std::getline(in, line)) throw ParseError(1, "missing header");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = split_tabs(line);
    std::vector<std::size_t> index;
    for (const auto& col : columns) {
        auto it = std::find(header.begin(), header.end(), col);
        if (it == header.end()) throw ParseError(1, "missing column '" + col + "'");
        index.push_back(static_cast<std::size_t>(it - header.begin()));
    }
    std::vector<std::vector<std::string>> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (blank(line)) continue;
        const auto fields = split_tabs(line);
        std::vector<std::string> row;
        for (auto i : index) {
            if (i >= fields.size()) throw ParseError(line_no, "too few columns");
            row.push_back(fields[i]);
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace detail

/// TSV with columns `lemma`, `frequency`.
inline FreqTable read_freq_table(std::istream& in) {
    FreqTable table;
    std::size_t line_no = 1;
    for (const auto& row : detail::read_tsv_columns(in, {"lemma", "frequency"})) {
        ++line_no;
        table.set(row[0], detail::parse_double(row[1], line_no));
    }
    return table;
}

inline FreqTable read_freq_table_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open frequency file " + path.string());
    return read_freq_table(in);
}

/// Reads the `lemma` and `f1` columns of a per-lemma metrics TSV.
inline std::map<std::string, double> read_per_lemma_f1(std::istream& in) {
    std::map<std::string, double> out;
    std::size_t line_no = 1;
    for (const auto& row : detail::read_tsv_columns(in, {"lemma", "f1"})) {
        ++line_no;
        out[row[0]] = detail::parse_double(row[1], line_no);
    }
    return out;
}

/// Rank-correlates per-lemma F1 with frequency over the lemmas present in
/// both inputs; lemmas without a frequency are listed in missing_lemmas.
inline CorrelationResult correlate_f1_frequency(const std::map<std::string, double>& f1_by_lemma,
                                                const FreqTable& freqs) {
    std::vector<double> f1;
    std::vector<double> freq;
    std::vector<std::string> missing;
    for (const auto& [lemma, value] : f1_by_lemma) {
        if (auto fr = freqs.lookup(lemma)) {
            f1.push_back(value);
            freq.push_back(*fr);
        } else {
            missing.push_back(lemma);
        }
    }
    if (f1.size() < 3) {
        throw InputError("correlation needs at least 3 lemmas with frequencies, found " + std::to_string(f1.size()));
    }
    auto result = spearman(f1, freq);
    result.missing_lemmas = std::move(missing);
    return result;
}

inline CorrelationResult correlate_f1_frequency(const std::map<std::string, PRF>& per_lemma, const FreqTable& freqs) {
    std::map<std::string, double> f1;
    for (const auto& [lemma, prf] : per_lemma) f1.emplace(lemma, prf.f1);
    return correlate_f1_frequency(f1, freqs);
}

}  // namespace lexprobe
