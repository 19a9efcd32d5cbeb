#pragma once

#include <algorithm>
#include <compare>
#include <cstdint>
#include <cstdio>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "lexprobe/corpus.hpp"

namespace lexprobe {

/// Exact nonnegative rational num/den with den > 0. Ordering is by value.
struct Ratio {
    std::int64_t num = 0;
    std::int64_t den = 1;

    double value() const noexcept { return static_cast<double>(num) / static_cast<double>(den); }

    friend std::strong_ordering operator<=>(const Ratio& a, const Ratio& b) noexcept {
        const __int128 lhs = static_cast<__int128>(a.num) * b.den;
        const __int128 rhs = static_cast<__int128>(b.num) * a.den;
        return lhs <=> rhs;
    }
    friend bool operator==(const Ratio& a, const Ratio& b) noexcept {
        return (a <=> b) == std::strong_ordering::equal;
    }
};

/// |a - b| as an exact rational.
inline Ratio abs_difference(const Ratio& a, const Ratio& b) noexcept {
    const __int128 num = static_cast<__int128>(a.num) * b.den - static_cast<__int128>(b.num) * a.den;
    const __int128 den = static_cast<__int128>(a.den) * b.den;
    // Counts stay far below 2^31, so the products fit back into 64 bits.
    return {static_cast<std::int64_t>(num < 0 ? -num : num), static_cast<std::int64_t>(den)};
}

struct LemmaRow {
    std::string lemma;
    std::size_t n = 0;
    std::size_t n_met = 0;

    Ratio ratio() const noexcept {
        return {static_cast<std::int64_t>(n_met), static_cast<std::int64_t>(n)};
    }
    friend bool operator==(const LemmaRow&, const LemmaRow&) = default;
};

struct LemmaTable {
    std::vector<LemmaRow> rows;  // sorted by lemma
    std::string source_split;

    const LemmaRow* find(const std::string& lemma) const {
        auto it = std::lower_bound(rows.begin(), rows.end(), lemma,
                                   [](const LemmaRow& row, const std::string& key) { return row.lemma < key; });
        return it != rows.end() && it->lemma == lemma ? &*it : nullptr;
    }
    friend bool operator==(const LemmaTable&, const LemmaTable&) = default;
};

inline LemmaTable build_lemma_table(std::span<const Instance> instances, std::string source_split = {}) {
    std::map<std::string, LemmaRow> counts;
    for (const auto& inst : instances) {
        auto& row = counts[inst.lemma];
        row.lemma = inst.lemma;
        ++row.n;
        row.n_met += inst.label == 1 ? 1 : 0;
    }
    LemmaTable table;
    table.source_split = std::move(source_split);
    table.rows.reserve(counts.size());
    for (auto& [lemma, row] : counts) table.rows.push_back(std::move(row));
    return table;
}

inline LemmaTable build_lemma_table(const Corpus& corpus) {
    return build_lemma_table(std::span<const Instance>(corpus.instances), corpus.split_name);
}

enum class RankOrder { desc_ratio, asc_ratio, near_balanced };

/// Ties on the primary key go to the better-sampled lemma, then to the
/// lexicographically smaller one.
inline bool tie_break_less(const LemmaRow& a, const LemmaRow& b) noexcept {
    if (a.n != b.n) return a.n > b.n;
    return a.lemma < b.lemma;
}

/// Distance of the row's ratio from one half, exact.
inline Ratio balance_distance(const LemmaRow& row) noexcept {
    return abs_difference(row.ratio(), Ratio{1, 2});
}

inline std::vector<LemmaRow> rank_candidates(std::span<const LemmaRow> rows, std::size_t min_freq,
                                             RankOrder order) {
    std::vector<LemmaRow> out;
    for (const auto& row : rows) {
        if (row.n >= min_freq) out.push_back(row);
    }
    std::sort(out.begin(), out.end(), [order](const LemmaRow& a, const LemmaRow& b) {
        std::strong_ordering cmp = std::strong_ordering::equal;
        switch (order) {
            case RankOrder::desc_ratio: cmp = b.ratio() <=> a.ratio(); break;
            case RankOrder::asc_ratio: cmp = a.ratio() <=> b.ratio(); break;
            case RankOrder::near_balanced: cmp = balance_distance(a) <=> balance_distance(b); break;
        }
        if (cmp != 0) return cmp < 0;
        return tie_break_less(a, b);
    });
    return out;
}

inline std::vector<LemmaRow> rank_candidates(const LemmaTable& table, std::size_t min_freq, RankOrder order) {
    return rank_candidates(std::span<const LemmaRow>(table.rows), min_freq, order);
}

/// TSV with columns lemma, n, n_met, ratio (6 decimals).
inline void write_lemma_table_tsv(std::ostream& out, const LemmaTable& table) {
    out << "lemma\tn\tn_met\tratio\n";
    char buf[32];
    for (const auto& row : table.rows) {
        std::snprintf(buf, sizeof buf, "%.6f", row.ratio().value());
        out << row.lemma << '\t' << row.n << '\t' << row.n_met << '\t' << buf << '\n';
    }
}

}  // namespace lexprobe
