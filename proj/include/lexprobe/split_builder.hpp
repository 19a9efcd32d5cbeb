#pragma once

#include <algorithm>
#include <cstdint>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "lexprobe/corpus.hpp"
#include "lexprobe/error.hpp"
#include "lexprobe/lemma_stats.hpp"
#include "lexprobe/random.hpp"

namespace lexprobe {

inline constexpr std::size_t kLemmasPerCategory = 10;
inline constexpr std::size_t kHeldOutMinFreq = 20;
inline constexpr std::size_t kExposedMinFreq = 10;
inline constexpr std::size_t kHeldOutPerLemma = 20;
inline constexpr std::size_t kExposedPerLemma = 10;
inline constexpr std::string_view kDefaultMaskToken = "⟨MASK⟩";
inline constexpr std::string_view kMaskedIdSuffix = "#masked";

enum class SelectionKind { held_out, exposed };

inline std::string_view to_string(SelectionKind kind) noexcept {
    return kind == SelectionKind::held_out ? "held_out" : "exposed";
}

/// Three disjoint categories of lemmas; each category is stored in
/// descending-ratio order.
struct LemmaSelection {
    std::vector<LemmaRow> met_biased;
    std::vector<LemmaRow> balanced;
    std::vector<LemmaRow> lit_biased;
    SelectionKind kind = SelectionKind::held_out;

    std::size_t size() const noexcept { return met_biased.size() + balanced.size() + lit_biased.size(); }
    bool empty() const noexcept { return size() == 0; }

    /// All rows, sorted by lemma.
    std::vector<LemmaRow> rows() const {
        std::vector<LemmaRow> all;
        all.reserve(size());
        for (const auto* cat : {&met_biased, &balanced, &lit_biased}) all.insert(all.end(), cat->begin(), cat->end());
        std::sort(all.begin(), all.end(), [](const LemmaRow& a, const LemmaRow& b) { return a.lemma < b.lemma; });
        return all;
    }

    std::set<std::string> lemmas() const {
        std::set<std::string> out;
        for (const auto& row : rows()) out.insert(row.lemma);
        return out;
    }

    bool contains(const std::string& lemma) const {
        for (const auto* cat : {&met_biased, &balanced, &lit_biased}) {
            for (const auto& row : *cat) {
                if (row.lemma == lemma) return true;
            }
        }
        return false;
    }

    friend bool operator==(const LemmaSelection&, const LemmaSelection&) = default;
};

namespace detail {

inline void sort_desc_ratio(std::vector<LemmaRow>& rows) {
    std::sort(rows.begin(), rows.end(), [](const LemmaRow& a, const LemmaRow& b) {
        if (auto cmp = b.ratio() <=> a.ratio(); cmp != 0) return cmp < 0;
        return tie_break_less(a, b);
    });
}

}  // namespace detail

/// Applies the category rules to an already-filtered candidate list:
/// the top ratios form the metaphorical-biased block, the rows closest to
/// one half (among the rest) form the balanced block, and each
/// metaphorical-biased ratio r, taken in descending order, claims the unused
/// row closest to 1 - r.
inline LemmaSelection select_stratified(std::span<const LemmaRow> candidates, SelectionKind kind,
                                        std::size_t per_category = kLemmasPerCategory) {
    const std::size_t required = 3 * per_category;
    if (candidates.size() < required) throw InsufficientCandidatesError(candidates.size(), required);

    LemmaSelection sel;
    sel.kind = kind;
    std::unordered_set<std::string> used;

    const auto by_ratio = rank_candidates(candidates, 0, RankOrder::desc_ratio);
    sel.met_biased.assign(by_ratio.begin(), by_ratio.begin() + static_cast<std::ptrdiff_t>(per_category));
    for (const auto& row : sel.met_biased) used.insert(row.lemma);

    for (const auto& row : rank_candidates(candidates, 0, RankOrder::near_balanced)) {
        if (sel.balanced.size() == per_category) break;
        if (used.insert(row.lemma).second) sel.balanced.push_back(row);
    }

    for (const auto& anchor : sel.met_biased) {
        const Ratio target{anchor.ratio().den - anchor.ratio().num, anchor.ratio().den};
        const LemmaRow* best = nullptr;
        Ratio best_dist{};
        for (const auto& row : candidates) {
            if (used.count(row.lemma)) continue;
            const Ratio dist = abs_difference(row.ratio(), target);
            if (!best || dist < best_dist || (dist == best_dist && tie_break_less(row, *best))) {
                best = &row;
                best_dist = dist;
            }
        }
        used.insert(best->lemma);
        sel.lit_biased.push_back(*best);
    }

    detail::sort_desc_ratio(sel.met_biased);
    detail::sort_desc_ratio(sel.balanced);
    detail::sort_desc_ratio(sel.lit_biased);
    return sel;
}

inline LemmaSelection select_held_out(const LemmaTable& train_table, std::size_t min_freq = kHeldOutMinFreq,
                                      std::size_t per_category = kLemmasPerCategory) {
    const auto candidates = rank_candidates(train_table, min_freq, RankOrder::desc_ratio);
    return select_stratified(candidates, SelectionKind::held_out, per_category);
}

/// Candidates must occur in both tables and outside `exclude`; frequency and
/// ratio come from the train table.
inline LemmaSelection select_exposed(const LemmaTable& train_table, const LemmaTable& test_table,
                                     const LemmaSelection& exclude, std::size_t min_freq = kExposedMinFreq,
                                     std::size_t per_category = kLemmasPerCategory) {
    std::vector<LemmaRow> candidates;
    for (const auto& row : train_table.rows) {
        if (row.n < min_freq || !test_table.find(row.lemma) || exclude.contains(row.lemma)) continue;
        candidates.push_back(row);
    }
    return select_stratified(candidates, SelectionKind::exposed, per_category);
}

/// Train minus every instance of a held-out lemma, order preserved.
inline Corpus build_filtered_train(const Corpus& train, const LemmaSelection& held_out) {
    const auto excluded = held_out.lemmas();
    Corpus out;
    out.split_name = "filtered_train";
    for (const auto& inst : train.instances) {
        if (!excluded.count(inst.lemma)) out.instances.push_back(inst);
    }
    return out;
}

struct EvalSet {
    std::vector<Instance> instances;
    std::size_t n_per_lemma = 0;
    std::uint64_t seed = 0;
    bool masked = false;

    friend bool operator==(const EvalSet&, const EvalSet&) = default;
};

/// round(n * r) with halves rounded up, in exact integer arithmetic.
inline std::size_t round_half_up(std::size_t n, const Ratio& r) {
    const auto num = 2 * static_cast<__int128>(n) * r.num + r.den;
    return static_cast<std::size_t>(num / (2 * static_cast<__int128>(r.den)));
}

/// Metaphorical count drawn for a lemma of the given ratio.
inline std::size_t stratified_met_count(std::size_t n_per_lemma, const Ratio& r) {
    return round_half_up(n_per_lemma, r);
}

namespace detail {

/// k draws without replacement (partial Fisher-Yates) from `items`, which
/// must already be in canonical order.
inline void draw_without_replacement(std::vector<const Instance*>& items, std::size_t k, Engine& rng,
                                     std::vector<Instance>& out) {
    for (std::size_t i = 0; i < k; ++i) {
        const auto j = i + static_cast<std::size_t>(uniform_below(rng, items.size() - i));
        std::swap(items[i], items[j]);
        out.push_back(*items[i]);
    }
}

}  // namespace detail

/// Draws n_per_lemma instances of each selected lemma from `pool`, keeping
/// the lemma's metaphoricity (from the selection rows) up to round-half-up.
/// Each lemma uses its own generator seeded by (seed, lemma). Output is
/// ordered by lemma, then id.
inline EvalSet stratified_downsample(const Corpus& pool, const LemmaSelection& lemmas, std::size_t n_per_lemma,
                                     std::uint64_t seed) {
    std::unordered_map<std::string, std::vector<const Instance*>> by_lemma;
    for (const auto& inst : pool.instances) by_lemma[inst.lemma].push_back(&inst);

    EvalSet eval;
    eval.n_per_lemma = n_per_lemma;
    eval.seed = seed;
    for (const auto& row : lemmas.rows()) {
        const std::size_t k_met = stratified_met_count(n_per_lemma, row.ratio());
        const std::size_t k_lit = n_per_lemma - k_met;

        std::vector<const Instance*> met;
        std::vector<const Instance*> lit;
        if (auto it = by_lemma.find(row.lemma); it != by_lemma.end()) {
            for (const auto* inst : it->second) (inst->label == 1 ? met : lit).push_back(inst);
        }
        if (met.size() < k_met) throw StratificationError(row.lemma, 1, met.size(), k_met);
        if (lit.size() < k_lit) throw StratificationError(row.lemma, 0, lit.size(), k_lit);
        const auto by_id = [](const Instance* a, const Instance* b) { return a->id < b->id; };
        std::sort(met.begin(), met.end(), by_id);
        std::sort(lit.begin(), lit.end(), by_id);

        Engine rng = make_engine(seed, row.lemma);
        std::vector<Instance> picked;
        picked.reserve(n_per_lemma);
        detail::draw_without_replacement(met, k_met, rng, picked);
        detail::draw_without_replacement(lit, k_lit, rng, picked);
        std::sort(picked.begin(), picked.end(), [](const Instance& a, const Instance& b) { return a.id < b.id; });
        for (auto& inst : picked) eval.instances.push_back(std::move(inst));
    }
    return eval;
}

/// Replaces each target span by a single placeholder token.
inline Instance mask_instance(const Instance& inst, std::string_view placeholder) {
    Instance out = inst;
    out.id += kMaskedIdSuffix;
    out.tokens.clear();
    out.tokens.reserve(inst.tokens.size() - inst.target.length() + 1);
    const auto start = static_cast<std::ptrdiff_t>(inst.target.start);
    const auto end = static_cast<std::ptrdiff_t>(inst.target.end);
    out.tokens.insert(out.tokens.end(), inst.tokens.begin(), inst.tokens.begin() + start);
    out.tokens.emplace_back(placeholder);
    out.tokens.insert(out.tokens.end(), inst.tokens.begin() + end + 1, inst.tokens.end());
    out.target = Span{inst.target.start, inst.target.start};
    return out;
}

inline EvalSet emit_masked_variant(const EvalSet& eval, std::string_view placeholder = kDefaultMaskToken) {
    if (eval.masked) throw InputError("eval set is already masked");
    if (placeholder.empty()) throw InputError("mask placeholder is empty");
    EvalSet out;
    out.n_per_lemma = eval.n_per_lemma;
    out.seed = eval.seed;
    out.masked = true;
    out.instances.reserve(eval.instances.size());
    for (const auto& inst : eval.instances) out.instances.push_back(mask_instance(inst, placeholder));
    return out;
}

struct SplitManifest {
    LemmaSelection held_out_selection;
    LemmaSelection exposed_selection;
    std::vector<std::string> filtered_train_ids;
    std::vector<std::string> held_out_eval_ids;
    std::vector<std::string> exposed_eval_ids;
    std::uint64_t seed = 0;
    std::string provenance;

    friend bool operator==(const SplitManifest&, const SplitManifest&) = default;
};

struct ManifestInputs {
    const Corpus& train;
    const Corpus& test;
    const LemmaSelection& held_out;
    const LemmaSelection& exposed;
    const Corpus& filtered_train;
    const EvalSet& held_out_eval;
    const EvalSet& exposed_eval;
    std::uint64_t seed = 0;
    std::string provenance;
};

namespace detail {

inline std::vector<std::string> ids_of(std::span<const Instance> instances) {
    std::vector<std::string> ids;
    ids.reserve(instances.size());
    for (const auto& inst : instances) ids.push_back(inst.id);
    return ids;
}

[[noreturn]] inline void integrity_failure(const std::string& what) { throw ManifestIntegrityError(what); }

}  // namespace detail

/// Assembles the manifest and checks every cross-split invariant.
inline SplitManifest build_manifest(const ManifestInputs& in) {
    using detail::integrity_failure;

    const auto held_lemmas = in.held_out.lemmas();
    const auto exp_lemmas = in.exposed.lemmas();
    if (held_lemmas.size() != in.held_out.size() || exp_lemmas.size() != in.exposed.size()) {
        integrity_failure("a lemma selection contains a lemma twice");
    }
    for (const auto& lemma : exp_lemmas) {
        if (held_lemmas.count(lemma)) integrity_failure("lemma '" + lemma + "' is both held-out and exposed");
    }

    std::unordered_set<std::string_view> train_ids;
    for (const auto& inst : in.train.instances) train_ids.insert(inst.id);
    std::unordered_set<std::string_view> test_ids;
    for (const auto& inst : in.test.instances) test_ids.insert(inst.id);

    std::unordered_set<std::string_view> filtered_ids;
    std::unordered_set<std::string_view> filtered_lemmas;
    for (const auto& inst : in.filtered_train.instances) {
        if (held_lemmas.count(inst.lemma)) {
            integrity_failure("filtered train contains held-out lemma '" + inst.lemma + "'");
        }
        if (!train_ids.count(inst.id)) integrity_failure("filtered train id '" + inst.id + "' is not a train id");
        filtered_ids.insert(inst.id);
        filtered_lemmas.insert(inst.lemma);
    }
    for (const auto& inst : in.held_out_eval.instances) {
        if (!held_lemmas.count(inst.lemma)) {
            integrity_failure("held-out eval instance '" + inst.id + "' has non-held-out lemma");
        }
        if (filtered_ids.count(inst.id)) integrity_failure("held-out eval id '" + inst.id + "' is in filtered train");
        if (filtered_lemmas.count(inst.lemma)) {
            integrity_failure("held-out eval lemma '" + inst.lemma + "' occurs in filtered train");
        }
    }
    for (const auto& inst : in.exposed_eval.instances) {
        if (!exp_lemmas.count(inst.lemma)) {
            integrity_failure("exposed eval instance '" + inst.id + "' has non-exposed lemma");
        }
        if (!test_ids.count(inst.id)) integrity_failure("exposed eval id '" + inst.id + "' is not a test id");
        if (train_ids.count(inst.id)) integrity_failure("exposed eval id '" + inst.id + "' is also a train id");
    }

    SplitManifest m;
    m.held_out_selection = in.held_out;
    m.exposed_selection = in.exposed;
    m.filtered_train_ids = detail::ids_of(in.filtered_train.instances);
    m.held_out_eval_ids = detail::ids_of(in.held_out_eval.instances);
    m.exposed_eval_ids = detail::ids_of(in.exposed_eval.instances);
    m.seed = in.seed;
    m.provenance = in.provenance;
    return m;
}

inline nlohmann::json to_json(const LemmaSelection& sel) {
    auto rows = [](const std::vector<LemmaRow>& cat) {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& row : cat) arr.push_back({{"lemma", row.lemma}, {"n", row.n}, {"n_met", row.n_met}});
        return arr;
    };
    return {{"kind", std::string(to_string(sel.kind))},
            {"met_biased", rows(sel.met_biased)},
            {"balanced", rows(sel.balanced)},
            {"lit_biased", rows(sel.lit_biased)}};
}

inline LemmaSelection selection_from_json(const nlohmann::json& obj) {
    try {
        LemmaSelection sel;
        const auto kind = obj.at("kind").get<std::string>();
        if (kind == "held_out") {
            sel.kind = SelectionKind::held_out;
        } else if (kind == "exposed") {
            sel.kind = SelectionKind::exposed;
        } else {
            throw ManifestIntegrityError("unknown selection kind '" + kind + "'");
        }
        auto rows = [](const nlohmann::json& arr) {
            std::vector<LemmaRow> out;
            for (const auto& r : arr) {
                LemmaRow row{r.at("lemma").get<std::string>(), r.at("n").get<std::size_t>(),
                             r.at("n_met").get<std::size_t>()};
                if (row.n == 0 || row.n_met > row.n) throw ManifestIntegrityError("invalid counts for '" + row.lemma + "'");
                out.push_back(std::move(row));
            }
            return out;
        };
        sel.met_biased = rows(obj.at("met_biased"));
        sel.balanced = rows(obj.at("balanced"));
        sel.lit_biased = rows(obj.at("lit_biased"));
        return sel;
    } catch (const nlohmann::json::exception& e) {
        throw ManifestIntegrityError(std::string("malformed selection: ") + e.what());
    }
}

inline nlohmann::json to_json(const SplitManifest& m) {
    return {{"held_out_selection", to_json(m.held_out_selection)},
            {"exposed_selection", to_json(m.exposed_selection)},
            {"filtered_train_ids", m.filtered_train_ids},
            {"held_out_eval_ids", m.held_out_eval_ids},
            {"exposed_eval_ids", m.exposed_eval_ids},
            {"seed", m.seed},
            {"provenance", m.provenance}};
}

inline std::string serialize_manifest(const SplitManifest& m) { return to_json(m).dump(2) + "\n"; }

inline SplitManifest parse_manifest(std::string_view text) {
    try {
        const auto obj = nlohmann::json::parse(text);
        SplitManifest m;
        m.held_out_selection = selection_from_json(obj.at("held_out_selection"));
        m.exposed_selection = selection_from_json(obj.at("exposed_selection"));
        m.filtered_train_ids = obj.at("filtered_train_ids").get<std::vector<std::string>>();
        m.held_out_eval_ids = obj.at("held_out_eval_ids").get<std::vector<std::string>>();
        m.exposed_eval_ids = obj.at("exposed_eval_ids").get<std::vector<std::string>>();
        m.seed = obj.at("seed").get<std::uint64_t>();
        m.provenance = obj.at("provenance").get<std::string>();
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw ManifestIntegrityError(std::string("malformed manifest: ") + e.what());
    }
}

}  // namespace lexprobe
