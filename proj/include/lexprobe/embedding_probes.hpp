#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <istream>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include <nlohmann/json.hpp>

#include "lexprobe/corpus.hpp"
#include "lexprobe/error.hpp"
#include "lexprobe/metrics.hpp"

namespace lexprobe {

enum class EmbeddingKind { contextual, static_layer };

inline std::string_view to_string(EmbeddingKind kind) noexcept {
    return kind == EmbeddingKind::contextual ? "contextual" : "static";
}

inline EmbeddingKind parse_embedding_kind(std::string_view text) {
    if (text == "contextual") return EmbeddingKind::contextual;
    if (text == "static") return EmbeddingKind::static_layer;
    throw InputError("unknown embedding kind '" + std::string(text) + "'");
}

struct EmbeddingRecord {
    std::string id;
    std::vector<double> vector;
    std::optional<int> label;
    std::optional<std::string> lemma;
    EmbeddingKind kind = EmbeddingKind::contextual;

    friend bool operator==(const EmbeddingRecord&, const EmbeddingRecord&) = default;
};

inline double l2_norm(std::span<const double> v) {
    double sum = 0.0;
    for (double x : v) sum += x * x;
    return std::sqrt(sum);
}

inline double dot(std::span<const double> a, std::span<const double> b) {
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) sum += a[i] * b[i];
    return sum;
}

/// Validated, immutable collection of equal-dimension embeddings of one kind.
class EmbeddingSet {
public:
    EmbeddingSet() = default;

    explicit EmbeddingSet(std::vector<EmbeddingRecord> records) : records_(std::move(records)) {
        if (records_.empty()) return;
        dim_ = records_.front().vector.size();
        kind_ = records_.front().kind;
        if (dim_ == 0) throw InputError("embedding dimension must be at least 1");
        std::unordered_set<std::string_view> ids;
        norms_.reserve(records_.size());
        for (const auto& rec : records_) {
            if (rec.vector.size() != dim_) {
                throw InputError("embedding '" + rec.id + "' has dimension " + std::to_string(rec.vector.size()) +
                                 ", expected " + std::to_string(dim_));
            }
            if (rec.kind != kind_) throw InputError("embedding '" + rec.id + "' mixes embedding kinds");
            if (!std::all_of(rec.vector.begin(), rec.vector.end(), [](double x) { return std::isfinite(x); })) {
                throw InputError("embedding '" + rec.id + "' has a non-finite component");
            }
            if (rec.label && *rec.label != 0 && *rec.label != 1) {
                throw InputError("embedding '" + rec.id + "' label must be 0 or 1");
            }
            if (!ids.insert(rec.id).second) throw DuplicateIdError(rec.id);
            norms_.push_back(l2_norm(rec.vector));
        }
    }

    const std::vector<EmbeddingRecord>& records() const noexcept { return records_; }
    const EmbeddingRecord& operator[](std::size_t i) const { return records_[i]; }
    std::size_t size() const noexcept { return records_.size(); }
    bool empty() const noexcept { return records_.empty(); }
    std::size_t dim() const noexcept { return dim_; }
    EmbeddingKind kind() const noexcept { return kind_; }
    double norm(std::size_t i) const { return norms_[i]; }

    void require_labels() const {
        for (const auto& rec : records_) {
            if (!rec.label) throw InputError("embedding '" + rec.id + "' carries no label");
        }
    }

private:
    std::vector<EmbeddingRecord> records_;
    std::vector<double> norms_;
    std::size_t dim_ = 0;
    EmbeddingKind kind_ = EmbeddingKind::contextual;
};

struct Neighbor {
    std::size_t index = 0;  // position in the reference set
    double similarity = 0.0;
};

/// Exact top-k by cosine similarity: highest first, equal similarities
/// ordered by id.
inline std::vector<Neighbor> cosine_knn(std::span<const double> query, const EmbeddingSet& reference, std::size_t k) {
    if (k == 0 || k > reference.size()) {
        throw InputError("k must be in [1, " + std::to_string(reference.size()) + "], got " + std::to_string(k));
    }
    if (query.size() != reference.dim()) throw InputError("query dimension does not match the reference set");
    const double qnorm = l2_norm(query);
    if (qnorm == 0.0) throw DegenerateVectorError("query vector has zero norm");

    std::vector<Neighbor> all(reference.size());
    for (std::size_t i = 0; i < reference.size(); ++i) {
        const double rnorm = reference.norm(i);
        if (rnorm == 0.0) throw DegenerateVectorError("reference vector '" + reference[i].id + "' has zero norm");
        all[i] = {i, dot(query, reference[i].vector) / (qnorm * rnorm)};
    }
    const auto closer = [&](const Neighbor& a, const Neighbor& b) {
        if (a.similarity != b.similarity) return a.similarity > b.similarity;
        return reference[a.index].id < reference[b.index].id;
    };
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(), closer);
    all.resize(k);
    return all;
}

inline std::vector<std::string> neighbor_ids(std::span<const Neighbor> neighbors, const EmbeddingSet& reference) {
    std::vector<std::string> ids;
    ids.reserve(neighbors.size());
    for (const auto& n : neighbors) ids.push_back(reference[n.index].id);
    return ids;
}

namespace detail {

inline void check_probe_inputs(const EmbeddingSet& eval, const EmbeddingSet& reference) {
    eval.require_labels();
    reference.require_labels();
    if (!eval.empty() && eval.dim() != reference.dim()) {
        throw InputError("eval and reference embeddings differ in dimension");
    }
}

}  // namespace detail

/// Mean over eval records of the fraction of their k nearest reference
/// neighbours that share their label.
inline double neighborhood_purity(const EmbeddingSet& eval, const EmbeddingSet& reference, std::size_t k = 10) {
    detail::check_probe_inputs(eval, reference);
    if (eval.empty()) throw InputError("purity of an empty eval set");
    double total = 0.0;
    for (const auto& rec : eval.records()) {
        std::size_t same = 0;
        for (const auto& nb : cosine_knn(rec.vector, reference, k)) same += reference[nb.index].label == rec.label;
        total += static_cast<double>(same) / static_cast<double>(k);
    }
    return total / static_cast<double>(eval.size());
}

/// Majority vote over the k nearest labels; an exact tie goes to the
/// nearest neighbour's label.
inline std::vector<PredictionRecord> knn_classify(const EmbeddingSet& eval, const EmbeddingSet& reference,
                                                  std::size_t k = 10) {
    detail::check_probe_inputs(eval, reference);
    std::vector<PredictionRecord> out;
    out.reserve(eval.size());
    for (const auto& rec : eval.records()) {
        const auto nbs = cosine_knn(rec.vector, reference, k);
        std::size_t positive = 0;
        for (const auto& nb : nbs) positive += *reference[nb.index].label == 1;
        const std::size_t negative = k - positive;
        int pred = positive > negative ? 1 : 0;
        if (positive == negative) pred = *reference[nbs.front().index].label;
        out.push_back({rec.id, pred, std::nullopt});
    }
    return out;
}

struct ProbeOptions {
    double l2 = 1.0;
    std::size_t max_iter = 10000;
    double tol = 1e-6;
};

struct ProbeTrainingMeta {
    std::size_t iterations = 0;
    double final_loss = 0.0;
    double gradient_norm = 0.0;
    double l2 = 0.0;
    bool converged = false;
};

/// Linear logistic model; pred = sigmoid(w.x + b) >= 0.5.
struct ProbeModel {
    std::vector<double> weights;
    double bias = 0.0;
    ProbeTrainingMeta meta;
};

inline double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

/// log(1 + exp(z)) without overflow.
inline double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

struct LossAndGradient {
    double loss = 0.0;
    std::vector<double> gradient;  // d weight partials followed by the bias partial
};

/// Mean logistic loss plus (l2 / 2n) * |w|^2; the bias is not penalized.
/// `params` holds the d weights followed by the bias.
inline LossAndGradient logistic_objective(const EmbeddingSet& train, std::span<const double> params, double l2) {
    const std::size_t d = train.dim();
    if (params.size() != d + 1) throw InputError("parameter vector must have dimension + 1 entries");
    const double n = static_cast<double>(train.size());
    LossAndGradient out;
    out.gradient.assign(d + 1, 0.0);
    const auto w = params.first(d);
    const double b = params[d];
    for (const auto& rec : train.records()) {
        const double z = dot(w, rec.vector) + b;
        const double y = static_cast<double>(*rec.label);
        out.loss += softplus(z) - y * z;
        const double residual = sigmoid(z) - y;
        for (std::size_t j = 0; j < d; ++j) out.gradient[j] += residual * rec.vector[j];
        out.gradient[d] += residual;
    }
    double wsq = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
        wsq += w[j] * w[j];
        out.gradient[j] = out.gradient[j] / n + l2 * w[j] / n;
    }
    out.gradient[d] /= n;
    out.loss = out.loss / n + 0.5 * l2 * wsq / n;
    return out;
}

/// Full-batch gradient descent with Armijo backtracking. Starts from zero
/// unless `initial` (weights then bias) is given.
inline ProbeModel train_word_probe(const EmbeddingSet& train, const ProbeOptions& opts = {},
                                   std::span<const double> initial = {}) {
    if (train.empty()) throw DegenerateTrainingError("empty training set");
    if (train.kind() != EmbeddingKind::static_layer) throw InputError("word probe trains on static embeddings");
    train.require_labels();
    std::size_t positives = 0;
    for (const auto& rec : train.records()) positives += *rec.label == 1;
    if (positives < 2 || train.size() - positives < 2) {
        throw DegenerateTrainingError("word probe needs at least two examples of each class");
    }
    if (!(opts.l2 >= 0.0)) throw DomainError("l2 strength must be nonnegative");

    const std::size_t d = train.dim();
    std::vector<double> params(d + 1, 0.0);
    if (!initial.empty()) {
        if (initial.size() != d + 1) throw InputError("initial parameters must have dimension + 1 entries");
        params.assign(initial.begin(), initial.end());
    }

    constexpr double armijo = 1e-4;
    constexpr double shrink = 0.5;
    ProbeModel model;
    model.meta.l2 = opts.l2;
    auto current = logistic_objective(train, params, opts.l2);
    double step = 1.0;
    std::vector<double> candidate(d + 1);
    std::size_t iter = 0;
    for (;; ++iter) {
        if (!std::isfinite(current.loss)) throw NumericError("logistic loss is not finite");
        const double gnorm = l2_norm(current.gradient);
        model.meta.gradient_norm = gnorm;
        if (gnorm <= opts.tol) {
            model.meta.converged = true;
            break;
        }
        if (iter == opts.max_iter) break;

        const double gsq = gnorm * gnorm;
        step *= 2.0;
        LossAndGradient next;
        for (;;) {
            for (std::size_t j = 0; j <= d; ++j) candidate[j] = params[j] - step * current.gradient[j];
            next = logistic_objective(train, candidate, opts.l2);
            if (std::isfinite(next.loss) && next.loss <= current.loss - armijo * step * gsq) break;
            step *= shrink;
            if (step < 1e-30) throw NumericError("line search failed to find a descent step");
        }
        params.swap(candidate);
        current = std::move(next);
    }
    model.meta.iterations = iter;
    model.meta.final_loss = current.loss;
    model.bias = params[d];
    params.pop_back();
    model.weights = std::move(params);
    if (!std::all_of(model.weights.begin(), model.weights.end(), [](double x) { return std::isfinite(x); }) ||
        !std::isfinite(model.bias)) {
        throw NumericError("probe parameters are not finite");
    }
    return model;
}

inline std::vector<PredictionRecord> apply_word_probe(const ProbeModel& model, const EmbeddingSet& eval) {
    if (!eval.empty() && eval.dim() != model.weights.size()) {
        throw InputError("eval embeddings do not match the probe dimension");
    }
    std::vector<PredictionRecord> out;
    out.reserve(eval.size());
    for (const auto& rec : eval.records()) {
        const double p = sigmoid(dot(model.weights, rec.vector) + model.bias);
        out.push_back({rec.id, p >= kDecisionThreshold ? 1 : 0, p});
    }
    return out;
}

/// Gold instances built from labelled embeddings, for scoring probe output.
inline std::vector<Instance> gold_from_embeddings(const EmbeddingSet& set) {
    set.require_labels();
    std::vector<Instance> gold;
    gold.reserve(set.size());
    for (const auto& rec : set.records()) {
        Instance inst;
        inst.id = rec.id;
        inst.tokens = {rec.lemma.value_or("_")};
        inst.lemma = rec.lemma.value_or("_");
        inst.label = *rec.label;
        gold.push_back(std::move(inst));
    }
    return gold;
}

inline EmbeddingRecord parse_embedding(std::string_view line, std::size_t line_no = 1) {
    nlohmann::json obj;
    try {
        obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(line_no, std::string("invalid JSON: ") + e.what());
    }
    if (!obj.is_object()) throw ParseError(line_no, "expected a JSON object");
    EmbeddingRecord rec;
    const auto id = obj.find("id");
    if (id == obj.end() || !id->is_string()) throw ParseError(line_no, "key 'id' must be a string");
    rec.id = id->get<std::string>();
    const auto kind = obj.find("kind");
    if (kind == obj.end() || !kind->is_string()) throw ParseError(line_no, "key 'kind' must be a string");
    try {
        rec.kind = parse_embedding_kind(kind->get<std::string>());
    } catch (const InputError& e) {
        throw ParseError(line_no, e.what());
    }
    if (const auto label = obj.find("label"); label != obj.end() && !label->is_null()) {
        if (!label->is_number_integer()) throw ParseError(line_no, "key 'label' must be 0 or 1");
        rec.label = label->get<int>();
    }
    if (const auto lemma = obj.find("lemma"); lemma != obj.end() && !lemma->is_null()) {
        if (!lemma->is_string()) throw ParseError(line_no, "key 'lemma' must be a string");
        rec.lemma = to_lower_ascii(lemma->get<std::string>());
    }
    const auto vec = obj.find("vector");
    if (vec == obj.end() || !vec->is_array()) throw ParseError(line_no, "key 'vector' must be an array of numbers");
    rec.vector.reserve(vec->size());
    for (const auto& x : *vec) {
        if (!x.is_number()) throw ParseError(line_no, "key 'vector' must be an array of numbers");
        rec.vector.push_back(x.get<double>());
    }
    return rec;
}

inline EmbeddingSet read_embeddings(std::istream& in) {
    std::vector<EmbeddingRecord> records;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::blank(line)) continue;
        records.push_back(parse_embedding(line, line_no));
    }
    return EmbeddingSet(std::move(records));
}

inline EmbeddingSet read_embeddings_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open embedding file " + path.string());
    return read_embeddings(in);
}

inline void write_embeddings(std::ostream& out, std::span<const EmbeddingRecord> records) {
    for (const auto& rec : records) {
        nlohmann::json obj = {{"id", rec.id}, {"kind", std::string(to_string(rec.kind))}, {"vector", rec.vector}};
        if (rec.label) obj["label"] = *rec.label;
        if (rec.lemma) obj["lemma"] = *rec.lemma;
        out << obj.dump() << '\n';
    }
}

}  // namespace lexprobe
