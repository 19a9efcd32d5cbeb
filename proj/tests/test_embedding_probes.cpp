#include <algorithm>
#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "lexprobe/embedding_probes.hpp"
#include "test_util.hpp"

using namespace lexprobe;

namespace {

EmbeddingRecord rec(std::string id, std::vector<double> v, std::optional<int> label = std::nullopt,
                    EmbeddingKind kind = EmbeddingKind::contextual) {
    EmbeddingRecord r;
    r.id = std::move(id);
    r.vector = std::move(v);
    r.label = label;
    r.kind = kind;
    return r;
}

double gaussian(Engine& rng) {
    // Box-Muller on the portable uniform.
    const double u1 = 1.0 - uniform_unit(rng), u2 = uniform_unit(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

// Small-integer vectors so exact similarity ties are common.
EmbeddingSet lattice_set(Engine& rng, std::size_t n, std::size_t d, const std::string& prefix) {
    std::vector<EmbeddingRecord> out;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> v(d);
        do {
            for (auto& x : v) x = static_cast<double>(uniform_below(rng, 3)) - 1.0;
        } while (l2_norm(v) == 0.0);
        out.push_back(rec(prefix + std::to_string(uniform_below(rng, 1000000)) + "_" + std::to_string(i), v,
                          static_cast<int>(uniform_below(rng, 2))));
    }
    return EmbeddingSet(std::move(out));
}

// O(n^2) reference: full similarity table, full sort.
std::vector<std::string> brute_neighbors(const std::vector<double>& q, const EmbeddingSet& ref, std::size_t k) {
    std::vector<std::pair<double, std::string>> sims;
    double qn = 0;
    for (double x : q) qn += x * x;
    qn = std::sqrt(qn);
    for (std::size_t i = 0; i < ref.size(); ++i) {
        double dp = 0, rn = 0;
        for (std::size_t j = 0; j < q.size(); ++j) {
            dp += q[j] * ref[i].vector[j];
            rn += ref[i].vector[j] * ref[i].vector[j];
        }
        sims.push_back({dp / (qn * std::sqrt(rn)), ref[i].id});
    }
    std::sort(sims.begin(), sims.end(), [](const auto& a, const auto& b) {
        return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < k; ++i) ids.push_back(sims[i].second);
    return ids;
}

int label_of(const EmbeddingSet& set, const std::string& id) {
    for (const auto& r : set.records()) {
        if (r.id == id) return *r.label;
    }
    throw std::logic_error("no id " + id);
}

struct Synthetic {
    EmbeddingSet train, eval;
};

// Two classes split by a random hyperplane with a margin; d = 16.
Synthetic separable(std::uint64_t seed, std::size_t n_train, std::size_t n_eval, bool shuffle_labels) {
    auto rng = make_engine(seed, "separable");
    const std::size_t d = 16;
    std::vector<double> normal(d);
    for (auto& x : normal) x = gaussian(rng);
    const double nn = l2_norm(normal);
    for (auto& x : normal) x /= nn;
    auto draw = [&](std::size_t n, const std::string& prefix) {
        std::vector<EmbeddingRecord> out;
        for (std::size_t i = 0; i < n; ++i) {
            const int y = static_cast<int>(i % 2);
            std::vector<double> v(d);
            for (auto& x : v) x = gaussian(rng);
            const double proj = dot(v, normal);
            const double want = (y ? 1.0 : -1.0) * (0.5 + std::fabs(gaussian(rng)));
            for (std::size_t j = 0; j < d; ++j) v[j] += (want - proj) * normal[j];
            out.push_back(rec(prefix + std::to_string(i), v, y, EmbeddingKind::static_layer));
        }
        if (shuffle_labels) {
            std::vector<int> labels;
            for (const auto& r : out) labels.push_back(*r.label);
            std::shuffle(labels.begin(), labels.end(), rng);
            for (std::size_t i = 0; i < out.size(); ++i) out[i].label = labels[i];
        }
        return EmbeddingSet(std::move(out));
    };
    Synthetic s;
    s.train = draw(n_train, "t");
    s.eval = draw(n_eval, "e");
    return s;
}

}  // namespace

TEST(EmbeddingSet, Validation) {
    EXPECT_THROW(EmbeddingSet({rec("a", {1, 2}), rec("b", {1})}), InputError);
    EXPECT_THROW(EmbeddingSet({rec("a", {})}), InputError);
    EXPECT_THROW(EmbeddingSet({rec("a", {1}), rec("a", {2})}), DuplicateIdError);
    EXPECT_THROW(EmbeddingSet({rec("a", {NAN})}), InputError);
    EXPECT_THROW(EmbeddingSet({rec("a", {1}, 3)}), InputError);
    EXPECT_THROW(EmbeddingSet({rec("a", {1}), rec("b", {1}, std::nullopt, EmbeddingKind::static_layer)}), InputError);
}

TEST(CosineKnn, QueryEqualToReference) {
    const EmbeddingSet ref({rec("a", {1, 0, 0}), rec("b", {0.5, 2, -1}), rec("c", {0, 0, 3})});
    const auto nbs = cosine_knn(std::vector<double>{0.5, 2, -1}, ref, 1);
    ASSERT_EQ(nbs.size(), 1u);
    EXPECT_EQ(ref[nbs[0].index].id, "b");
    EXPECT_NEAR(nbs[0].similarity, 1.0, 1e-15);
}

TEST(CosineKnn, FullKIsFullSort) {
    auto rng = make_engine(1, "full");
    const auto ref = lattice_set(rng, 40, 3, "r");
    const std::vector<double> q = {1, -1, 0};
    const auto nbs = cosine_knn(q, ref, ref.size());
    EXPECT_EQ(neighbor_ids(nbs, ref), brute_neighbors(q, ref, ref.size()));
    EXPECT_TRUE(std::is_sorted(nbs.begin(), nbs.end(),
                               [](const Neighbor& a, const Neighbor& b) { return a.similarity > b.similarity; }));
}

TEST(CosineKnn, Errors) {
    const EmbeddingSet ref({rec("a", {1, 0}), rec("z", {0, 0})});
    EXPECT_THROW(cosine_knn(std::vector<double>{0, 0}, ref, 1), DegenerateVectorError);
    EXPECT_THROW(cosine_knn(std::vector<double>{1, 0}, ref, 2), DegenerateVectorError);
    EXPECT_THROW(cosine_knn(std::vector<double>{1, 0, 0}, ref, 1), InputError);
    EXPECT_THROW(cosine_knn(std::vector<double>{1, 0}, ref, 0), InputError);
    EXPECT_THROW(cosine_knn(std::vector<double>{1, 0}, ref, 3), InputError);
}

TEST(CosineKnn, MatchesBruteForceWithTies) {
    for (std::uint64_t seed = 1; seed <= 60; ++seed) {
        auto rng = make_engine(seed, "knn");
        const std::size_t d = 1 + uniform_below(rng, 6);
        const auto ref = lattice_set(rng, 200, d, "r");
        const auto eval = lattice_set(rng, 20, d, "q");
        for (const auto& q : eval.records()) {
            ASSERT_EQ(neighbor_ids(cosine_knn(q.vector, ref, 10), ref), brute_neighbors(q.vector, ref, 10));
        }
    }
}

TEST(CosineKnnProperties, PositiveScalingInvariant) {
    for (std::uint64_t seed = 1; seed <= 30; ++seed) {
        auto rng = make_engine(seed, "scale");
        std::vector<EmbeddingRecord> base, scaled;
        for (int i = 0; i < 80; ++i) {
            std::vector<double> v(8);
            for (auto& x : v) x = gaussian(rng);
            base.push_back(rec("r" + std::to_string(i), v));
            // Powers of two keep the scaled cosines bit-identical.
            const double s = std::ldexp(1.0, static_cast<int>(uniform_below(rng, 20)) - 10);
            for (auto& x : v) x *= s;
            scaled.push_back(rec("r" + std::to_string(i), v));
        }
        const EmbeddingSet a(base), b(scaled);
        std::vector<double> q(8);
        for (auto& x : q) x = gaussian(rng);
        auto q2 = q;
        for (auto& x : q2) x *= 64.0;
        EXPECT_EQ(neighbor_ids(cosine_knn(q, a, 10), a), neighbor_ids(cosine_knn(q2, b, 10), b));
    }
}

TEST(Purity, AllSameLabel) {
    const EmbeddingSet ref({rec("a", {1, 0}, 1), rec("b", {0, 1}, 1), rec("c", {1, 1}, 1)});
    const EmbeddingSet eval({rec("q", {2, 1}, 1)});
    EXPECT_EQ(neighborhood_purity(eval, ref, 2), 1.0);
}

TEST(Purity, UnlabeledIsInputError) {
    const EmbeddingSet ref({rec("a", {1, 0}, 1), rec("b", {0, 1})});
    const EmbeddingSet eval({rec("q", {2, 1}, 1)});
    EXPECT_THROW(neighborhood_purity(eval, ref, 1), InputError);
}

TEST(Purity, FullReferenceEqualsOwnLabelBaseRate) {
    auto rng = make_engine(8, "fullk");
    const auto ref = lattice_set(rng, 60, 4, "r");
    const auto eval = lattice_set(rng, 25, 4, "q");
    double positives = 0;
    for (const auto& r : ref.records()) positives += *r.label;
    const double rate = positives / static_cast<double>(ref.size());
    double want = 0;
    for (const auto& r : eval.records()) want += *r.label ? rate : 1 - rate;
    want /= static_cast<double>(eval.size());
    EXPECT_NEAR(neighborhood_purity(eval, ref, ref.size()), want, 1e-12);
}

TEST(Purity, LabelsIndependentOfGeometry) {
    auto rng = make_engine(21, "indep");
    std::vector<EmbeddingRecord> ref, eval;
    for (int i = 0; i < 1000; ++i) {
        std::vector<double> v(6);
        for (auto& x : v) x = gaussian(rng);
        ref.push_back(rec("r" + std::to_string(i), v, i < 300 ? 1 : 0));
    }
    // Seeded shuffle detaches labels from position.
    std::vector<int> labels;
    for (const auto& r : ref) labels.push_back(*r.label);
    std::shuffle(labels.begin(), labels.end(), rng);
    for (std::size_t i = 0; i < ref.size(); ++i) ref[i].label = labels[i];
    for (int i = 0; i < 500; ++i) {
        std::vector<double> v(6);
        for (auto& x : v) x = gaussian(rng);
        eval.push_back(rec("q" + std::to_string(i), v, 1));
    }
    EXPECT_NEAR(neighborhood_purity(EmbeddingSet(eval), EmbeddingSet(ref), 10), 0.3, 0.05);
}

TEST(KnnClassify, CoincidentCluster) {
    const EmbeddingSet ref({rec("a", {1, 0}, 0), rec("b", {1, 0.01}, 0), rec("c", {0, 1}, 1), rec("d", {0.01, 1}, 1)});
    const EmbeddingSet eval({rec("q", {1, 0}, 0)});
    EXPECT_EQ(knn_classify(eval, ref, 2)[0].pred, 0);
}

TEST(KnnClassify, VoteTieGoesToNearest) {
    const EmbeddingSet ref({rec("a", {1, 0}, 1), rec("b", {1, 1}, 0)});
    const EmbeddingSet eval({rec("q", {1, 0.1}, 0)});
    EXPECT_EQ(knn_classify(eval, ref, 2)[0].pred, 1);
}

TEST(KnnClassify, SeparatedClusters) {
    auto rng = make_engine(4, "clusters");
    std::vector<EmbeddingRecord> ref, eval;
    auto point = [&](int y) {
        std::vector<double> v(10);
        for (auto& x : v) x = 0.3 * gaussian(rng);
        v[0] += y ? 3.0 : -3.0;
        v[1] += 1.0;
        return v;
    };
    for (int i = 0; i < 200; ++i) ref.push_back(rec("r" + std::to_string(i), point(i % 2), i % 2));
    for (int i = 0; i < 100; ++i) eval.push_back(rec("q" + std::to_string(i), point(i % 2), i % 2));
    const EmbeddingSet e(eval);
    EXPECT_GE(score(knn_classify(e, EmbeddingSet(ref)), gold_from_embeddings(e)).f1, 0.95);
}

TEST(KnnClassify, MatchesBruteForce) {
    for (std::uint64_t seed = 1; seed <= 40; ++seed) {
        auto rng = make_engine(seed, "knnvote");
        const std::size_t d = 1 + uniform_below(rng, 5);
        const auto ref = lattice_set(rng, 50 + uniform_below(rng, 250), d, "r");
        const auto eval = lattice_set(rng, 30, d, "q");
        const auto preds = knn_classify(eval, ref, 10);
        double purity = 0;
        for (std::size_t i = 0; i < eval.size(); ++i) {
            const auto ids = brute_neighbors(eval[i].vector, ref, 10);
            int pos = 0, same = 0;
            for (const auto& id : ids) {
                pos += label_of(ref, id);
                same += label_of(ref, id) == *eval[i].label;
            }
            const int want = pos > 5 ? 1 : pos < 5 ? 0 : label_of(ref, ids[0]);
            ASSERT_EQ(preds[i].pred, want) << "seed " << seed << " query " << i;
            purity += same / 10.0;
        }
        EXPECT_NEAR(neighborhood_purity(eval, ref, 10), purity / static_cast<double>(eval.size()), 1e-12);
    }
}

TEST(Probe, GradientMatchesFiniteDifferences) {
    const auto data = separable(3, 60, 1, false);
    auto rng = make_engine(5, "fd");
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> p(data.train.dim() + 1);
        for (auto& x : p) x = gaussian(rng);
        const double l2 = uniform_unit(rng) * 3.0;
        const auto g = logistic_objective(data.train, p, l2).gradient;
        for (std::size_t j = 0; j < p.size(); ++j) {
            auto hi = p, lo = p;
            hi[j] += 1e-5;
            lo[j] -= 1e-5;
            const double fd =
                (logistic_objective(data.train, hi, l2).loss - logistic_objective(data.train, lo, l2).loss) / 2e-5;
            ASSERT_NEAR(g[j], fd, 1e-4 * std::max(1.0, std::fabs(fd))) << "trial " << trial << " coord " << j;
        }
    }
}

TEST(Probe, StrictConvexityGivesOneOptimum) {
    const auto data = separable(9, 50, 1, false);
    ProbeOptions opts;
    opts.l2 = 10.0;  // keeps plain gradient descent well conditioned on separable data
    opts.tol = 1e-8;  // |x - x*| <= |g| / (l2 / n) = 5e-8
    opts.max_iter = 200000;
    const auto a = train_word_probe(data.train, opts);
    std::vector<double> start(data.train.dim() + 1);
    auto rng = make_engine(2, "start");
    for (auto& x : start) x = 3.0 * gaussian(rng);
    const auto b = train_word_probe(data.train, opts, start);
    ASSERT_TRUE(a.meta.converged) << a.meta.iterations << " iterations, |g| = " << a.meta.gradient_norm;
    ASSERT_TRUE(b.meta.converged) << b.meta.iterations << " iterations, |g| = " << b.meta.gradient_norm;
    for (std::size_t j = 0; j < a.weights.size(); ++j) EXPECT_NEAR(a.weights[j], b.weights[j], 1e-6);
    EXPECT_NEAR(a.bias, b.bias, 1e-6);
}

TEST(Probe, SeparableDataIsLearned) {
    const auto data = separable(11, 400, 400, false);
    const auto model = train_word_probe(data.train);
    EXPECT_TRUE(model.meta.converged);
    EXPECT_GE(score(apply_word_probe(model, data.train), gold_from_embeddings(data.train)).f1, 0.99);
    EXPECT_GE(score(apply_word_probe(model, data.eval), gold_from_embeddings(data.eval)).f1, 0.95);
}

TEST(Probe, ShuffledLabelsGiveChance) {
    const auto data = separable(12, 400, 2000, true);
    const auto model = train_word_probe(data.train);
    const double f1 = score(apply_word_probe(model, data.eval), gold_from_embeddings(data.eval)).f1;
    EXPECT_NEAR(f1, 0.5, 0.07);
}

TEST(Probe, DegenerateInputs) {
    const EmbeddingSet one_class({rec("a", {1}, 1, EmbeddingKind::static_layer), rec("b", {2}, 1, EmbeddingKind::static_layer),
                                  rec("c", {3}, 1, EmbeddingKind::static_layer), rec("d", {4}, 0, EmbeddingKind::static_layer)});
    EXPECT_THROW(train_word_probe(one_class), DegenerateTrainingError);
    EXPECT_THROW(train_word_probe(EmbeddingSet{}), DegenerateTrainingError);
    const EmbeddingSet contextual({rec("a", {1}, 1), rec("b", {2}, 0)});
    EXPECT_THROW(train_word_probe(contextual), InputError);
}

TEST(Probe, ZeroModelScoresHalf) {
    ProbeModel m;
    m.weights = {0, 0, 0};
    const EmbeddingSet eval({rec("a", {1, 2, 3}), rec("b", {-4, 0, 9})});
    for (const auto& p : apply_word_probe(m, eval)) {
        EXPECT_EQ(*p.score, 0.5);
        EXPECT_EQ(p.pred, 1);
    }
    ProbeModel wrong;
    wrong.weights = {0, 0};
    EXPECT_THROW(apply_word_probe(wrong, eval), InputError);
}

TEST(Probe, NegatedModelMirrorsScores) {
    const auto data = separable(13, 200, 200, false);
    const auto model = train_word_probe(data.train);
    ProbeModel neg = model;
    for (auto& w : neg.weights) w = -w;
    neg.bias = -neg.bias;
    const auto a = apply_word_probe(model, data.eval);
    const auto b = apply_word_probe(neg, data.eval);
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_NEAR(*a[i].score + *b[i].score, 1.0, 1e-12);
        if (*a[i].score != 0.5) {
            EXPECT_NE(a[i].pred, b[i].pred);
        }
    }
}

TEST(Embeddings, RoundTrip) {
    std::vector<EmbeddingRecord> records = {rec("a", {0.25, -1.5}, 1, EmbeddingKind::static_layer),
                                            rec("b", {3, 4}, std::nullopt, EmbeddingKind::static_layer)};
    records[0].lemma = "go";
    std::stringstream ss;
    write_embeddings(ss, records);
    const auto back = read_embeddings(ss);
    EXPECT_EQ(back.records(), records);
    EXPECT_EQ(back.kind(), EmbeddingKind::static_layer);
    std::istringstream bad(R"({"id":"a","kind":"fancy","vector":[1]})");
    EXPECT_THROW(read_embeddings(bad), ParseError);
}
