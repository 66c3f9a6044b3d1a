#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "natfp/classifiers.hpp"
#include "oracles.hpp"

using namespace natfp;

namespace {

// Pairwise ROC area: P(score_pos > score_neg) + 0.5 P(equal).
double pairwise_auc(const std::vector<double>& s, const std::vector<int>& y) {
    double wins = 0, pairs = 0;
    for (std::size_t i = 0; i < s.size(); ++i)
        for (std::size_t j = 0; j < s.size(); ++j)
            if (y[i] == 1 && y[j] == 0) {
                pairs += 1;
                wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
            }
    return wins / pairs;
}

double gini_gain(const LabeledDataset& d, std::size_t f, double t) {
    auto gini = [](double ones, double n) { return n == 0 ? 0.0 : 1 - std::pow(ones / n, 2) - std::pow(1 - ones / n, 2); };
    double nl = 0, ol = 0, nr = 0, orr = 0, ones = 0;
    for (const auto& r : d.rows) {
        ones += r.label;
        if (r.x[f] < t) {
            nl += 1;
            ol += r.label;
        } else {
            nr += 1;
            orr += r.label;
        }
    }
    const double n = nl + nr;
    return gini(ones, n) - nl / n * gini(ol, nl) - nr / n * gini(orr, nr);
}

template <typename Rng>
LabeledDataset blobs(Rng& rng, std::size_t n, double gap) {
    std::normal_distribution<double> z(0, 1);
    LabeledDataset d;
    for (std::size_t i = 0; i < n; ++i) {
        const int y = static_cast<int>(i % 2);
        d.rows.push_back({{z(rng) + gap * y, z(rng), z(rng) - gap * y}, y});
    }
    return d;
}

} // namespace

TEST(Metrics, ConfusionFixture) {
    std::vector<Prediction> preds;
    std::vector<int> truth;
    auto add = [&](int n, int label, int real) {
        for (int i = 0; i < n; ++i) {
            preds.push_back({label, static_cast<double>(label)});
            truth.push_back(real);
        }
    };
    add(1767, 1, 1);
    add(133, 0, 1);
    add(93, 1, 0);
    add(1807, 0, 0);
    const auto m = evaluate(preds, truth);
    EXPECT_EQ(m.tp, 1767u);
    EXPECT_EQ(m.fn, 133u);
    EXPECT_EQ(m.fp, 93u);
    EXPECT_EQ(m.tn, 1807u);
    EXPECT_NEAR(m.precision, 0.95, 1e-12);
    EXPECT_NEAR(m.recall, 0.93, 1e-12);
    EXPECT_NEAR(m.f1, 0.94, 0.005);
    EXPECT_NEAR(m.fpr, 93.0 / 1900, 1e-12);
    EXPECT_EQ(m.tpr, m.recall);
}

TEST(Metrics, PerfectDay) {
    std::vector<Prediction> preds;
    std::vector<int> truth;
    for (int h = 0; h < 24; ++h) {
        const int present = h >= 10 && h < 22;
        preds.push_back({present, present ? 0.9 : 0.1});
        truth.push_back(present);
    }
    const auto m = evaluate(preds, truth);
    EXPECT_EQ(m.precision, 1.0);
    EXPECT_EQ(m.recall, 1.0);
    EXPECT_EQ(m.f1, 1.0);
    EXPECT_EQ(m.fpr, 0.0);
    EXPECT_EQ(m.roc_area, 1.0);
}

TEST(Metrics, DegenerateCases) {
    const std::vector<Prediction> none_positive{{0, 0.1}, {0, 0.2}};
    const std::vector<int> both{1, 0}, ones{1, 1}, zeros{0, 0};
    const auto m = evaluate(none_positive, both);
    EXPECT_EQ(m.precision, 0.0);
    EXPECT_EQ(m.f1, 0.0);
    EXPECT_TRUE(std::isnan(evaluate(none_positive, ones).roc_area));
    EXPECT_TRUE(std::isnan(evaluate(none_positive, zeros).roc_area));
    EXPECT_EQ(f1_score(0, 0), 0.0);
    EXPECT_THROW(evaluate(none_positive, std::vector<int>{1}), DimensionError);
    EXPECT_THROW(evaluate(std::vector<Prediction>{}, std::vector<int>{}), ConfigError);
}

TEST(Metrics, RocAreaMatchesPairwiseCount) {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 2 + rng() % 60;
        std::vector<double> s(n);
        std::vector<int> y(n);
        for (std::size_t i = 0; i < n; ++i) {
            y[i] = static_cast<int>(rng() % 2);
            s[i] = static_cast<double>(rng() % 7) + 0.5 * y[i];
        }
        y[0] = 1;
        y[1] = 0;
        EXPECT_NEAR(roc_area(s, y), pairwise_auc(s, y), 1e-12);
    }
}

TEST(Metrics, RocCurveEndsAtOne) {
    const std::vector<double> s{0.9, 0.8, 0.8, 0.1};
    const std::vector<int> y{1, 0, 1, 0};
    const auto c = roc_curve(s, y);
    ASSERT_EQ(c.size(), 4u);
    EXPECT_EQ(c.front().fpr, 0.0);
    EXPECT_EQ(c[1].tpr, 0.5);
    EXPECT_EQ(c[2].fpr, 0.5);
    EXPECT_EQ(c[2].tpr, 1.0);
    EXPECT_EQ(c.back().fpr, 1.0);
}

TEST(RandomForest, StumpMatchesGiniOracle) {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 100; ++trial) {
        LabeledDataset d;
        const std::size_t dim = 1 + rng() % 4;
        for (std::size_t i = 0; i < 10 + rng() % 40; ++i) {
            std::vector<double> x(dim);
            for (auto& v : x) v = static_cast<double>(rng() % 10);
            d.rows.push_back({x, static_cast<int>((x[0] + static_cast<double>(rng() % 6)) > 8)});
        }
        if (d.count(0) == 0 || d.count(1) == 0) continue;
        const auto want = oracle::best_gini_stump(d);
        if (want.feature < 0) continue;
        RandomForestParams p;
        p.n_trees = 1;
        p.max_depth = 1;
        p.bootstrap = false;
        p.features_per_split = dim;
        const auto model = train_random_forest(d, p);
        const auto& root = model.trees[0].nodes[0];
        ASSERT_FALSE(root.is_leaf());
        EXPECT_NEAR(gini_gain(d, static_cast<std::size_t>(root.feature), root.threshold),
                    gini_gain(d, static_cast<std::size_t>(want.feature), want.threshold), 1e-12);
    }
}

TEST(RandomForest, SeparatesBlobs) {
    std::mt19937_64 rng(3);
    const auto train = blobs(rng, 400, 4);
    const auto test = blobs(rng, 400, 4);
    RandomForestParams p;
    p.n_trees = 50;
    p.seed = 9;
    const auto model = train_random_forest(train, p);
    std::size_t correct = 0;
    for (const auto& r : test.rows) {
        const auto pr = predict(model, r.x);
        EXPECT_EQ(pr.label, pr.score >= 0.5 ? 1 : 0);
        EXPECT_GE(pr.score, 0.0);
        EXPECT_LE(pr.score, 1.0);
        correct += pr.label == r.label;
    }
    EXPECT_GE(correct, 390u);
}

TEST(RandomForest, DeterministicAcrossJobs) {
    std::mt19937_64 rng(4);
    const auto d = blobs(rng, 200, 1);
    RandomForestParams p;
    p.n_trees = 30;
    p.seed = 5;
    const auto a = train_random_forest(d, p);
    p.jobs = 4;
    const auto b = train_random_forest(d, p);
    EXPECT_EQ(a, b);
    EXPECT_EQ(forest_to_json(a).dump(), forest_to_json(b).dump());
    p.seed = 6;
    EXPECT_NE(train_random_forest(d, p), a);
}

TEST(RandomForest, JsonRoundTrip) {
    std::mt19937_64 rng(5);
    const auto d = blobs(rng, 100, 1);
    RandomForestParams p;
    p.n_trees = 10;
    p.max_depth = 4;
    p.min_leaf = 2;
    const auto m = train_random_forest(d, p);
    const auto back = forest_from_json(nlohmann::json::parse(forest_to_json(m).dump()));
    EXPECT_EQ(back, m);
    EXPECT_EQ(back.params.max_depth, 4u);
    for (const auto& r : d.rows) EXPECT_EQ(predict(back, r.x).score, predict(m, r.x).score);
    auto j = forest_to_json(m);
    j["trees"][0][0]["f"] = 7;
    EXPECT_THROW(forest_from_json(j), ConfigError);
    j = forest_to_json(m);
    j["format"] = "x";
    EXPECT_THROW(forest_from_json(j), ConfigError);
}

TEST(RandomForest, Errors) {
    LabeledDataset one_class;
    one_class.rows = {{{1.0}, 1}, {{2.0}, 1}};
    EXPECT_THROW(train_random_forest(one_class), ConfigError);
    EXPECT_THROW(train_random_forest(LabeledDataset{}), ConfigError);
    LabeledDataset ragged;
    ragged.rows = {{{1.0}, 1}, {{2.0, 3.0}, 0}};
    EXPECT_THROW(train_random_forest(ragged), DimensionError);
    LabeledDataset ok;
    ok.rows = {{{1.0}, 1}, {{2.0}, 0}};
    RandomForestParams p;
    p.features_per_split = 2;
    EXPECT_THROW(train_random_forest(ok, p), ConfigError);
    const auto m = train_random_forest(ok);
    EXPECT_THROW(predict(m, std::vector<double>{1, 2}), DimensionError);
}
