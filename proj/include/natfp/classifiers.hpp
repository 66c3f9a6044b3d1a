#pragma once

// Final-stage classifiers and evaluation metrics.
//
// RandomForest: bagged CART trees with Gini impurity and per-node random
// feature sampling. Metrics: confusion counts, precision/recall/F1, TPR/FPR
// and the area under the ROC curve (Mann-Whitney with midranks).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "natfp/error.hpp"
#include "natfp/parallel.hpp"
#include "natfp/random.hpp"

namespace natfp {

struct LabeledRow {
    std::vector<double> x;
    int label = 0;
};

struct LabeledDataset {
    std::vector<LabeledRow> rows;

    std::size_t dim() const { return rows.empty() ? 0 : rows.front().x.size(); }
    std::size_t count(int label) const {
        return static_cast<std::size_t>(std::count_if(rows.begin(), rows.end(),
                                                      [&](const LabeledRow& r) { return r.label == label; }));
    }
};

struct Prediction {
    int label = 0;
    double score = 0.0;
};

/// Threshold halfway between two adjacent sorted values a < b, such that
/// `x < threshold` separates them even when the midpoint rounds onto a.
inline double split_point(double a, double b) {
    const double mid = a + (b - a) / 2;
    return mid > a ? mid : b;
}

// ---------------------------------------------------------------------------
// Random forest

struct RandomForestParams {
    std::size_t n_trees = 100;
    std::size_t max_depth = 0;          ///< 0 = unlimited
    std::size_t min_leaf = 1;
    std::size_t features_per_split = 0; ///< 0 = ceil(sqrt(dim))
    std::uint64_t seed = 0;
    bool bootstrap = true;
    std::size_t jobs = 1;
};

struct TreeNode {
    int feature = -1; ///< -1 marks a leaf
    double threshold = 0.0;
    std::uint32_t left = 0;  ///< taken when x[feature] < threshold
    std::uint32_t right = 0;
    double p0 = 0.0;
    double p1 = 0.0;

    bool is_leaf() const { return feature < 0; }
    friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

struct DecisionTree {
    std::vector<TreeNode> nodes; ///< nodes[0] is the root

    const TreeNode& leaf_for(std::span<const double> x) const {
        const TreeNode* n = &nodes.front();
        while (!n->is_leaf()) n = &nodes[x[static_cast<std::size_t>(n->feature)] < n->threshold ? n->left : n->right];
        return *n;
    }
    friend bool operator==(const DecisionTree&, const DecisionTree&) = default;
};

struct RandomForestModel {
    std::size_t dim = 0;
    RandomForestParams params;
    std::vector<DecisionTree> trees;

    friend bool operator==(const RandomForestModel& a, const RandomForestModel& b) {
        return a.dim == b.dim && a.trees == b.trees;
    }
};

namespace forest_detail {

class TreeBuilder {
public:
    TreeBuilder(const LabeledDataset& data, const RandomForestParams& params, std::size_t mtry,
                std::uint64_t seed)
        : data_(data), params_(params), mtry_(mtry), rng_(seed) {}

    DecisionTree build() {
        const std::size_t n = data_.rows.size();
        std::vector<std::size_t> sample(n);
        if (params_.bootstrap) {
            std::uniform_int_distribution<std::size_t> pick(0, n - 1);
            for (auto& s : sample) s = pick(rng_);
        } else {
            std::iota(sample.begin(), sample.end(), 0);
        }
        tree_.nodes.emplace_back();
        grow(0, sample, 0);
        return std::move(tree_);
    }

private:
    struct Split {
        int feature = -1;
        double threshold = 0;
        double score = -1; // sum over children of (sum_c n_c^2) / n_child; larger is purer
    };

    void make_leaf(std::size_t node, const std::vector<std::size_t>& idx) {
        std::size_t ones = 0;
        for (auto i : idx) ones += data_.rows[i].label == 1;
        auto& leaf = tree_.nodes[node];
        leaf.feature = -1;
        leaf.p1 = static_cast<double>(ones) / static_cast<double>(idx.size());
        leaf.p0 = 1.0 - leaf.p1;
    }

    Split best_split(const std::vector<std::size_t>& idx) {
        const std::size_t dim = data_.dim();
        std::vector<std::size_t> features(dim);
        std::iota(features.begin(), features.end(), 0);
        for (std::size_t k = 0; k < mtry_; ++k) {
            std::uniform_int_distribution<std::size_t> pick(k, dim - 1);
            std::swap(features[k], features[pick(rng_)]);
        }
        features.resize(mtry_);
        std::sort(features.begin(), features.end());

        const std::size_t n = idx.size();
        std::size_t total1 = 0;
        for (auto i : idx) total1 += data_.rows[i].label == 1;

        Split best;
        std::vector<std::size_t> order(idx);
        for (auto f : features) {
            std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                return data_.rows[a].x[f] < data_.rows[b].x[f];
            });
            std::size_t left1 = 0;
            for (std::size_t k = 1; k < n; ++k) {
                left1 += data_.rows[order[k - 1]].label == 1;
                const double lo = data_.rows[order[k - 1]].x[f];
                const double hi = data_.rows[order[k]].x[f];
                if (!(lo < hi)) continue;
                if (k < params_.min_leaf || n - k < params_.min_leaf) continue;
                const double nl = static_cast<double>(k), nr = static_cast<double>(n - k);
                const double l1 = static_cast<double>(left1), l0 = nl - l1;
                const double r1 = static_cast<double>(total1 - left1), r0 = nr - r1;
                const double score = (l0 * l0 + l1 * l1) / nl + (r0 * r0 + r1 * r1) / nr;
                if (score > best.score) best = {static_cast<int>(f), split_point(lo, hi), score};
            }
        }
        return best;
    }

    void grow(std::size_t node, const std::vector<std::size_t>& idx, std::size_t depth) {
        std::size_t ones = 0;
        for (auto i : idx) ones += data_.rows[i].label == 1;
        const bool pure = ones == 0 || ones == idx.size();
        const bool too_deep = params_.max_depth > 0 && depth >= params_.max_depth;
        if (pure || too_deep || idx.size() < 2 * params_.min_leaf) return make_leaf(node, idx);

        const Split split = best_split(idx);
        if (split.feature < 0) return make_leaf(node, idx);

        std::vector<std::size_t> left, right;
        for (auto i : idx)
            (data_.rows[i].x[static_cast<std::size_t>(split.feature)] < split.threshold ? left : right).push_back(i);

        const auto l = static_cast<std::uint32_t>(tree_.nodes.size());
        tree_.nodes.emplace_back();
        const auto r = static_cast<std::uint32_t>(tree_.nodes.size());
        tree_.nodes.emplace_back();
        auto& n = tree_.nodes[node];
        n.feature = split.feature;
        n.threshold = split.threshold;
        n.left = l;
        n.right = r;
        grow(l, left, depth + 1);
        grow(r, right, depth + 1);
    }

    const LabeledDataset& data_;
    const RandomForestParams& params_;
    std::size_t mtry_;
    std::mt19937_64 rng_;
    DecisionTree tree_;
};

} // namespace forest_detail

inline RandomForestModel train_random_forest(const LabeledDataset& data, RandomForestParams params = {}) {
    if (data.rows.empty()) throw ConfigError("random forest needs training rows");
    const std::size_t dim = data.dim();
    if (dim == 0) throw ConfigError("random forest needs at least one feature");
    for (const auto& r : data.rows) {
        if (r.x.size() != dim) throw DimensionError("rows of a dataset must share one dimension");
        if (r.label != 0 && r.label != 1) throw ConfigError("labels must be 0 or 1");
    }
    if (data.count(0) == 0 || data.count(1) == 0)
        throw ConfigError("random forest training data must contain both classes");
    if (params.n_trees < 1) throw ConfigError("n_trees must be at least 1");
    if (params.min_leaf < 1) throw ConfigError("min_leaf must be at least 1");
    if (params.features_per_split == 0)
        params.features_per_split = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(dim))));
    if (params.features_per_split > dim) throw ConfigError("features_per_split exceeds the dimension");

    RandomForestModel model;
    model.dim = dim;
    model.params = params;
    model.trees.resize(params.n_trees);
    parallel_for(params.n_trees, params.jobs, [&](std::size_t t) {
        forest_detail::TreeBuilder builder(data, params, params.features_per_split,
                                           derive_seed(params.seed, {t}));
        model.trees[t] = builder.build();
    });
    return model;
}

/// Mean positive-class probability over the trees; label 1 iff >= 0.5.
inline Prediction predict(const RandomForestModel& model, std::span<const double> x) {
    if (x.size() != model.dim)
        throw DimensionError("forest expects " + std::to_string(model.dim) + " features, got " +
                             std::to_string(x.size()));
    double sum = 0;
    for (const auto& tree : model.trees) sum += tree.leaf_for(x).p1;
    const double score = sum / static_cast<double>(model.trees.size());
    return {score >= 0.5 ? 1 : 0, score};
}

inline constexpr int forest_format_version = 1;

inline nlohmann::json forest_to_json(const RandomForestModel& m) {
    nlohmann::json j;
    j["format"] = "natfp.forest";
    j["version"] = forest_format_version;
    j["dim"] = m.dim;
    j["params"] = {{"n_trees", m.params.n_trees},
                   {"max_depth", m.params.max_depth},
                   {"min_leaf", m.params.min_leaf},
                   {"features_per_split", m.params.features_per_split},
                   {"seed", m.params.seed},
                   {"bootstrap", m.params.bootstrap}};
    auto& trees = j["trees"] = nlohmann::json::array();
    for (const auto& t : m.trees) {
        nlohmann::json nodes = nlohmann::json::array();
        for (const auto& n : t.nodes) {
            if (n.is_leaf())
                nodes.push_back({{"p", {n.p0, n.p1}}});
            else
                nodes.push_back({{"f", n.feature}, {"t", n.threshold}, {"l", n.left}, {"r", n.right}});
        }
        trees.push_back(std::move(nodes));
    }
    return j;
}

inline RandomForestModel forest_from_json(const nlohmann::json& j) {
    try {
        if (j.at("format") != "natfp.forest") throw ConfigError("not a forest document");
        if (j.at("version").get<int>() != forest_format_version)
            throw ConfigError("unsupported forest document version");
        RandomForestModel m;
        m.dim = j.at("dim").get<std::size_t>();
        const auto& p = j.at("params");
        m.params.n_trees = p.at("n_trees").get<std::size_t>();
        m.params.max_depth = p.at("max_depth").get<std::size_t>();
        m.params.min_leaf = p.at("min_leaf").get<std::size_t>();
        m.params.features_per_split = p.at("features_per_split").get<std::size_t>();
        m.params.seed = p.at("seed").get<std::uint64_t>();
        m.params.bootstrap = p.at("bootstrap").get<bool>();
        for (const auto& jt : j.at("trees")) {
            DecisionTree t;
            for (const auto& jn : jt) {
                TreeNode n;
                if (jn.contains("p")) {
                    n.p0 = jn.at("p").at(0).get<double>();
                    n.p1 = jn.at("p").at(1).get<double>();
                } else {
                    n.feature = jn.at("f").get<int>();
                    n.threshold = jn.at("t").get<double>();
                    n.left = jn.at("l").get<std::uint32_t>();
                    n.right = jn.at("r").get<std::uint32_t>();
                    if (n.feature < 0 || static_cast<std::size_t>(n.feature) >= m.dim)
                        throw ConfigError("split feature out of range");
                }
                t.nodes.push_back(n);
            }
            for (const auto& n : t.nodes)
                if (!n.is_leaf() && (n.left >= t.nodes.size() || n.right >= t.nodes.size()))
                    throw ConfigError("child index out of range");
            if (t.nodes.empty()) throw ConfigError("empty tree");
            m.trees.push_back(std::move(t));
        }
        if (m.trees.empty()) throw ConfigError("forest has no trees");
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed forest document: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// Metrics

/// Harmonic mean of precision and recall; 0 when both are 0.
inline double f1_score(double precision, double recall) {
    return precision + recall > 0 ? 2 * precision * recall / (precision + recall) : 0.0;
}

/// Area under the ROC curve by the rank-sum statistic, ties at midrank.
/// Returns NaN when either class is missing.
inline double roc_area(std::span<const double> scores, std::span<const int> truth) {
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double pos_rank_sum = 0;
    std::size_t n_pos = 0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2;
        for (std::size_t k = i; k < j; ++k)
            if (truth[order[k]] == 1) {
                pos_rank_sum += midrank;
                ++n_pos;
            }
        i = j;
    }
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) return std::numeric_limits<double>::quiet_NaN();
    const double np = static_cast<double>(n_pos);
    return (pos_rank_sum - np * (np + 1) / 2) / (np * static_cast<double>(n_neg));
}

struct RocPoint {
    double threshold; ///< classify positive when score >= threshold
    double fpr;
    double tpr;
};

/// ROC curve points from the strictest threshold (+inf) down to the lowest
/// score.
inline std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const int> truth) {
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    double P = 0, N = 0;
    for (int t : truth) (t == 1 ? P : N) += 1;
    std::vector<RocPoint> pts{{std::numeric_limits<double>::infinity(), 0.0, 0.0}};
    double tp = 0, fp = 0;
    for (std::size_t i = 0; i < order.size();) {
        const double s = scores[order[i]];
        while (i < order.size() && scores[order[i]] == s) (truth[order[i++]] == 1 ? tp : fp) += 1;
        pts.push_back({s, N > 0 ? fp / N : 0.0, P > 0 ? tp / P : 0.0});
    }
    return pts;
}

struct EvaluationMetrics {
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    double precision = 0, recall = 0, f1 = 0, tpr = 0, fpr = 0;
    /// NaN when the truth contains a single class.
    double roc_area = 0;
};

inline EvaluationMetrics evaluate(std::span<const Prediction> predictions, std::span<const int> truth) {
    if (predictions.size() != truth.size())
        throw DimensionError("evaluate: " + std::to_string(predictions.size()) + " predictions for " +
                             std::to_string(truth.size()) + " labels");
    if (predictions.empty()) throw ConfigError("evaluate: no predictions");
    EvaluationMetrics m;
    std::vector<double> scores;
    scores.reserve(predictions.size());
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const bool pred = predictions[i].label == 1;
        const bool real = truth[i] == 1;
        (pred ? (real ? m.tp : m.fp) : (real ? m.fn : m.tn)) += 1;
        scores.push_back(predictions[i].score);
    }
    auto ratio = [](std::size_t a, std::size_t b) {
        return b > 0 ? static_cast<double>(a) / static_cast<double>(b) : 0.0;
    };
    m.precision = ratio(m.tp, m.tp + m.fp);
    m.recall = ratio(m.tp, m.tp + m.fn);
    m.f1 = f1_score(m.precision, m.recall);
    m.tpr = m.recall;
    m.fpr = ratio(m.fp, m.fp + m.tn);
    m.roc_area = roc_area(scores, truth);
    return m;
}

} // namespace natfp
