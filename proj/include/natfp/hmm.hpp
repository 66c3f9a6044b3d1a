#pragma once

// Continuous-observation hidden Markov models with diagonal Gaussian
// emissions: forward likelihood, K-means initialization and multi-sequence
// Baum-Welch training. All probability arithmetic is done in log space.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "natfp/error.hpp"
#include "natfp/features.hpp"

namespace natfp {

struct GaussianHmm {
    std::size_t n_states = 0;
    std::size_t dim = 0;
    std::vector<double> transition; // n_states x n_states, row-major
    std::vector<double> initial;    // n_states
    std::vector<double> means;      // n_states x dim, row-major
    std::vector<double> variances;  // n_states x dim, row-major

    double a(std::size_t i, std::size_t j) const { return transition[i * n_states + j]; }
    double mean(std::size_t state, std::size_t d) const { return means[state * dim + d]; }
    double variance(std::size_t state, std::size_t d) const { return variances[state * dim + d]; }

    /// Throws ConfigError unless shapes agree, A and pi are stochastic to
    /// 1e-9 and every variance is positive.
    void validate() const {
        if (n_states == 0 || dim == 0) throw ConfigError("HMM needs at least one state and one dimension");
        if (transition.size() != n_states * n_states || initial.size() != n_states ||
            means.size() != n_states * dim || variances.size() != n_states * dim)
            throw ConfigError("HMM parameter shapes do not match n_states/dim");
        auto stochastic = [](std::span<const double> row) {
            double s = 0;
            for (double p : row) {
                if (!(p >= 0.0)) return false;
                s += p;
            }
            return std::abs(s - 1.0) <= 1e-9;
        };
        if (!stochastic(initial)) throw ConfigError("initial distribution does not sum to 1");
        for (std::size_t i = 0; i < n_states; ++i)
            if (!stochastic(std::span(transition).subspan(i * n_states, n_states)))
                throw ConfigError("transition row " + std::to_string(i) + " does not sum to 1");
        for (double v : variances)
            if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError("HMM variances must be positive");
        for (double m : means)
            if (!std::isfinite(m)) throw ConfigError("HMM means must be finite");
    }

    friend bool operator==(const GaussianHmm&, const GaussianHmm&) = default;
};

namespace hmm_detail {

inline constexpr double neg_inf = -std::numeric_limits<double>::infinity();

inline double log_sum_exp(std::span<const double> xs) {
    double m = neg_inf;
    for (double x : xs) m = std::max(m, x);
    if (m == neg_inf) return neg_inf;
    double s = 0;
    for (double x : xs) s += std::exp(x - m);
    return m + std::log(s);
}

/// Observation sequences packed into one row-major buffer.
struct Packed {
    std::size_t dim = 0;
    std::vector<double> data;
    std::vector<std::size_t> offsets; // row offsets, one extra at the end

    std::size_t sequences() const { return offsets.size() - 1; }
    std::size_t length(std::size_t s) const { return offsets[s + 1] - offsets[s]; }
    std::size_t rows() const { return offsets.back(); }
    const double* row(std::size_t r) const { return data.data() + r * dim; }
};

inline Packed pack(std::span<const ObservationSequence> seqs, std::size_t expected_dim = 0) {
    Packed p;
    p.offsets.push_back(0);
    for (const auto& seq : seqs) {
        if (seq.empty()) throw ConfigError("observation sequences must be non-empty");
        for (const auto& v : seq) {
            if (p.dim == 0) p.dim = expected_dim ? expected_dim : v.size();
            if (v.size() != p.dim)
                throw DimensionError("observation of length " + std::to_string(v.size()) +
                                     ", expected " + std::to_string(p.dim));
            p.data.insert(p.data.end(), v.begin(), v.end());
        }
        p.offsets.push_back(p.offsets.back() + seq.size());
    }
    if (p.rows() == 0) throw ConfigError("no observations");
    return p;
}

/// Per-dimension pooled mean and population variance.
inline std::pair<std::vector<double>, std::vector<double>> moments(const Packed& p) {
    std::vector<double> mean(p.dim, 0.0), var(p.dim, 0.0);
    const double n = static_cast<double>(p.rows());
    for (std::size_t r = 0; r < p.rows(); ++r)
        for (std::size_t d = 0; d < p.dim; ++d) mean[d] += p.row(r)[d];
    for (auto& m : mean) m /= n;
    for (std::size_t r = 0; r < p.rows(); ++r)
        for (std::size_t d = 0; d < p.dim; ++d) {
            const double e = p.row(r)[d] - mean[d];
            var[d] += e * e;
        }
    for (auto& v : var) v /= n;
    return {mean, var};
}

inline std::vector<double> floor_from_variance(std::span<const double> global_var) {
    std::vector<double> f(global_var.size());
    for (std::size_t d = 0; d < f.size(); ++d) f[d] = std::max(1e-6 * global_var[d], 1e-8);
    return f;
}

/// Emission log-density of every state for one observation.
class Emission {
public:
    explicit Emission(const GaussianHmm& m) : m_(m), norm_(m.n_states), inv_var_(m.variances.size()) {
        for (std::size_t j = 0; j < m.n_states; ++j) {
            double c = 0;
            for (std::size_t d = 0; d < m.dim; ++d) {
                c += std::log(2.0 * std::numbers::pi * m.variance(j, d));
                inv_var_[j * m.dim + d] = 1.0 / m.variance(j, d);
            }
            norm_[j] = -0.5 * c;
        }
    }

    double operator()(std::size_t j, const double* x) const {
        double q = 0;
        const double* mu = m_.means.data() + j * m_.dim;
        const double* iv = inv_var_.data() + j * m_.dim;
        for (std::size_t d = 0; d < m_.dim; ++d) {
            const double e = x[d] - mu[d];
            q += e * e * iv[d];
        }
        return norm_[j] - 0.5 * q;
    }

private:
    const GaussianHmm& m_;
    std::vector<double> norm_;
    std::vector<double> inv_var_;
};

inline double log_of(double p) { return p > 0.0 ? std::log(p) : neg_inf; }

/// Forward pass over rows [begin, begin+T). `log_b` holds T x N emission
/// log-densities; `log_alpha` receives T x N forward log-probabilities.
/// Returns log P(O | model).
inline double forward(const GaussianHmm& m, std::span<const double> log_b, std::size_t T,
                      std::vector<double>& log_alpha, std::vector<double>& scratch) {
    const std::size_t N = m.n_states;
    log_alpha.assign(T * N, neg_inf);
    scratch.resize(N);
    for (std::size_t j = 0; j < N; ++j) log_alpha[j] = log_of(m.initial[j]) + log_b[j];
    for (std::size_t t = 1; t < T; ++t) {
        const double* prev = log_alpha.data() + (t - 1) * N;
        const double top = *std::max_element(prev, prev + N);
        for (std::size_t i = 0; i < N; ++i) scratch[i] = std::exp(prev[i] - top);
        for (std::size_t j = 0; j < N; ++j) {
            double pred = 0;
            for (std::size_t i = 0; i < N; ++i) pred += scratch[i] * m.transition[i * N + j];
            log_alpha[t * N + j] = log_of(pred) + top + log_b[t * N + j];
        }
    }
    return log_sum_exp(std::span(log_alpha).subspan((T - 1) * N, N));
}

} // namespace hmm_detail

/// Per-dimension variance floor for a training set: 1e-6 times the pooled
/// variance, but never below 1e-8.
inline std::vector<double> variance_floor(std::span<const ObservationSequence> seqs) {
    auto packed = hmm_detail::pack(seqs);
    return hmm_detail::floor_from_variance(hmm_detail::moments(packed).second);
}

/// log P(O | model) by the forward algorithm.
inline double log_likelihood(const GaussianHmm& model, const ObservationSequence& seq) {
    if (seq.empty()) throw ConfigError("log_likelihood of an empty sequence");
    const std::size_t N = model.n_states;
    const std::size_t T = seq.size();
    hmm_detail::Emission emit(model);
    std::vector<double> log_b(T * N);
    for (std::size_t t = 0; t < T; ++t) {
        if (seq[t].size() != model.dim)
            throw DimensionError("observation of length " + std::to_string(seq[t].size()) +
                                 " for a model of dimension " + std::to_string(model.dim));
        for (std::size_t j = 0; j < N; ++j) log_b[t * N + j] = emit(j, seq[t].data());
    }
    std::vector<double> log_alpha, scratch;
    return hmm_detail::forward(model, log_b, T, log_alpha, scratch);
}

inline constexpr std::size_t kmeans_max_iterations = 100;

/// Initial model from K-means over the pooled observations: K-means++
/// seeding, Lloyd iterations, centroids as means, within-cluster variances
/// (floored) as variances, uniform A and pi.
inline GaussianHmm kmeans_init(std::span<const ObservationSequence> seqs, std::size_t n_states,
                               std::uint64_t seed) {
    if (n_states == 0) throw ConfigError("n_states must be at least 1");
    auto p = hmm_detail::pack(seqs);
    const std::size_t n = p.rows();
    const std::size_t D = p.dim;
    if (n < n_states)
        throw ConfigError("K-means needs at least " + std::to_string(n_states) + " observations, got " +
                          std::to_string(n));
    const auto [global_mean, global_var] = hmm_detail::moments(p);
    const auto floor = hmm_detail::floor_from_variance(global_var);

    auto dist2 = [&](const double* x, const double* c) {
        double s = 0;
        for (std::size_t d = 0; d < D; ++d) s += (x[d] - c[d]) * (x[d] - c[d]);
        return s;
    };

    std::mt19937_64 rng(seed);
    std::vector<double> centers;
    centers.reserve(n_states * D);
    {
        std::uniform_int_distribution<std::size_t> pick(0, n - 1);
        const std::size_t first = pick(rng);
        centers.insert(centers.end(), p.row(first), p.row(first) + D);
        std::vector<double> d2(n);
        for (std::size_t r = 0; r < n; ++r) d2[r] = dist2(p.row(r), centers.data());
        for (std::size_t k = 1; k < n_states; ++k) {
            double total = 0;
            for (double v : d2) total += v;
            std::size_t chosen = 0;
            if (total > 0) {
                double u = std::uniform_real_distribution<double>(0.0, total)(rng);
                chosen = n - 1;
                for (std::size_t r = 0; r < n; ++r) {
                    if (u < d2[r]) {
                        chosen = r;
                        break;
                    }
                    u -= d2[r];
                }
                while (d2[chosen] == 0.0 && chosen > 0) --chosen; // never re-pick a center
            } else {
                chosen = pick(rng);
            }
            const double* c = p.row(chosen);
            centers.insert(centers.end(), c, c + D);
            for (std::size_t r = 0; r < n; ++r) d2[r] = std::min(d2[r], dist2(p.row(r), c));
        }
    }

    std::vector<std::size_t> assign(n, n_states);
    for (std::size_t iter = 0; iter < kmeans_max_iterations; ++iter) {
        bool changed = false;
        for (std::size_t r = 0; r < n; ++r) {
            std::size_t best = 0;
            double best_d = dist2(p.row(r), centers.data());
            for (std::size_t k = 1; k < n_states; ++k) {
                const double d = dist2(p.row(r), centers.data() + k * D);
                if (d < best_d) {
                    best_d = d;
                    best = k;
                }
            }
            if (assign[r] != best) {
                assign[r] = best;
                changed = true;
            }
        }
        if (!changed) break;
        std::vector<double> sum(n_states * D, 0.0);
        std::vector<std::size_t> count(n_states, 0);
        for (std::size_t r = 0; r < n; ++r) {
            ++count[assign[r]];
            for (std::size_t d = 0; d < D; ++d) sum[assign[r] * D + d] += p.row(r)[d];
        }
        for (std::size_t k = 0; k < n_states; ++k)
            if (count[k] > 0)
                for (std::size_t d = 0; d < D; ++d) centers[k * D + d] = sum[k * D + d] / count[k];
    }

    GaussianHmm m;
    m.n_states = n_states;
    m.dim = D;
    m.transition.assign(n_states * n_states, 1.0 / n_states);
    m.initial.assign(n_states, 1.0 / n_states);
    m.means = centers;
    m.variances.assign(n_states * D, 0.0);
    std::vector<std::size_t> count(n_states, 0);
    for (std::size_t r = 0; r < n; ++r) {
        ++count[assign[r]];
        for (std::size_t d = 0; d < D; ++d) {
            const double e = p.row(r)[d] - centers[assign[r] * D + d];
            m.variances[assign[r] * D + d] += e * e;
        }
    }
    for (std::size_t k = 0; k < n_states; ++k)
        for (std::size_t d = 0; d < D; ++d) {
            double v = count[k] > 0 ? m.variances[k * D + d] / count[k] : global_var[d];
            m.variances[k * D + d] = std::max(v, floor[d]);
        }
    return m;
}

struct BaumWelchOptions {
    std::size_t max_iter = 100;
    double tol = 1e-4;
};

struct BaumWelchResult {
    GaussianHmm model;
    /// Total log-likelihood of the training set before each re-estimation,
    /// plus the likelihood of the returned model as the last entry.
    std::vector<double> trace;
    std::size_t iterations = 0;
    bool converged = false;
    /// States re-seeded after losing all posterior mass.
    std::size_t reseeds = 0;
};

/// Multi-sequence Baum-Welch. Stops when the total log-likelihood improves
/// by less than `tol` or after `max_iter` re-estimations.
inline BaumWelchResult baum_welch(std::span<const ObservationSequence> seqs, const GaussianHmm& init,
                                  BaumWelchOptions opts = {}) {
    using hmm_detail::neg_inf;
    init.validate();
    if (opts.max_iter < 1) throw ConfigError("max_iter must be at least 1");
    auto p = hmm_detail::pack(seqs, init.dim);
    const std::size_t N = init.n_states;
    const std::size_t D = init.dim;
    const auto [global_mean, global_var] = hmm_detail::moments(p);
    const auto floor = hmm_detail::floor_from_variance(global_var);

    BaumWelchResult result;
    GaussianHmm model = init;

    std::vector<double> log_b, log_alpha, log_beta, scratch, u(N), q(N);
    std::vector<double> pi_acc(N), trans_acc(N * N), occ(N), m1(N * D), m2(N * D);

    for (std::size_t iter = 0;; ++iter) {
        std::fill(pi_acc.begin(), pi_acc.end(), 0.0);
        std::fill(trans_acc.begin(), trans_acc.end(), 0.0);
        std::fill(occ.begin(), occ.end(), 0.0);
        std::fill(m1.begin(), m1.end(), 0.0);
        std::fill(m2.begin(), m2.end(), 0.0);
        double total_ll = 0;
        double worst_fit = std::numeric_limits<double>::infinity();
        std::size_t worst_row = 0;

        hmm_detail::Emission emit(model);
        std::vector<double> log_a(N * N);
        for (std::size_t k = 0; k < N * N; ++k) log_a[k] = hmm_detail::log_of(model.transition[k]);

        for (std::size_t s = 0; s < p.sequences(); ++s) {
            const std::size_t T = p.length(s);
            const std::size_t base = p.offsets[s];
            log_b.resize(T * N);
            for (std::size_t t = 0; t < T; ++t) {
                double best = neg_inf;
                for (std::size_t j = 0; j < N; ++j) {
                    log_b[t * N + j] = emit(j, p.row(base + t));
                    best = std::max(best, log_b[t * N + j]);
                }
                if (best < worst_fit) {
                    worst_fit = best;
                    worst_row = base + t;
                }
            }
            const double ll = hmm_detail::forward(model, log_b, T, log_alpha, scratch);
            if (!std::isfinite(ll))
                throw NumericalError("non-finite log-likelihood in Baum-Welch (sequence " +
                                     std::to_string(s) + ")");
            total_ll += ll;

            // Backward pass.
            log_beta.assign(T * N, 0.0);
            for (std::size_t t = T - 1; t-- > 0;) {
                double top = neg_inf;
                for (std::size_t j = 0; j < N; ++j) {
                    u[j] = log_b[(t + 1) * N + j] + log_beta[(t + 1) * N + j];
                    top = std::max(top, u[j]);
                }
                for (std::size_t j = 0; j < N; ++j) q[j] = std::exp(u[j] - top);
                for (std::size_t i = 0; i < N; ++i) {
                    double acc = 0;
                    for (std::size_t j = 0; j < N; ++j) acc += model.transition[i * N + j] * q[j];
                    log_beta[t * N + i] = hmm_detail::log_of(acc) + top;
                }
            }

            // State posteriors, normalized per time step.
            for (std::size_t t = 0; t < T; ++t) {
                double top = neg_inf;
                for (std::size_t j = 0; j < N; ++j) {
                    u[j] = log_alpha[t * N + j] + log_beta[t * N + j];
                    top = std::max(top, u[j]);
                }
                double z = 0;
                for (std::size_t j = 0; j < N; ++j) z += (u[j] = std::exp(u[j] - top));
                const double* x = p.row(base + t);
                for (std::size_t j = 0; j < N; ++j) {
                    const double g = u[j] / z;
                    if (t == 0) pi_acc[j] += g;
                    occ[j] += g;
                    for (std::size_t d = 0; d < D; ++d) {
                        const double e = x[d] - global_mean[d];
                        m1[j * D + d] += g * e;
                        m2[j * D + d] += g * e * e;
                    }
                }
            }

            // Transition posteriors, normalized per time step.
            for (std::size_t t = 0; t + 1 < T; ++t) {
                const double* la = log_alpha.data() + t * N;
                const double la_top = *std::max_element(la, la + N);
                double w_top = neg_inf;
                for (std::size_t j = 0; j < N; ++j) {
                    q[j] = log_b[(t + 1) * N + j] + log_beta[(t + 1) * N + j];
                    w_top = std::max(w_top, q[j]);
                }
                for (std::size_t i = 0; i < N; ++i) scratch[i] = std::exp(la[i] - la_top);
                for (std::size_t j = 0; j < N; ++j) u[j] = std::exp(q[j] - w_top);
                double z = 0;
                for (std::size_t i = 0; i < N; ++i)
                    for (std::size_t j = 0; j < N; ++j) z += scratch[i] * model.transition[i * N + j] * u[j];
                if (z > std::numeric_limits<double>::min()) {
                    for (std::size_t i = 0; i < N; ++i)
                        for (std::size_t j = 0; j < N; ++j)
                            trans_acc[i * N + j] += scratch[i] * model.transition[i * N + j] * u[j] / z;
                } else {
                    // Factored products underflowed; redo this step fully in log space.
                    std::vector<double> lx(N * N);
                    for (std::size_t i = 0; i < N; ++i)
                        for (std::size_t j = 0; j < N; ++j) lx[i * N + j] = la[i] + log_a[i * N + j] + q[j];
                    const double lz = hmm_detail::log_sum_exp(lx);
                    for (std::size_t k = 0; k < N * N; ++k) trans_acc[k] += std::exp(lx[k] - lz);
                }
            }
        }

        result.trace.push_back(total_ll);
        if (!std::isfinite(total_ll)) throw NumericalError("non-finite total log-likelihood");
        if (iter > 0 && total_ll - result.trace[iter - 1] < opts.tol) {
            result.converged = true;
            break;
        }
        if (iter == opts.max_iter) break;

        // M-step.
        GaussianHmm next = model;
        const double n_seq = static_cast<double>(p.sequences());
        for (std::size_t j = 0; j < N; ++j) next.initial[j] = pi_acc[j] / n_seq;
        for (std::size_t i = 0; i < N; ++i) {
            double row = 0;
            for (std::size_t j = 0; j < N; ++j) row += trans_acc[i * N + j];
            if (row > std::numeric_limits<double>::min())
                for (std::size_t j = 0; j < N; ++j) next.transition[i * N + j] = trans_acc[i * N + j] / row;
        }
        for (std::size_t j = 0; j < N; ++j) {
            if (!(occ[j] > std::numeric_limits<double>::min())) {
                // No posterior mass: restart the state on the worst-explained
                // observation and make it reachable again.
                ++result.reseeds;
                for (std::size_t d = 0; d < D; ++d) {
                    next.means[j * D + d] = p.row(worst_row)[d];
                    next.variances[j * D + d] = std::max(global_var[d], floor[d]);
                }
                for (std::size_t i = 0; i < N; ++i) {
                    next.transition[i * N + j] = std::max(next.transition[i * N + j], 1.0 / N);
                    double row = 0;
                    for (std::size_t k = 0; k < N; ++k) row += next.transition[i * N + k];
                    for (std::size_t k = 0; k < N; ++k) next.transition[i * N + k] /= row;
                }
                continue;
            }
            for (std::size_t d = 0; d < D; ++d) {
                const double mu = m1[j * D + d] / occ[j];
                const double var = m2[j * D + d] / occ[j] - mu * mu;
                next.means[j * D + d] = global_mean[d] + mu;
                next.variances[j * D + d] = std::max(var, floor[d]);
            }
        }
        // Renormalize to absorb rounding so the stochastic invariants hold tightly.
        auto renorm = [](std::span<double> v) {
            double s = 0;
            for (double x : v) s += x;
            for (double& x : v) x /= s;
        };
        renorm(next.initial);
        for (std::size_t i = 0; i < N; ++i) renorm(std::span(next.transition).subspan(i * N, N));
        model = std::move(next);
        result.iterations = iter + 1;
    }
    result.model = std::move(model);
    return result;
}

// ---------------------------------------------------------------------------
// Serialization

inline constexpr int hmm_format_version = 1;

inline nlohmann::json hmm_to_json(const GaussianHmm& m, const std::string& subset_tag = "") {
    auto rows = [](const std::vector<double>& flat, std::size_t n, std::size_t width) {
        nlohmann::json out = nlohmann::json::array();
        for (std::size_t i = 0; i < n; ++i)
            out.push_back(std::vector<double>(flat.begin() + static_cast<std::ptrdiff_t>(i * width),
                                              flat.begin() + static_cast<std::ptrdiff_t>((i + 1) * width)));
        return out;
    };
    nlohmann::json j;
    j["format"] = "natfp.hmm";
    j["version"] = hmm_format_version;
    j["n_states"] = m.n_states;
    j["dim"] = m.dim;
    if (!subset_tag.empty()) j["subset"] = subset_tag;
    j["initial"] = m.initial;
    j["transition"] = rows(m.transition, m.n_states, m.n_states);
    j["means"] = rows(m.means, m.n_states, m.dim);
    j["variances"] = rows(m.variances, m.n_states, m.dim);
    return j;
}

inline GaussianHmm hmm_from_json(const nlohmann::json& j) {
    try {
        if (j.at("format") != "natfp.hmm") throw ConfigError("not an HMM document");
        if (j.at("version").get<int>() != hmm_format_version)
            throw ConfigError("unsupported HMM document version");
        GaussianHmm m;
        m.n_states = j.at("n_states").get<std::size_t>();
        m.dim = j.at("dim").get<std::size_t>();
        m.initial = j.at("initial").get<std::vector<double>>();
        auto flatten = [](const nlohmann::json& rows) {
            std::vector<double> out;
            for (const auto& r : rows)
                for (const auto& v : r) out.push_back(v.get<double>());
            return out;
        };
        m.transition = flatten(j.at("transition"));
        m.means = flatten(j.at("means"));
        m.variances = flatten(j.at("variances"));
        m.validate();
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed HMM document: ") + e.what());
    }
}

} // namespace natfp
