#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "natfp/hmm.hpp"
#include "oracles.hpp"

using namespace natfp;

namespace {

GaussianHmm two_state_1d() {
    GaussianHmm m;
    m.n_states = 2;
    m.dim = 1;
    m.transition = {0.9, 0.1, 0.1, 0.9};
    m.initial = {0.5, 0.5};
    m.means = {-5, 5};
    m.variances = {1, 1};
    return m;
}

GaussianHmm single(double mean, double var) {
    GaussianHmm m;
    m.n_states = 1;
    m.dim = 1;
    m.transition = {1};
    m.initial = {1};
    m.means = {mean};
    m.variances = {var};
    return m;
}

} // namespace

TEST(LogLikelihood, StandardNormalAtZero) {
    EXPECT_NEAR(log_likelihood(single(0, 1), {{0.0}}), -0.918939, 1e-6);
}

TEST(LogLikelihood, SingleStateClosedForm) {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> x(2.0, 3.0);
    const auto m = single(1.5, 4.0);
    ObservationSequence seq;
    double want = 0;
    for (int t = 0; t < 40; ++t) {
        const double v = x(rng);
        seq.push_back({v});
        want += -0.5 * std::log(2 * std::numbers::pi * 4.0) - (v - 1.5) * (v - 1.5) / 8.0;
    }
    EXPECT_NEAR(log_likelihood(m, seq), want, 1e-9 * std::abs(want));
}

TEST(LogLikelihood, MatchesPathEnumeration) {
    std::mt19937_64 rng(2);
    for (int i = 0; i < 100; ++i) {
        const std::size_t N = 1 + rng() % 3, T = 1 + rng() % 6, D = 1 + rng() % 3;
        const auto m = oracle::random_hmm(rng, N, D);
        const auto seq = oracle::sample_hmm(m, T, rng);
        const double slow = oracle::brute_force_log_likelihood(m, seq);
        EXPECT_NEAR(log_likelihood(m, seq), slow, 1e-9 * std::max(1.0, std::abs(slow)));
    }
}

TEST(LogLikelihood, FarOutliersStayFinite) {
    const double ll = log_likelihood(two_state_1d(), {{1e4}, {-1e4}});
    EXPECT_TRUE(std::isfinite(ll));
    EXPECT_LT(ll, -1e7);
}

TEST(LogLikelihood, Errors) {
    EXPECT_THROW(log_likelihood(two_state_1d(), {}), ConfigError);
    EXPECT_THROW(log_likelihood(two_state_1d(), {{1.0, 2.0}}), DimensionError);
}

TEST(KMeansInit, SeparatesTwoClusters) {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> noise(0, 0.5);
    std::vector<ObservationSequence> seqs(4);
    for (auto& s : seqs)
        for (int t = 0; t < 25; ++t) s.push_back({(t % 2 ? 10.0 : -10.0) + noise(rng), noise(rng)});
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto m = kmeans_init(seqs, 2, seed);
        m.validate();
        const double lo = std::min(m.mean(0, 0), m.mean(1, 0)), hi = std::max(m.mean(0, 0), m.mean(1, 0));
        EXPECT_NEAR(lo, -10, 0.3);
        EXPECT_NEAR(hi, 10, 0.3);
        for (double v : m.variances) EXPECT_LT(v, 1.0);
        EXPECT_EQ(m.transition, std::vector<double>(4, 0.5));
    }
}

TEST(KMeansInit, ConstantDataUsesFloor) {
    const std::vector<ObservationSequence> seqs{{{1.0}, {1.0}, {1.0}}};
    const auto m = kmeans_init(seqs, 2, 0);
    m.validate();
    EXPECT_EQ(m.mean(0, 0), 1.0);
    EXPECT_EQ(m.mean(1, 0), 1.0);
    EXPECT_THROW(kmeans_init(seqs, 4, 0), ConfigError);
    EXPECT_THROW(kmeans_init(seqs, 0, 0), ConfigError);
}

TEST(BaumWelch, RecoversWellSeparatedStates) {
    const auto gen = two_state_1d();
    std::mt19937_64 rng(4);
    std::vector<ObservationSequence> seqs;
    for (int k = 0; k < 50; ++k) seqs.push_back(oracle::sample_hmm(gen, 100, rng));
    const auto fit = baum_welch(seqs, kmeans_init(seqs, 2, 9));
    const auto& m = fit.model;
    const std::size_t lo = m.mean(0, 0) < m.mean(1, 0) ? 0 : 1, hi = 1 - lo;
    EXPECT_NEAR(m.mean(lo, 0), -5, 0.2);
    EXPECT_NEAR(m.mean(hi, 0), 5, 0.2);
    EXPECT_NEAR(m.variance(lo, 0), 1, 0.2);
    EXPECT_NEAR(m.a(lo, lo), 0.9, 0.05);
    EXPECT_NEAR(m.a(hi, hi), 0.9, 0.05);
    EXPECT_TRUE(fit.converged);
}

TEST(BaumWelch, LikelihoodNeverDecreasesAndModelStaysStochastic) {
    for (std::uint64_t s = 0; s < 20; ++s) {
        std::mt19937_64 rng(100 + s);
        const std::size_t N = 2 + s % 3, D = 1 + s % 2;
        const auto gen = oracle::random_hmm(rng, N, D);
        std::vector<ObservationSequence> seqs;
        for (int k = 0; k < 6; ++k) seqs.push_back(oracle::sample_hmm(gen, 3 + rng() % 30, rng));
        const auto fit = baum_welch(seqs, kmeans_init(seqs, N, s), {50, 0.0});
        for (std::size_t k = 1; k < fit.trace.size(); ++k) EXPECT_GE(fit.trace[k] - fit.trace[k - 1], -1e-8);
        EXPECT_NO_THROW(fit.model.validate());
        double total = 0;
        for (const auto& seq : seqs) total += log_likelihood(fit.model, seq);
        EXPECT_NEAR(total, fit.trace.back(), 1e-6 * std::abs(total));
    }
}

TEST(BaumWelch, ShortSequencesAndSingleObservation) {
    const std::vector<ObservationSequence> seqs{{{1.0}}, {{2.0}}, {{8.0}}, {{9.0}, {1.5}}};
    const auto fit = baum_welch(seqs, kmeans_init(seqs, 2, 1));
    EXPECT_NO_THROW(fit.model.validate());
    for (double v : fit.model.variances) EXPECT_GT(v, 0.0);
}

TEST(BaumWelch, DeterministicForFixedSeed) {
    std::mt19937_64 rng(5);
    const auto gen = oracle::random_hmm(rng, 3, 2);
    std::vector<ObservationSequence> seqs;
    for (int k = 0; k < 10; ++k) seqs.push_back(oracle::sample_hmm(gen, 30, rng));
    const auto a = baum_welch(seqs, kmeans_init(seqs, 3, 77));
    const auto b = baum_welch(seqs, kmeans_init(seqs, 3, 77));
    EXPECT_EQ(a.model, b.model);
    EXPECT_EQ(a.trace, b.trace);
}

TEST(BaumWelch, Errors) {
    const std::vector<ObservationSequence> seqs{{{1.0}, {2.0}}};
    EXPECT_THROW(baum_welch(seqs, two_state_1d(), {0, 1e-4}), ConfigError);
    EXPECT_THROW(baum_welch(std::vector<ObservationSequence>{{{1.0, 2.0}}}, two_state_1d()), DimensionError);
    EXPECT_THROW(baum_welch(std::vector<ObservationSequence>{{}}, two_state_1d()), ConfigError);
    auto bad = two_state_1d();
    bad.transition = {0.5, 0.6, 0.5, 0.5};
    EXPECT_THROW(baum_welch(seqs, bad), ConfigError);
    bad = two_state_1d();
    bad.variances[1] = 0;
    EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(HmmJson, RoundTripIsExact) {
    std::mt19937_64 rng(6);
    for (int i = 0; i < 20; ++i) {
        const auto m = oracle::random_hmm(rng, 1 + rng() % 4, 1 + rng() % 3);
        const auto j = hmm_to_json(m, "Gap+Pkts");
        EXPECT_EQ(j.at("subset"), "Gap+Pkts");
        EXPECT_EQ(hmm_from_json(nlohmann::json::parse(j.dump())), m);
    }
}

TEST(HmmJson, RejectsBadDocuments) {
    auto j = hmm_to_json(two_state_1d());
    auto wrong = j;
    wrong["format"] = "other";
    EXPECT_THROW(hmm_from_json(wrong), ConfigError);
    wrong = j;
    wrong["version"] = 2;
    EXPECT_THROW(hmm_from_json(wrong), ConfigError);
    wrong = j;
    wrong.erase("means");
    EXPECT_THROW(hmm_from_json(wrong), ConfigError);
    wrong = j;
    wrong["n_states"] = 3;
    EXPECT_THROW(hmm_from_json(wrong), ConfigError);
}
