#include <cmath>
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "natfp/trainer.hpp"
#include "oracles.hpp"

using namespace natfp;

namespace {

constexpr double inf = std::numeric_limits<double>::infinity();

const LocalNetwork local = LocalNetwork::parse({"203.0.113.0/24"});

struct Service {
    const char* first;
    const char* last;
    std::uint16_t port;
};

const std::vector<Service> services{{"1.0.0.0", "1.0.0.255", 443},
                                    {"2.0.0.0", "2.0.0.255", 993},
                                    {"3.0.0.0", "3.0.0.255", 5222}};

WhoisCache service_cache() {
    WhoisCache c;
    for (const auto& s : services) c.insert({parse_ipv4(s.first), parse_ipv4(s.last), RangeSource::arin}, 0);
    return c;
}

// One conversation of `n` records alternating direction. Packet counts are
// drawn around `pkts`.
template <typename Rng>
void conversation(std::vector<RawRecord>& out, Rng& rng, const Service& svc, std::uint16_t local_port,
                  std::int64_t start, double pkts) {
    const Ipv4 nat = parse_ipv4("203.0.113.10");
    const Ipv4 remote{parse_ipv4(svc.first).value + 7};
    std::normal_distribution<double> noise(0, 0.1 * pkts);
    const std::size_t n = 4 + rng() % 4;
    for (std::size_t i = 0; i < n; ++i) {
        const bool up = i % 2 == 0;
        const auto p = static_cast<std::uint64_t>(std::max(1.0, std::round(pkts + noise(rng))));
        const FlowKey k = up ? FlowKey{nat, local_port, remote, svc.port, 6}
                             : FlowKey{remote, svc.port, nat, local_port, 6};
        const std::int64_t s = start + static_cast<std::int64_t>(i) * 2000 + static_cast<std::int64_t>(rng() % 500);
        out.push_back({k, p, p * 100, s, s + 1000, 0x18, 0});
    }
}

struct Data {
    std::vector<RawRecord> user;
    std::vector<OrderedBiFlow> background;
};

// User and background differ by a factor of 20 in packet counts unless
// `same` is set.
Data make_data(std::uint64_t seed, std::size_t per_service, bool same = false) {
    std::mt19937_64 rng(seed);
    Data d;
    std::vector<RawRecord> bg;
    std::uint16_t port = 10000;
    std::int64_t t = 1'700'000'000'000;
    for (const auto& svc : services) {
        for (std::size_t i = 0; i < per_service; ++i) {
            conversation(d.user, rng, svc, port++, t += 60000, 10);
            conversation(bg, rng, svc, port++, t += 60000, same ? 10 : 200);
        }
    }
    d.background = build_obfs(bg);
    return d;
}

TrainingConfig config() {
    TrainingConfig c;
    c.user_id = "alice";
    c.local_side = local;
    c.seed = 42;
    return c;
}

} // namespace

TEST(SelectThreshold, SeparatedScores) {
    const std::vector<double> pos{-1, -2}, neg{-10, -9};
    const auto c = select_threshold(pos, neg);
    EXPECT_EQ(c.f1, 1.0);
    EXPECT_EQ(c.threshold, -5.5);
}

TEST(SelectThreshold, IdenticalScoresKeepEverything) {
    const std::vector<double> pos{-5, -5}, neg{-5, -5};
    const auto c = select_threshold(pos, neg);
    EXPECT_DOUBLE_EQ(c.f1, 2.0 / 3.0);
    EXPECT_EQ(c.threshold, -inf);
}

TEST(SelectThreshold, InfiniteScores) {
    const std::vector<double> pos{inf, 1}, neg{-inf};
    const auto c = select_threshold(pos, neg);
    EXPECT_EQ(c.f1, 1.0);
    EXPECT_GT(c.threshold, -inf);
    EXPECT_LE(c.threshold, 1.0);
}

TEST(SelectThreshold, Errors) {
    const std::vector<double> one{1.0}, none{}, nan{std::nan("")};
    EXPECT_THROW(select_threshold(one, none), ConfigError);
    EXPECT_THROW(select_threshold(none, one), ConfigError);
    EXPECT_THROW(select_threshold(nan, one), NumericalError);
}

TEST(SelectThreshold, MatchesExhaustiveSweep) {
    std::mt19937_64 rng(8);
    for (int i = 0; i < 300; ++i) {
        std::vector<double> pos(1 + rng() % 50), neg(1 + rng() % 50);
        std::normal_distribution<double> p(0.5, 1.0), n(-0.5, 1.0);
        const bool coarse = i % 2 == 0;
        for (auto& v : pos) v = coarse ? std::round(2 * p(rng)) : p(rng);
        for (auto& v : neg) v = coarse ? std::round(2 * n(rng)) : n(rng);
        const auto got = select_threshold(pos, neg);
        const auto want = oracle::sweep_threshold(pos, neg);
        ASSERT_EQ(got.f1, want.f1) << "instance " << i;
        ASSERT_EQ(got.threshold, want.threshold) << "instance " << i;
    }
}

TEST(SequenceScore, IsPerObservation) {
    GaussianHmm m;
    m.n_states = 1;
    m.dim = 1;
    m.transition = {1};
    m.initial = {1};
    m.means = {0};
    m.variances = {1};
    EXPECT_NEAR(sequence_score(m, {{0.0}, {0.0}, {0.0}}), -0.918939, 1e-6);
}

TEST(TrainProfile, SeparableServicesGetStrongExperts) {
    const auto data = make_data(1, 40);
    const auto [profile, report] = train_profile(data.user, data.background, service_cache(), config());
    ASSERT_EQ(profile.experts.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(to_string(profile.experts[i].service.netrange.first_ip), services[i].first);
        EXPECT_EQ(profile.experts[i].service.port, services[i].port);
        EXPECT_GE(profile.experts[i].weight, 0.9);
        EXPECT_EQ(profile.experts[i].hmm.dim, profile.experts[i].subset.size());
        EXPECT_TRUE(profile.expert_index(profile.experts[i].service));
    }
    EXPECT_EQ(profile.user_id, "alice");
    std::int64_t last_end = 0;
    for (const auto& r : data.user) last_end = std::max(last_end, r.end_ts);
    EXPECT_EQ(profile.created_at_ms, last_end);

    ASSERT_EQ(report.services.size(), 3u);
    for (const auto& s : report.services) {
        EXPECT_EQ(s.n_obfs, 40u);
        EXPECT_EQ(s.n_train, 32u);
        EXPECT_EQ(s.n_holdout, 8u);
        EXPECT_EQ(s.n_negatives, 8u);
        EXPECT_EQ(s.negative_source, "service");
        EXPECT_EQ(s.candidates.size(), 3u * 14u);
        ASSERT_TRUE(s.selected);
        // The selected candidate has the highest F1, earliest on ties.
        for (std::size_t c = 0; c < *s.selected; ++c) EXPECT_LT(s.candidates[c].f1, s.candidates[*s.selected].f1);
        for (const auto& c : s.candidates) EXPECT_LE(c.f1, s.candidates[*s.selected].f1);
    }
}

TEST(TrainProfile, IndistinguishableBackgroundGivesWeakExperts) {
    const auto data = make_data(2, 40, true);
    try {
        const auto [profile, report] = train_profile(data.user, data.background, service_cache(), config());
        for (const auto& e : profile.experts) EXPECT_LT(e.weight, 0.95);
    } catch (const EmptyProfileError&) {
    }
}

TEST(TrainProfile, ResamplesNegativesForUnseenServices) {
    auto data = make_data(3, 20);
    // Background only on the first service: the other two fall back.
    std::erase_if(data.background, [](const OrderedBiFlow& o) {
        return !(o.b.ip.value >> 24 == 1 || o.a.ip.value >> 24 == 1);
    });
    auto cfg = config();
    cfg.state_counts = {2};
    const auto [profile, report] = train_profile(data.user, data.background, service_cache(), cfg);
    ASSERT_EQ(report.services.size(), 3u);
    EXPECT_EQ(report.services[0].negative_source, "service");
    EXPECT_EQ(report.services[1].negative_source, "any-resample");
    EXPECT_EQ(report.services[2].negative_source, "any-resample");
    EXPECT_EQ(report.services[1].n_negatives, cfg.min_negatives);
}

TEST(TrainProfile, Errors) {
    const auto data = make_data(4, 12);
    EXPECT_THROW(train_profile(data.user, {}, service_cache(), config()), ConfigError);
    EXPECT_THROW(train_profile({}, data.background, service_cache(), config()), ConfigError);
    auto cfg = config();
    cfg.min_obfs = 1000;
    try {
        train_profile(data.user, data.background, service_cache(), cfg);
        FAIL() << "expected EmptyProfileError";
    } catch (const EmptyProfileError& e) {
        EXPECT_NE(std::string(e.what()).find("alice"), std::string::npos);
    }
    try {
        train_profile(data.user, data.background, WhoisCache{}, config());
        FAIL() << "expected CacheMissError";
    } catch (const CacheMissError& e) {
        EXPECT_EQ(e.ip().value >> 24, 1u);
    }
    cfg = config();
    cfg.train_fraction = 1.0;
    EXPECT_THROW(train_profile(data.user, data.background, service_cache(), cfg), ConfigError);
}

TEST(TrainProfile, DeterministicAcrossJobCounts) {
    const auto data = make_data(5, 15);
    auto cfg = config();
    cfg.state_counts = {2, 3};
    const auto a = profile_to_json(train_profile(data.user, data.background, service_cache(), cfg).first).dump();
    cfg.jobs = 4;
    const auto b = profile_to_json(train_profile(data.user, data.background, service_cache(), cfg).first).dump();
    EXPECT_EQ(a, b);
    cfg.seed = 43;
    const auto c = profile_to_json(train_profile(data.user, data.background, service_cache(), cfg).first).dump();
    EXPECT_NE(a, c);
}

TEST(ProfileJson, RoundTripKeepsInfiniteThresholds) {
    const auto data = make_data(6, 15);
    auto cfg = config();
    cfg.state_counts = {2};
    auto [profile, report] = train_profile(data.user, data.background, service_cache(), cfg);
    profile.experts.front().threshold = -inf;
    const auto j = profile_to_json(profile, &report);
    EXPECT_EQ(j.at("experts").at(0).at("threshold"), "-inf");
    EXPECT_TRUE(j.contains("report"));
    const auto back = profile_from_json(nlohmann::json::parse(j.dump()));
    EXPECT_EQ(back.user_id, profile.user_id);
    EXPECT_EQ(back.created_at_ms, profile.created_at_ms);
    EXPECT_EQ(back.local_side.to_strings(), profile.local_side.to_strings());
    ASSERT_EQ(back.experts.size(), profile.experts.size());
    for (std::size_t i = 0; i < back.experts.size(); ++i) {
        EXPECT_EQ(back.experts[i].service, profile.experts[i].service);
        EXPECT_EQ(back.experts[i].hmm, profile.experts[i].hmm);
        EXPECT_EQ(back.experts[i].subset, profile.experts[i].subset);
        EXPECT_EQ(back.experts[i].threshold, profile.experts[i].threshold);
        EXPECT_EQ(back.experts[i].weight, profile.experts[i].weight);
    }
    EXPECT_EQ(profile_to_json(back).dump(), profile_to_json(profile).dump());
}

TEST(ProfileJson, RejectsBadDocuments) {
    const auto data = make_data(7, 12);
    auto cfg = config();
    cfg.state_counts = {2};
    const auto j = profile_to_json(train_profile(data.user, data.background, service_cache(), cfg).first);
    auto bad = j;
    bad["format"] = "natfp.hmm";
    EXPECT_THROW(profile_from_json(bad), ConfigError);
    bad = j;
    bad["experts"][0]["weight"] = 1.5;
    EXPECT_THROW(profile_from_json(bad), ConfigError);
    bad = j;
    bad["experts"][0]["subset"] = "Gap+Bytes+Pkts+Direction";
    EXPECT_THROW(profile_from_json(bad), ConfigError);
    bad = j;
    bad["experts"].push_back(bad["experts"][0]);
    EXPECT_THROW(profile_from_json(bad), ConfigError);
    bad = j;
    bad["experts"][0]["threshold"] = "nope";
    EXPECT_THROW(profile_from_json(bad), ConfigError);
}
