#pragma once

// Generator for the multi-user benchmark population: a fictional service
// registry, randomized users, and target users whose behavior on every
// service they use is kept apart from everyone else's.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "natfp/error.hpp"
#include "natfp/netflow.hpp"
#include "natfp/random.hpp"
#include "natfp/simulator.hpp"
#include "natfp/whois.hpp"

namespace natfp {

struct BenchmarkOptions {
    std::uint64_t seed = 20130805;
    std::size_t n_users = 20;
    std::size_t n_targets = 5;
    std::size_t n_nat_ips = 2;
    std::size_t services_per_user = 4;
    std::int64_t training_hours = 12;
    std::size_t calibration_days = 2;
    std::size_t intervals_per_day = 24;
    std::int64_t interval_ms = 3'600'000;
    std::size_t target_present_intervals = 12;
    /// Non-targets are present for a uniform number of intervals in this range.
    std::size_t background_present_min = 8;
    std::size_t background_present_max = 20;
    /// Minimum distance, in log space over (packets, bytes, gap), between a
    /// target's behavior and any other user's on a shared service.
    double min_separation = 1.5;
};

/// The fictional registry: every service netrange plus a few unused
/// enclosing blocks, so that lookups must pick the narrowest match.
inline std::vector<ServiceDefinition> benchmark_services() {
    auto svc = [](std::string name, std::string cidr, std::uint16_t port, std::uint8_t proto = protocol::tcp) {
        const auto c = parse_cidr(cidr);
        return ServiceDefinition{std::move(name), NetRange{c.first(), c.last(), RangeSource::cache}, port, proto};
    };
    return {
        svc("mail-imap", "23.40.0.0/16", 993),
        svc("mail-web", "23.40.0.0/16", 443),
        svc("chat", "23.40.128.0/20", 5222),
        svc("video", "31.13.64.0/18", 443),
        svc("video-edge", "31.13.96.0/24", 443),
        svc("news", "45.60.0.0/16", 80),
        svc("search", "64.233.160.0/19", 443),
        svc("maps", "64.233.176.0/22", 443),
        svc("push", "74.125.0.0/16", 5228),
        svc("voip", "91.190.216.0/21", 3478, protocol::udp),
        svc("social", "157.240.0.0/17", 443),
        svc("storage", "162.125.0.0/16", 443),
        svc("games", "185.60.112.0/22", 3074, protocol::udp),
        svc("music", "194.68.28.0/22", 4070),
    };
}

/// Service ranges plus enclosing parents that no service uses directly.
inline WhoisCache benchmark_registry(std::int64_t retrieved_at_ms) {
    WhoisCache cache;
    for (const auto& s : benchmark_services()) cache.insert(s.netrange, retrieved_at_ms);
    for (const char* parent : {"23.0.0.0/8", "31.13.0.0/16", "64.233.128.0/17", "157.240.0.0/16", "194.68.0.0/16"}) {
        const auto c = parse_cidr(parent);
        cache.insert({c.first(), c.last(), RangeSource::cache}, retrieved_at_ms);
    }
    return cache;
}

struct Benchmark {
    BenchmarkOptions options;
    std::vector<ServiceDefinition> services;
    std::vector<UserBehaviorProfile> users;
    std::vector<std::string> targets;
    std::vector<Ipv4> nat_ips;
    std::int64_t epoch_ms = 1'704'067'200'000;

    /// Everyone present for the whole training slice.
    SimulationConfig training() const {
        auto c = base(0, options.training_hours * 3'600'000);
        for (const auto& u : users) c.schedule[u.user_id] = {{0, c.duration_ms}};
        return c;
    }

    /// Day used to fit the final classifier; `day` counts from 0.
    SimulationConfig calibration(std::size_t day) const { return daily(1 + day, true); }

    SimulationConfig test() const { return daily(1 + options.calibration_days, true); }

    /// Same population and background behavior with every target absent.
    SimulationConfig negative_control() const { return daily(2 + options.calibration_days, false); }

    std::int64_t day_ms() const { return options.interval_ms * static_cast<std::int64_t>(options.intervals_per_day); }

private:
    SimulationConfig base(std::uint64_t phase, std::int64_t duration) const {
        SimulationConfig c;
        c.seed = derive_seed(options.seed, {0x7068617365, phase});
        c.start_ms = epoch_ms + static_cast<std::int64_t>(phase) * std::max(day_ms(), options.training_hours * 3'600'000);
        c.duration_ms = duration;
        c.nat_ips = nat_ips;
        c.services = services;
        c.users = users;
        return c;
    }

    SimulationConfig daily(std::uint64_t phase, bool targets_present) const {
        auto c = base(phase, day_ms());
        std::mt19937_64 rng(derive_seed(options.seed, {0x7363686564, phase}));
        for (const auto& u : users) {
            const bool target = std::find(targets.begin(), targets.end(), u.user_id) != targets.end();
            if (target && !targets_present) continue;
            std::size_t n = options.target_present_intervals;
            if (!target)
                n = std::uniform_int_distribution<std::size_t>(options.background_present_min,
                                                               options.background_present_max)(rng);
            std::vector<std::size_t> slots(options.intervals_per_day);
            std::iota(slots.begin(), slots.end(), 0);
            std::shuffle(slots.begin(), slots.end(), rng);
            slots.resize(std::min(n, slots.size()));
            std::sort(slots.begin(), slots.end());
            auto& sched = c.schedule[u.user_id];
            for (auto k : slots) {
                const std::int64_t lo = options.interval_ms * static_cast<std::int64_t>(k);
                if (!sched.empty() && sched.back().end == lo) sched.back().end = lo + options.interval_ms;
                else sched.push_back({lo, lo + options.interval_ms});
            }
        }
        return c;
    }
};

namespace benchmark_detail {

template <typename Rng>
double log_uniform(Rng& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(std::log(lo), std::log(hi))(rng);
}

template <typename Rng>
ServiceBehavior random_behavior(Rng& rng, const std::string& service) {
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    ServiceBehavior b;
    b.service = service;
    b.session_rate = 3 + 4 * u01(rng);
    const int lo = std::uniform_int_distribution<int>(2, 5)(rng);
    b.records_per_obf = {lo, lo + std::uniform_int_distribution<int>(2, 6)(rng)};
    b.gap_ms = {log_uniform(rng, 800, 12'000), 0.2 + 0.3 * u01(rng)};
    b.packets = {log_uniform(rng, 3, 150), 0.2 + 0.3 * u01(rng)};
    b.bytes = {b.packets.mu + log_uniform(rng, 60, 1400), 0.2 + 0.3 * u01(rng)};
    b.duration_ms = {log_uniform(rng, 200, 5000), 0.4};
    b.outgoing_fraction = 0.2 + 0.6 * u01(rng);
    return b;
}

inline double behavior_distance(const ServiceBehavior& a, const ServiceBehavior& b) {
    const double dp = a.packets.mu - b.packets.mu, db = a.bytes.mu - b.bytes.mu, dg = a.gap_ms.mu - b.gap_ms.mu;
    return std::sqrt(dp * dp + db * db + dg * dg);
}

} // namespace benchmark_detail

inline Benchmark make_benchmark(const BenchmarkOptions& options = {}) {
    using namespace benchmark_detail;
    if (options.n_targets > options.n_users) throw ConfigError("more targets than users");
    if (options.n_nat_ips == 0 || options.n_nat_ips > 256) throw ConfigError("n_nat_ips must be in [1, 256]");
    if (options.target_present_intervals > options.intervals_per_day ||
        options.background_present_max > options.intervals_per_day ||
        options.background_present_min > options.background_present_max)
        throw ConfigError("presence counts exceed the day");

    Benchmark bm;
    bm.options = options;
    bm.services = benchmark_services();
    if (options.services_per_user == 0 || options.services_per_user > bm.services.size())
        throw ConfigError("services_per_user out of range");
    for (std::size_t i = 0; i < options.n_nat_ips; ++i)
        bm.nat_ips.push_back(Ipv4{parse_ipv4("203.0.113.10").value + static_cast<std::uint32_t>(i)});

    std::mt19937_64 rng(derive_seed(options.seed, {0x7573657273}));
    const std::size_t n_background = options.n_users - options.n_targets;
    auto pick_services = [&] {
        std::vector<std::size_t> idx(bm.services.size());
        std::iota(idx.begin(), idx.end(), 0);
        std::shuffle(idx.begin(), idx.end(), rng);
        idx.resize(options.services_per_user);
        std::sort(idx.begin(), idx.end());
        return idx;
    };
    auto id_of = [](std::size_t i) {
        std::string s = std::to_string(i);
        return "u" + std::string(s.size() < 2 ? 2 - s.size() : 0, '0') + s;
    };

    for (std::size_t i = 0; i < n_background; ++i) {
        UserBehaviorProfile u{id_of(options.n_targets + i), {}};
        for (auto s : pick_services()) u.services.push_back(random_behavior(rng, bm.services[s].name));
        bm.users.push_back(std::move(u));
    }
    for (std::size_t t = 0; t < options.n_targets; ++t) {
        UserBehaviorProfile u{id_of(t), {}};
        for (auto s : pick_services()) {
            const auto& name = bm.services[s].name;
            for (int attempt = 0;; ++attempt) {
                auto b = random_behavior(rng, name);
                bool apart = true;
                for (const auto& other : bm.users)
                    for (const auto& ob : other.services)
                        if (ob.service == name && behavior_distance(b, ob) < options.min_separation) apart = false;
                if (apart) {
                    u.services.push_back(std::move(b));
                    break;
                }
                if (attempt == 10'000)
                    throw ConfigError("cannot place target " + u.user_id + " apart from others on " + name);
            }
        }
        bm.targets.push_back(u.user_id);
        bm.users.push_back(std::move(u));
    }
    std::sort(bm.users.begin(), bm.users.end(),
              [](const auto& a, const auto& b) { return a.user_id < b.user_id; });
    return bm;
}

} // namespace natfp
