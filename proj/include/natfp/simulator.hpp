#pragma once

// Synthetic NAT'd NetFlow traffic with ground truth.
//
// Users sit behind a small set of public NAT addresses and open sessions to
// services. A session is a burst of connections to one remote endpoint from
// one ephemeral port; each direction's packets pass through a NetFlow-style
// timeout splitter to become records.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "natfp/error.hpp"
#include "natfp/netflow.hpp"
#include "natfp/random.hpp"
#include "natfp/whois.hpp"

namespace natfp {

/// exp(N(mu, sigma^2)).
struct LogNormal {
    double mu = 0;
    double sigma = 0;

    double mean() const { return std::exp(mu + sigma * sigma / 2); }

    template <typename Rng>
    double sample(Rng& rng) const {
        return std::exp(mu + sigma * std::normal_distribution<double>(0.0, 1.0)(rng));
    }
};

struct IntRange {
    int min = 1;
    int max = 1;
};

struct ServiceDefinition {
    std::string name;
    NetRange netrange;
    std::uint16_t port = 0;
    std::uint8_t protocol = protocol::tcp;

    ServiceKey key() const { return {netrange, port}; }
};

/// How one user talks to one service.
struct ServiceBehavior {
    std::string service; ///< ServiceDefinition::name
    double session_rate = 1; ///< sessions per hour of presence
    IntRange records_per_obf{2, 6}; ///< logical connections per session
    LogNormal gap_ms{std::log(5000.0), 0.5}; ///< between connection starts
    LogNormal packets{std::log(20.0), 0.5};
    LogNormal bytes{std::log(8000.0), 0.5};
    LogNormal duration_ms{std::log(2000.0), 0.5};
    double outgoing_fraction = 0.5;
};

struct UserBehaviorProfile {
    std::string user_id;
    std::vector<ServiceBehavior> services;
};

/// Half-open [start, end), milliseconds relative to the simulation start in
/// configs and absolute in ground truth.
struct PresenceInterval {
    std::int64_t start = 0;
    std::int64_t end = 0;
    friend bool operator==(const PresenceInterval&, const PresenceInterval&) = default;
};

struct SimulationConfig {
    std::uint64_t seed = 0;
    std::int64_t start_ms = 1'704'067'200'000; // 2024-01-01T00:00:00Z
    std::int64_t duration_ms = 0;
    std::vector<Ipv4> nat_ips;
    /// Defaults to the NAT addresses themselves.
    std::vector<Cidr> local_prefixes;
    std::int64_t inactive_timeout_ms = 15'000;
    std::int64_t active_timeout_ms = 1'800'000;
    std::vector<ServiceDefinition> services;
    std::vector<UserBehaviorProfile> users;
    std::map<std::string, std::vector<PresenceInterval>> schedule;

    const ServiceDefinition& service(const std::string& name) const {
        for (const auto& s : services)
            if (s.name == name) return s;
        throw ConfigError("unknown service '" + name + "'");
    }

    LocalNetwork local_network() const {
        LocalNetwork n;
        if (local_prefixes.empty())
            for (auto ip : nat_ips) n.prefixes.push_back({ip, 32});
        else
            n.prefixes = local_prefixes;
        return n;
    }

    void validate() const {
        auto fail = [](const std::string& what) { throw ConfigError("invalid simulation config: " + what); };
        if (nat_ips.empty()) fail("nat_ips is empty");
        if (duration_ms <= 0) fail("duration_ms must be positive");
        if (inactive_timeout_ms <= 0 || active_timeout_ms <= 0) fail("timeouts must be positive");
        const auto local = local_network();
        for (auto ip : nat_ips)
            if (!local.contains(ip)) fail("nat ip " + to_string(ip) + " outside local_prefixes");
        for (std::size_t i = 0; i < services.size(); ++i) {
            const auto& s = services[i];
            if (s.name.empty()) fail("service without a name");
            if (s.netrange.first_ip > s.netrange.last_ip) fail("service '" + s.name + "' has an inverted netrange");
            if (s.protocol != protocol::tcp && s.protocol != protocol::udp)
                fail("service '" + s.name + "' must be tcp or udp");
            for (std::size_t j = 0; j < i; ++j)
                if (services[j].name == s.name) fail("duplicate service '" + s.name + "'");
            if (std::any_of(local.prefixes.begin(), local.prefixes.end(), [&](const Cidr& c) {
                    return c.first() <= s.netrange.last_ip && s.netrange.first_ip <= c.last();
                }))
                fail("service '" + s.name + "' overlaps the local side");
        }
        auto positive_lognormal = [](const LogNormal& d) { return std::isfinite(d.mu) && d.sigma >= 0 && std::isfinite(d.sigma); };
        for (std::size_t u = 0; u < users.size(); ++u) {
            const auto& user = users[u];
            if (user.user_id.empty()) fail("user without an id");
            for (std::size_t v = 0; v < u; ++v)
                if (users[v].user_id == user.user_id) fail("duplicate user '" + user.user_id + "'");
            for (const auto& b : user.services) {
                const std::string where = "user '" + user.user_id + "' service '" + b.service + "': ";
                service(b.service);
                if (!(b.session_rate > 0) || !std::isfinite(b.session_rate)) fail(where + "session_rate must be > 0");
                if (b.records_per_obf.min < 1 || b.records_per_obf.max < b.records_per_obf.min)
                    fail(where + "records_per_obf must satisfy 1 <= min <= max");
                if (!positive_lognormal(b.gap_ms) || !positive_lognormal(b.packets) || !positive_lognormal(b.bytes) ||
                    !positive_lognormal(b.duration_ms))
                    fail(where + "log-normal parameters must be finite with sigma >= 0");
                if (!(b.outgoing_fraction >= 0 && b.outgoing_fraction <= 1))
                    fail(where + "outgoing_fraction outside [0, 1]");
            }
        }
        for (const auto& [user, intervals] : schedule) {
            if (std::none_of(users.begin(), users.end(), [&](const auto& u) { return u.user_id == user; }))
                fail("schedule names unknown user '" + user + "'");
            for (const auto& p : intervals)
                if (p.start < 0 || p.end > duration_ms || p.start >= p.end)
                    fail("presence interval of '" + user + "' outside [0, duration]");
        }
    }

    /// Registry covering every service netrange, for offline resolution.
    WhoisCache registry() const {
        WhoisCache cache;
        for (const auto& s : services) cache.insert(s.netrange, start_ms);
        return cache;
    }
};

struct GroundTruth {
    std::vector<std::string> users;
    std::map<std::string, std::vector<PresenceInterval>> presence; ///< absolute epoch ms
    std::vector<std::uint32_t> record_user; ///< index into users, parallel to the records
    std::size_t sessions = 0;

    std::vector<std::size_t> records_of(const std::string& user_id) const {
        std::vector<std::size_t> out;
        const auto it = std::find(users.begin(), users.end(), user_id);
        if (it == users.end()) return out;
        const auto u = static_cast<std::uint32_t>(it - users.begin());
        for (std::size_t i = 0; i < record_user.size(); ++i)
            if (record_user[i] == u) out.push_back(i);
        return out;
    }
};

struct SimulationOutput {
    std::vector<RawRecord> records;
    GroundTruth truth;
};

struct PacketEvent {
    std::int64_t ts = 0;
    std::uint64_t bytes = 0;
};

/// Cuts one direction's packet timeline into records: a new record starts
/// when the idle gap exceeds `inactive_ms` or when the record would span more
/// than `active_ms`. Events must be sorted by time.
inline std::vector<RawRecord> split_by_timeouts(const FlowKey& key, std::span<const PacketEvent> events,
                                                std::int64_t inactive_ms, std::int64_t active_ms,
                                                std::uint8_t tcp_flags = 0) {
    std::vector<RawRecord> out;
    RawRecord cur;
    bool open = false;
    std::int64_t last = 0;
    for (const auto& e : events) {
        if (open && (e.ts - last > inactive_ms || e.ts - cur.start_ts > active_ms)) {
            out.push_back(cur);
            open = false;
        }
        if (!open) {
            cur = RawRecord{key, 0, 0, e.ts, e.ts, tcp_flags, 0};
            open = true;
        }
        ++cur.packets;
        cur.bytes += e.bytes;
        cur.end_ts = e.ts;
        last = e.ts;
    }
    if (open) out.push_back(cur);
    return out;
}

namespace sim_detail {

/// Hands out NAT ports per public address, never reusing a port while its
/// previous session could still be live.
class PortAllocator {
public:
    PortAllocator(std::size_t n_ips, std::int64_t quiet_ms, std::uint64_t seed) : quiet_ms_(quiet_ms) {
        std::mt19937_64 rng(seed);
        for (std::size_t i = 0; i < n_ips; ++i) {
            busy_until_.emplace_back(span_, INT64_MIN);
            cursor_.push_back(static_cast<std::uint32_t>(rng() % span_));
        }
    }

    std::uint16_t allocate(std::size_t ip, std::int64_t start, std::int64_t end) {
        auto& busy = busy_until_[ip];
        for (std::uint32_t tries = 0; tries < span_; ++tries) {
            const std::uint32_t slot = cursor_[ip];
            cursor_[ip] = (cursor_[ip] + 1) % span_;
            if (busy[slot] == INT64_MIN || busy[slot] + quiet_ms_ < start) {
                busy[slot] = end;
                return static_cast<std::uint16_t>(first_port + slot);
            }
        }
        throw ConfigError("NAT port space exhausted");
    }

private:
    static constexpr std::uint32_t first_port = 1024;
    static constexpr std::uint32_t span_ = 65536 - first_port;
    std::int64_t quiet_ms_;
    std::vector<std::vector<std::int64_t>> busy_until_;
    std::vector<std::uint32_t> cursor_;
};

struct Connection {
    bool outgoing = true;
    std::int64_t start = 0;
    std::int64_t duration = 0;
    std::uint64_t packets = 1;
    std::uint64_t bytes = 1;
};

struct Session {
    std::uint32_t user = 0;
    std::size_t service = 0;
    std::size_t nat = 0;
    Ipv4 remote;
    std::int64_t start = 0;
    std::int64_t end = 0;
    std::vector<Connection> connections;
    std::uint64_t packet_seed = 0;
};

inline std::uint64_t positive_draw(double v, std::uint64_t floor = 1) {
    if (!(v < 1e15)) v = 1e15;
    return std::max<std::uint64_t>(floor, static_cast<std::uint64_t>(std::llround(v)));
}

inline void emit_direction(const FlowKey& key, const Session& s, bool outgoing, std::mt19937_64& rng,
                           const SimulationConfig& cfg, std::uint8_t flags, std::vector<RawRecord>& out) {
    std::vector<PacketEvent> events;
    for (const auto& c : s.connections) {
        if (c.outgoing != outgoing) continue;
        std::uniform_int_distribution<std::int64_t> when(0, c.duration);
        const std::uint64_t per = c.bytes / c.packets, extra = c.bytes % c.packets;
        for (std::uint64_t p = 0; p < c.packets; ++p) {
            std::int64_t t = c.start;
            if (p == c.packets - 1 && p > 0) t += c.duration;
            else if (p > 0) t += when(rng);
            events.push_back({t, per + (p < extra ? 1 : 0)});
        }
    }
    std::stable_sort(events.begin(), events.end(), [](const auto& a, const auto& b) { return a.ts < b.ts; });
    auto recs = split_by_timeouts(key, events, cfg.inactive_timeout_ms, cfg.active_timeout_ms, flags);
    out.insert(out.end(), recs.begin(), recs.end());
}

} // namespace sim_detail

/// Fully deterministic in `config.seed`. Records come out sorted by start_ts.
inline SimulationOutput simulate(const SimulationConfig& config) {
    using namespace sim_detail;
    config.validate();

    SimulationOutput out;
    auto& truth = out.truth;
    for (const auto& u : config.users) truth.users.push_back(u.user_id);
    for (const auto& [user, intervals] : config.schedule) {
        auto& abs = truth.presence[user];
        for (const auto& p : intervals) abs.push_back({config.start_ms + p.start, config.start_ms + p.end});
        std::sort(abs.begin(), abs.end(), [](const auto& a, const auto& b) { return a.start < b.start; });
    }

    const auto registry = config.registry();
    std::vector<Session> sessions;
    for (std::uint32_t u = 0; u < config.users.size(); ++u) {
        const auto& user = config.users[u];
        const auto sched = config.schedule.find(user.user_id);
        if (sched == config.schedule.end()) continue;
        for (const auto& behavior : user.services) {
            std::size_t svc_index = 0;
            while (config.services[svc_index].name != behavior.service) ++svc_index;
            const auto& svc = config.services[svc_index];
            std::mt19937_64 rng(derive_seed(config.seed, {fnv1a(user.user_id), fnv1a(behavior.service)}));
            std::exponential_distribution<double> inter_arrival(behavior.session_rate / 3'600'000.0);
            std::uniform_int_distribution<int> n_conn(behavior.records_per_obf.min, behavior.records_per_obf.max);
            std::uniform_int_distribution<std::uint64_t> host(0, std::uint64_t{svc.netrange.last_ip.value} -
                                                                    svc.netrange.first_ip.value);
            std::uniform_int_distribution<std::size_t> nat(0, config.nat_ips.size() - 1);
            std::bernoulli_distribution outgoing(behavior.outgoing_fraction);

            for (const auto& presence : sched->second) {
                const std::int64_t begin = config.start_ms + presence.start;
                const std::int64_t end = config.start_ms + presence.end;
                for (double t = static_cast<double>(begin) + inter_arrival(rng); t < static_cast<double>(end);
                     t += inter_arrival(rng)) {
                    Session s;
                    s.user = u;
                    s.service = svc_index;
                    s.nat = nat(rng);
                    // Skip hosts that fall in a narrower range nested inside this one.
                    for (int tries = 0;; ++tries) {
                        s.remote = Ipv4{static_cast<std::uint32_t>(svc.netrange.first_ip.value + host(rng))};
                        const auto hit = registry.lookup(s.remote);
                        if (hit && hit->range == svc.netrange) break;
                        if (tries == 255)
                            throw ConfigError("service '" + svc.name + "' is covered by narrower netranges");
                    }
                    s.start = static_cast<std::int64_t>(t);
                    const int n = n_conn(rng);
                    std::int64_t c_start = s.start;
                    for (int c = 0; c < n; ++c) {
                        if (c > 0) c_start += static_cast<std::int64_t>(positive_draw(behavior.gap_ms.sample(rng)));
                        Connection conn;
                        conn.outgoing = c == 0 || outgoing(rng);
                        conn.start = c_start;
                        conn.packets = positive_draw(behavior.packets.sample(rng));
                        conn.bytes = positive_draw(behavior.bytes.sample(rng), conn.packets);
                        conn.duration = conn.packets == 1
                                            ? 0
                                            : static_cast<std::int64_t>(positive_draw(behavior.duration_ms.sample(rng)));
                        if (conn.start >= end) break;
                        conn.duration = std::min(conn.duration, end - 1 - conn.start);
                        s.connections.push_back(conn);
                    }
                    s.end = s.start;
                    for (const auto& c : s.connections) s.end = std::max(s.end, c.start + c.duration);
                    s.packet_seed = rng();
                    sessions.push_back(std::move(s));
                }
            }
        }
    }
    std::stable_sort(sessions.begin(), sessions.end(), [](const Session& a, const Session& b) {
        return std::tie(a.start, a.user, a.service) < std::tie(b.start, b.user, b.service);
    });
    truth.sessions = sessions.size();

    PortAllocator ports(config.nat_ips.size(), config.inactive_timeout_ms, derive_seed(config.seed, {0x706f7274}));
    std::vector<std::pair<RawRecord, std::uint32_t>> tagged;
    std::vector<RawRecord> buf;
    for (const auto& s : sessions) {
        const auto& svc = config.services[s.service];
        const std::uint16_t local_port = ports.allocate(s.nat, s.start, s.end);
        const FlowKey up{config.nat_ips[s.nat], local_port, s.remote, svc.port, svc.protocol};
        const std::uint8_t flags = svc.protocol == protocol::tcp ? (tcp_flag::syn | tcp_flag::ack) : 0;
        std::mt19937_64 rng(s.packet_seed);
        buf.clear();
        emit_direction(up, s, true, rng, config, flags, buf);
        emit_direction(up.reversed(), s, false, rng, config, flags, buf);
        for (const auto& r : buf) tagged.emplace_back(r, s.user);
    }
    std::stable_sort(tagged.begin(), tagged.end(),
                     [](const auto& a, const auto& b) { return a.first.start_ts < b.first.start_ts; });
    out.records.reserve(tagged.size());
    truth.record_user.reserve(tagged.size());
    for (auto& [r, u] : tagged) {
        out.records.push_back(r);
        truth.record_user.push_back(u);
    }
    return out;
}

/// Records attributed (or, with `invert`, not attributed) to one user.
inline std::vector<RawRecord> records_for_user(std::span<const RawRecord> records, const GroundTruth& truth,
                                               const std::string& user_id, bool invert = false) {
    if (truth.record_user.size() != records.size())
        throw DimensionError("ground truth does not cover the record sequence");
    const auto it = std::find(truth.users.begin(), truth.users.end(), user_id);
    const auto u = it == truth.users.end() ? UINT32_MAX : static_cast<std::uint32_t>(it - truth.users.begin());
    std::vector<RawRecord> out;
    for (std::size_t i = 0; i < records.size(); ++i)
        if ((truth.record_user[i] == u) != invert) out.push_back(records[i]);
    return out;
}

/// 1 for every grid interval that overlaps one of the user's presence
/// intervals.
inline std::vector<int> presence_labels(const GroundTruth& truth, const std::string& user_id,
                                        std::int64_t grid_start, std::int64_t length, std::size_t count) {
    std::vector<int> labels(count, 0);
    const auto it = truth.presence.find(user_id);
    if (it == truth.presence.end()) return labels;
    for (std::size_t k = 0; k < count; ++k) {
        const std::int64_t lo = grid_start + length * static_cast<std::int64_t>(k), hi = lo + length;
        for (const auto& p : it->second)
            if (p.start < hi && p.end > lo) labels[k] = 1;
    }
    return labels;
}

// ---------------------------------------------------------------------------
// Export

enum class ExportFormat { csv, netflow_v5, truth_csv };

namespace sim_detail {

class CountingBuf : public std::streambuf {
public:
    explicit CountingBuf(std::streambuf* inner) : inner_(inner) {}
    std::uint64_t count = 0;

protected:
    int_type overflow(int_type ch) override {
        if (traits_type::eq_int_type(ch, traits_type::eof())) return traits_type::not_eof(ch);
        ++count;
        return inner_->sputc(traits_type::to_char_type(ch));
    }
    std::streamsize xsputn(const char* s, std::streamsize n) override {
        const auto w = inner_->sputn(s, n);
        count += static_cast<std::uint64_t>(w);
        return w;
    }

private:
    std::streambuf* inner_;
};

} // namespace sim_detail

inline void write_truth_csv(std::ostream& out, const GroundTruth& truth, std::span<const RawRecord> records) {
    if (truth.record_user.size() != records.size())
        throw DimensionError("ground truth does not cover the record sequence");
    out << "kind,user_id,start_ts,end_ts,record_index\n";
    for (const auto& [user, intervals] : truth.presence)
        for (const auto& p : intervals) out << "presence," << user << ',' << p.start << ',' << p.end << ",\n";
    for (std::size_t i = 0; i < records.size(); ++i)
        out << "record," << truth.users.at(truth.record_user[i]) << ',' << records[i].start_ts << ','
            << records[i].end_ts << ',' << i << '\n';
}

/// Returns the number of bytes written.
inline std::uint64_t export_simulation(std::span<const RawRecord> records, const GroundTruth& truth,
                                       ExportFormat format, std::ostream& sink) {
    sim_detail::CountingBuf counter(sink.rdbuf());
    std::ostream out(&counter);
    switch (format) {
    case ExportFormat::csv: write_csv(out, records); break;
    case ExportFormat::netflow_v5: {
        const auto bytes = write_netflow_v5(records);
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        break;
    }
    case ExportFormat::truth_csv: write_truth_csv(out, truth, records); break;
    }
    out.flush();
    if (!out || !sink) throw Error("export failed: sink rejected the output");
    return counter.count;
}

/// Parses a truth CSV. Users are indexed in order of first appearance.
inline GroundTruth read_truth_csv(std::istream& in) {
    auto fail = [](const std::string& what, std::size_t line) {
        return ParseError("line " + std::to_string(line) + ": " + what, line);
    };
    GroundTruth t;
    std::unordered_map<std::string, std::uint32_t> index;
    auto user_index = [&](std::string_view name) {
        auto [it, inserted] = index.try_emplace(std::string(name), static_cast<std::uint32_t>(t.users.size()));
        if (inserted) t.users.emplace_back(name);
        return it->second;
    };
    std::string line;
    if (!std::getline(in, line) || detail::trim(line) != "kind,user_id,start_ts,end_ts,record_index")
        throw fail("not a truth CSV header", 1);
    for (std::size_t n = 2; std::getline(in, line); ++n) {
        if (detail::trim(line).empty()) continue;
        const auto c = detail::split(line);
        if (c.size() != 5) throw fail("expected 5 columns", n);
        const auto start = detail::parse_int<std::int64_t>(c[2]);
        const auto end = detail::parse_int<std::int64_t>(c[3]);
        if (!start || !end) throw fail("bad timestamp", n);
        if (c[0] == "presence") {
            user_index(c[1]);
            t.presence[std::string(c[1])].push_back({*start, *end});
        } else if (c[0] == "record") {
            const auto idx = detail::parse_uint<std::uint64_t>(c[4]);
            if (!idx || *idx != t.record_user.size()) throw fail("record indices must be consecutive from 0", n);
            t.record_user.push_back(user_index(c[1]));
        } else {
            throw fail("unknown row kind '" + std::string(c[0]) + "'", n);
        }
    }
    return t;
}

// ---------------------------------------------------------------------------
// Scenario documents

namespace sim_detail {

inline nlohmann::json lognormal_to_json(const LogNormal& d) { return {{"mu", d.mu}, {"sigma", d.sigma}}; }

inline LogNormal lognormal_from_json(const nlohmann::json& j) {
    // Either the raw parameters or the median of the distribution.
    if (j.contains("median")) return {std::log(j.at("median").get<double>()), j.at("sigma").get<double>()};
    return {j.at("mu").get<double>(), j.at("sigma").get<double>()};
}

inline std::uint8_t protocol_from_json(const nlohmann::json& j) {
    if (j.is_number()) return j.get<std::uint8_t>();
    const auto s = j.get<std::string>();
    if (s == "tcp") return protocol::tcp;
    if (s == "udp") return protocol::udp;
    throw ConfigError("unknown protocol '" + s + "'");
}

} // namespace sim_detail

inline nlohmann::json scenario_to_json(const SimulationConfig& c) {
    using namespace sim_detail;
    nlohmann::json j;
    j["format"] = "natfp.scenario";
    j["version"] = 1;
    j["seed"] = c.seed;
    j["start_ms"] = c.start_ms;
    j["duration_ms"] = c.duration_ms;
    j["inactive_timeout_ms"] = c.inactive_timeout_ms;
    j["active_timeout_ms"] = c.active_timeout_ms;
    auto& nat = j["nat_ips"] = nlohmann::json::array();
    for (auto ip : c.nat_ips) nat.push_back(to_string(ip));
    auto& prefixes = j["local_prefixes"] = nlohmann::json::array();
    for (const auto& p : c.local_prefixes) prefixes.push_back(to_string(p));
    auto& services = j["services"] = nlohmann::json::array();
    for (const auto& s : c.services)
        services.push_back({{"name", s.name},
                            {"first_ip", to_string(s.netrange.first_ip)},
                            {"last_ip", to_string(s.netrange.last_ip)},
                            {"port", s.port},
                            {"protocol", s.protocol == protocol::udp ? "udp" : "tcp"}});
    auto& users = j["users"] = nlohmann::json::array();
    for (const auto& u : c.users) {
        nlohmann::json ju{{"user_id", u.user_id}};
        auto& behaviors = ju["services"] = nlohmann::json::array();
        for (const auto& b : u.services)
            behaviors.push_back({{"service", b.service},
                                 {"session_rate", b.session_rate},
                                 {"records_per_obf", {b.records_per_obf.min, b.records_per_obf.max}},
                                 {"gap_ms", lognormal_to_json(b.gap_ms)},
                                 {"packets", lognormal_to_json(b.packets)},
                                 {"bytes", lognormal_to_json(b.bytes)},
                                 {"duration_ms", lognormal_to_json(b.duration_ms)},
                                 {"outgoing_fraction", b.outgoing_fraction}});
        users.push_back(std::move(ju));
    }
    auto& schedule = j["schedule"] = nlohmann::json::object();
    for (const auto& [user, intervals] : c.schedule) {
        auto& arr = schedule[user] = nlohmann::json::array();
        for (const auto& p : intervals) arr.push_back({p.start, p.end});
    }
    return j;
}

inline SimulationConfig scenario_from_json(const nlohmann::json& j) {
    using namespace sim_detail;
    try {
        if (j.contains("format") && j.at("format") != "natfp.scenario") throw ConfigError("not a scenario document");
        SimulationConfig c;
        c.seed = j.value("seed", std::uint64_t{0});
        c.start_ms = j.value("start_ms", c.start_ms);
        c.duration_ms = j.at("duration_ms").get<std::int64_t>();
        c.inactive_timeout_ms = j.value("inactive_timeout_ms", c.inactive_timeout_ms);
        c.active_timeout_ms = j.value("active_timeout_ms", c.active_timeout_ms);
        for (const auto& ip : j.at("nat_ips")) c.nat_ips.push_back(parse_ipv4(ip.get<std::string>()));
        if (j.contains("local_prefixes"))
            for (const auto& p : j.at("local_prefixes")) c.local_prefixes.push_back(parse_cidr(p.get<std::string>()));
        for (const auto& js : j.at("services")) {
            ServiceDefinition s;
            s.name = js.at("name").get<std::string>();
            if (js.contains("cidr")) {
                const auto cidr = parse_cidr(js.at("cidr").get<std::string>());
                s.netrange = {cidr.first(), cidr.last(), RangeSource::cache};
            } else {
                s.netrange = {parse_ipv4(js.at("first_ip").get<std::string>()),
                              parse_ipv4(js.at("last_ip").get<std::string>()), RangeSource::cache};
            }
            s.port = js.at("port").get<std::uint16_t>();
            s.protocol = js.contains("protocol") ? protocol_from_json(js.at("protocol")) : protocol::tcp;
            c.services.push_back(std::move(s));
        }
        for (const auto& ju : j.at("users")) {
            UserBehaviorProfile u;
            u.user_id = ju.at("user_id").get<std::string>();
            for (const auto& jb : ju.at("services")) {
                ServiceBehavior b;
                b.service = jb.at("service").get<std::string>();
                b.session_rate = jb.at("session_rate").get<double>();
                if (jb.contains("records_per_obf")) {
                    const auto& r = jb.at("records_per_obf");
                    b.records_per_obf = {r.at(0).get<int>(), r.at(1).get<int>()};
                }
                if (jb.contains("gap_ms")) b.gap_ms = lognormal_from_json(jb.at("gap_ms"));
                if (jb.contains("packets")) b.packets = lognormal_from_json(jb.at("packets"));
                if (jb.contains("bytes")) b.bytes = lognormal_from_json(jb.at("bytes"));
                if (jb.contains("duration_ms")) b.duration_ms = lognormal_from_json(jb.at("duration_ms"));
                b.outgoing_fraction = jb.value("outgoing_fraction", b.outgoing_fraction);
                u.services.push_back(std::move(b));
            }
            c.users.push_back(std::move(u));
        }
        if (j.contains("schedule"))
            for (const auto& [user, arr] : j.at("schedule").items())
                for (const auto& p : arr)
                    c.schedule[user].push_back({p.at(0).get<std::int64_t>(), p.at(1).get<std::int64_t>()});
        c.validate();
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed scenario: ") + e.what());
    } catch (const ParseError& e) {
        throw ConfigError(std::string("malformed scenario: ") + e.what());
    }
}

inline SimulationConfig load_scenario(std::istream& in) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("scenario is not valid JSON: ") + e.what());
    }
    return scenario_from_json(j);
}

} // namespace natfp
