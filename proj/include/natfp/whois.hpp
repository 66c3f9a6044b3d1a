#pragma once

// Netrange resolution: maps a remote address to the smallest registered
// block containing it, backed by a persistent cache so that the pipeline can
// run without network access.

#include <concepts>
#include <atomic>
#include <cctype>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <netdb.h>
#include <sys/socket.h>
#include <sys/time.h>
#include <sys/types.h>
#include <unistd.h>

#include "natfp/error.hpp"
#include "natfp/netflow.hpp"

namespace natfp {

enum class RangeSource { arin, ripe, apnic, iana, lacnic, reserved, cache };

inline std::string_view to_string(RangeSource s) {
    switch (s) {
    case RangeSource::arin: return "arin";
    case RangeSource::ripe: return "ripe";
    case RangeSource::apnic: return "apnic";
    case RangeSource::iana: return "iana";
    case RangeSource::lacnic: return "lacnic";
    case RangeSource::reserved: return "reserved";
    case RangeSource::cache: return "cache";
    }
    return "cache";
}

inline std::optional<RangeSource> range_source_from_string(std::string_view s) {
    for (auto src : {RangeSource::arin, RangeSource::ripe, RangeSource::apnic, RangeSource::iana,
                     RangeSource::lacnic, RangeSource::reserved, RangeSource::cache})
        if (to_string(src) == s) return src;
    return std::nullopt;
}

/// An inclusive address block. Comparison ignores `source`.
struct NetRange {
    Ipv4 first_ip;
    Ipv4 last_ip;
    RangeSource source = RangeSource::cache;

    std::uint64_t size() const { return std::uint64_t{last_ip.value} - first_ip.value + 1; }
    bool contains(Ipv4 ip) const { return first_ip <= ip && ip <= last_ip; }

    friend bool operator==(const NetRange& x, const NetRange& y) {
        return x.first_ip == y.first_ip && x.last_ip == y.last_ip;
    }
    friend auto operator<=>(const NetRange& x, const NetRange& y) {
        return std::tie(x.first_ip, x.last_ip) <=> std::tie(y.first_ip, y.last_ip);
    }
};

inline std::string to_string(const NetRange& r) {
    return to_string(r.first_ip) + "-" + to_string(r.last_ip);
}

/// Smaller block wins; equal sizes fall back to the lower first address.
inline bool narrower(const NetRange& x, const NetRange& y) {
    return std::pair(x.size(), x.first_ip) < std::pair(y.size(), y.first_ip);
}

/// A network service: the provider's netrange plus the contacted port.
struct ServiceKey {
    NetRange netrange;
    std::uint16_t port = 0;

    friend bool operator==(const ServiceKey&, const ServiceKey&) = default;
    friend auto operator<=>(const ServiceKey& x, const ServiceKey& y) {
        return std::tie(x.netrange, x.port) <=> std::tie(y.netrange, y.port);
    }
};

inline std::string to_string(const ServiceKey& k) {
    return to_string(k.netrange) + ":" + std::to_string(k.port);
}

/// Blocks no registry owns: RFC 1918, loopback and link-local.
inline const std::vector<NetRange>& reserved_ranges() {
    static const std::vector<NetRange> ranges = [] {
        std::vector<NetRange> v;
        for (auto cidr : {"10.0.0.0/8", "172.16.0.0/12", "192.168.0.0/16", "127.0.0.0/8", "169.254.0.0/16"}) {
            auto c = parse_cidr(cidr);
            v.push_back({c.first(), c.last(), RangeSource::reserved});
        }
        return v;
    }();
    return ranges;
}

inline std::optional<NetRange> reserved_range_of(Ipv4 ip) {
    for (const auto& r : reserved_ranges())
        if (r.contains(ip)) return r;
    return std::nullopt;
}

class CacheMissError : public Error {
public:
    explicit CacheMissError(Ipv4 ip)
        : Error("no cached netrange for " + to_string(ip)), ip_(ip) {}
    Ipv4 ip() const { return ip_; }

private:
    Ipv4 ip_;
};

class ResolutionError : public Error {
public:
    using Error::Error;
};

class AmbiguousLocalityError : public Error {
public:
    using Error::Error;
};

// ---------------------------------------------------------------------------
// Response parsing

namespace detail {

// Accepts "a.b.c.d", and the abbreviated forms some registries print in
// CIDR notation ("200.7.84/23").
inline std::optional<Ipv4> parse_loose_ipv4(std::string_view s) {
    int dots = static_cast<int>(std::count(s.begin(), s.end(), '.'));
    std::string padded(s);
    for (int i = dots; i < 3; ++i) padded += ".0";
    return try_parse_ipv4(padded);
}

inline std::optional<NetRange> parse_range_value(std::string_view v, RangeSource src) {
    v = trim(v);
    if (auto dash = v.find('-'); dash != std::string_view::npos) {
        auto a = try_parse_ipv4(trim(v.substr(0, dash)));
        auto b = try_parse_ipv4(trim(v.substr(dash + 1)));
        if (!a || !b || *b < *a) return std::nullopt;
        return NetRange{*a, *b, src};
    }
    if (auto slash = v.find('/'); slash != std::string_view::npos) {
        auto base = parse_loose_ipv4(trim(v.substr(0, slash)));
        auto len = parse_int<int>(trim(v.substr(slash + 1)));
        if (!base || !len || *len < 0 || *len > 32) return std::nullopt;
        Cidr c{*base, *len};
        return NetRange{c.first(), c.last(), src};
    }
    return std::nullopt;
}

inline std::string lower(std::string_view s) {
    std::string out(s);
    for (auto& ch : out) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    return out;
}

} // namespace detail

/// Extracts every address block announced in a whois response
/// (NetRange, inetnum and CIDR attributes).
inline std::vector<NetRange> parse_whois_response(std::string_view text, RangeSource src) {
    std::vector<NetRange> out;
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
        std::string_view l = detail::trim(line);
        if (l.empty() || l.front() == '%' || l.front() == '#') continue;
        auto colon = l.find(':');
        if (colon == std::string_view::npos) continue;
        auto key = detail::lower(detail::trim(l.substr(0, colon)));
        auto value = l.substr(colon + 1);
        if (key == "netrange" || key == "inetnum") {
            if (auto r = detail::parse_range_value(value, src)) out.push_back(*r);
        } else if (key == "cidr") {
            for (auto part : detail::split(value, ','))
                if (auto r = detail::parse_range_value(part, src)) out.push_back(*r);
        }
    }
    return out;
}

/// The block that `ip` falls in with the fewest addresses, if any.
inline std::optional<NetRange> smallest_containing(std::span<const NetRange> ranges, Ipv4 ip) {
    std::optional<NetRange> best;
    for (const auto& r : ranges)
        if (r.contains(ip) && (!best || narrower(r, *best))) best = r;
    return best;
}

// ---------------------------------------------------------------------------
// Cache

struct CacheEntry {
    NetRange range;
    std::int64_t retrieved_at_ms = 0;
};

/// Thread-safe store of resolved netranges. Readers share a lock; inserts
/// take it exclusively.
class WhoisCache {
public:
    WhoisCache() = default;
    WhoisCache(const WhoisCache& other) : entries_(other.snapshot()) {}
    WhoisCache& operator=(const WhoisCache& other) {
        auto copy = other.snapshot();
        std::unique_lock lock(mutex_);
        entries_ = std::move(copy);
        return *this;
    }

    std::optional<CacheEntry> lookup(Ipv4 ip) const {
        std::shared_lock lock(mutex_);
        const CacheEntry* best = nullptr;
        for (const auto& e : entries_)
            if (e.range.contains(ip) && (!best || narrower(e.range, best->range))) best = &e;
        if (!best) return std::nullopt;
        return *best;
    }

    /// Adds a range, or refreshes its timestamp if already present.
    void insert(const NetRange& range, std::int64_t retrieved_at_ms) {
        std::unique_lock lock(mutex_);
        for (auto& e : entries_) {
            if (e.range == range) {
                e = {range, retrieved_at_ms};
                return;
            }
        }
        entries_.push_back({range, retrieved_at_ms});
    }

    std::size_t size() const {
        std::shared_lock lock(mutex_);
        return entries_.size();
    }

    std::vector<CacheEntry> snapshot() const {
        std::shared_lock lock(mutex_);
        return entries_;
    }

    /// Reads `first_ip,last_ip,source,retrieved_at_ms` lines. Blank lines and
    /// lines starting with '#' are skipped.
    static WhoisCache load(std::istream& in) {
        WhoisCache cache;
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            auto l = detail::trim(line);
            if (l.empty() || l.front() == '#') continue;
            auto f = detail::split(l);
            auto bad = [&] {
                return ParseError("whois cache line " + std::to_string(line_no) + ": malformed entry", line_no);
            };
            if (f.size() != 4) throw bad();
            auto a = try_parse_ipv4(f[0]);
            auto b = try_parse_ipv4(f[1]);
            auto src = range_source_from_string(f[2]);
            auto ts = detail::parse_int<std::int64_t>(f[3]);
            if (!a || !b || !src || !ts || *b < *a) throw bad();
            cache.insert({*a, *b, *src}, *ts);
        }
        return cache;
    }

    static WhoisCache load_file(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw Error("cannot open whois cache " + path.string());
        return load(in);
    }

    /// Writes entries sorted by (first_ip, last_ip) so output is stable.
    void save(std::ostream& out) const {
        auto entries = snapshot();
        std::sort(entries.begin(), entries.end(),
                  [](const CacheEntry& x, const CacheEntry& y) { return x.range < y.range; });
        for (const auto& e : entries)
            out << to_string(e.range.first_ip) << ',' << to_string(e.range.last_ip) << ','
                << to_string(e.range.source) << ',' << e.retrieved_at_ms << '\n';
    }

    void save_file(const std::filesystem::path& path) const {
        std::ofstream out(path);
        if (!out) throw Error("cannot write whois cache " + path.string());
        save(out);
        if (!out) throw Error("failed writing whois cache " + path.string());
    }

private:
    mutable std::shared_mutex mutex_;
    std::vector<CacheEntry> entries_;
};

// ---------------------------------------------------------------------------
// Transport

struct RirServer {
    RangeSource source;
    std::string host;
    std::uint16_t port = 43;
};

inline std::vector<RirServer> default_rir_servers() {
    return {{RangeSource::arin, "whois.arin.net"},
            {RangeSource::ripe, "whois.ripe.net"},
            {RangeSource::apnic, "whois.apnic.net"},
            {RangeSource::iana, "whois.iana.org"},
            {RangeSource::lacnic, "whois.lacnic.net"}};
}

class WhoisTransport {
public:
    virtual ~WhoisTransport() = default;
    /// Raw response text, or nullopt if the server could not be reached.
    virtual std::optional<std::string> query(const RirServer& server, Ipv4 ip) = 0;
};

/// Plain whois over TCP: send "<ip>\r\n", read until the server closes.
class TcpWhoisTransport : public WhoisTransport {
public:
    explicit TcpWhoisTransport(std::chrono::milliseconds timeout = std::chrono::seconds(10))
        : timeout_(timeout) {}

    std::optional<std::string> query(const RirServer& server, Ipv4 ip) override {
        addrinfo hints{};
        hints.ai_family = AF_UNSPEC;
        hints.ai_socktype = SOCK_STREAM;
        addrinfo* res = nullptr;
        const auto port = std::to_string(server.port);
        if (getaddrinfo(server.host.c_str(), port.c_str(), &hints, &res) != 0) return std::nullopt;
        std::unique_ptr<addrinfo, decltype(&freeaddrinfo)> guard(res, freeaddrinfo);

        for (auto* ai = res; ai; ai = ai->ai_next) {
            int fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
            if (fd < 0) continue;
            Socket sock{fd};
            timeval tv{};
            tv.tv_sec = static_cast<time_t>(timeout_.count() / 1000);
            tv.tv_usec = static_cast<suseconds_t>((timeout_.count() % 1000) * 1000);
            ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
            ::setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof tv);
            if (::connect(fd, ai->ai_addr, ai->ai_addrlen) != 0) continue;

            const std::string request = to_string(ip) + "\r\n";
            if (::send(fd, request.data(), request.size(), 0) != static_cast<ssize_t>(request.size()))
                continue;
            std::string response;
            char buf[4096];
            while (true) {
                ssize_t n = ::recv(fd, buf, sizeof buf, 0);
                if (n < 0) return std::nullopt;
                if (n == 0) break;
                response.append(buf, static_cast<std::size_t>(n));
            }
            return response;
        }
        return std::nullopt;
    }

private:
    struct Socket {
        int fd;
        ~Socket() { ::close(fd); }
    };
    std::chrono::milliseconds timeout_;
};

/// Serves recorded responses from `<dir>/<rir>_<ip>.txt`.
class ReplayTransport : public WhoisTransport {
public:
    explicit ReplayTransport(std::filesystem::path dir) : dir_(std::move(dir)) {}

    std::optional<std::string> query(const RirServer& server, Ipv4 ip) override {
        auto path = dir_ / (std::string(to_string(server.source)) + "_" + to_string(ip) + ".txt");
        std::ifstream in(path, std::ios::binary);
        if (!in) return std::nullopt;
        std::ostringstream ss;
        ss << in.rdbuf();
        return ss.str();
    }

private:
    std::filesystem::path dir_;
};

// ---------------------------------------------------------------------------
// Resolution

enum class ResolveMode { offline, online };

inline std::int64_t wall_clock_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
}

class WhoisResolver {
public:
    struct Options {
        ResolveMode mode = ResolveMode::offline;
        std::vector<RirServer> servers = default_rir_servers();
        /// Online mode re-queries entries older than this; 0 means never.
        std::int64_t max_age_ms = 0;
        std::function<std::int64_t()> clock = wall_clock_ms;
    };

    WhoisResolver(WhoisCache& cache, Options options, WhoisTransport* transport = nullptr)
        : cache_(cache), options_(std::move(options)), transport_(transport) {
        if (options_.mode == ResolveMode::online && !transport_)
            throw ConfigError("online whois resolution needs a transport");
    }

    NetRange resolve(Ipv4 ip) {
        if (auto r = reserved_range_of(ip)) return *r;
        if (auto hit = cache_.lookup(ip)) {
            const bool stale = options_.mode == ResolveMode::online && options_.max_age_ms > 0 &&
                               options_.clock() - hit->retrieved_at_ms > options_.max_age_ms;
            if (!stale) return hit->range;
        }
        if (options_.mode == ResolveMode::offline) throw CacheMissError(ip);

        std::vector<NetRange> candidates;
        std::size_t answered = 0;
        for (const auto& server : options_.servers) {
            ++queries_;
            auto response = transport_->query(server, ip);
            if (!response) continue;
            ++answered;
            for (const auto& r : parse_whois_response(*response, server.source))
                candidates.push_back(r);
        }
        if (answered == 0) throw ResolutionError("no whois server answered for " + to_string(ip));
        auto best = smallest_containing(candidates, ip);
        if (!best) throw ResolutionError("no whois server returned a range containing " + to_string(ip));
        cache_.insert(*best, options_.clock());
        return *best;
    }

    /// Number of registry queries issued so far.
    std::size_t query_count() const { return queries_.load(); }

private:
    WhoisCache& cache_;
    Options options_;
    WhoisTransport* transport_;
    std::atomic<std::size_t> queries_{0};
};

/// Offline lookup: reserved blocks, then the smallest cached range.
inline NetRange resolve_netrange(Ipv4 ip, const WhoisCache& cache) {
    if (auto r = reserved_range_of(ip)) return *r;
    if (auto hit = cache.lookup(ip)) return hit->range;
    throw CacheMissError(ip);
}

/// The remote endpoint of an OBF: the one outside `local`.
inline Endpoint remote_endpoint(const OrderedBiFlow& obf, const LocalNetwork& local) {
    const bool a_local = local.contains(obf.a.ip);
    const bool b_local = local.contains(obf.b.ip);
    if (a_local == b_local)
        throw AmbiguousLocalityError("OBF " + to_string(obf.a) + " <-> " + to_string(obf.b) +
                                     (a_local ? " has two local endpoints" : " has no local endpoint"));
    return a_local ? obf.b : obf.a;
}

template <typename Resolve>
    requires std::invocable<Resolve&, Ipv4>
ServiceKey service_key_of(const OrderedBiFlow& obf, const LocalNetwork& local, Resolve&& resolve) {
    const Endpoint remote = remote_endpoint(obf, local);
    return ServiceKey{resolve(remote.ip), remote.port};
}

inline ServiceKey service_key_of(const OrderedBiFlow& obf, const LocalNetwork& local, const WhoisCache& cache) {
    return service_key_of(obf, local, [&](Ipv4 ip) { return resolve_netrange(ip, cache); });
}

} // namespace natfp
