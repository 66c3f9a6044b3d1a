#pragma once

// NetFlow raw records, flows and Ordered Bi-directional Flows (OBFs).
//
// Input comes either as NetFlow v5 export packets or as a CSV dump with one
// record per line. Timestamps are milliseconds since the Unix epoch.

#include <algorithm>
#include <array>
#include <charconv>
#include <compare>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "natfp/error.hpp"

namespace natfp {

// ---------------------------------------------------------------------------
// Addresses

struct Ipv4 {
    std::uint32_t value = 0;

    constexpr Ipv4() = default;
    constexpr explicit Ipv4(std::uint32_t v) : value(v) {}
    constexpr Ipv4(std::uint8_t a, std::uint8_t b, std::uint8_t c, std::uint8_t d)
        : value((std::uint32_t{a} << 24) | (std::uint32_t{b} << 16) | (std::uint32_t{c} << 8) | d) {}

    friend constexpr auto operator<=>(const Ipv4&, const Ipv4&) = default;
};

inline std::optional<Ipv4> try_parse_ipv4(std::string_view s) {
    std::uint32_t out = 0;
    const char* p = s.data();
    const char* end = s.data() + s.size();
    for (int octet = 0; octet < 4; ++octet) {
        if (octet > 0) {
            if (p == end || *p != '.') return std::nullopt;
            ++p;
        }
        unsigned v = 0;
        auto [next, ec] = std::from_chars(p, end, v);
        if (ec != std::errc{} || next == p || next - p > 3 || v > 255) return std::nullopt;
        out = (out << 8) | v;
        p = next;
    }
    if (p != end) return std::nullopt;
    return Ipv4{out};
}

inline Ipv4 parse_ipv4(std::string_view s) {
    auto ip = try_parse_ipv4(s);
    if (!ip) throw ParseError("invalid IPv4 address '" + std::string(s) + "'", 0);
    return *ip;
}

inline std::string to_string(Ipv4 ip) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%u.%u.%u.%u", (ip.value >> 24) & 0xff, (ip.value >> 16) & 0xff,
                  (ip.value >> 8) & 0xff, ip.value & 0xff);
    return buf;
}

/// An IPv4 prefix such as 192.168.0.0/16.
struct Cidr {
    Ipv4 base;
    int prefix_len = 32;

    std::uint32_t mask() const {
        return prefix_len == 0 ? 0u : ~std::uint32_t{0} << (32 - prefix_len);
    }
    Ipv4 first() const { return Ipv4{base.value & mask()}; }
    Ipv4 last() const { return Ipv4{(base.value & mask()) | ~mask()}; }
    bool contains(Ipv4 ip) const { return (ip.value & mask()) == (base.value & mask()); }

    friend bool operator==(const Cidr&, const Cidr&) = default;
};

inline Cidr parse_cidr(std::string_view s) {
    auto slash = s.find('/');
    Cidr c;
    c.base = parse_ipv4(s.substr(0, slash));
    if (slash != std::string_view::npos) {
        auto len = s.substr(slash + 1);
        int v = -1;
        auto [next, ec] = std::from_chars(len.data(), len.data() + len.size(), v);
        if (ec != std::errc{} || next != len.data() + len.size() || v < 0 || v > 32)
            throw ParseError("invalid prefix length in '" + std::string(s) + "'", 0);
        c.prefix_len = v;
    }
    return c;
}

inline std::string to_string(const Cidr& c) {
    return to_string(c.first()) + "/" + std::to_string(c.prefix_len);
}

/// The monitored side of the network: a list of prefixes whose addresses are
/// "local". Behind a NAT these are the public NAT addresses.
struct LocalNetwork {
    std::vector<Cidr> prefixes;

    bool contains(Ipv4 ip) const {
        return std::any_of(prefixes.begin(), prefixes.end(),
                           [ip](const Cidr& c) { return c.contains(ip); });
    }

    static LocalNetwork parse(const std::vector<std::string>& cidrs) {
        LocalNetwork n;
        for (const auto& s : cidrs) n.prefixes.push_back(parse_cidr(s));
        return n;
    }

    std::vector<std::string> to_strings() const {
        std::vector<std::string> out;
        for (const auto& c : prefixes) out.push_back(to_string(c));
        return out;
    }
};

struct Endpoint {
    Ipv4 ip;
    std::uint16_t port = 0;

    friend constexpr auto operator<=>(const Endpoint&, const Endpoint&) = default;
};

inline std::string to_string(const Endpoint& e) {
    return to_string(e.ip) + ":" + std::to_string(e.port);
}

// ---------------------------------------------------------------------------
// Records

struct FlowKey {
    Ipv4 ip_src;
    std::uint16_t port_src = 0;
    Ipv4 ip_dst;
    std::uint16_t port_dst = 0;
    std::uint8_t protocol = 0;

    Endpoint src() const { return {ip_src, port_src}; }
    Endpoint dst() const { return {ip_dst, port_dst}; }
    FlowKey reversed() const { return {ip_dst, port_dst, ip_src, port_src, protocol}; }

    friend constexpr auto operator<=>(const FlowKey&, const FlowKey&) = default;
};

inline FlowKey reverse(const FlowKey& k) { return k.reversed(); }

namespace protocol {
inline constexpr std::uint8_t icmp = 1;
inline constexpr std::uint8_t tcp = 6;
inline constexpr std::uint8_t udp = 17;
} // namespace protocol

namespace tcp_flag {
inline constexpr std::uint8_t fin = 0x01;
inline constexpr std::uint8_t syn = 0x02;
inline constexpr std::uint8_t rst = 0x04;
inline constexpr std::uint8_t psh = 0x08;
inline constexpr std::uint8_t ack = 0x10;
} // namespace tcp_flag

struct RawRecord {
    FlowKey key;
    std::uint64_t packets = 0;
    std::uint64_t bytes = 0;
    std::int64_t start_ts = 0; // ms since epoch
    std::int64_t end_ts = 0;   // ms since epoch
    std::uint8_t tcp_flags = 0;
    std::uint8_t tos = 0;

    friend bool operator==(const RawRecord&, const RawRecord&) = default;
};

/// All raw records sharing one exact 5-tuple key, in input order.
struct Flow {
    FlowKey key;
    std::vector<RawRecord> records;
};

/// Records exchanged between two endpoints over one protocol, in both
/// directions, sorted by start timestamp. `a` is the numerically smaller
/// endpoint, so the pair is canonical.
struct OrderedBiFlow {
    Endpoint a;
    Endpoint b;
    std::uint8_t protocol = 0;
    std::vector<RawRecord> records;

    bool is_a_to_b(const RawRecord& r) const { return r.key.src() == a; }
    std::int64_t first_start() const { return records.front().start_ts; }

    friend bool operator==(const OrderedBiFlow&, const OrderedBiFlow&) = default;
};

// ---------------------------------------------------------------------------
// Assembly

/// Groups records by exact key. Output is sorted by key.
inline std::vector<Flow> assemble_flows(std::span<const RawRecord> records) {
    std::map<FlowKey, std::vector<RawRecord>> groups;
    for (const auto& r : records) groups[r.key].push_back(r);
    std::vector<Flow> flows;
    flows.reserve(groups.size());
    for (auto& [key, recs] : groups) flows.push_back(Flow{key, std::move(recs)});
    return flows;
}

namespace detail {

// Total order on the records of one OBF: start, end, direction (a->b first),
// then the remaining fields so that equal-looking records still sort stably.
inline bool obf_record_less(const RawRecord& x, const RawRecord& y, const Endpoint& a) {
    const bool x_back = !(x.key.src() == a);
    const bool y_back = !(y.key.src() == a);
    return std::tie(x.start_ts, x.end_ts, x_back, x.packets, x.bytes, x.tcp_flags, x.tos) <
           std::tie(y.start_ts, y.end_ts, y_back, y.packets, y.bytes, y.tcp_flags, y.tos);
}

struct BiKey {
    Endpoint a;
    Endpoint b;
    std::uint8_t protocol;
    friend auto operator<=>(const BiKey&, const BiKey&) = default;
};

inline BiKey bikey_of(const FlowKey& k) {
    auto s = k.src();
    auto d = k.dst();
    if (d < s) std::swap(s, d);
    return {s, d, k.protocol};
}

} // namespace detail

/// Builds the Ordered Bi-directional Flows of a record set. The result does
/// not depend on input order: OBFs are sorted by (first start_ts, a, b,
/// protocol) and records inside each OBF by the total order above.
inline std::vector<OrderedBiFlow> build_obfs(std::span<const RawRecord> records) {
    std::map<detail::BiKey, std::vector<RawRecord>> groups;
    for (const auto& r : records) groups[detail::bikey_of(r.key)].push_back(r);

    std::vector<OrderedBiFlow> out;
    out.reserve(groups.size());
    for (auto& [k, recs] : groups) {
        OrderedBiFlow obf{k.a, k.b, k.protocol, std::move(recs)};
        std::sort(obf.records.begin(), obf.records.end(),
                  [&](const RawRecord& x, const RawRecord& y) {
                      return detail::obf_record_less(x, y, obf.a);
                  });
        out.push_back(std::move(obf));
    }
    std::sort(out.begin(), out.end(), [](const OrderedBiFlow& x, const OrderedBiFlow& y) {
        return std::tie(x.records.front().start_ts, x.a, x.b, x.protocol) <
               std::tie(y.records.front().start_ts, y.a, y.b, y.protocol);
    });
    return out;
}

// ---------------------------------------------------------------------------
// NetFlow v5 wire format

namespace v5 {

inline constexpr std::size_t header_size = 24;
inline constexpr std::size_t record_size = 48;
inline constexpr std::size_t max_records_per_packet = 30;

struct Header {
    std::uint16_t version = 5;
    std::uint16_t count = 0;
    std::uint32_t sys_uptime = 0; // ms since export device boot
    std::uint32_t unix_secs = 0;
    std::uint32_t unix_nsecs = 0;
    std::uint32_t flow_sequence = 0;
    std::uint8_t engine_type = 0;
    std::uint8_t engine_id = 0;
    std::uint16_t sampling_interval = 0;

    friend bool operator==(const Header&, const Header&) = default;
};

struct Record {
    std::uint32_t srcaddr = 0;
    std::uint32_t dstaddr = 0;
    std::uint32_t nexthop = 0;
    std::uint16_t input = 0;
    std::uint16_t output = 0;
    std::uint32_t d_pkts = 0;
    std::uint32_t d_octets = 0;
    std::uint32_t first = 0; // SysUptime at first packet
    std::uint32_t last = 0;  // SysUptime at last packet
    std::uint16_t srcport = 0;
    std::uint16_t dstport = 0;
    std::uint8_t pad1 = 0;
    std::uint8_t tcp_flags = 0;
    std::uint8_t prot = 0;
    std::uint8_t tos = 0;
    std::uint16_t src_as = 0;
    std::uint16_t dst_as = 0;
    std::uint8_t src_mask = 0;
    std::uint8_t dst_mask = 0;
    std::uint16_t pad2 = 0;

    friend bool operator==(const Record&, const Record&) = default;
};

struct Packet {
    Header header;
    std::vector<Record> records;

    /// Epoch milliseconds at which the exporter booted.
    std::int64_t boot_ms() const {
        return std::int64_t{header.unix_secs} * 1000 + header.unix_nsecs / 1'000'000 -
               std::int64_t{header.sys_uptime};
    }
};

namespace detail {

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}
    std::size_t offset() const { return pos_; }
    std::size_t remaining() const { return bytes_.size() - pos_; }
    std::uint8_t u8() { return bytes_[pos_++]; }
    std::uint16_t u16() {
        std::uint16_t v = static_cast<std::uint16_t>((bytes_[pos_] << 8) | bytes_[pos_ + 1]);
        pos_ += 2;
        return v;
    }
    std::uint32_t u32() {
        std::uint32_t v = (std::uint32_t{bytes_[pos_]} << 24) | (std::uint32_t{bytes_[pos_ + 1]} << 16) |
                          (std::uint32_t{bytes_[pos_ + 2]} << 8) | std::uint32_t{bytes_[pos_ + 3]};
        pos_ += 4;
        return v;
    }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

class Writer {
public:
    explicit Writer(std::vector<std::uint8_t>& out) : out_(out) {}
    void u8(std::uint8_t v) { out_.push_back(v); }
    void u16(std::uint16_t v) {
        out_.push_back(static_cast<std::uint8_t>(v >> 8));
        out_.push_back(static_cast<std::uint8_t>(v));
    }
    void u32(std::uint32_t v) {
        for (int shift = 24; shift >= 0; shift -= 8) out_.push_back(static_cast<std::uint8_t>(v >> shift));
    }

private:
    std::vector<std::uint8_t>& out_;
};

} // namespace detail

/// Decodes a concatenation of export packets, keeping every field.
inline std::vector<Packet> decode(std::span<const std::uint8_t> bytes) {
    std::vector<Packet> packets;
    detail::Reader in(bytes);
    while (in.remaining() > 0) {
        const std::size_t packet_offset = in.offset();
        if (in.remaining() < header_size)
            throw ParseError("truncated NetFlow v5 header at byte " + std::to_string(packet_offset),
                             packet_offset);
        Packet p;
        auto& h = p.header;
        h.version = in.u16();
        if (h.version != 5)
            throw ParseError("unsupported NetFlow version " + std::to_string(h.version) + " at byte " +
                                 std::to_string(packet_offset),
                             packet_offset);
        h.count = in.u16();
        h.sys_uptime = in.u32();
        h.unix_secs = in.u32();
        h.unix_nsecs = in.u32();
        h.flow_sequence = in.u32();
        h.engine_type = in.u8();
        h.engine_id = in.u8();
        h.sampling_interval = in.u16();
        if (in.remaining() < std::size_t{h.count} * record_size) {
            const std::size_t record_offset =
                in.offset() + (in.remaining() / record_size) * record_size;
            throw ParseError("NetFlow v5 header at byte " + std::to_string(packet_offset) +
                                 " announces " + std::to_string(h.count) + " records but only " +
                                 std::to_string(in.remaining() / record_size) +
                                 " complete records follow (truncated at byte " +
                                 std::to_string(record_offset) + ")",
                             packet_offset);
        }
        p.records.reserve(h.count);
        for (std::size_t i = 0; i < h.count; ++i) {
            Record r;
            r.srcaddr = in.u32();
            r.dstaddr = in.u32();
            r.nexthop = in.u32();
            r.input = in.u16();
            r.output = in.u16();
            r.d_pkts = in.u32();
            r.d_octets = in.u32();
            r.first = in.u32();
            r.last = in.u32();
            r.srcport = in.u16();
            r.dstport = in.u16();
            r.pad1 = in.u8();
            r.tcp_flags = in.u8();
            r.prot = in.u8();
            r.tos = in.u8();
            r.src_as = in.u16();
            r.dst_as = in.u16();
            r.src_mask = in.u8();
            r.dst_mask = in.u8();
            r.pad2 = in.u16();
            p.records.push_back(r);
        }
        packets.push_back(std::move(p));
    }
    return packets;
}

inline std::vector<std::uint8_t> encode(std::span<const Packet> packets) {
    std::vector<std::uint8_t> bytes;
    detail::Writer out(bytes);
    for (const auto& p : packets) {
        const auto& h = p.header;
        out.u16(h.version);
        out.u16(static_cast<std::uint16_t>(p.records.size()));
        out.u32(h.sys_uptime);
        out.u32(h.unix_secs);
        out.u32(h.unix_nsecs);
        out.u32(h.flow_sequence);
        out.u8(h.engine_type);
        out.u8(h.engine_id);
        out.u16(h.sampling_interval);
        for (const auto& r : p.records) {
            out.u32(r.srcaddr);
            out.u32(r.dstaddr);
            out.u32(r.nexthop);
            out.u16(r.input);
            out.u16(r.output);
            out.u32(r.d_pkts);
            out.u32(r.d_octets);
            out.u32(r.first);
            out.u32(r.last);
            out.u16(r.srcport);
            out.u16(r.dstport);
            out.u8(r.pad1);
            out.u8(r.tcp_flags);
            out.u8(r.prot);
            out.u8(r.tos);
            out.u16(r.src_as);
            out.u16(r.dst_as);
            out.u8(r.src_mask);
            out.u8(r.dst_mask);
            out.u16(r.pad2);
        }
    }
    return bytes;
}

} // namespace v5

/// Parses NetFlow v5 export packets into raw records with absolute
/// timestamps. Fields outside RawRecord are dropped.
inline std::vector<RawRecord> parse_netflow_v5(std::span<const std::uint8_t> bytes) {
    std::vector<RawRecord> out;
    std::size_t offset = 0;
    for (const auto& p : v5::decode(bytes)) {
        const std::int64_t boot = p.boot_ms();
        std::size_t rec_offset = offset + v5::header_size;
        for (const auto& r : p.records) {
            RawRecord rec;
            rec.key = {Ipv4{r.srcaddr}, r.srcport, Ipv4{r.dstaddr}, r.dstport, r.prot};
            rec.packets = r.d_pkts;
            rec.bytes = r.d_octets;
            rec.start_ts = boot + r.first;
            rec.end_ts = boot + r.last;
            rec.tcp_flags = r.tcp_flags;
            rec.tos = r.tos;
            if (rec.packets == 0)
                throw ParseError("NetFlow v5 record at byte " + std::to_string(rec_offset) +
                                     " reports zero packets",
                                 rec_offset);
            if (rec.start_ts > rec.end_ts)
                throw ParseError("NetFlow v5 record at byte " + std::to_string(rec_offset) +
                                     " ends before it starts",
                                 rec_offset);
            out.push_back(rec);
            rec_offset += v5::record_size;
        }
        offset += v5::header_size + p.records.size() * v5::record_size;
    }
    return out;
}

/// Serializes records as v5 export packets of at most 30 records each. Each
/// packet's clock is anchored so that timestamps survive at millisecond
/// precision.
inline std::vector<std::uint8_t> write_netflow_v5(std::span<const RawRecord> records) {
    std::vector<v5::Packet> packets;
    std::uint32_t sequence = 0;
    for (std::size_t begin = 0; begin < records.size(); begin += v5::max_records_per_packet) {
        auto chunk = records.subspan(begin, std::min(v5::max_records_per_packet, records.size() - begin));
        std::int64_t boot = chunk.front().start_ts;
        std::int64_t export_ms = chunk.front().end_ts;
        for (const auto& r : chunk) {
            boot = std::min(boot, r.start_ts);
            export_ms = std::max(export_ms, r.end_ts);
        }
        if (boot < 0) throw ConfigError("NetFlow v5 cannot encode timestamps before the epoch");
        if (export_ms - boot > std::int64_t{UINT32_MAX})
            throw ConfigError("records in one NetFlow v5 packet span more than 2^32 ms");
        v5::Packet p;
        p.header.count = static_cast<std::uint16_t>(chunk.size());
        p.header.sys_uptime = static_cast<std::uint32_t>(export_ms - boot);
        p.header.unix_secs = static_cast<std::uint32_t>(export_ms / 1000);
        p.header.unix_nsecs = static_cast<std::uint32_t>((export_ms % 1000) * 1'000'000);
        p.header.flow_sequence = sequence;
        for (const auto& r : chunk) {
            if (r.packets > UINT32_MAX || r.bytes > UINT32_MAX)
                throw ConfigError("packet or byte counter exceeds the 32-bit NetFlow v5 field");
            v5::Record out;
            out.srcaddr = r.key.ip_src.value;
            out.dstaddr = r.key.ip_dst.value;
            out.d_pkts = static_cast<std::uint32_t>(r.packets);
            out.d_octets = static_cast<std::uint32_t>(r.bytes);
            out.first = static_cast<std::uint32_t>(r.start_ts - boot);
            out.last = static_cast<std::uint32_t>(r.end_ts - boot);
            out.srcport = r.key.port_src;
            out.dstport = r.key.port_dst;
            out.tcp_flags = r.tcp_flags;
            out.prot = r.key.protocol;
            out.tos = r.tos;
            p.records.push_back(out);
        }
        sequence += static_cast<std::uint32_t>(chunk.size());
        packets.push_back(std::move(p));
    }
    return v5::encode(packets);
}

// ---------------------------------------------------------------------------
// CSV

inline constexpr std::array<std::string_view, 11> csv_columns = {
    "ip_src", "port_src", "ip_dst", "port_dst", "protocol", "packets",
    "bytes",  "start_ts", "end_ts", "tcp_flags", "tos"};

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline std::vector<std::string_view> split(std::string_view line, char sep = ',') {
    std::vector<std::string_view> parts;
    std::size_t start = 0;
    while (true) {
        auto pos = line.find(sep, start);
        parts.push_back(trim(line.substr(start, pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return parts;
}

template <typename T>
std::optional<T> parse_uint(std::string_view s) {
    int base = 10;
    if (s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) {
        s.remove_prefix(2);
        base = 16;
    }
    T v{};
    auto [next, ec] = std::from_chars(s.data(), s.data() + s.size(), v, base);
    if (s.empty() || ec != std::errc{} || next != s.data() + s.size()) return std::nullopt;
    return v;
}

template <typename T>
std::optional<T> parse_int(std::string_view s) {
    T v{};
    auto [next, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc{} || next != s.data() + s.size()) return std::nullopt;
    return v;
}

} // namespace detail

/// Parses the CSV record format. The header line must name all eleven
/// columns (in any order; extra columns are ignored).
inline std::vector<RawRecord> parse_csv(std::istream& in) {
    std::string line;
    std::size_t line_no = 0;
    std::array<std::size_t, csv_columns.size()> col{};

    bool have_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!detail::trim(line).empty()) {
            have_header = true;
            break;
        }
    }
    if (!have_header) return {};

    auto header = detail::split(line);
    for (std::size_t c = 0; c < csv_columns.size(); ++c) {
        auto it = std::find(header.begin(), header.end(), csv_columns[c]);
        if (it == header.end())
            throw ParseError("line " + std::to_string(line_no) + ": missing column '" +
                                 std::string(csv_columns[c]) + "'",
                             line_no);
        col[c] = static_cast<std::size_t>(it - header.begin());
    }

    std::vector<RawRecord> out;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        auto fields = detail::split(line);
        if (fields.size() < header.size())
            throw ParseError("line " + std::to_string(line_no) + ": expected " +
                                 std::to_string(header.size()) + " fields, got " +
                                 std::to_string(fields.size()),
                             line_no);
        auto fail = [&](std::size_t c) -> ParseError {
            return ParseError("line " + std::to_string(line_no) + ": invalid " +
                                  std::string(csv_columns[c]) + " '" + std::string(fields[col[c]]) + "'",
                              line_no);
        };
        auto ip = [&](std::size_t c) {
            auto v = try_parse_ipv4(fields[col[c]]);
            if (!v) throw fail(c);
            return *v;
        };
        auto uint = [&](std::size_t c, std::uint64_t max) {
            auto v = detail::parse_uint<std::uint64_t>(fields[col[c]]);
            if (!v || *v > max) throw fail(c);
            return *v;
        };
        auto ts = [&](std::size_t c) {
            auto v = detail::parse_int<std::int64_t>(fields[col[c]]);
            if (!v) throw fail(c);
            return *v;
        };

        RawRecord r;
        r.key.ip_src = ip(0);
        r.key.port_src = static_cast<std::uint16_t>(uint(1, 65535));
        r.key.ip_dst = ip(2);
        r.key.port_dst = static_cast<std::uint16_t>(uint(3, 65535));
        r.key.protocol = static_cast<std::uint8_t>(uint(4, 255));
        r.packets = uint(5, UINT64_MAX);
        r.bytes = uint(6, UINT64_MAX);
        r.start_ts = ts(7);
        r.end_ts = ts(8);
        r.tcp_flags = static_cast<std::uint8_t>(uint(9, 255));
        r.tos = static_cast<std::uint8_t>(uint(10, 255));
        if (r.packets == 0)
            throw ParseError("line " + std::to_string(line_no) + ": zero packets", line_no);
        if (r.start_ts > r.end_ts)
            throw ParseError("line " + std::to_string(line_no) + ": start_ts " +
                                 std::to_string(r.start_ts) + " is after end_ts " +
                                 std::to_string(r.end_ts),
                             line_no);
        out.push_back(r);
    }
    return out;
}

inline std::vector<RawRecord> parse_csv(std::string_view text) {
    std::istringstream in{std::string(text)};
    return parse_csv(in);
}

inline void write_csv(std::ostream& out, std::span<const RawRecord> records) {
    for (std::size_t c = 0; c < csv_columns.size(); ++c) out << (c ? "," : "") << csv_columns[c];
    out << '\n';
    char flags[8];
    for (const auto& r : records) {
        std::snprintf(flags, sizeof flags, "0x%02x", r.tcp_flags);
        out << to_string(r.key.ip_src) << ',' << r.key.port_src << ',' << to_string(r.key.ip_dst) << ','
            << r.key.port_dst << ',' << unsigned{r.key.protocol} << ',' << r.packets << ',' << r.bytes
            << ',' << r.start_ts << ',' << r.end_ts << ',' << flags << ',' << unsigned{r.tos} << '\n';
    }
}

} // namespace natfp
