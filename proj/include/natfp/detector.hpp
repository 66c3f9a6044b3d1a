#pragma once

// Per-interval presence detection with a trained profile.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <istream>
#include <memory>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "natfp/classifiers.hpp"
#include "natfp/error.hpp"
#include "natfp/features.hpp"
#include "natfp/netflow.hpp"
#include "natfp/parallel.hpp"
#include "natfp/trainer.hpp"
#include "natfp/whois.hpp"

namespace natfp {

inline constexpr std::int64_t default_interval_length_ms = 3'600'000;

struct IntervalRecord {
    std::int64_t interval_start = 0;
    std::int64_t interval_length = 0;
    std::vector<double> weighted_counts; ///< one per expert, profile order
    std::vector<std::uint64_t> raw_counts;

    double sum() const { return std::accumulate(weighted_counts.begin(), weighted_counts.end(), 0.0); }
};

struct DetectionResult {
    IntervalRecord record;
    int label = 0;
    double score = 0;
};

enum class ObfOutcome { classified, no_expert, unresolvable, ambiguous };

struct ObfClassification {
    ObfOutcome outcome = ObfOutcome::no_expert;
    std::size_t expert = 0;
    int label = 0;
    double score = 0; ///< per-observation log-likelihood under the expert
};

inline ObfClassification classify_obf_detailed(const UserProfile& profile, const OrderedBiFlow& obf,
                                               const WhoisCache& cache) {
    ObfClassification out;
    ServiceKey key;
    try {
        key = service_key_of(obf, profile.local_side, cache);
    } catch (const CacheMissError&) {
        out.outcome = ObfOutcome::unresolvable;
        return out;
    } catch (const AmbiguousLocalityError&) {
        out.outcome = ObfOutcome::ambiguous;
        return out;
    }
    const auto idx = profile.expert_index(key);
    if (!idx) return out;
    const auto& expert = profile.experts[*idx];
    out.outcome = ObfOutcome::classified;
    out.expert = *idx;
    out.score = sequence_score(expert.hmm, featurize(obf, expert.subset, profile.local_side));
    out.label = out.score >= expert.threshold ? 1 : 0;
    return out;
}

/// (expert index, label), or nothing if no expert covers the OBF's service
/// or its remote address cannot be resolved.
inline std::optional<std::pair<std::size_t, int>> classify_obf(const UserProfile& profile, const OrderedBiFlow& obf,
                                                               const WhoisCache& cache) {
    const auto c = classify_obf_detailed(profile, obf, cache);
    if (c.outcome != ObfOutcome::classified) return std::nullopt;
    return std::pair{c.expert, c.label};
}

inline IntervalRecord aggregate_interval(std::span<const std::pair<std::size_t, int>> classifications,
                                         const UserProfile& profile, std::int64_t interval_start,
                                         std::int64_t interval_length) {
    IntervalRecord r;
    r.interval_start = interval_start;
    r.interval_length = interval_length;
    r.raw_counts.assign(profile.experts.size(), 0);
    for (const auto& [idx, label] : classifications) {
        if (idx >= profile.experts.size()) throw DimensionError("expert index out of range");
        if (label == 1) ++r.raw_counts[idx];
    }
    r.weighted_counts.resize(profile.experts.size());
    for (std::size_t i = 0; i < profile.experts.size(); ++i)
        r.weighted_counts[i] = profile.experts[i].weight * static_cast<double>(r.raw_counts[i]);
    return r;
}

inline int sum_threshold_classify(const IntervalRecord& record, double threshold) {
    return record.sum() >= threshold ? 1 : 0;
}

/// Maps an interval record to a verdict. label == 1 iff score >= 0.5.
class FinalClassifier {
public:
    virtual ~FinalClassifier() = default;
    /// Expected record width, or nullopt if any width is accepted.
    virtual std::optional<std::size_t> dimension() const = 0;
    virtual Prediction classify(const IntervalRecord& record) const = 0;
};

class SumThresholdClassifier : public FinalClassifier {
public:
    explicit SumThresholdClassifier(double threshold) : threshold_(threshold) {}

    std::optional<std::size_t> dimension() const override { return std::nullopt; }

    Prediction classify(const IntervalRecord& record) const override {
        const int label = sum_threshold_classify(record, threshold_);
        // Logistic in the margin, clamped so that the 0.5 cut agrees with the label.
        double score = 1.0 / (1.0 + std::exp(threshold_ - record.sum()));
        if (label == 1) score = std::max(score, 0.5);
        else if (score >= 0.5) score = std::nextafter(0.5, 0.0);
        return {label, score};
    }

    double threshold() const { return threshold_; }

private:
    double threshold_;
};

class ForestClassifier : public FinalClassifier {
public:
    explicit ForestClassifier(RandomForestModel model) : model_(std::move(model)) {}

    std::optional<std::size_t> dimension() const override { return model_.dim; }

    Prediction classify(const IntervalRecord& record) const override {
        return predict(model_, record.weighted_counts);
    }

    const RandomForestModel& model() const { return model_; }

private:
    RandomForestModel model_;
};

/// Contiguous equal-length intervals [start + k*length, start + (k+1)*length).
struct IntervalGrid {
    std::int64_t start = 0;
    std::int64_t length = default_interval_length_ms;
    std::size_t count = 0;

    std::int64_t end() const { return start + length * static_cast<std::int64_t>(count); }

    std::optional<std::size_t> index_of(std::int64_t ts) const {
        if (ts < start || ts >= end()) return std::nullopt;
        return static_cast<std::size_t>((ts - start) / length);
    }

    /// Smallest grid aligned to multiples of `length` that covers every
    /// record start.
    static IntervalGrid covering(std::span<const RawRecord> records, std::int64_t length) {
        if (length <= 0) throw ConfigError("interval length must be positive");
        IntervalGrid g{0, length, 0};
        if (records.empty()) return g;
        auto floor_to = [length](std::int64_t t) { return t >= 0 ? t / length * length : -((-t + length - 1) / length) * length; };
        std::int64_t lo = records.front().start_ts, hi = lo;
        for (const auto& r : records) {
            lo = std::min(lo, r.start_ts);
            hi = std::max(hi, r.start_ts);
        }
        g.start = floor_to(lo);
        g.count = static_cast<std::size_t>((floor_to(hi) - g.start) / length + 1);
        return g;
    }
};

struct DetectionDiagnostics {
    std::size_t obfs = 0;
    std::size_t classified = 0;
    std::size_t positive = 0;
    std::size_t no_expert = 0;
    std::size_t unresolvable = 0;
    std::size_t ambiguous = 0;
    std::size_t outside_grid = 0;
};

/// Classifies and aggregates every OBF into the grid without applying a final
/// classifier. Each OBF goes to the interval holding its first record's start.
inline std::vector<IntervalRecord> interval_records(const UserProfile& profile, std::span<const RawRecord> records,
                                                    const WhoisCache& cache, const IntervalGrid& grid,
                                                    DetectionDiagnostics* diagnostics = nullptr,
                                                    std::size_t jobs = 1) {
    if (grid.length <= 0) throw ConfigError("interval length must be positive");
    const auto obfs = build_obfs(records);
    std::vector<ObfClassification> classes(obfs.size());
    parallel_for(obfs.size(), jobs, [&](std::size_t i) { classes[i] = classify_obf_detailed(profile, obfs[i], cache); });

    std::vector<std::vector<std::pair<std::size_t, int>>> per_interval(grid.count);
    DetectionDiagnostics d;
    d.obfs = obfs.size();
    for (std::size_t i = 0; i < obfs.size(); ++i) {
        const auto& c = classes[i];
        switch (c.outcome) {
        case ObfOutcome::no_expert: ++d.no_expert; continue;
        case ObfOutcome::unresolvable: ++d.unresolvable; continue;
        case ObfOutcome::ambiguous: ++d.ambiguous; continue;
        case ObfOutcome::classified: break;
        }
        const auto slot = grid.index_of(obfs[i].first_start());
        if (!slot) {
            ++d.outside_grid;
            continue;
        }
        ++d.classified;
        d.positive += static_cast<std::size_t>(c.label);
        per_interval[*slot].emplace_back(c.expert, c.label);
    }
    std::vector<IntervalRecord> out;
    out.reserve(grid.count);
    for (std::size_t k = 0; k < grid.count; ++k)
        out.push_back(aggregate_interval(per_interval[k], profile,
                                         grid.start + grid.length * static_cast<std::int64_t>(k), grid.length));
    if (diagnostics) *diagnostics = d;
    return out;
}

inline std::vector<DetectionResult> detect(const UserProfile& profile, std::span<const RawRecord> records,
                                           const WhoisCache& cache, const IntervalGrid& grid,
                                           const FinalClassifier& final, DetectionDiagnostics* diagnostics = nullptr,
                                           std::size_t jobs = 1) {
    if (auto dim = final.dimension(); dim && *dim != profile.experts.size())
        throw DimensionError("final classifier expects " + std::to_string(*dim) + " features but the profile has " +
                             std::to_string(profile.experts.size()) + " experts");
    std::vector<DetectionResult> out;
    for (auto& rec : interval_records(profile, records, cache, grid, diagnostics, jobs)) {
        const auto p = final.classify(rec);
        out.push_back({std::move(rec), p.label, p.score});
    }
    return out;
}

inline std::vector<DetectionResult> detect(const UserProfile& profile, std::span<const RawRecord> records,
                                           const WhoisCache& cache, std::int64_t interval_length,
                                           const FinalClassifier& final, DetectionDiagnostics* diagnostics = nullptr,
                                           std::size_t jobs = 1) {
    return detect(profile, records, cache, IntervalGrid::covering(records, interval_length), final, diagnostics,
                  jobs);
}

inline LabeledDataset to_dataset(std::span<const IntervalRecord> records, std::span<const int> labels) {
    if (records.size() != labels.size()) throw DimensionError("records and labels differ in length");
    LabeledDataset data;
    for (std::size_t i = 0; i < records.size(); ++i) data.rows.push_back({records[i].weighted_counts, labels[i]});
    return data;
}

// ---------------------------------------------------------------------------
// Detection CSV

namespace detector_detail {

inline std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

} // namespace detector_detail

inline void write_detection_csv(std::ostream& out, const UserProfile& profile,
                                std::span<const DetectionResult> results) {
    using detector_detail::format_double;
    out << "interval_start,label,score,weighted_sum";
    for (const auto& e : profile.experts) out << ",w:" << to_string(e.service);
    out << '\n';
    for (const auto& r : results) {
        out << r.record.interval_start << ',' << r.label << ',' << format_double(r.score) << ','
            << format_double(r.record.sum());
        for (double w : r.record.weighted_counts) out << ',' << format_double(w);
        out << '\n';
    }
    if (!out) throw Error("failed writing detection CSV");
}

struct DetectionRow {
    std::int64_t interval_start = 0;
    int label = 0;
    double score = 0;
    double weighted_sum = 0;
    std::vector<double> weighted_counts;
};

struct DetectionTable {
    std::vector<std::string> expert_columns;
    std::vector<DetectionRow> rows;
};

inline DetectionTable read_detection_csv(std::istream& in) {
    auto fail = [](const std::string& what, std::size_t line) {
        return ParseError("line " + std::to_string(line) + ": " + what, line);
    };
    auto parse_real = [&](std::string_view s, std::size_t line) {
        double v = 0;
        auto res = std::from_chars(s.data(), s.data() + s.size(), v);
        if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size())
            throw fail("bad number '" + std::string(s) + "'", line);
        return v;
    };
    DetectionTable t;
    std::string line;
    if (!std::getline(in, line)) throw fail("empty detection CSV", 1);
    const auto header = detail::split(line);
    if (header.size() < 4 || header[0] != "interval_start" || header[1] != "label" || header[2] != "score" ||
        header[3] != "weighted_sum")
        throw fail("not a detection CSV header", 1);
    for (std::size_t i = 4; i < header.size(); ++i) t.expert_columns.emplace_back(header[i]);
    for (std::size_t n = 2; std::getline(in, line); ++n) {
        if (detail::trim(line).empty()) continue;
        const auto cells = detail::split(line);
        if (cells.size() != header.size()) throw fail("expected " + std::to_string(header.size()) + " columns", n);
        DetectionRow r;
        const auto start = detail::parse_int<std::int64_t>(cells[0]);
        if (!start) throw fail("bad interval_start", n);
        r.interval_start = *start;
        if (cells[1] != "0" && cells[1] != "1") throw fail("label must be 0 or 1", n);
        r.label = cells[1] == "1" ? 1 : 0;
        r.score = parse_real(cells[2], n);
        r.weighted_sum = parse_real(cells[3], n);
        for (std::size_t i = 4; i < cells.size(); ++i) r.weighted_counts.push_back(parse_real(cells[i], n));
        t.rows.push_back(std::move(r));
    }
    return t;
}

} // namespace natfp
