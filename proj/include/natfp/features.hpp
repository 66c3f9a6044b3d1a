#pragma once

// Turns OBFs into observation sequences for the HMM experts.

#include <algorithm>
#include <string>
#include <string_view>
#include <vector>

#include "natfp/error.hpp"
#include "natfp/netflow.hpp"
#include "natfp/whois.hpp"

namespace natfp {

enum class Feature { gap, packets, bytes, direction };

inline std::string_view to_string(Feature f) {
    switch (f) {
    case Feature::gap: return "Gap";
    case Feature::packets: return "Pkts";
    case Feature::bytes: return "Bytes";
    case Feature::direction: return "Direction";
    }
    return "?";
}

using Observation = std::vector<double>;
using ObservationSequence = std::vector<Observation>;

/// An ordered choice of one to three features.
class FeatureSubset {
public:
    FeatureSubset() = default;
    FeatureSubset(std::initializer_list<Feature> members) : members_(members) { validate(); }
    explicit FeatureSubset(std::vector<Feature> members) : members_(std::move(members)) { validate(); }

    const std::vector<Feature>& members() const { return members_; }
    std::size_t size() const { return members_.size(); }

    /// Position of `f` in this subset, or npos.
    std::size_t index_of(Feature f) const {
        auto it = std::find(members_.begin(), members_.end(), f);
        return it == members_.end() ? npos : static_cast<std::size_t>(it - members_.begin());
    }

    /// "Direction+Pkts" style tag, used in model files.
    std::string tag() const {
        std::string s;
        for (auto f : members_) {
            if (!s.empty()) s += '+';
            s += to_string(f);
        }
        return s;
    }

    static FeatureSubset from_tag(std::string_view tag) {
        std::vector<Feature> members;
        for (auto part : detail::split(tag, '+')) {
            bool found = false;
            for (auto f : {Feature::gap, Feature::packets, Feature::bytes, Feature::direction}) {
                if (to_string(f) == part) {
                    members.push_back(f);
                    found = true;
                }
            }
            if (!found) throw ParseError("unknown feature '" + std::string(part) + "'", 0);
        }
        return FeatureSubset(std::move(members));
    }

    friend bool operator==(const FeatureSubset&, const FeatureSubset&) = default;

    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

private:
    void validate() const {
        if (members_.empty() || members_.size() > 3)
            throw ConfigError("a feature subset holds one to three features");
        for (std::size_t i = 0; i < members_.size(); ++i)
            for (std::size_t j = i + 1; j < members_.size(); ++j)
                if (members_[i] == members_[j]) throw ConfigError("duplicate feature in subset");
    }

    std::vector<Feature> members_;
};

/// The fourteen subsets of {Gap, Packets, Bytes, Direction} with at most
/// three members, in the fixed order the trainer iterates them.
inline const std::vector<FeatureSubset>& enumerate_feature_subsets() {
    using F = Feature;
    static const std::vector<FeatureSubset> subsets = {
        {F::packets},
        {F::bytes},
        {F::gap},
        {F::direction},
        {F::packets, F::bytes},
        {F::packets, F::gap},
        {F::gap, F::bytes},
        {F::direction, F::bytes},
        {F::direction, F::packets},
        {F::direction, F::gap},
        {F::gap, F::bytes, F::packets},
        {F::direction, F::bytes, F::packets},
        {F::direction, F::gap, F::packets},
        {F::direction, F::bytes, F::gap},
    };
    return subsets;
}

/// One observation per record of `obf`. Gap is the start-to-start distance
/// to the previous record in ms (0 for the first, never negative); Direction
/// is 1 for records sent by the local endpoint.
inline ObservationSequence featurize(const OrderedBiFlow& obf, const FeatureSubset& subset,
                                     const LocalNetwork& local) {
    if (obf.records.empty()) throw ConfigError("cannot featurize an empty OBF");
    const Endpoint remote = remote_endpoint(obf, local);

    ObservationSequence seq;
    seq.reserve(obf.records.size());
    std::int64_t prev_start = obf.records.front().start_ts;
    for (const auto& r : obf.records) {
        Observation v;
        v.reserve(subset.size());
        for (auto f : subset.members()) {
            switch (f) {
            case Feature::gap:
                v.push_back(static_cast<double>(std::max<std::int64_t>(0, r.start_ts - prev_start)));
                break;
            case Feature::packets: v.push_back(static_cast<double>(r.packets)); break;
            case Feature::bytes: v.push_back(static_cast<double>(r.bytes)); break;
            case Feature::direction: v.push_back(r.key.src() == remote ? 0.0 : 1.0); break;
            }
        }
        prev_start = r.start_ts;
        seq.push_back(std::move(v));
    }
    return seq;
}

} // namespace natfp
