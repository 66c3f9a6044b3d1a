#pragma once

// Builds a user profile: one HMM expert per service the user talks to.
//
// For every service with enough OBFs the trainer fits an HMM for each
// (state count, feature subset) pair, turns each into a binary classifier
// by picking the F1-optimal log-likelihood threshold on held-out data mixed
// with other users' OBFs, and keeps the best candidate. Its F1 becomes the
// expert's weight.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "natfp/classifiers.hpp"
#include "natfp/error.hpp"
#include "natfp/features.hpp"
#include "natfp/hmm.hpp"
#include "natfp/netflow.hpp"
#include "natfp/parallel.hpp"
#include "natfp/random.hpp"
#include "natfp/whois.hpp"

namespace natfp {

struct ExpertModel {
    ServiceKey service;
    GaussianHmm hmm;
    FeatureSubset subset;
    double threshold = 0; ///< on per-observation log-likelihood; may be -inf
    double weight = 0;    ///< validation F1, in [0, 1]
};

struct UserProfile {
    std::string user_id;
    std::vector<ExpertModel> experts; ///< sorted by service key
    LocalNetwork local_side;
    std::int64_t created_at_ms = 0;

    std::optional<std::size_t> expert_index(const ServiceKey& key) const {
        auto it = std::lower_bound(experts.begin(), experts.end(), key,
                                   [](const ExpertModel& e, const ServiceKey& k) { return e.service < k; });
        if (it == experts.end() || !(it->service == key)) return std::nullopt;
        return static_cast<std::size_t>(it - experts.begin());
    }
};

class EmptyProfileError : public Error {
public:
    using Error::Error;
};

/// Score used for binarization: log-likelihood per observation, so one
/// threshold applies to OBFs of any length.
inline double sequence_score(const GaussianHmm& hmm, const ObservationSequence& seq) {
    return log_likelihood(hmm, seq) / static_cast<double>(seq.size());
}

struct ThresholdChoice {
    double threshold = 0;
    double f1 = 0;
};

/// F1-optimal threshold for the rule "score >= threshold -> positive".
/// Candidates are -inf, +inf and the midpoints between adjacent distinct
/// scores; ties go to the lowest threshold.
inline ThresholdChoice select_threshold(std::span<const double> pos, std::span<const double> neg) {
    if (pos.empty() || neg.empty()) throw ConfigError("threshold selection needs positive and negative scores");
    std::vector<std::pair<double, int>> all;
    all.reserve(pos.size() + neg.size());
    for (double s : pos) all.emplace_back(s, 1);
    for (double s : neg) all.emplace_back(s, 0);
    for (const auto& [s, l] : all)
        if (std::isnan(s)) throw NumericalError("NaN score in threshold selection");
    std::sort(all.begin(), all.end());

    const double n_pos = static_cast<double>(pos.size());
    auto f1_at = [&](std::size_t tp, std::size_t fp) {
        const double precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
        const double recall = static_cast<double>(tp) / n_pos;
        return f1_score(precision, recall);
    };

    // Start with everything classified positive.
    std::size_t tp = pos.size(), fp = neg.size();
    ThresholdChoice best{-std::numeric_limits<double>::infinity(), f1_at(tp, fp)};
    for (std::size_t k = 0; k < all.size(); ++k) {
        (all[k].second == 1 ? tp : fp) -= 1;
        const bool last = k + 1 == all.size();
        if (!last && !(all[k].first < all[k + 1].first)) continue;
        const double threshold =
            last ? std::numeric_limits<double>::infinity() : split_point(all[k].first, all[k + 1].first);
        const double f1 = f1_at(tp, fp);
        if (f1 > best.f1) best = {threshold, f1};
    }
    return best;
}

struct TrainingConfig {
    std::string user_id = "user";
    LocalNetwork local_side;
    std::uint64_t seed = 0;
    std::vector<std::size_t> state_counts{2, 3, 4};
    double train_fraction = 0.8;
    std::size_t min_obfs = 10;
    /// Background negatives per held-out positive.
    double negative_ratio = 1.0;
    /// Below this many same-service background OBFs, negatives are resampled
    /// from same-port OBFs of any netrange.
    std::size_t min_negatives = 5;
    BaumWelchOptions baum_welch{};
    std::size_t jobs = 1;
};

struct CandidateResult {
    std::size_t n_states = 0;
    std::string subset;
    double f1 = 0;
    double threshold = 0;
    std::size_t iterations = 0;
    std::string error; ///< non-empty if training failed; f1 is then 0
};

struct ServiceReport {
    ServiceKey service;
    std::size_t n_obfs = 0;
    std::size_t n_train = 0;
    std::size_t n_holdout = 0;
    std::size_t n_negatives = 0;
    std::string negative_source; ///< "service", "port-resample" or "any-resample"
    std::vector<CandidateResult> candidates;
    std::optional<std::size_t> selected;
};

struct TrainingReport {
    std::size_t user_obfs = 0;
    std::size_t skipped_ambiguous = 0;
    std::vector<ServiceReport> services; ///< every service seen, including those below min_obfs
};

namespace trainer_detail {

struct KeyedObf {
    ServiceKey key;
    const OrderedBiFlow* obf;
};

inline std::vector<KeyedObf> key_obfs(std::span<const OrderedBiFlow> obfs, const LocalNetwork& local,
                                      const WhoisCache& cache, std::size_t* ambiguous) {
    std::vector<KeyedObf> out;
    for (const auto& obf : obfs) {
        try {
            out.push_back({service_key_of(obf, local, cache), &obf});
        } catch (const AmbiguousLocalityError&) {
            if (ambiguous) ++*ambiguous;
        }
    }
    return out;
}

template <typename T>
void shuffle(std::vector<T>& v, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::shuffle(v.begin(), v.end(), rng);
}

struct Task {
    std::size_t service;
    std::size_t n_states;
    std::size_t subset;
};

} // namespace trainer_detail

/// Trains a profile from the user's own records and a pool of other users'
/// OBFs. Throws EmptyProfileError if no service yields an expert and
/// CacheMissError for unresolvable remote addresses.
inline std::pair<UserProfile, TrainingReport> train_profile(std::span<const RawRecord> user_records,
                                                            std::span<const OrderedBiFlow> background_obfs,
                                                            const WhoisCache& cache,
                                                            const TrainingConfig& config) {
    using namespace trainer_detail;
    if (user_records.empty()) throw ConfigError("no user records to train on");
    if (background_obfs.empty())
        throw ConfigError("background OBFs are required: F1 is undefined without negatives");
    if (config.state_counts.empty()) throw ConfigError("no state counts configured");
    if (!(config.train_fraction > 0 && config.train_fraction < 1))
        throw ConfigError("train_fraction must lie in (0, 1)");
    if (!(config.negative_ratio > 0)) throw ConfigError("negative_ratio must be positive");

    const auto& subsets = enumerate_feature_subsets();
    TrainingReport report;

    const auto user_obfs = build_obfs(user_records);
    report.user_obfs = user_obfs.size();
    const auto keyed = key_obfs(user_obfs, config.local_side, cache, &report.skipped_ambiguous);
    const auto background = key_obfs(background_obfs, config.local_side, cache, nullptr);

    std::map<ServiceKey, std::vector<const OrderedBiFlow*>> by_service;
    for (const auto& k : keyed) by_service[k.key].push_back(k.obf);

    struct Prepared {
        std::vector<const OrderedBiFlow*> train, holdout, negatives;
    };
    std::vector<Prepared> prepared;
    std::vector<std::size_t> report_index;

    for (auto& [key, obfs] : by_service) {
        ServiceReport sr;
        sr.service = key;
        sr.n_obfs = obfs.size();
        if (obfs.size() < std::max<std::size_t>(config.min_obfs, 2)) {
            report.services.push_back(std::move(sr));
            continue;
        }
        const std::uint64_t service_hash = fnv1a(to_string(key));
        shuffle(obfs, derive_seed(config.seed, {service_hash, 1}));
        std::size_t n_train = static_cast<std::size_t>(std::floor(config.train_fraction * obfs.size()));
        n_train = std::clamp<std::size_t>(n_train, 1, obfs.size() - 1);
        Prepared p;
        p.train.assign(obfs.begin(), obfs.begin() + static_cast<std::ptrdiff_t>(n_train));
        p.holdout.assign(obfs.begin() + static_cast<std::ptrdiff_t>(n_train), obfs.end());

        const auto wanted = std::max<std::size_t>(
            1, static_cast<std::size_t>(std::llround(config.negative_ratio * p.holdout.size())));
        std::vector<const OrderedBiFlow*> same, same_port, any;
        for (const auto& b : background) {
            any.push_back(b.obf);
            if (b.key.port == key.port) same_port.push_back(b.obf);
            if (b.key == key) same.push_back(b.obf);
        }
        if (same.size() >= config.min_negatives) {
            shuffle(same, derive_seed(config.seed, {service_hash, 2}));
            same.resize(std::min(same.size(), wanted));
            p.negatives = std::move(same);
            sr.negative_source = "service";
        } else {
            const auto& pool = same_port.empty() ? any : same_port;
            sr.negative_source = same_port.empty() ? "any-resample" : "port-resample";
            std::mt19937_64 rng(derive_seed(config.seed, {service_hash, 3}));
            std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
            const std::size_t n = std::max(wanted, config.min_negatives);
            for (std::size_t i = 0; i < n; ++i) p.negatives.push_back(pool[pick(rng)]);
        }
        sr.n_train = p.train.size();
        sr.n_holdout = p.holdout.size();
        sr.n_negatives = p.negatives.size();
        sr.candidates.resize(config.state_counts.size() * subsets.size());
        report_index.push_back(report.services.size());
        report.services.push_back(std::move(sr));
        prepared.push_back(std::move(p));
    }

    std::vector<Task> tasks;
    for (std::size_t s = 0; s < prepared.size(); ++s)
        for (std::size_t q = 0; q < config.state_counts.size(); ++q)
            for (std::size_t f = 0; f < subsets.size(); ++f) tasks.push_back({s, q, f});

    std::vector<std::optional<ExpertModel>> models(tasks.size());
    parallel_for(tasks.size(), config.jobs, [&](std::size_t t) {
        const auto& task = tasks[t];
        const auto& p = prepared[task.service];
        auto& sr = report.services[report_index[task.service]];
        const std::size_t n_states = config.state_counts[task.n_states];
        const auto& subset = subsets[task.subset];
        auto& cand = sr.candidates[task.n_states * subsets.size() + task.subset];
        cand.n_states = n_states;
        cand.subset = subset.tag();

        auto featurize_all = [&](const std::vector<const OrderedBiFlow*>& obfs) {
            std::vector<ObservationSequence> seqs;
            seqs.reserve(obfs.size());
            for (const auto* o : obfs) seqs.push_back(featurize(*o, subset, config.local_side));
            return seqs;
        };
        try {
            const auto train = featurize_all(p.train);
            const std::uint64_t seed =
                derive_seed(config.seed, {fnv1a(to_string(sr.service)), n_states, task.subset});
            const auto init = kmeans_init(train, n_states, seed);
            const auto fit = baum_welch(train, init, config.baum_welch);
            cand.iterations = fit.iterations;

            std::vector<double> pos, neg;
            for (const auto& seq : featurize_all(p.holdout)) pos.push_back(sequence_score(fit.model, seq));
            for (const auto& seq : featurize_all(p.negatives)) neg.push_back(sequence_score(fit.model, seq));
            const auto choice = select_threshold(pos, neg);
            cand.f1 = choice.f1;
            cand.threshold = choice.threshold;
            models[t] = ExpertModel{sr.service, fit.model, subset, choice.threshold, choice.f1};
        } catch (const Error& e) {
            cand.f1 = 0;
            cand.error = e.what();
        }
    });

    UserProfile profile;
    profile.user_id = config.user_id;
    profile.local_side = config.local_side;
    for (const auto& r : user_records) profile.created_at_ms = std::max(profile.created_at_ms, r.end_ts);

    const std::size_t per_service = config.state_counts.size() * subsets.size();
    for (std::size_t s = 0; s < prepared.size(); ++s) {
        auto& sr = report.services[report_index[s]];
        std::optional<std::size_t> best;
        for (std::size_t c = 0; c < per_service; ++c)
            if (models[s * per_service + c] && (!best || sr.candidates[c].f1 > sr.candidates[*best].f1)) best = c;
        if (!best || !(sr.candidates[*best].f1 > 0)) continue;
        sr.selected = best;
        profile.experts.push_back(*models[s * per_service + *best]);
    }
    if (profile.experts.empty())
        throw EmptyProfileError("no service produced an expert for user '" + config.user_id + "' (" +
                                std::to_string(by_service.size()) + " services, min_obfs " +
                                std::to_string(config.min_obfs) + ")");
    return {std::move(profile), std::move(report)};
}

// ---------------------------------------------------------------------------
// Profile documents

inline constexpr int profile_format_version = 1;

namespace profile_detail {

inline nlohmann::json encode_real(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    return v;
}

inline double decode_real(const nlohmann::json& j) {
    if (j.is_string()) {
        if (j == "inf") return std::numeric_limits<double>::infinity();
        if (j == "-inf") return -std::numeric_limits<double>::infinity();
        throw ConfigError("bad real value " + j.dump());
    }
    return j.get<double>();
}

inline nlohmann::json service_to_json(const ServiceKey& k) {
    return {{"first_ip", to_string(k.netrange.first_ip)},
            {"last_ip", to_string(k.netrange.last_ip)},
            {"source", std::string(to_string(k.netrange.source))},
            {"port", k.port}};
}

inline ServiceKey service_from_json(const nlohmann::json& j) {
    ServiceKey k;
    k.netrange.first_ip = parse_ipv4(j.at("first_ip").get<std::string>());
    k.netrange.last_ip = parse_ipv4(j.at("last_ip").get<std::string>());
    k.netrange.source = range_source_from_string(j.at("source").get<std::string>()).value_or(RangeSource::cache);
    k.port = j.at("port").get<std::uint16_t>();
    return k;
}

} // namespace profile_detail

inline nlohmann::json report_to_json(const TrainingReport& r) {
    nlohmann::json j;
    j["user_obfs"] = r.user_obfs;
    j["skipped_ambiguous"] = r.skipped_ambiguous;
    auto& services = j["services"] = nlohmann::json::array();
    for (const auto& s : r.services) {
        nlohmann::json js{{"service", profile_detail::service_to_json(s.service)},
                          {"n_obfs", s.n_obfs},
                          {"n_train", s.n_train},
                          {"n_holdout", s.n_holdout},
                          {"n_negatives", s.n_negatives},
                          {"negative_source", s.negative_source}};
        js["selected"] = s.selected ? nlohmann::json(*s.selected) : nlohmann::json(nullptr);
        auto& cands = js["candidates"] = nlohmann::json::array();
        for (const auto& c : s.candidates) {
            nlohmann::json jc{{"states", c.n_states},
                              {"subset", c.subset},
                              {"f1", c.f1},
                              {"threshold", profile_detail::encode_real(c.threshold)},
                              {"iterations", c.iterations}};
            if (!c.error.empty()) jc["error"] = c.error;
            cands.push_back(std::move(jc));
        }
        services.push_back(std::move(js));
    }
    return j;
}

inline nlohmann::json profile_to_json(const UserProfile& p, const TrainingReport* report = nullptr) {
    nlohmann::json j;
    j["format"] = "natfp.profile";
    j["version"] = profile_format_version;
    j["user_id"] = p.user_id;
    j["created_at_ms"] = p.created_at_ms;
    j["local_side"] = p.local_side.to_strings();
    auto& experts = j["experts"] = nlohmann::json::array();
    for (const auto& e : p.experts) {
        experts.push_back({{"service", profile_detail::service_to_json(e.service)},
                           {"subset", e.subset.tag()},
                           {"threshold", profile_detail::encode_real(e.threshold)},
                           {"weight", e.weight},
                           {"hmm", hmm_to_json(e.hmm, e.subset.tag())}});
    }
    if (report) j["report"] = report_to_json(*report);
    return j;
}

inline UserProfile profile_from_json(const nlohmann::json& j) {
    try {
        if (j.at("format") != "natfp.profile") throw ConfigError("not a profile document");
        if (j.at("version").get<int>() != profile_format_version)
            throw ConfigError("unsupported profile document version");
        UserProfile p;
        p.user_id = j.at("user_id").get<std::string>();
        p.created_at_ms = j.at("created_at_ms").get<std::int64_t>();
        p.local_side = LocalNetwork::parse(j.at("local_side").get<std::vector<std::string>>());
        for (const auto& je : j.at("experts")) {
            ExpertModel e;
            e.service = profile_detail::service_from_json(je.at("service"));
            e.subset = FeatureSubset::from_tag(je.at("subset").get<std::string>());
            e.threshold = profile_detail::decode_real(je.at("threshold"));
            e.weight = je.at("weight").get<double>();
            e.hmm = hmm_from_json(je.at("hmm"));
            if (e.hmm.dim != e.subset.size()) throw ConfigError("expert HMM dimension does not match its subset");
            if (!(e.weight >= 0 && e.weight <= 1)) throw ConfigError("expert weight outside [0, 1]");
            p.experts.push_back(std::move(e));
        }
        std::sort(p.experts.begin(), p.experts.end(),
                  [](const ExpertModel& a, const ExpertModel& b) { return a.service < b.service; });
        for (std::size_t i = 1; i < p.experts.size(); ++i)
            if (p.experts[i - 1].service == p.experts[i].service)
                throw ConfigError("profile has two experts for one service");
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed profile document: ") + e.what());
    }
}

} // namespace natfp
