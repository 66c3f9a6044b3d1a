#pragma once

// The natfp command-line tool. `run` is the whole program; main() only
// forwards to it so that tests can drive subcommands in-process.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "natfp/benchmark.hpp"
#include "natfp/classifiers.hpp"
#include "natfp/detector.hpp"
#include "natfp/netflow.hpp"
#include "natfp/simulator.hpp"
#include "natfp/trainer.hpp"
#include "natfp/whois.hpp"

namespace natfp::cli {

namespace fs = std::filesystem;

inline constexpr const char* cache_env = "NATFP_WHOIS_CACHE";

// ---------------------------------------------------------------------------
// File helpers

inline std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Writes through a temporary file and renames it into place, so a failed
/// run never leaves a truncated output behind.
inline void write_file(const fs::path& path, const std::string& content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write " + path.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) throw Error("failed writing " + path.string());
    }
    fs::rename(tmp, path);
}

/// CSV if the file starts with a header line, NetFlow v5 otherwise.
inline std::vector<RawRecord> load_records(const fs::path& path) {
    const auto bytes = read_file(path);
    if (bytes.size() >= 2 && static_cast<unsigned char>(bytes[0]) == 0 && static_cast<unsigned char>(bytes[1]) == 5)
        return parse_netflow_v5(std::span(reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size()));
    return parse_csv(std::string_view(bytes));
}

inline WhoisCache load_cache(const std::string& path) {
    if (path.empty()) throw ConfigError(std::string("no whois cache given (use --cache or set ") + cache_env + ")");
    return WhoisCache::load_file(path);
}

inline GroundTruth load_truth(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    return read_truth_csv(in);
}

inline std::string fixed(double v, int prec = 4) {
    if (std::isnan(v)) return "nan";
    std::ostringstream s;
    s << std::fixed << std::setprecision(prec) << v;
    return s.str();
}

// ---------------------------------------------------------------------------
// Subcommands

struct SimulateOptions {
    std::string scenario;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
};

inline void cmd_simulate(const SimulateOptions& o, std::ostream& out) {
    std::istringstream in(read_file(o.scenario));
    auto config = load_scenario(in);
    if (o.seed) config.seed = *o.seed;
    const auto sim = simulate(config);
    const fs::path dir = o.out_dir;
    std::ostringstream csv, v5, truth;
    const auto n_csv = export_simulation(sim.records, sim.truth, ExportFormat::csv, csv);
    const auto n_v5 = export_simulation(sim.records, sim.truth, ExportFormat::netflow_v5, v5);
    const auto n_truth = export_simulation(sim.records, sim.truth, ExportFormat::truth_csv, truth);
    write_file(dir / "records.csv", csv.str());
    write_file(dir / "records.nf5", v5.str());
    write_file(dir / "truth.csv", truth.str());
    out << "users     " << config.users.size() << "\n"
        << "sessions  " << sim.truth.sessions << "\n"
        << "records   " << sim.records.size() << "\n"
        << "written   records.csv (" << n_csv << " B), records.nf5 (" << n_v5 << " B), truth.csv (" << n_truth
        << " B)\n";
}

struct MakeScenarioOptions {
    std::string out_dir;
    std::uint64_t seed = BenchmarkOptions{}.seed;
    std::size_t users = 20;
    std::size_t targets = 5;
};

/// Writes the benchmark phases as scenario files plus the matching registry.
inline void cmd_make_scenario(const MakeScenarioOptions& o, std::ostream& out) {
    BenchmarkOptions opt;
    opt.seed = o.seed;
    opt.n_users = o.users;
    opt.n_targets = o.targets;
    const auto bm = make_benchmark(opt);
    const fs::path dir = o.out_dir;
    auto put = [&](const std::string& name, const SimulationConfig& c) {
        write_file(dir / name, scenario_to_json(c).dump(2) + "\n");
        out << name << "\n";
    };
    put("training.json", bm.training());
    for (std::size_t d = 0; d < opt.calibration_days; ++d) put("calibration" + std::to_string(d) + ".json", bm.calibration(d));
    put("test.json", bm.test());
    put("negative.json", bm.negative_control());
    std::ostringstream reg;
    benchmark_registry(bm.epoch_ms).save(reg);
    write_file(dir / "registry.cache", reg.str());
    out << "registry.cache\ntargets:";
    for (const auto& t : bm.targets) out << ' ' << t;
    out << "\n";
}

struct TrainOptions {
    std::string user_records;
    std::string background;
    std::string records;
    std::string truth;
    std::string user;
    std::string cache;
    std::string out;
    std::vector<std::string> local;
    std::uint64_t seed = 0;
    std::size_t jobs = 1;
    std::size_t min_obfs = 10;
    std::vector<std::size_t> states{2, 3, 4};
    double negative_ratio = 1.0;
    double train_fraction = 0.8;
};

inline void cmd_train(const TrainOptions& o, std::ostream& out) {
    if (o.local.empty()) throw ConfigError("--local is required: give the CIDRs of the NAT'd side");
    std::vector<RawRecord> user, background;
    std::string user_id = o.user.empty() ? "user" : o.user;
    if (!o.records.empty()) {
        if (o.truth.empty() || o.user.empty()) throw ConfigError("--records needs --truth and --user");
        if (!o.user_records.empty() || !o.background.empty())
            throw ConfigError("use either --records/--truth or --user-records/--background");
        const auto records = load_records(o.records);
        const auto truth = load_truth(o.truth);
        user = records_for_user(records, truth, o.user);
        background = records_for_user(records, truth, o.user, true);
        if (user.empty()) throw ConfigError("no records attributed to user '" + o.user + "'");
    } else {
        if (o.user_records.empty() || o.background.empty())
            throw ConfigError("give --user-records and --background, or --records, --truth and --user");
        user = load_records(o.user_records);
        background = load_records(o.background);
    }
    const auto cache = load_cache(o.cache);

    TrainingConfig tc;
    tc.user_id = user_id;
    tc.local_side = LocalNetwork::parse(o.local);
    tc.seed = o.seed;
    tc.jobs = o.jobs;
    tc.min_obfs = o.min_obfs;
    tc.state_counts = o.states;
    tc.negative_ratio = o.negative_ratio;
    tc.train_fraction = o.train_fraction;
    const auto background_obfs = build_obfs(background);
    const auto [profile, report] = train_profile(user, background_obfs, cache, tc);
    write_file(o.out, profile_to_json(profile, &report).dump(1) + "\n");

    out << "service                                   obfs  best_f1  states  subset\n";
    for (const auto& s : report.services) {
        std::ostringstream line;
        line << std::left << std::setw(40) << to_string(s.service) << std::right << std::setw(6) << s.n_obfs;
        if (s.selected) {
            const auto& c = s.candidates[*s.selected];
            line << std::setw(9) << fixed(c.f1, 3) << std::setw(8) << c.n_states << "  " << c.subset;
        } else if (s.candidates.empty()) {
            line << "        -       -  (below --min-obfs)";
        } else {
            line << "    0.000       -  (no usable candidate)";
        }
        out << line.str() << "\n";
    }
    out << profile.experts.size() << " experts written to " << o.out << "\n";
}

struct GridOptions {
    std::int64_t interval_ms = default_interval_length_ms;
    std::optional<std::int64_t> start;
    std::optional<std::size_t> intervals;
};

inline IntervalGrid make_grid(const GridOptions& g, std::span<const RawRecord> records) {
    if (g.interval_ms <= 0) throw ConfigError("--interval must be positive");
    auto grid = IntervalGrid::covering(records, g.interval_ms);
    if (g.start) {
        const std::int64_t covered_end = grid.end();
        grid.start = *g.start;
        grid.count = covered_end > grid.start
                         ? static_cast<std::size_t>((covered_end - grid.start + g.interval_ms - 1) / g.interval_ms)
                         : 0;
    }
    if (g.intervals) grid.count = *g.intervals;
    if (grid.count == 0) throw ConfigError("the interval grid is empty (set --start and --intervals)");
    return grid;
}

inline UserProfile load_profile(const std::string& path) {
    return profile_from_json(nlohmann::json::parse(read_file(path)));
}

struct TrainClassifierOptions {
    std::string profile;
    std::vector<std::string> records;
    std::vector<std::string> truth;
    std::string user;
    std::string cache;
    std::string out;
    GridOptions grid;
    std::uint64_t seed = 0;
    std::size_t jobs = 1;
    std::size_t trees = 100;
};

/// Fits the random-forest final classifier on interval records of labeled
/// days. Each --records file pairs with the --truth file at the same position.
inline void cmd_train_classifier(const TrainClassifierOptions& o, std::ostream& out) {
    if (o.records.empty() || o.records.size() != o.truth.size())
        throw ConfigError("give one --truth file per --records file");
    const auto profile = load_profile(o.profile);
    const auto cache = load_cache(o.cache);
    const std::string user = o.user.empty() ? profile.user_id : o.user;
    LabeledDataset data;
    for (std::size_t i = 0; i < o.records.size(); ++i) {
        const auto records = load_records(o.records[i]);
        const auto truth = load_truth(o.truth[i]);
        const auto grid = make_grid(o.grid, records);
        const auto recs = interval_records(profile, records, cache, grid, nullptr, o.jobs);
        const auto part = to_dataset(recs, presence_labels(truth, user, grid.start, grid.length, grid.count));
        data.rows.insert(data.rows.end(), part.rows.begin(), part.rows.end());
    }
    RandomForestParams params;
    params.seed = o.seed;
    params.jobs = o.jobs;
    params.n_trees = o.trees;
    const auto model = train_random_forest(data, params);
    write_file(o.out, forest_to_json(model).dump() + "\n");
    out << "intervals " << data.rows.size() << " (" << data.count(1) << " present)\n"
        << "trees     " << model.trees.size() << "\n"
        << "written   " << o.out << "\n";
}

struct DetectOptions {
    std::string profile;
    std::string records;
    std::string cache;
    std::string classifier;
    std::optional<double> baseline;
    std::string out;
    GridOptions grid;
    std::size_t jobs = 1;
};

inline void cmd_detect(const DetectOptions& o, std::ostream& out) {
    if (o.classifier.empty() == !o.baseline) throw ConfigError("give exactly one of --classifier or --baseline");
    const auto profile = load_profile(o.profile);
    const auto records = load_records(o.records);
    const auto cache = load_cache(o.cache);
    std::unique_ptr<FinalClassifier> final;
    if (o.baseline)
        final = std::make_unique<SumThresholdClassifier>(*o.baseline);
    else
        final = std::make_unique<ForestClassifier>(forest_from_json(nlohmann::json::parse(read_file(o.classifier))));
    const auto grid = make_grid(o.grid, records);
    DetectionDiagnostics diag;
    const auto results = detect(profile, records, cache, grid, *final, &diag, o.jobs);
    std::ostringstream csv;
    write_detection_csv(csv, profile, results);
    write_file(o.out, csv.str());
    std::size_t positive = 0;
    for (const auto& r : results) positive += static_cast<std::size_t>(r.label);
    out << "intervals     " << results.size() << " (" << positive << " positive)\n"
        << "obfs          " << diag.obfs << "\n"
        << "classified    " << diag.classified << " (" << diag.positive << " positive)\n"
        << "no expert     " << diag.no_expert << "\n"
        << "unresolvable  " << diag.unresolvable << "\n"
        << "ambiguous     " << diag.ambiguous << "\n"
        << "outside grid  " << diag.outside_grid << "\n";
}

struct EvaluateOptions {
    std::string detections;
    std::string truth;
    std::string user;
    std::string roc_out;
    std::int64_t interval_ms = default_interval_length_ms;
};

/// Joins detections with ground truth. Every interval must either contain no
/// presence or be covered by it entirely; anything else is a misaligned grid.
inline EvaluationMetrics cmd_evaluate(const EvaluateOptions& o, std::ostream& out) {
    std::ifstream in(o.detections);
    if (!in) throw Error("cannot open " + o.detections);
    const auto table = read_detection_csv(in);
    if (table.rows.empty()) throw ConfigError("no detections to evaluate");
    const auto truth = load_truth(o.truth);
    std::int64_t length = o.interval_ms;
    for (std::size_t i = 1; i < table.rows.size(); ++i) {
        const auto step = table.rows[i].interval_start - table.rows[i - 1].interval_start;
        if (i == 1) length = step;
        if (step <= 0 || step != length)
            throw ConfigError("detections are not on an evenly spaced grid (row " + std::to_string(i + 1) + ")");
    }
    if (length != o.interval_ms)
        throw ConfigError("detections are spaced " + std::to_string(length) + " ms apart, --interval says " +
                          std::to_string(o.interval_ms));
    const auto presence = truth.presence.find(o.user);
    std::vector<int> labels;
    std::vector<Prediction> preds;
    for (const auto& row : table.rows) {
        const std::int64_t lo = row.interval_start, hi = lo + length;
        std::int64_t covered = 0;
        if (presence != truth.presence.end())
            for (const auto& p : presence->second)
                covered += std::max<std::int64_t>(0, std::min(hi, p.end) - std::max(lo, p.start));
        if (covered != 0 && covered != length)
            throw ConfigError("presence of '" + o.user + "' starts or ends inside interval " + std::to_string(lo));
        labels.push_back(covered == length ? 1 : 0);
        preds.push_back({row.label, row.score});
    }
    const auto m = evaluate(preds, labels);
    out << "intervals  " << labels.size() << "\n"
        << "TP " << m.tp << "  FP " << m.fp << "  TN " << m.tn << "  FN " << m.fn << "\n"
        << "TPR        " << fixed(m.tpr) << "\n"
        << "FPR        " << fixed(m.fpr) << "\n"
        << "Precision  " << fixed(m.precision) << "\n"
        << "Recall     " << fixed(m.recall) << "\n"
        << "F-measure  " << fixed(m.f1) << "\n"
        << "ROC area   " << fixed(m.roc_area) << "\n";
    if (!o.roc_out.empty()) {
        std::vector<double> scores;
        for (const auto& p : preds) scores.push_back(p.score);
        std::ostringstream roc;
        roc << "threshold,fpr,tpr\n";
        for (const auto& pt : roc_curve(scores, labels))
            roc << detector_detail::format_double(pt.threshold) << ',' << detector_detail::format_double(pt.fpr)
                << ',' << detector_detail::format_double(pt.tpr) << '\n';
        write_file(o.roc_out, roc.str());
    }
    return m;
}

struct WhoisImportOptions {
    std::vector<std::string> transcripts;
    std::string source = "cache";
    std::string cache;
    std::optional<std::int64_t> timestamp;
};

inline void cmd_whois_import(const WhoisImportOptions& o, std::ostream& out) {
    if (o.cache.empty()) throw ConfigError(std::string("no whois cache given (use --cache or set ") + cache_env + ")");
    const auto src = range_source_from_string(o.source);
    if (!src) throw ConfigError("unknown registry '" + o.source + "'");
    WhoisCache cache = fs::exists(o.cache) ? WhoisCache::load_file(o.cache) : WhoisCache{};
    const std::size_t before = cache.size();
    const std::int64_t ts = o.timestamp.value_or(wall_clock_ms());
    std::size_t ranges = 0;
    for (const auto& path : o.transcripts) {
        const auto found = parse_whois_response(read_file(path), *src);
        if (found.empty()) throw ParseError(path + ": no netrange found in transcript", 0);
        for (const auto& r : found) cache.insert(r, ts);
        ranges += found.size();
    }
    std::ostringstream saved;
    cache.save(saved);
    write_file(o.cache, saved.str());
    out << ranges << " ranges read, " << cache.size() - before << " new, " << cache.size() << " in cache\n";
}

struct WhoisResolveOptions {
    std::vector<std::string> ips;
    std::string cache;
    bool online = false;
    std::string replay_dir;
    std::int64_t max_age_ms = 0;
    std::int64_t timeout_ms = 10'000;
};

inline void cmd_whois_resolve(const WhoisResolveOptions& o, std::ostream& out) {
    if (o.cache.empty()) throw ConfigError(std::string("no whois cache given (use --cache or set ") + cache_env + ")");
    WhoisCache cache = fs::exists(o.cache) || !o.online ? WhoisCache::load_file(o.cache) : WhoisCache{};
    std::unique_ptr<WhoisTransport> transport;
    if (!o.replay_dir.empty()) transport = std::make_unique<ReplayTransport>(o.replay_dir);
    else if (o.online) transport = std::make_unique<TcpWhoisTransport>(std::chrono::milliseconds(o.timeout_ms));
    WhoisResolver::Options opts;
    opts.mode = o.online || transport ? ResolveMode::online : ResolveMode::offline;
    opts.max_age_ms = o.max_age_ms;
    WhoisResolver resolver(cache, opts, transport.get());
    for (const auto& s : o.ips) {
        const auto ip = parse_ipv4(s);
        const auto r = resolver.resolve(ip);
        out << to_string(ip) << "  " << to_string(r) << "  " << to_string(r.source) << "\n";
    }
    if (opts.mode == ResolveMode::online && resolver.query_count() > 0) {
        std::ostringstream saved;
        cache.save(saved);
        write_file(o.cache, saved.str());
    }
}

// ---------------------------------------------------------------------------
// Argument parsing

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Fingerprint users behind NAT from NetFlow records"};
    app.require_subcommand(1);
    app.set_config("--config", "", "INI/TOML file supplying option values");
    app.set_version_flag("--version", "natfp 1.0.0");

    auto add_cache = [](CLI::App* sub, std::string& target) {
        sub->add_option("--cache", target, "whois cache file")->envname(cache_env);
    };
    auto add_grid = [](CLI::App* sub, GridOptions& g) {
        sub->add_option("--interval", g.interval_ms, "interval length in ms")->capture_default_str();
        sub->add_option("--start", g.start, "grid start, epoch ms (default: aligned to the first record)");
        sub->add_option("--intervals", g.intervals, "number of intervals");
    };

    SimulateOptions sim;
    auto* s_sim = app.add_subcommand("simulate", "generate records and ground truth from a scenario");
    s_sim->add_option("scenario", sim.scenario, "scenario JSON")->required()->check(CLI::ExistingFile);
    s_sim->add_option("-o,--out", sim.out_dir, "output directory")->required();
    s_sim->add_option("--seed", sim.seed, "override the scenario seed");

    MakeScenarioOptions mk;
    auto* s_mk = app.add_subcommand("make-scenario", "write the multi-user benchmark scenarios and registry");
    s_mk->add_option("-o,--out", mk.out_dir, "output directory")->required();
    s_mk->add_option("--seed", mk.seed, "benchmark seed")->capture_default_str();
    s_mk->add_option("--users", mk.users, "population size")->capture_default_str();
    s_mk->add_option("--targets", mk.targets, "number of target users")->capture_default_str();

    TrainOptions tr;
    auto* s_tr = app.add_subcommand("train", "train a user profile");
    s_tr->add_option("--user-records", tr.user_records, "records of the user (CSV or v5)");
    s_tr->add_option("--background", tr.background, "records of other users (CSV or v5)");
    s_tr->add_option("--records", tr.records, "mixed records, split with --truth and --user");
    s_tr->add_option("--truth", tr.truth, "truth CSV for --records");
    s_tr->add_option("--user", tr.user, "user id");
    add_cache(s_tr, tr.cache);
    s_tr->add_option("--local", tr.local, "CIDR of the NAT'd side (repeatable)");
    s_tr->add_option("-o,--out", tr.out, "profile JSON to write")->required();
    s_tr->add_option("--seed", tr.seed)->capture_default_str();
    s_tr->add_option("--jobs", tr.jobs)->capture_default_str();
    s_tr->add_option("--min-obfs", tr.min_obfs, "skip services with fewer OBFs")->capture_default_str();
    s_tr->add_option("--states", tr.states, "HMM state counts to try")->capture_default_str();
    s_tr->add_option("--negative-ratio", tr.negative_ratio, "background OBFs per held-out OBF")->capture_default_str();
    s_tr->add_option("--train-fraction", tr.train_fraction)->capture_default_str();

    TrainClassifierOptions tc;
    auto* s_tc = app.add_subcommand("train-classifier", "fit the random-forest final classifier on labeled days");
    s_tc->add_option("--profile", tc.profile)->required()->check(CLI::ExistingFile);
    s_tc->add_option("--records", tc.records, "records file (repeatable)")->required();
    s_tc->add_option("--truth", tc.truth, "truth CSV matching each --records")->required();
    s_tc->add_option("--user", tc.user, "user id (default: the profile's)");
    add_cache(s_tc, tc.cache);
    add_grid(s_tc, tc.grid);
    s_tc->add_option("-o,--out", tc.out, "forest JSON to write")->required();
    s_tc->add_option("--seed", tc.seed)->capture_default_str();
    s_tc->add_option("--jobs", tc.jobs)->capture_default_str();
    s_tc->add_option("--trees", tc.trees)->capture_default_str();

    DetectOptions dt;
    auto* s_dt = app.add_subcommand("detect", "per-interval presence verdicts for a profile");
    s_dt->add_option("--profile", dt.profile)->required()->check(CLI::ExistingFile);
    s_dt->add_option("--records", dt.records)->required()->check(CLI::ExistingFile);
    add_cache(s_dt, dt.cache);
    s_dt->add_option("--classifier", dt.classifier, "forest JSON from train-classifier");
    s_dt->add_option("--baseline", dt.baseline, "weighted-sum threshold instead of a forest");
    add_grid(s_dt, dt.grid);
    s_dt->add_option("-o,--out", dt.out, "detection CSV to write")->required();
    s_dt->add_option("--jobs", dt.jobs)->capture_default_str();

    EvaluateOptions ev;
    auto* s_ev = app.add_subcommand("evaluate", "score detections against ground truth");
    s_ev->add_option("--detections", ev.detections)->required()->check(CLI::ExistingFile);
    s_ev->add_option("--truth", ev.truth)->required()->check(CLI::ExistingFile);
    s_ev->add_option("--user", ev.user)->required();
    s_ev->add_option("--roc", ev.roc_out, "ROC curve CSV to write");
    s_ev->add_option("--interval", ev.interval_ms, "interval length in ms")->capture_default_str();

    WhoisImportOptions wi;
    auto* s_wi = app.add_subcommand("whois-import", "add ranges from whois transcripts to a cache");
    s_wi->add_option("transcripts", wi.transcripts)->required()->check(CLI::ExistingFile);
    s_wi->add_option("--source", wi.source, "registry the transcripts came from")->capture_default_str();
    add_cache(s_wi, wi.cache);
    s_wi->add_option("--timestamp", wi.timestamp, "retrieval time, epoch ms (default: now)");

    WhoisResolveOptions wr;
    auto* s_wr = app.add_subcommand("whois-resolve", "look up the netrange of addresses");
    s_wr->add_option("ips", wr.ips)->required();
    add_cache(s_wr, wr.cache);
    s_wr->add_flag("--online", wr.online, "query the registries on a cache miss");
    s_wr->add_option("--replay", wr.replay_dir, "answer queries from <rir>_<ip>.txt files instead of the network");
    s_wr->add_option("--max-age", wr.max_age_ms, "re-query cached ranges older than this (ms)");
    s_wr->add_option("--timeout", wr.timeout_ms, "per-server timeout (ms)")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::CallForVersion&) {
        out << app.version() << "\n";
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "natfp: " << e.what() << "\n";
        return e.get_exit_code() == 0 ? 2 : e.get_exit_code();
    }

    try {
        if (*s_sim) cmd_simulate(sim, out);
        else if (*s_mk) cmd_make_scenario(mk, out);
        else if (*s_tr) cmd_train(tr, out);
        else if (*s_tc) cmd_train_classifier(tc, out);
        else if (*s_dt) cmd_detect(dt, out);
        else if (*s_ev) cmd_evaluate(ev, out);
        else if (*s_wi) cmd_whois_import(wi, out);
        else if (*s_wr) cmd_whois_resolve(wr, out);
    } catch (const std::exception& e) {
        err << "natfp: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

} // namespace natfp::cli
