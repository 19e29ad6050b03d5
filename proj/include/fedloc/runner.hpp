#pragma once

// Experiment runner: turns a resolved RunConfig into a run directory.
//
//   manifest.json   resolved config, decision flags, dataset hashes, timestamp
//   metrics.json    deterministic; both 2D-MDE variants, test and validation
//   history.csv     per-epoch losses (central) or per-round rows (federated)
//   checkpoint/     trained network plus the fitted preprocessing
//
// Everything except manifest.json's timestamp is a function of the config
// and the input files.

#include "fedloc/channel.hpp"
#include "fedloc/checkpoint.hpp"
#include "fedloc/common.hpp"
#include "fedloc/config.hpp"
#include "fedloc/dataset.hpp"
#include "fedloc/fed.hpp"
#include "fedloc/hierbase.hpp"
#include "fedloc/hmodel.hpp"
#include "fedloc/io.hpp"
#include "fedloc/metrics.hpp"

#include <algorithm>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fedloc::run {

namespace fs = std::filesystem;

inline constexpr const char* kVersion = "fedloc 1.0.0";

enum class Mode { central, federated, hierbase };

inline std::string to_string(Mode m) {
    switch (m) {
        case Mode::central: return "central";
        case Mode::federated: return "federated";
        case Mode::hierbase: return "hierbase";
    }
    return "central";
}

inline Mode parse_mode(std::string_view s) {
    if (s == "central") {
        return Mode::central;
    }
    if (s == "federated") {
        return Mode::federated;
    }
    if (s == "hierbase") {
        return Mode::hierbase;
    }
    throw UsageError("unknown training mode '" + std::string(s) + "' (expected central, federated or hierbase)");
}

// ---------------------------------------------------------------------------
// Data
// ---------------------------------------------------------------------------

inline fs::path resolve_data_dir(const RunConfig& cfg) {
    std::string dir = cfg.data.dir;
    if (dir.empty()) {
        if (const char* env = std::getenv("FEDLOC_DATA_DIR"); env && *env) {
            dir = env;
        }
    }
    if (dir.empty()) {
        throw DataError("no dataset directory: pass --data-dir or set FEDLOC_DATA_DIR");
    }
    if (!fs::is_directory(dir)) {
        throw DataError("dataset directory '" + dir + "' does not exist");
    }
    return dir;
}

struct PreparedData {
    ProcessedSet fitted;  // whole training file; carries the fitted pipeline
    ProcessedSet train;
    ProcessedSet test;
    std::optional<ProcessedSet> validation;
    ApSelectionReport selection;
    std::string train_hash;
    std::string validation_hash;
};

/// load -> select_aps -> powed_transform on the training file, stratified
/// split, and the validation file (when present) through the fitted pipeline.
inline PreparedData prepare_data(const RunConfig& cfg) {
    const fs::path dir = resolve_data_dir(cfg);
    const fs::path train_path = dir / cfg.data.train_file;
    if (!fs::exists(train_path)) {
        throw DataError("training file " + train_path.string() + " not found");
    }
    PreparedData d;
    const std::string text = io::read_file(train_path);
    d.train_hash = hex64(fnv1a(text));
    const auto raw = parse_csv(text, train_path.string());
    const auto selected = select_aps(raw, cfg.preprocess, &d.selection);
    d.fitted = powed_transform(selected, cfg.preprocess);
    auto [train, test] = train_test_split(d.fitted, cfg.data.train_ratio, cfg.seed);
    d.train = std::move(train);
    d.test = std::move(test);

    const fs::path validation_path = dir / cfg.data.validation_file;
    if (fs::exists(validation_path)) {
        const std::string vtext = io::read_file(validation_path);
        d.validation_hash = hex64(fnv1a(vtext));
        d.validation = apply_fitted_pipeline(parse_csv(vtext, validation_path.string()), d.fitted, cfg.preprocess);
    }
    return d;
}

/// Preprocessing metadata stored alongside a checkpoint so `eval` can apply
/// the same pipeline to new CSVs.
inline io::Manifest pipeline_meta(const ProcessedSet& fitted, const PreprocessConfig& cfg) {
    io::Manifest m;
    std::string ids;
    for (std::size_t i = 0; i < fitted.ap_ids.size(); ++i) {
        ids += (i ? "," : "") + fitted.ap_ids[i];
    }
    const auto& b = fitted.norm_bounds;
    m.set("meta.ap_ids", ids);
    m.set("meta.bounds", io::format_double(b.x_min) + "," + io::format_double(b.x_max) + "," +
                             io::format_double(b.y_min) + "," + io::format_double(b.y_max));
    m.set("meta.min_rssi", io::format_double(fitted.min_rssi));
    m.set("meta.powed_exponent", io::format_double(fitted.powed_exponent));
    m.set("meta.missing_sentinel", std::to_string(cfg.missing_sentinel));
    m.set("meta.building_count", std::to_string(fitted.building_count));
    m.set("meta.floor_count", std::to_string(fitted.floor_count));
    return m;
}

inline std::pair<ProcessedSet, PreprocessConfig> pipeline_from_meta(const io::Manifest& m) {
    ProcessedSet fitted;
    fitted.ap_ids = parse_ap_ids(m.get("meta.ap_ids"));
    fitted.norm_bounds = parse_bounds(m.get("meta.bounds"));
    fitted.min_rssi = m.get_number<double>("meta.min_rssi");
    fitted.powed_exponent = m.get_number<double>("meta.powed_exponent");
    fitted.building_count = m.get_number<int>("meta.building_count");
    fitted.floor_count = m.get_number<int>("meta.floor_count");
    fitted.features.resize(0, static_cast<Eigen::Index>(fitted.ap_ids.size()));
    PreprocessConfig cfg;
    cfg.missing_sentinel = m.get_number<int>("meta.missing_sentinel");
    cfg.powed_exponent = fitted.powed_exponent;
    cfg.min_rssi = fitted.min_rssi;
    return {fitted, cfg};
}

// ---------------------------------------------------------------------------
// Serialization helpers
// ---------------------------------------------------------------------------

inline json metrics_json(const LocalizationMetrics& m) {
    return {{"b_acc", m.b_acc},
            {"f_acc", m.f_acc},
            {"acc", m.acc},
            {"mde2d_correct_subset", m.mde2d_correct},
            {"mde2d_eq6_as_printed", m.mde2d_eq6},
            {"mde3d", m.mde3d},
            {"n", m.n},
            {"n_correct", m.n_correct},
            {"no_correct_records", m.no_correct_records}};
}

inline std::string utc_timestamp() {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline json decision_flags(const RunConfig& cfg) {
    const auto adam = cfg.effective_adam();
    return {{"visibility_keep_rule", "captured_count >= (1 - tau) * N, relative slack 1e-9"},
            {"min_rssi", cfg.preprocess.min_rssi ? "configured" : "derived: global minimum - 1 dBm"},
            {"coordinate_normalization", "min-max on training-file bounds"},
            {"split", "stratified by (building, floor), largest remainder"},
            {"layer_order", "dense,batchnorm,relu,dropout"},
            {"initialization", "he-uniform hidden, glorot-uniform heads"},
            {"adam_betas", io::format_double(adam.beta1) + "," + io::format_double(adam.beta2)},
            {"wiring", to_string(cfg.model.wiring)},
            {"argmax_ties", "lowest class index"},
            {"optimizer_state_across_rounds", "reset every round"},
            {"batchnorm_statistics", "aggregated with the same weights as parameters"},
            {"participation", "all clients every round"},
            {"channel_budget", "reporting only"},
            {"headline_mde2d", to_string(cfg.metrics.mde_variant)}};
}

inline json dataset_json(const PreparedData& d) {
    json j = {{"train_hash", d.train_hash},
              {"stage0_aps", d.selection.original},
              {"stage1_aps", d.selection.after_all_missing},
              {"stage2_aps", d.selection.after_visibility},
              {"min_rssi", d.fitted.min_rssi},
              {"train_records", d.train.size()},
              {"test_records", d.test.size()}};
    if (d.validation) {
        j["validation_hash"] = d.validation_hash;
        j["validation_records"] = d.validation->size();
    }
    return j;
}

inline void write_json(const fs::path& path, const json& j) { io::write_file(path, j.dump(2) + "\n"); }

inline void write_manifest(const fs::path& out, const RunConfig& cfg, Mode mode, const PreparedData& d) {
    write_json(out / "manifest.json", {{"version", kVersion},
                                       {"mode", to_string(mode)},
                                       {"created_utc", utc_timestamp()},
                                       {"config", to_json(cfg)},
                                       {"decisions", decision_flags(cfg)},
                                       {"dataset", dataset_json(d)}});
}

// ---------------------------------------------------------------------------
// Training runs
// ---------------------------------------------------------------------------

inline json evaluate_network(const Network& net, const PreparedData& d) {
    json j;
    j["test"] = metrics_json(evaluate(net, d.test));
    j["validation"] = d.validation ? metrics_json(evaluate(net, *d.validation)) : json(nullptr);
    return j;
}

inline json run_central(const RunConfig& cfg, const PreparedData& d, const fs::path& out) {
    const auto model = cfg.model_for(d.train);
    const auto result = train_central<float>(d.train, cfg.central_train_config(), model);

    std::string history = "epoch,loss,building_loss,floor_loss,location_loss\n";
    for (const auto& e : result.history) {
        history += std::to_string(e.epoch) + "," + io::format_double(e.loss.total) + "," +
                   io::format_double(e.loss.building) + "," + io::format_double(e.loss.floor) + "," +
                   io::format_double(e.loss.location) + "\n";
    }
    io::write_file(out / "history.csv", history);
    save_checkpoint(result.network, out / "checkpoint", pipeline_meta(d.fitted, cfg.preprocess));

    json m = evaluate_network(result.network, d);
    m["mode"] = "central";
    m["epochs"] = cfg.train.epochs;
    m["parameters"] = result.network.trainable_count();
    m["model_checksum"] = hex64(checksum(result.network.snapshot()));
    return m;
}

inline Partition make_partition(const RunConfig& cfg, const ProcessedSet& train, std::size_t clients,
                                std::size_t per_client) {
    if (per_client > 0) {
        if (cfg.federation.partition != PartitionStrategy::iid_uniform) {
            throw ConfigError("fixed-size shards are only defined for the iid partition");
        }
        return partition_fixed_size(train.size(), clients, per_client, cfg.seed);
    }
    return partition_clients(train, clients, cfg.federation.partition, cfg.seed);
}

inline json run_federated_once(const RunConfig& cfg, const PreparedData& d, const fs::path& out,
                               std::size_t clients, std::size_t per_client, std::ostream* progress) {
    const auto model = cfg.model_for(d.train);
    const auto partition = make_partition(cfg, d.train, clients, per_client);
    const auto fcfg = cfg.fed_config(clients);

    std::ofstream rounds(out / "history.csv", std::ios::binary);
    rounds << fed::round_csv_header(clients);
    auto on_round = [&](const fed::RoundReport& r) {
        rounds << fed::round_csv_row(r);
        rounds.flush();
        if (progress) {
            *progress << "round " << r.round << "/" << fcfg.rounds << " train_loss=" << r.train_loss;
            if (r.eval) {
                *progress << " eval_loss=" << r.eval->loss.total << " acc=" << r.eval->metrics.acc;
            }
            *progress << "\n";
        }
    };
    const auto result = fed::run_federation(d.train, partition, fcfg, model, &d.test, cfg.channel, on_round);
    save_checkpoint(result.network, out / "checkpoint", pipeline_meta(d.fitted, cfg.preprocess));

    json m = evaluate_network(result.network, d);
    std::uint64_t uplink_cumulative = 0;
    std::uint64_t downlink_cumulative = 0;
    for (const auto& r : result.reports) {
        uplink_cumulative += r.uplink_bits_total;
        downlink_cumulative += r.downlink_bits;
    }
    std::size_t pooled = 0;
    for (const auto& s : partition.client_shards) {
        pooled += s.size();
    }
    m["mode"] = "federated";
    m["clients"] = clients;
    m["records_pooled"] = pooled;
    m["rounds_run"] = result.reports.size();
    m["converged"] = result.converged;
    m["parameters"] = result.network.trainable_count();
    m["uplink_bits_per_round"] = result.reports.front().uplink_bits_total;
    m["downlink_bits_per_round"] = result.reports.front().downlink_bits;
    m["uplink_bits_cumulative"] = uplink_cumulative;
    m["downlink_bits_cumulative"] = downlink_cumulative;
    m["eval_loss_first_round"] = result.reports.front().eval->loss.total;
    m["eval_loss_last_round"] = result.reports.back().eval->loss.total;
    m["model_checksum"] = hex64(checksum(result.network.snapshot()));
    return m;
}

inline json run_hierbase(const RunConfig& cfg, const PreparedData& d) {
    const hierbase::HierarchicalLocalizer loc(d.train, cfg.hierbase.lambda);
    json m;
    m["test"] = metrics_json(loc.evaluate(d.test));
    m["validation"] = d.validation ? metrics_json(loc.evaluate(*d.validation)) : json(nullptr);
    m["mode"] = "hierbase";
    m["lambda"] = cfg.hierbase.lambda;
    return m;
}

/// Runs `mode` into `out` and returns the metrics document. Federated
/// configs with a client sweep produce one sub-run per client count
/// (`out/C<k>/`) plus `out/sweep.csv`.
inline json train(const RunConfig& cfg, Mode mode, const fs::path& out, std::ostream* progress = nullptr) {
    cfg.validate();
    const PreparedData d = prepare_data(cfg);
    fs::create_directories(out);

    if (mode == Mode::federated && !cfg.federation.sweep_clients.empty()) {
        const auto& sweep = cfg.federation.sweep_clients;
        const std::size_t largest = *std::max_element(sweep.begin(), sweep.end());
        std::size_t per_client = cfg.federation.records_per_client;
        if (cfg.federation.proportional_data) {
            per_client = d.train.size() / largest;
        }
        std::string table = "clients,records_pooled,b_acc,f_acc,acc,mde2d_correct_subset,mde2d_eq6_as_printed,mde3d,"
                            "uplink_bits_per_round,uplink_bits_cumulative\n";
        json runs = json::array();
        for (std::size_t c : sweep) {
            RunConfig sub = cfg;
            sub.federation.clients = c;
            sub.federation.sweep_clients.clear();
            sub.federation.records_per_client = per_client;
            sub.federation.proportional_data = false;
            const fs::path dir = out / ("C" + std::to_string(c));
            fs::create_directories(dir);
            write_manifest(dir, sub, mode, d);
            if (progress) {
                *progress << "sweep: C=" << c << "\n";
            }
            json m = run_federated_once(sub, d, dir, c, per_client, progress);
            write_json(dir / "metrics.json", m);
            const auto& t = m["test"];
            table += std::to_string(c) + "," + std::to_string(m["records_pooled"].get<std::size_t>()) + "," +
                     io::format_double(t["b_acc"].get<double>()) + "," + io::format_double(t["f_acc"].get<double>()) +
                     "," + io::format_double(t["acc"].get<double>()) + "," +
                     io::format_double(t["mde2d_correct_subset"].get<double>()) + "," +
                     io::format_double(t["mde2d_eq6_as_printed"].get<double>()) + "," +
                     io::format_double(t["mde3d"].get<double>()) + "," +
                     std::to_string(m["uplink_bits_per_round"].get<std::uint64_t>()) + "," +
                     std::to_string(m["uplink_bits_cumulative"].get<std::uint64_t>()) + "\n";
            runs.push_back({{"clients", c}, {"dir", dir.filename().string()}});
        }
        write_manifest(out, cfg, mode, d);
        io::write_file(out / "sweep.csv", table);
        json summary = {{"mode", "federated-sweep"}, {"runs", runs}};
        write_json(out / "metrics.json", summary);
        return summary;
    }

    write_manifest(out, cfg, mode, d);
    json m;
    switch (mode) {
        case Mode::central: m = run_central(cfg, d, out); break;
        case Mode::federated:
            m = run_federated_once(cfg, d, out, cfg.federation.clients, cfg.federation.records_per_client, progress);
            break;
        case Mode::hierbase: m = run_hierbase(cfg, d); break;
    }
    m["headline_mde2d"] = to_string(cfg.metrics.mde_variant);
    write_json(out / "metrics.json", m);
    return m;
}

// ---------------------------------------------------------------------------
// Other commands
// ---------------------------------------------------------------------------

struct PreprocessSummary {
    ApSelectionReport selection;
    double min_rssi = 0.0;
    std::size_t train_records = 0;
    std::size_t test_records = 0;
    std::optional<std::size_t> validation_records;
    std::string cache_checksum;
};

/// Writes processed train/test (and validation) caches under `out`.
inline PreprocessSummary preprocess(const RunConfig& cfg, const fs::path& out) {
    cfg.validate();
    const PreparedData d = prepare_data(cfg);
    std::vector<std::pair<std::string, const ProcessedSet*>> parts{{"train", &d.train}, {"test", &d.test}};
    if (d.validation) {
        parts.emplace_back("validation", &*d.validation);
    }
    Fnv1a hash;
    for (const auto& [name, set] : parts) {
        save_processed(*set, out / name, cfg.preprocess);
        for (const char* file : {"manifest.txt", "features.f32", "labels.csv"}) {
            hash.update(io::read_file(out / name / file));
        }
    }
    PreprocessSummary s;
    s.selection = d.selection;
    s.min_rssi = d.fitted.min_rssi;
    s.train_records = d.train.size();
    s.test_records = d.test.size();
    if (d.validation) {
        s.validation_records = d.validation->size();
    }
    s.cache_checksum = hex64(hash.digest());
    write_json(out / "preprocess.json", {{"stage0_aps", s.selection.original},
                                         {"stage1_aps", s.selection.after_all_missing},
                                         {"stage2_aps", s.selection.after_visibility},
                                         {"min_rssi", s.min_rssi},
                                         {"train_records", s.train_records},
                                         {"test_records", s.test_records},
                                         {"train_hash", d.train_hash},
                                         {"config", to_json(cfg)["preprocess"]},
                                         {"cache_checksum", s.cache_checksum}});
    return s;
}

/// Evaluates a checkpoint on a survey CSV using the checkpoint's pipeline.
inline json evaluate_checkpoint(const fs::path& checkpoint_dir, const fs::path& csv) {
    if (!fs::exists(csv)) {
        throw DataError("evaluation file " + csv.string() + " not found");
    }
    const auto cp = load_checkpoint(checkpoint_dir);
    const auto [fitted, pcfg] = pipeline_from_meta(cp.manifest);
    const auto set = apply_fitted_pipeline(load_csv(csv), fitted, pcfg);
    json m = metrics_json(evaluate(cp.network, set));
    m["checkpoint_checksum"] = cp.manifest.get("checksum");
    return m;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

/// Run directories to tabulate: a sweep directory expands to its C<k>/
/// sub-runs in client order.
inline std::vector<fs::path> expand_runs(const std::vector<fs::path>& dirs) {
    std::vector<fs::path> out;
    for (const auto& dir : dirs) {
        if (!fs::exists(dir / "metrics.json")) {
            throw DataError("no metrics.json in " + dir.string());
        }
        const json m = read_json_file(dir / "metrics.json");
        if (m.value("mode", "") == "federated-sweep") {
            for (const auto& r : m.at("runs")) {
                out.push_back(dir / r.at("dir").get<std::string>());
            }
        } else {
            out.push_back(dir);
        }
    }
    return out;
}

/// One row per run; delta_mde2d_pct is relative to the first run's headline
/// 2D-MDE: 100 * (this - first) / first.
inline std::string report_csv(const std::vector<fs::path>& dirs) {
    if (dirs.empty()) {
        throw UsageError("report needs at least one run directory");
    }
    const auto runs = expand_runs(dirs);
    std::string csv =
        "run,mode,wiring,clients,b_acc,f_acc,acc,mde2d_correct_subset,mde2d_eq6_as_printed,mde3d,"
        "uplink_bits_per_round,uplink_bits_cumulative,delta_mde2d_pct\n";
    std::optional<double> baseline;
    std::string headline_key;
    for (const auto& dir : runs) {
        const json m = read_json_file(dir / "metrics.json");
        const json manifest = read_json_file(dir / "manifest.json");
        const auto& t = m.at("test");
        if (headline_key.empty()) {
            headline_key = m.value("headline_mde2d", "correct-subset") == "eq6-as-printed" ? "mde2d_eq6_as_printed"
                                                                                          : "mde2d_correct_subset";
        }
        const double headline = t.at(headline_key).get<double>();
        std::string delta;
        if (!baseline) {
            baseline = headline;
            delta = "0";
        } else if (*baseline > 0.0) {
            delta = io::format_double(100.0 * (headline - *baseline) / *baseline);
        }
        const std::string mode = m.at("mode").get<std::string>();
        csv += dir.string() + "," + mode + "," + manifest.at("config").at("model").at("wiring").get<std::string>() +
               "," + (mode == "federated" ? std::to_string(m.at("clients").get<std::size_t>()) : std::string()) +
               "," + io::format_double(t.at("b_acc").get<double>()) + "," +
               io::format_double(t.at("f_acc").get<double>()) + "," + io::format_double(t.at("acc").get<double>()) +
               "," + io::format_double(t.at("mde2d_correct_subset").get<double>()) + "," +
               io::format_double(t.at("mde2d_eq6_as_printed").get<double>()) + "," +
               io::format_double(t.at("mde3d").get<double>()) + "," +
               (m.contains("uplink_bits_per_round") ? std::to_string(m["uplink_bits_per_round"].get<std::uint64_t>())
                                                    : std::string()) +
               "," +
               (m.contains("uplink_bits_cumulative")
                    ? std::to_string(m["uplink_bits_cumulative"].get<std::uint64_t>())
                    : std::string()) +
               "," + delta + "\n";
    }
    return csv;
}

struct ParameterCount {
    std::size_t total = 0;
    std::size_t trunk = 0;
    std::uint64_t payload_bits = 0;
};

inline ParameterCount parameter_count(const RunConfig& cfg) {
    const auto net = build_model<float>(cfg.canonical_model(), cfg.seed);
    return {net.trainable_count(), net.trunk_trainable_count(),
            channel::model_payload_bits(net.trainable_count(), cfg.channel.bit_resolution)};
}

/// Feasibility rows for C = 1..max_clients with the configured network.
inline std::string comm_budget_csv(const RunConfig& cfg, std::size_t max_clients) {
    if (max_clients < 1) {
        throw UsageError("comm-budget needs --max-clients >= 1");
    }
    std::vector<std::size_t> counts(max_clients);
    for (std::size_t c = 0; c < max_clients; ++c) {
        counts[c] = c + 1;
    }
    return channel::feasibility_csv(channel::feasibility_report(cfg.channel, parameter_count(cfg).total, counts));
}

}  // namespace fedloc::run
