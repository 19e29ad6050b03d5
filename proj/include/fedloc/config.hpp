#pragma once

// Run configuration: one JSON document with a section per module.
// Resolution order is defaults, then the config file, then command-line
// overrides; the resolved document is what the run manifest records.

#include "fedloc/channel.hpp"
#include "fedloc/common.hpp"
#include "fedloc/dataset.hpp"
#include "fedloc/fed.hpp"
#include "fedloc/hmodel.hpp"
#include "fedloc/io.hpp"
#include "fedloc/metrics.hpp"

#include "json.hpp"

#include <cstdlib>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace fedloc {

using json = nlohmann::json;

struct DataConfig {
    std::string dir;  // empty: FEDLOC_DATA_DIR
    std::string train_file = "trainingData.csv";
    std::string validation_file = "validationData.csv";
    double train_ratio = 0.9;
};

struct TrainSection {
    std::size_t epochs = 1000;
    std::size_t batch_size = 64;
    nn::OptimizerKind optimizer = nn::OptimizerKind::adam;
    nn::AdamConfig adam;
    bool adam_conventional = false;  // beta1 = 0.9, beta2 = 0.999
};

struct FederationSection {
    std::size_t clients = 5;
    std::size_t local_epochs = 10;
    std::size_t rounds = 100;
    PartitionStrategy partition = PartitionStrategy::iid_uniform;
    nn::OptimizerKind local_optimizer = nn::OptimizerKind::adam;
    double tolerance = 1e-4;
    std::size_t patience = 5;
    std::size_t workers = 0;
    // 0: the whole training split is divided among the clients. Otherwise
    // each client gets this many records (iid only).
    std::size_t records_per_client = 0;
    // Sweep over client counts. With proportional_data each client receives
    // |train| / max(sweep) records, so the pooled data grows with C.
    std::vector<std::size_t> sweep_clients;
    bool proportional_data = false;
};

struct HierbaseSection {
    double lambda = 1e-2;
};

struct MetricsSection {
    MdeVariant mde_variant = MdeVariant::correct_subset;  // headline 2D-MDE
};

struct RunConfig {
    std::uint64_t seed = 1;
    DataConfig data;
    PreprocessConfig preprocess;
    HMlpConfig model = auto_model();
    TrainSection train;
    FederationSection federation;
    channel::ChannelConfig channel;
    HierbaseSection hierbase;
    MetricsSection metrics;

    /// Input width and class counts of 0 are filled in from the data.
    static HMlpConfig auto_model() {
        HMlpConfig m;
        m.input_dim = 0;
        m.building_classes = 0;
        m.floor_classes = 0;
        return m;
    }

    [[nodiscard]] nn::AdamConfig effective_adam() const {
        nn::AdamConfig a = train.adam;
        if (train.adam_conventional) {
            a.beta1 = 0.9;
            a.beta2 = 0.999;
        }
        return a;
    }

    [[nodiscard]] TrainConfig central_train_config() const {
        TrainConfig t;
        t.epochs = train.epochs;
        t.batch_size = train.batch_size;
        t.adam = effective_adam();
        t.optimizer = train.optimizer;
        t.seed = seed;
        return t;
    }

    [[nodiscard]] fed::FedConfig fed_config(std::size_t clients) const {
        fed::FedConfig f;
        f.clients = clients;
        f.local_epochs = federation.local_epochs;
        f.batch_size = train.batch_size;
        f.rounds = federation.rounds;
        f.adam = effective_adam();
        f.optimizer = federation.local_optimizer;
        f.tolerance = federation.tolerance;
        f.patience = federation.patience;
        f.seed = seed;
        f.workers = federation.workers;
        return f;
    }

    /// The model with data-dependent zeros resolved against `set`. Pinned
    /// values that disagree with the data are a data error.
    [[nodiscard]] HMlpConfig model_for(const ProcessedSet& set) const {
        HMlpConfig m = model;
        auto pin = [](auto& field, auto actual, const char* what) {
            using F = std::remove_reference_t<decltype(field)>;
            if (field == F{0}) {
                field = static_cast<F>(actual);
            } else if (field != static_cast<F>(actual)) {
                throw DataError(std::string("configured ") + what + " " + std::to_string(field) +
                                " does not match the data (" + std::to_string(actual) + ")");
            }
        };
        pin(m.input_dim, set.feature_count(), "model.input_dim");
        pin(m.building_classes, set.building_count, "model.building_classes");
        pin(m.floor_classes, set.floor_count, "model.floor_classes");
        m.validate();
        return m;
    }

    /// The model with data-dependent zeros replaced by the canonical survey
    /// shape (248 APs, 3 buildings, 5 floors), for counting without data.
    [[nodiscard]] HMlpConfig canonical_model() const {
        HMlpConfig m = model;
        if (m.input_dim == 0) {
            m.input_dim = 248;
        }
        if (m.building_classes == 0) {
            m.building_classes = 3;
        }
        if (m.floor_classes == 0) {
            m.floor_classes = 5;
        }
        m.validate();
        return m;
    }

    void validate() const {
        preprocess.validate();
        channel.validate();
        if (!(data.train_ratio > 0.0 && data.train_ratio < 1.0)) {
            throw ConfigError("data.train_ratio must lie in (0, 1)");
        }
        if (train.epochs < 1) {
            throw ConfigError("train.epochs must be at least 1");
        }
        if (train.batch_size < 2) {
            throw ConfigError("train.batch_size must be at least 2 (batch normalization)");
        }
        if (!(train.adam.lr >= 0.0)) {
            throw ConfigError("train.lr must be non-negative");
        }
        if (!(hierbase.lambda >= 0.0)) {
            throw ConfigError("hierbase.lambda must be non-negative");
        }
        if (federation.clients < 1 || federation.rounds < 1 || federation.local_epochs < 1) {
            throw ConfigError("federation needs clients, rounds and local_epochs >= 1");
        }
        for (auto c : federation.sweep_clients) {
            if (c < 1) {
                throw ConfigError("federation.sweep_clients entries must be >= 1");
            }
        }
    }
};

inline std::string to_string(nn::OptimizerKind k) { return k == nn::OptimizerKind::adam ? "adam" : "sgd"; }

inline nn::OptimizerKind parse_optimizer(std::string_view s) {
    if (s == "adam") {
        return nn::OptimizerKind::adam;
    }
    if (s == "sgd") {
        return nn::OptimizerKind::sgd;
    }
    throw UsageError("unknown optimizer '" + std::string(s) + "'");
}

inline json to_json(const RunConfig& c) {
    json j;
    j["seed"] = c.seed;
    j["data"] = {{"dir", c.data.dir},
                 {"train_file", c.data.train_file},
                 {"validation_file", c.data.validation_file},
                 {"train_ratio", c.data.train_ratio}};
    j["preprocess"] = {{"visibility_threshold", c.preprocess.visibility_threshold},
                       {"missing_sentinel", c.preprocess.missing_sentinel},
                       {"min_rssi", c.preprocess.min_rssi ? json(*c.preprocess.min_rssi) : json(nullptr)},
                       {"powed_exponent", c.preprocess.powed_exponent}};
    const auto& m = c.model;
    j["model"] = {{"input_dim", m.input_dim},
                  {"common_layers", m.common_layers},
                  {"common_dropout", m.common_dropout},
                  {"building_classes", m.building_classes},
                  {"floor_hidden", m.floor_hidden},
                  {"floor_dropout", m.floor_dropout},
                  {"floor_classes", m.floor_classes},
                  {"location_hidden", m.location_hidden},
                  {"location_dropout", m.location_dropout},
                  {"loss_weights",
                   {{"building", m.weights.building}, {"floor", m.weights.floor}, {"location", m.weights.location}}},
                  {"wiring", to_string(m.wiring)},
                  {"bn_momentum", m.bn_momentum},
                  {"bn_epsilon", m.bn_epsilon}};
    j["train"] = {{"epochs", c.train.epochs},
                  {"batch_size", c.train.batch_size},
                  {"optimizer", to_string(c.train.optimizer)},
                  {"lr", c.train.adam.lr},
                  {"beta1", c.train.adam.beta1},
                  {"beta2", c.train.adam.beta2},
                  {"epsilon", c.train.adam.epsilon},
                  {"adam_conventional", c.train.adam_conventional}};
    const auto& f = c.federation;
    j["federation"] = {{"clients", f.clients},
                       {"local_epochs", f.local_epochs},
                       {"rounds", f.rounds},
                       {"partition", to_string(f.partition)},
                       {"local_optimizer", to_string(f.local_optimizer)},
                       {"tolerance", f.tolerance},
                       {"patience", f.patience},
                       {"workers", f.workers},
                       {"records_per_client", f.records_per_client},
                       {"sweep_clients", f.sweep_clients},
                       {"proportional_data", f.proportional_data}};
    const auto& ch = c.channel;
    j["channel"] = {{"downlink_uses", ch.downlink_uses},
                    {"uplink_uses", ch.uplink_uses},
                    {"downlink_power", ch.downlink_power},
                    {"uplink_power", ch.uplink_power},
                    {"downlink_gains", ch.downlink_gains},
                    {"uplink_gains", ch.uplink_gains},
                    {"fading", channel::to_string(ch.fading)},
                    {"seed", ch.seed},
                    {"bit_resolution", ch.bit_resolution}};
    j["hierbase"] = {{"lambda", c.hierbase.lambda}};
    j["metrics"] = {{"mde_variant", to_string(c.metrics.mde_variant)}};
    return j;
}

namespace detail {

/// Every key of `patch` must exist in `schema`; objects are checked recursively.
inline void check_known_keys(const json& patch, const json& schema, const std::string& where) {
    if (!patch.is_object()) {
        throw ConfigError((where.empty() ? std::string("configuration") : where) + " must be a JSON object");
    }
    for (const auto& [key, value] : patch.items()) {
        const std::string path = where.empty() ? key : where + "." + key;
        if (!schema.contains(key)) {
            throw ConfigError("unknown configuration key '" + path + "'");
        }
        if (schema.at(key).is_object()) {
            check_known_keys(value, schema.at(key), path);
        }
    }
}

}  // namespace detail

inline RunConfig from_json(const json& j) {
    RunConfig c;
    try {
        c.seed = j.at("seed").get<std::uint64_t>();
        const auto& d = j.at("data");
        c.data.dir = d.at("dir").get<std::string>();
        c.data.train_file = d.at("train_file").get<std::string>();
        c.data.validation_file = d.at("validation_file").get<std::string>();
        c.data.train_ratio = d.at("train_ratio").get<double>();

        const auto& p = j.at("preprocess");
        c.preprocess.visibility_threshold = p.at("visibility_threshold").get<double>();
        c.preprocess.missing_sentinel = p.at("missing_sentinel").get<int>();
        if (p.contains("min_rssi") && !p.at("min_rssi").is_null()) {
            c.preprocess.min_rssi = p.at("min_rssi").get<double>();
        }
        c.preprocess.powed_exponent = p.at("powed_exponent").get<double>();

        const auto& m = j.at("model");
        c.model.input_dim = m.at("input_dim").get<std::size_t>();
        c.model.common_layers = m.at("common_layers").get<std::vector<std::size_t>>();
        c.model.common_dropout = m.at("common_dropout").get<double>();
        c.model.building_classes = m.at("building_classes").get<int>();
        c.model.floor_hidden = m.at("floor_hidden").get<std::size_t>();
        c.model.floor_dropout = m.at("floor_dropout").get<double>();
        c.model.floor_classes = m.at("floor_classes").get<int>();
        c.model.location_hidden = m.at("location_hidden").get<std::size_t>();
        c.model.location_dropout = m.at("location_dropout").get<double>();
        const auto& w = m.at("loss_weights");
        c.model.weights = {w.at("building").get<double>(), w.at("floor").get<double>(),
                           w.at("location").get<double>()};
        c.model.wiring = parse_wiring(m.at("wiring").get<std::string>());
        c.model.bn_momentum = m.at("bn_momentum").get<double>();
        c.model.bn_epsilon = m.at("bn_epsilon").get<double>();

        const auto& t = j.at("train");
        c.train.epochs = t.at("epochs").get<std::size_t>();
        c.train.batch_size = t.at("batch_size").get<std::size_t>();
        c.train.optimizer = parse_optimizer(t.at("optimizer").get<std::string>());
        c.train.adam.lr = t.at("lr").get<double>();
        c.train.adam.beta1 = t.at("beta1").get<double>();
        c.train.adam.beta2 = t.at("beta2").get<double>();
        c.train.adam.epsilon = t.at("epsilon").get<double>();
        c.train.adam_conventional = t.at("adam_conventional").get<bool>();

        const auto& f = j.at("federation");
        c.federation.clients = f.at("clients").get<std::size_t>();
        c.federation.local_epochs = f.at("local_epochs").get<std::size_t>();
        c.federation.rounds = f.at("rounds").get<std::size_t>();
        c.federation.partition = parse_partition_strategy(f.at("partition").get<std::string>());
        c.federation.local_optimizer = parse_optimizer(f.at("local_optimizer").get<std::string>());
        c.federation.tolerance = f.at("tolerance").get<double>();
        c.federation.patience = f.at("patience").get<std::size_t>();
        c.federation.workers = f.at("workers").get<std::size_t>();
        c.federation.records_per_client = f.at("records_per_client").get<std::size_t>();
        c.federation.sweep_clients = f.at("sweep_clients").get<std::vector<std::size_t>>();
        c.federation.proportional_data = f.at("proportional_data").get<bool>();

        const auto& ch = j.at("channel");
        c.channel.downlink_uses = ch.at("downlink_uses").get<double>();
        c.channel.uplink_uses = ch.at("uplink_uses").get<double>();
        c.channel.downlink_power = ch.at("downlink_power").get<double>();
        c.channel.uplink_power = ch.at("uplink_power").get<double>();
        c.channel.downlink_gains = ch.at("downlink_gains").get<std::vector<double>>();
        c.channel.uplink_gains = ch.at("uplink_gains").get<std::vector<double>>();
        c.channel.fading = channel::parse_fading(ch.at("fading").get<std::string>());
        c.channel.seed = ch.at("seed").get<std::uint64_t>();
        c.channel.bit_resolution = ch.at("bit_resolution").get<int>();

        c.hierbase.lambda = j.at("hierbase").at("lambda").get<double>();
        c.metrics.mde_variant = parse_mde_variant(j.at("metrics").at("mde_variant").get<std::string>());
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid configuration: ") + e.what());
    }
    c.validate();
    return c;
}

/// defaults < file < overrides. Unknown keys in either layer are rejected.
inline RunConfig resolve_config(const json& file_layer, const json& override_layer) {
    json merged = to_json(RunConfig{});
    const json schema = merged;
    for (const json* layer : {&file_layer, &override_layer}) {
        if (layer->is_null()) {
            continue;
        }
        detail::check_known_keys(*layer, schema, "");
        merged.merge_patch(*layer);
    }
    return from_json(merged);
}

inline json read_json_file(const std::filesystem::path& path) {
    const std::string text = io::read_file(path);
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError("cannot parse " + path.string() + ": " + e.what());
    }
}

/// Directory holding the committed presets: FEDLOC_PRESET_DIR, else the
/// source tree's presets/ as seen at build time.
inline std::filesystem::path preset_dir() {
    if (const char* env = std::getenv("FEDLOC_PRESET_DIR"); env && *env) {
        return env;
    }
#ifdef FEDLOC_DEFAULT_PRESET_DIR
    return FEDLOC_DEFAULT_PRESET_DIR;
#else
    return "presets";
#endif
}

inline json load_preset(const std::string& name) {
    const auto path = preset_dir() / (name + ".json");
    if (!std::filesystem::exists(path)) {
        throw UsageError("unknown preset '" + name + "' (looked for " + path.string() + ")");
    }
    return read_json_file(path);
}

}  // namespace fedloc
