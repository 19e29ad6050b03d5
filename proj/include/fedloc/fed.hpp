#pragma once

// FedAvg orchestration: server initialization, broadcast, parallel client
// training, dataset-size weighted aggregation and the round loop.
//
// Determinism does not depend on scheduling: each client draws from the
// stream (seed, client, round) and aggregation always sums in client-id
// order with double accumulators.

#include "fedloc/channel.hpp"
#include "fedloc/common.hpp"
#include "fedloc/dataset.hpp"
#include "fedloc/hmodel.hpp"
#include "fedloc/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <future>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

namespace fedloc::fed {

struct FedConfig {
    std::size_t clients = 5;        // C
    std::size_t local_epochs = 10;  // E
    std::size_t batch_size = 64;    // B
    std::size_t rounds = 100;       // max communication rounds
    nn::AdamConfig adam;            // lr = mu
    nn::OptimizerKind optimizer = nn::OptimizerKind::adam;
    double tolerance = 1e-4;        // relative eval-loss improvement
    std::size_t patience = 5;
    std::uint64_t seed = 1;
    std::size_t workers = 0;  // 0 = hardware concurrency

    void validate() const {
        if (clients < 1 || local_epochs < 1 || rounds < 1) {
            throw ConfigError("federation needs C >= 1, E >= 1 and R >= 1");
        }
        if (batch_size < 2) {
            throw ConfigError("batch size must be at least 2 (batch normalization)");
        }
        if (!(tolerance >= 0.0)) {
            throw ConfigError("convergence tolerance must be non-negative");
        }
    }

    [[nodiscard]] TrainConfig local_train_config() const {
        TrainConfig t;
        t.epochs = local_epochs;
        t.batch_size = batch_size;
        t.adam = adam;
        t.optimizer = optimizer;
        t.seed = seed;
        return t;
    }
};

/// W_0: the initialized global network.
inline Network server_init(const HMlpConfig& model_cfg, std::uint64_t seed) {
    return build_model<float>(model_cfg, seed);
}

/// Independent value copies of the global model, one per client.
inline std::vector<Network> broadcast(const Network& global, std::size_t clients) {
    return std::vector<Network>(clients, global);
}

struct ClientUpdate {
    std::size_t client = 0;
    ModelParams<float> params;
    std::size_t dataset_size = 0;
    std::vector<EpochStats> history;
    std::uint64_t checksum = 0;
};

/// E local epochs on the client's shard, starting from `global` with a fresh
/// optimizer, drawing from the (seed, client, round) stream.
inline ClientUpdate client_local_training(const ProcessedSet& train, std::span<const std::size_t> shard,
                                          const Network& global, const FedConfig& cfg, std::size_t client,
                                          std::size_t round) {
    if (shard.empty()) {
        throw DataError("client " + std::to_string(client) + " has an empty shard");
    }
    Network local = global;
    Rng rng(stream_seed(cfg.seed, client, round));
    ClientUpdate u;
    u.client = client;
    u.dataset_size = shard.size();
    try {
        u.history = train_epochs(local, train, shard, cfg.local_train_config(), rng);
    } catch (const NumericError& e) {
        throw NumericError("client " + std::to_string(client) + ", round " + std::to_string(round) + ": " +
                           e.what());
    }
    u.params = local.snapshot();
    u.checksum = checksum(u.params);
    return u;
}

template <typename T>
struct Contribution {
    std::size_t client = 0;
    const ModelParams<T>* params = nullptr;
    std::size_t dataset_size = 0;
};

/// W_{r+1} = sum_c |D_c| W_r^c / sum_c |D_c|, per tensor, summed in
/// client-id order. Batch-norm running statistics are averaged the same way;
/// optimizer state is never aggregated.
template <typename T>
ModelParams<T> aggregate(std::span<const Contribution<T>> contributions) {
    if (contributions.empty()) {
        throw ConfigError("aggregate needs at least one client");
    }
    std::vector<Contribution<T>> ordered(contributions.begin(), contributions.end());
    std::stable_sort(ordered.begin(), ordered.end(), [](const auto& a, const auto& b) { return a.client < b.client; });
    double total = 0.0;
    for (const auto& c : ordered) {
        if (c.dataset_size == 0) {
            throw ConfigError("aggregate: client " + std::to_string(c.client) + " reported an empty dataset");
        }
        if (!c.params->same_layout(*ordered.front().params)) {
            throw ShapeError("aggregate: client " + std::to_string(c.client) + " uploaded a different layout");
        }
        total += static_cast<double>(c.dataset_size);
    }
    ModelParams<T> out = *ordered.front().params;
    for (std::size_t t = 0; t < out.size(); ++t) {
        Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(out.tensors[t].rows(), out.tensors[t].cols());
        for (const auto& c : ordered) {
            acc += (static_cast<double>(c.dataset_size) / total) * c.params->tensors[t].template cast<double>();
        }
        out.tensors[t] = acc.template cast<T>();
    }
    return out;
}

template <typename T>
ModelParams<T> aggregate(const std::vector<ModelParams<T>>& params, const std::vector<std::size_t>& sizes) {
    if (params.size() != sizes.size()) {
        throw ShapeError("aggregate: parameter and size counts differ");
    }
    std::vector<Contribution<T>> c;
    for (std::size_t i = 0; i < params.size(); ++i) {
        c.push_back({i, &params[i], sizes[i]});
    }
    return aggregate(std::span<const Contribution<T>>(c));
}

struct RoundReport {
    std::size_t round = 0;  // 1-based
    std::vector<std::vector<double>> client_losses;  // per client, per local epoch (global loss)
    std::vector<std::size_t> client_sizes;
    std::vector<std::uint64_t> client_checksums;
    std::uint64_t global_checksum = 0;
    std::optional<Evaluation> eval;
    double train_loss = 0.0;  // size-weighted final-epoch client loss
    std::uint64_t uplink_bits_total = 0;
    std::uint64_t downlink_bits = 0;
    double downlink_capacity_bits = 0.0;
    double min_uplink_capacity_bits = 0.0;
    bool uplink_feasible = false;
    bool downlink_feasible = false;

    /// Eval loss when an eval set is attached, otherwise the training loss.
    [[nodiscard]] double monitored_loss() const { return eval ? eval->loss.total : train_loss; }
};

class FederationError : public NumericError {
public:
    FederationError(const std::string& what, std::vector<RoundReport> partial)
        : NumericError(what), partial_(std::move(partial)) {}
    [[nodiscard]] const std::vector<RoundReport>& partial_reports() const { return partial_; }

private:
    std::vector<RoundReport> partial_;
};

struct FederationResult {
    Network network;
    std::vector<RoundReport> reports;
    bool converged = false;
};

using RoundCallback = std::function<void(const RoundReport&)>;

/// Broadcast -> local training -> aggregate -> evaluate, until `cfg.rounds`
/// rounds or until the monitored loss improves by less than `tolerance`
/// (relative) for `patience` consecutive rounds.
inline FederationResult run_federation(const ProcessedSet& train, const Partition& partition, const FedConfig& cfg,
                                       const HMlpConfig& model_cfg, const ProcessedSet* eval_set = nullptr,
                                       const channel::ChannelConfig& channel_cfg = {},
                                       const RoundCallback& on_round = {}) {
    cfg.validate();
    if (partition.client_count() != cfg.clients) {
        throw ConfigError("partition has " + std::to_string(partition.client_count()) + " shards for " +
                          std::to_string(cfg.clients) + " clients");
    }
    FederationResult result{server_init(model_cfg, cfg.seed), {}, false};
    const std::size_t workers =
        cfg.workers ? cfg.workers : std::max<std::size_t>(1, std::thread::hardware_concurrency());
    const std::uint64_t payload =
        channel::model_payload_bits(result.network.trainable_count(), channel_cfg.bit_resolution);

    std::size_t stalled = 0;
    for (std::size_t r = 0; r < cfg.rounds; ++r) {
        const Network& global = result.network;
        std::vector<ClientUpdate> updates(cfg.clients);
        std::optional<std::string> failure;
        for (std::size_t first = 0; first < cfg.clients; first += workers) {
            const std::size_t last = std::min(cfg.clients, first + workers);
            std::vector<std::future<ClientUpdate>> running;
            for (std::size_t c = first; c < last; ++c) {
                running.push_back(std::async(std::launch::async, [&, c] {
                    return client_local_training(train, partition.client_shards[c], global, cfg, c, r);
                }));
            }
            for (std::size_t k = 0; k < running.size(); ++k) {
                try {
                    updates[first + k] = running[k].get();
                } catch (const std::exception& e) {
                    if (!failure) {
                        failure = e.what();
                    }
                }
            }
        }
        if (failure) {
            throw FederationError("federation aborted in round " + std::to_string(r + 1) + ": " + *failure,
                                  result.reports);
        }

        std::vector<Contribution<float>> contributions;
        RoundReport report;
        report.round = r + 1;
        double weighted_loss = 0.0;
        double total = 0.0;
        for (const auto& u : updates) {
            contributions.push_back({u.client, &u.params, u.dataset_size});
            std::vector<double> losses;
            for (const auto& h : u.history) {
                losses.push_back(h.loss.total);
            }
            weighted_loss += static_cast<double>(u.dataset_size) * losses.back();
            total += static_cast<double>(u.dataset_size);
            report.client_losses.push_back(std::move(losses));
            report.client_sizes.push_back(u.dataset_size);
            report.client_checksums.push_back(u.checksum);
        }
        result.network.load(aggregate(std::span<const Contribution<float>>(contributions)));
        report.train_loss = weighted_loss / total;
        report.global_checksum = checksum(result.network.snapshot());
        if (eval_set) {
            report.eval = evaluate_detailed(result.network, *eval_set);
        }
        report.uplink_bits_total = payload * cfg.clients;
        report.downlink_bits = payload;
        report.downlink_capacity_bits = channel::downlink_bits(channel_cfg, cfg.clients, r);
        report.min_uplink_capacity_bits = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < cfg.clients; ++c) {
            report.min_uplink_capacity_bits = std::min(report.min_uplink_capacity_bits,
                                                       channel::uplink_bits_per_client(channel_cfg, c, cfg.clients, r));
        }
        report.uplink_feasible = static_cast<double>(payload) <= report.min_uplink_capacity_bits;
        report.downlink_feasible = static_cast<double>(payload) <= report.downlink_capacity_bits;

        if (!result.reports.empty()) {
            const double prev = result.reports.back().monitored_loss();
            const double cur = report.monitored_loss();
            const double rel = (prev - cur) / std::max(std::abs(prev), 1e-12);
            stalled = rel < cfg.tolerance ? stalled + 1 : 0;
        }
        result.reports.push_back(report);
        if (on_round) {
            on_round(result.reports.back());
        }
        if (cfg.patience > 0 && stalled >= cfg.patience) {
            result.converged = true;
            break;
        }
    }
    return result;
}

inline std::string round_csv_header(std::size_t clients) {
    std::string h = "round";
    for (std::size_t c = 0; c < clients; ++c) {
        h += ",client" + std::to_string(c) + "_loss";
    }
    h += ",train_loss,eval_loss,b_acc,f_acc,acc,mde2d_correct,mde2d_eq6,mde3d,uplink_bits_total,downlink_bits,"
         "downlink_capacity_bits,min_uplink_capacity_bits,uplink_feasible,downlink_feasible,global_checksum\n";
    return h;
}

inline std::string round_csv_row(const RoundReport& r) {
    std::string s = std::to_string(r.round);
    for (const auto& l : r.client_losses) {
        s += "," + io::format_double(l.empty() ? 0.0 : l.back());
    }
    s += "," + io::format_double(r.train_loss);
    if (r.eval) {
        const auto& m = r.eval->metrics;
        s += "," + io::format_double(r.eval->loss.total) + "," + io::format_double(m.b_acc) + "," +
             io::format_double(m.f_acc) + "," + io::format_double(m.acc) + "," + io::format_double(m.mde2d_correct) +
             "," + io::format_double(m.mde2d_eq6) + "," + io::format_double(m.mde3d);
    } else {
        s += ",,,,,,,";
    }
    s += "," + std::to_string(r.uplink_bits_total) + "," + std::to_string(r.downlink_bits) + "," +
         io::format_double(r.downlink_capacity_bits) + "," + io::format_double(r.min_uplink_capacity_bits) + "," +
         (r.uplink_feasible ? "1" : "0") + "," + (r.downlink_feasible ? "1" : "0") + "," + hex64(r.global_checksum) +
         "\n";
    return s;
}

}  // namespace fedloc::fed
