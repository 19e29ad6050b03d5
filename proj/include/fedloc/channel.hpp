#pragma once

// Shannon-capacity communication budget of the federated loop: the downlink
// broadcast limit, the evenly shared uplink multiple-access limit per client,
// and the W x R model payload. Noise variance is 1, so gain * power is the SNR.
// Budgets are reported, never enforced.

#include "fedloc/common.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

namespace fedloc::channel {

enum class Fading { unit, rayleigh };

inline std::string to_string(Fading f) { return f == Fading::unit ? "unit" : "rayleigh"; }

inline Fading parse_fading(std::string_view s) {
    if (s == "unit") {
        return Fading::unit;
    }
    if (s == "rayleigh") {
        return Fading::rayleigh;
    }
    throw UsageError("unknown fading model '" + std::string(s) + "'");
}

struct ChannelConfig {
    double downlink_uses = 1e6;  // T_D
    double uplink_uses = 1e6;    // T_U
    double downlink_power = 100.0;  // P_D, linear
    double uplink_power = 10.0;     // P_U, linear
    // |g_r^c|^2 and |h_r^c|^2. One entry applies to every client; otherwise one
    // entry per client. Under Rayleigh fading they are the exponential means.
    std::vector<double> downlink_gains{1.0};
    std::vector<double> uplink_gains{1.0};
    Fading fading = Fading::unit;
    std::uint64_t seed = 0;
    int bit_resolution = 32;  // R

    void validate() const {
        if (!(downlink_uses > 0.0 && uplink_uses > 0.0)) {
            throw ConfigError("channel uses must be positive");
        }
        if (!(downlink_power > 0.0 && uplink_power > 0.0)) {
            throw ConfigError("transmit powers must be positive");
        }
        if (downlink_gains.empty() || uplink_gains.empty()) {
            throw ConfigError("at least one channel gain is required");
        }
        for (double g : downlink_gains) {
            if (!(g >= 0.0)) {
                throw ConfigError("channel gains must be non-negative");
            }
        }
        for (double g : uplink_gains) {
            if (!(g >= 0.0)) {
                throw ConfigError("channel gains must be non-negative");
            }
        }
        if (bit_resolution < 1) {
            throw ConfigError("bit resolution must be at least 1");
        }
    }
};

/// T * log2(1 + snr)
[[nodiscard]] inline double capacity_bits(double uses, double snr) {
    return uses * std::log2(1.0 + snr);
}

namespace detail {

inline double configured_gain(const std::vector<double>& gains, std::size_t client) {
    return gains.size() == 1 ? gains.front() : gains.at(client);
}

inline double round_gain(const ChannelConfig& cfg, const std::vector<double>& gains, std::size_t client,
                         std::size_t round, std::uint64_t link) {
    const double g = configured_gain(gains, client);
    if (cfg.fading == Fading::unit) {
        return g;
    }
    // quasi-static: one draw per (link, round, client)
    Rng rng(mix64(cfg.seed ^ mix64(link) ^ mix64((static_cast<std::uint64_t>(round) << 32) ^ client)));
    return rng.exponential(g);
}

}  // namespace detail

[[nodiscard]] inline double downlink_gain(const ChannelConfig& cfg, std::size_t client, std::size_t round) {
    return detail::round_gain(cfg, cfg.downlink_gains, client, round, 1);
}

[[nodiscard]] inline double uplink_gain(const ChannelConfig& cfg, std::size_t client, std::size_t round) {
    return detail::round_gain(cfg, cfg.uplink_gains, client, round, 2);
}

/// B_D,r = min_c T_D log2(1 + |g_r^c|^2 P_D)
[[nodiscard]] inline double downlink_bits(const ChannelConfig& cfg, std::size_t clients, std::size_t round) {
    cfg.validate();
    if (clients < 1) {
        throw ConfigError("downlink capacity needs at least one client");
    }
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < clients; ++c) {
        best = std::min(best, capacity_bits(cfg.downlink_uses, downlink_gain(cfg, c, round) * cfg.downlink_power));
    }
    return best;
}

/// B^c_U,r = (T_U / C) log2(1 + C |h_r^c|^2 P_U)
[[nodiscard]] inline double uplink_bits_per_client(const ChannelConfig& cfg, std::size_t client, std::size_t clients,
                                                   std::size_t round) {
    cfg.validate();
    if (clients < 1 || client >= clients) {
        throw ConfigError("uplink capacity: client index outside [0, C)");
    }
    const auto c = static_cast<double>(clients);
    return capacity_bits(cfg.uplink_uses / c, c * uplink_gain(cfg, client, round) * cfg.uplink_power);
}

/// W * R for a model with W trainable parameters.
[[nodiscard]] inline std::uint64_t model_payload_bits(std::uint64_t trainable_parameters, int bit_resolution) {
    if (bit_resolution < 1) {
        throw ConfigError("bit resolution must be at least 1");
    }
    return trainable_parameters * static_cast<std::uint64_t>(bit_resolution);
}

struct FeasibilityRow {
    std::size_t clients = 0;
    std::uint64_t payload_bits = 0;
    double per_client_uplink_bits = 0.0;  // min over clients
    std::uint64_t total_uplink_bits = 0;  // C * payload
    double downlink_bits = 0.0;
    bool uplink_feasible = false;
    bool downlink_feasible = false;
};

/// One row per client count: load against the round-`round` capacities.
[[nodiscard]] inline std::vector<FeasibilityRow> feasibility_report(const ChannelConfig& cfg,
                                                                    std::uint64_t trainable_parameters,
                                                                    const std::vector<std::size_t>& client_counts,
                                                                    std::size_t round = 0) {
    cfg.validate();
    std::vector<FeasibilityRow> rows;
    const auto payload = model_payload_bits(trainable_parameters, cfg.bit_resolution);
    for (auto c : client_counts) {
        FeasibilityRow r;
        r.clients = c;
        r.payload_bits = payload;
        r.total_uplink_bits = payload * c;
        r.per_client_uplink_bits = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < c; ++k) {
            r.per_client_uplink_bits = std::min(r.per_client_uplink_bits, uplink_bits_per_client(cfg, k, c, round));
        }
        r.downlink_bits = downlink_bits(cfg, c, round);
        r.uplink_feasible = static_cast<double>(payload) <= r.per_client_uplink_bits;
        r.downlink_feasible = static_cast<double>(payload) <= r.downlink_bits;
        rows.push_back(r);
    }
    return rows;
}

inline std::string feasibility_csv(const std::vector<FeasibilityRow>& rows) {
    std::string out = "C,payload_bits,per_client_uplink_bits,total_uplink_bits,downlink_bits,uplink_feasible,"
                      "downlink_feasible\n";
    char buf[256];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%zu,%llu,%.6f,%llu,%.6f,%d,%d\n", r.clients,
                      static_cast<unsigned long long>(r.payload_bits), r.per_client_uplink_bits,
                      static_cast<unsigned long long>(r.total_uplink_bits), r.downlink_bits, r.uplink_feasible ? 1 : 0,
                      r.downlink_feasible ? 1 : 0);
        out += buf;
    }
    return out;
}

}  // namespace fedloc::channel
