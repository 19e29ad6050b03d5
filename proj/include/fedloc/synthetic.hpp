#pragma once

// Synthetic UJIIndoorLoc-format surveys from a log-distance path-loss model,
// for exercising the full pipeline without the public dataset. The radio
// environment (AP placement) depends on `environment_seed`, the surveyed
// positions and noise on `sample_seed`, so a "validation" file can share the
// environment of a "training" file.

#include "fedloc/common.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

namespace fedloc {

struct SyntheticConfig {
    std::vector<int> floors_per_building{4, 4, 5};
    std::size_t aps_per_floor = 8;
    std::size_t dead_aps = 6;        // columns never observed
    std::size_t records_per_floor = 60;
    std::size_t users = 8;
    double building_length = 60.0;  // meters, x extent
    double building_width = 40.0;   // meters, y extent
    double building_gap = 30.0;
    double origin_x = -7700.0;       // projected frame offset, as in the public data
    double origin_y = 4864700.0;
    double floor_height = 4.0;
    double tx_power_dbm = -30.0;
    double path_loss_exponent = 2.6;
    double floor_loss_db = 14.0;
    double wall_loss_db = 20.0;
    double noise_db = 3.0;
    std::uint64_t environment_seed = 7;
    std::uint64_t sample_seed = 11;
};

inline std::string synthetic_uji_csv(const SyntheticConfig& cfg) {
    struct Ap {
        int building;
        int floor;
        double x, y, z;
    };
    Rng env(cfg.environment_seed);
    std::vector<Ap> aps;
    const auto nb = static_cast<int>(cfg.floors_per_building.size());
    auto building_x0 = [&](int b) { return cfg.origin_x + b * (cfg.building_length + cfg.building_gap); };
    for (int b = 0; b < nb; ++b) {
        for (int f = 0; f < cfg.floors_per_building[static_cast<std::size_t>(b)]; ++f) {
            for (std::size_t k = 0; k < cfg.aps_per_floor; ++k) {
                aps.push_back({b, f, building_x0(b) + env.uniform(0.0, cfg.building_length),
                               cfg.origin_y + env.uniform(0.0, cfg.building_width), f * cfg.floor_height + 2.5});
            }
        }
    }
    // Interleave dead columns so they are not all at the end.
    const std::size_t total_cols = aps.size() + cfg.dead_aps;
    std::vector<int> column_ap(total_cols, -1);
    {
        std::vector<std::size_t> cols(total_cols);
        for (std::size_t i = 0; i < total_cols; ++i) {
            cols[i] = i;
        }
        env.shuffle(cols.begin(), cols.end());
        for (std::size_t i = 0; i < aps.size(); ++i) {
            column_ap[cols[i]] = static_cast<int>(i);
        }
    }

    std::string out;
    char buf[64];
    for (std::size_t c = 0; c < total_cols; ++c) {
        std::snprintf(buf, sizeof(buf), "WAP%03zu,", c + 1);
        out += buf;
    }
    out += "LONGITUDE,LATITUDE,FLOOR,BUILDINGID,SPACEID,RELATIVEPOSITION,USERID,PHONEID,TIMESTAMP\n";

    Rng rng(mix64(cfg.sample_seed) ^ cfg.environment_seed);
    std::vector<int> rssi(total_cols);
    std::int64_t timestamp = 1371713733;
    for (int b = 0; b < nb; ++b) {
        for (int f = 0; f < cfg.floors_per_building[static_cast<std::size_t>(b)]; ++f) {
            for (std::size_t r = 0; r < cfg.records_per_floor; ++r) {
                const double x = building_x0(b) + rng.uniform(0.0, cfg.building_length);
                const double y = cfg.origin_y + rng.uniform(0.0, cfg.building_width);
                const double z = f * cfg.floor_height + 1.2;
                for (std::size_t c = 0; c < total_cols; ++c) {
                    if (column_ap[c] < 0) {
                        rssi[c] = 100;
                        continue;
                    }
                    const auto& ap = aps[static_cast<std::size_t>(column_ap[c])];
                    const double d = std::max(1.0, std::sqrt((ap.x - x) * (ap.x - x) + (ap.y - y) * (ap.y - y) +
                                                             (ap.z - z) * (ap.z - z)));
                    double p = cfg.tx_power_dbm - 10.0 * cfg.path_loss_exponent * std::log10(d) -
                               cfg.floor_loss_db * std::abs(ap.floor - f) - (ap.building != b ? cfg.wall_loss_db : 0.0) +
                               cfg.noise_db * rng.normal();
                    const int v = static_cast<int>(std::lround(std::min(p, 0.0)));
                    rssi[c] = v < -104 ? 100 : v;
                }
                for (std::size_t c = 0; c < total_cols; ++c) {
                    out += std::to_string(rssi[c]);
                    out += ',';
                }
                const auto user = 1 + rng.below(cfg.users);
                std::snprintf(buf, sizeof(buf), "%.4f,", x);
                out += buf;
                std::snprintf(buf, sizeof(buf), "%.4f,", y);
                out += buf;
                out += std::to_string(f) + "," + std::to_string(b) + "," + std::to_string(100 + r % 50) + ",2," +
                       std::to_string(user) + "," + std::to_string(10 + user % 5) + "," +
                       std::to_string(timestamp++) + "\n";
            }
        }
    }
    return out;
}

}  // namespace fedloc
