#pragma once

// Shared fixtures for the unit suites.

#include "fedloc/dataset.hpp"
#include "fedloc/synthetic.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace fedloc::testing {

/// UJI-format CSV text from explicit rows. Each row: AP readings then
/// (x, y, floor, building, user).
struct ToyRow {
    std::vector<int> rssi;
    double x = 0.0;
    double y = 0.0;
    int floor = 0;
    int building = 0;
    int user = 1;
};

inline std::string toy_csv(const std::vector<ToyRow>& rows) {
    std::string out;
    for (std::size_t a = 0; a < rows.front().rssi.size(); ++a) {
        out += "WAP" + std::to_string(a + 1) + ",";
    }
    out += "LONGITUDE,LATITUDE,FLOOR,BUILDINGID,SPACEID,RELATIVEPOSITION,USERID,PHONEID,TIMESTAMP\n";
    for (const auto& r : rows) {
        for (int v : r.rssi) {
            out += std::to_string(v) + ",";
        }
        out += io::format_double(r.x) + "," + io::format_double(r.y) + "," + std::to_string(r.floor) + "," +
               std::to_string(r.building) + ",1,2," + std::to_string(r.user) + ",3,1000\n";
    }
    return out;
}

/// Random processed set: `n` records over `width` features in [0, 1]. Labels
/// cycle through buildings x floors; coordinates depend on the features so
/// that a network has something to learn.
inline ProcessedSet random_processed(std::size_t n, std::size_t width, int buildings, int floors,
                                     std::uint64_t seed) {
    Rng rng(seed);
    ProcessedSet s;
    s.features.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(width));
    for (Eigen::Index i = 0; i < s.features.size(); ++i) {
        s.features.data()[i] = static_cast<float>(rng.uniform());
    }
    for (std::size_t i = 0; i < n; ++i) {
        const int b = static_cast<int>(i % static_cast<std::size_t>(buildings));
        const int f = static_cast<int>((i / static_cast<std::size_t>(buildings)) % static_cast<std::size_t>(floors));
        const auto row = static_cast<Eigen::Index>(i);
        s.labels.push_back({b, f, static_cast<double>(s.features(row, 0)), static_cast<double>(s.features(row, 1))});
        s.user_ids.push_back(static_cast<std::int64_t>(1 + i % 7));
    }
    for (std::size_t a = 0; a < width; ++a) {
        s.ap_ids.push_back("WAP" + std::to_string(a + 1));
    }
    s.norm_bounds = {0.0, 100.0, 0.0, 50.0};
    s.building_count = buildings;
    s.floor_count = floors;
    return s;
}

/// Synthetic survey run through the fitted pipeline.
inline ProcessedSet synthetic_processed(std::size_t records_per_floor, std::uint64_t sample_seed = 11) {
    SyntheticConfig cfg;
    cfg.records_per_floor = records_per_floor;
    cfg.sample_seed = sample_seed;
    auto raw = parse_csv(synthetic_uji_csv(cfg), "synthetic");
    auto kept = select_aps(raw, PreprocessConfig{});
    return powed_transform(kept, PreprocessConfig{});
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("fedloc_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace fedloc::testing
