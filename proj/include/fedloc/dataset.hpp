#pragma once

// UJIIndoorLoc-style fingerprint ingestion, AP selection, the powed feature
// representation, stratified splitting and client partitioning.

#include "fedloc/common.hpp"
#include "fedloc/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace fedloc {

struct Fingerprint {
    std::vector<std::int16_t> rssi;  // dBm, one entry per AP column; sentinel = not detected
    int building = 0;
    int floor = 0;
    double x = 0.0;  // meters
    double y = 0.0;
    std::int64_t user_id = 0;
    std::int64_t phone_id = 0;
    std::int64_t timestamp = 0;
};

struct CoordBounds {
    double x_min = 0.0;
    double x_max = 1.0;
    double y_min = 0.0;
    double y_max = 1.0;

    [[nodiscard]] double x_range() const noexcept { return x_max > x_min ? x_max - x_min : 1.0; }
    [[nodiscard]] double y_range() const noexcept { return y_max > y_min ? y_max - y_min : 1.0; }

    [[nodiscard]] double normalize_x(double x) const noexcept { return (x - x_min) / x_range(); }
    [[nodiscard]] double normalize_y(double y) const noexcept { return (y - y_min) / y_range(); }
    [[nodiscard]] double denormalize_x(double u) const noexcept { return x_min + u * x_range(); }
    [[nodiscard]] double denormalize_y(double v) const noexcept { return y_min + v * y_range(); }

    [[nodiscard]] bool contains(double x, double y) const noexcept {
        return x >= x_min && x <= x_max && y >= y_min && y <= y_max;
    }

    bool operator==(const CoordBounds&) const = default;
};

struct FingerprintSet {
    std::vector<Fingerprint> records;
    std::vector<std::string> ap_ids;
    CoordBounds coord_bounds;
    int building_count = 0;
    int floor_count = 0;

    [[nodiscard]] std::size_t size() const noexcept { return records.size(); }

    /// Recomputes bounds and class cardinalities from the records.
    void refresh_summary() {
        if (records.empty()) {
            coord_bounds = {};
            building_count = floor_count = 0;
            return;
        }
        coord_bounds = {records[0].x, records[0].x, records[0].y, records[0].y};
        int max_b = 0;
        int max_f = 0;
        for (const auto& r : records) {
            coord_bounds.x_min = std::min(coord_bounds.x_min, r.x);
            coord_bounds.x_max = std::max(coord_bounds.x_max, r.x);
            coord_bounds.y_min = std::min(coord_bounds.y_min, r.y);
            coord_bounds.y_max = std::max(coord_bounds.y_max, r.y);
            max_b = std::max(max_b, r.building);
            max_f = std::max(max_f, r.floor);
        }
        building_count = max_b + 1;
        floor_count = max_f + 1;
    }
};

struct PreprocessConfig {
    double visibility_threshold = 0.98;  // tau
    int missing_sentinel = 100;
    std::optional<double> min_rssi;  // derived from the training data when unset
    double powed_exponent = std::numbers::e;

    void validate() const {
        if (!(visibility_threshold > 0.0 && visibility_threshold <= 1.0)) {
            throw ConfigError("visibility threshold must lie in (0, 1]");
        }
        if (min_rssi && *min_rssi >= 0.0) {
            throw ConfigError("min_rssi must be negative");
        }
        if (!(powed_exponent > 0.0)) {
            throw ConfigError("powed exponent must be positive");
        }
    }

    [[nodiscard]] std::string canonical() const {
        return "tau=" + io::format_double(visibility_threshold) + ";sentinel=" + std::to_string(missing_sentinel) +
               ";min_rssi=" + (min_rssi ? io::format_double(*min_rssi) : std::string("derived")) +
               ";beta=" + io::format_double(powed_exponent);
    }
};

/// Per-record labels; coordinates are normalized by the owning set's bounds.
struct PositionLabel {
    int building = 0;
    int floor = 0;
    double x = 0.0;
    double y = 0.0;

    bool operator==(const PositionLabel&) const = default;
};

struct ProcessedSet {
    Tensor2<float> features;  // rows = records, cols = retained APs, entries in [0, 1]
    std::vector<PositionLabel> labels;
    std::vector<std::int64_t> user_ids;
    std::vector<std::string> ap_ids;
    CoordBounds norm_bounds;
    double min_rssi = -105.0;
    double powed_exponent = std::numbers::e;
    int building_count = 0;
    int floor_count = 0;

    [[nodiscard]] std::size_t size() const noexcept { return labels.size(); }
    [[nodiscard]] std::size_t feature_count() const noexcept { return static_cast<std::size_t>(features.cols()); }

    /// Same pipeline metadata, rows restricted to `indices` (in that order).
    [[nodiscard]] ProcessedSet subset(std::span<const std::size_t> indices) const {
        ProcessedSet out;
        out.features.resize(static_cast<Eigen::Index>(indices.size()), features.cols());
        out.labels.reserve(indices.size());
        out.user_ids.reserve(indices.size());
        for (std::size_t i = 0; i < indices.size(); ++i) {
            const std::size_t src = indices[i];
            if (src >= size()) {
                throw DataError("subset index out of range");
            }
            out.features.row(static_cast<Eigen::Index>(i)) = features.row(static_cast<Eigen::Index>(src));
            out.labels.push_back(labels[src]);
            out.user_ids.push_back(user_ids.empty() ? 0 : user_ids[src]);
        }
        out.ap_ids = ap_ids;
        out.norm_bounds = norm_bounds;
        out.min_rssi = min_rssi;
        out.powed_exponent = powed_exponent;
        out.building_count = building_count;
        out.floor_count = floor_count;
        return out;
    }
};

enum class PartitionStrategy { iid_uniform, by_user, by_building };

inline std::string to_string(PartitionStrategy s) {
    switch (s) {
        case PartitionStrategy::iid_uniform: return "iid";
        case PartitionStrategy::by_user: return "by-user";
        case PartitionStrategy::by_building: return "by-building";
    }
    return "iid";
}

inline PartitionStrategy parse_partition_strategy(std::string_view s) {
    if (s == "iid" || s == "iid-uniform") {
        return PartitionStrategy::iid_uniform;
    }
    if (s == "by-user") {
        return PartitionStrategy::by_user;
    }
    if (s == "by-building") {
        return PartitionStrategy::by_building;
    }
    throw UsageError("unknown partition strategy '" + std::string(s) + "'");
}

struct Partition {
    std::vector<std::vector<std::size_t>> client_shards;
    PartitionStrategy strategy = PartitionStrategy::iid_uniform;
    std::uint64_t seed = 0;

    [[nodiscard]] std::size_t client_count() const noexcept { return client_shards.size(); }
};

// ---------------------------------------------------------------------------
// CSV ingestion
// ---------------------------------------------------------------------------

/// Column naming convention of the input CSV.
struct CsvSchema {
    std::string ap_prefix = "WAP";
    std::string longitude = "LONGITUDE";
    std::string latitude = "LATITUDE";
    std::string floor = "FLOOR";
    std::string building = "BUILDINGID";
    std::string user = "USERID";
    std::string phone = "PHONEID";
    std::string timestamp = "TIMESTAMP";
    int missing_sentinel = 100;
};

/// Parses UJIIndoorLoc-format CSV text. `source` names the input in errors.
inline FingerprintSet parse_csv(std::string_view text, const std::string& source = "csv",
                                const CsvSchema& schema = {}) {
    std::vector<std::string_view> lines = io::split(text, '\n');
    while (!lines.empty() && io::trim(lines.back()).empty()) {
        lines.pop_back();
    }
    if (lines.empty()) {
        throw SchemaError(source + ": missing header row");
    }

    const auto header = io::split(lines[0], ',');
    std::vector<std::size_t> ap_cols;
    FingerprintSet set;
    std::unordered_map<std::string, std::size_t> label_cols;
    for (std::size_t c = 0; c < header.size(); ++c) {
        const std::string name(io::trim(header[c]));
        if (name.rfind(schema.ap_prefix, 0) == 0) {
            ap_cols.push_back(c);
            set.ap_ids.push_back(name);
        } else {
            label_cols.emplace(name, c);
        }
    }
    {
        std::set<std::string> unique(set.ap_ids.begin(), set.ap_ids.end());
        if (unique.size() != set.ap_ids.size()) {
            throw SchemaError(source + ": duplicate AP column names");
        }
    }
    if (ap_cols.empty()) {
        throw SchemaError(source + ": no AP columns with prefix '" + schema.ap_prefix + "'");
    }
    auto column = [&](const std::string& name) {
        auto it = label_cols.find(name);
        if (it == label_cols.end()) {
            throw SchemaError(source + ": missing mandatory column " + name);
        }
        return it->second;
    };
    const std::size_t col_x = column(schema.longitude);
    const std::size_t col_y = column(schema.latitude);
    const std::size_t col_f = column(schema.floor);
    const std::size_t col_b = column(schema.building);
    const std::size_t col_u = column(schema.user);
    const std::size_t col_p = column(schema.phone);
    const std::size_t col_t = column(schema.timestamp);

    set.records.reserve(lines.size() - 1);
    for (std::size_t li = 1; li < lines.size(); ++li) {
        if (io::trim(lines[li]).empty()) {
            continue;
        }
        const auto fields = io::split(lines[li], ',');
        if (fields.size() != header.size()) {
            throw ParseError(source, li, "expected " + std::to_string(header.size()) + " fields, got " +
                                             std::to_string(fields.size()));
        }
        Fingerprint fp;
        fp.rssi.resize(ap_cols.size());
        for (std::size_t a = 0; a < ap_cols.size(); ++a) {
            int v = 0;
            if (!io::parse_number(fields[ap_cols[a]], v)) {
                throw ParseError(source, li, "non-integer RSSI in column " + set.ap_ids[a]);
            }
            if (v != schema.missing_sentinel && (v > 0 || v < -200)) {
                throw ParseError(source, li, "RSSI " + std::to_string(v) + " outside [-200, 0] dBm in column " +
                                                 set.ap_ids[a]);
            }
            fp.rssi[a] = static_cast<std::int16_t>(v);
        }
        auto number = [&](std::size_t col, auto& out, const char* what) {
            if (!io::parse_number(fields[col], out)) {
                throw ParseError(source, li, std::string("malformed ") + what);
            }
        };
        number(col_x, fp.x, "longitude");
        number(col_y, fp.y, "latitude");
        number(col_f, fp.floor, "floor");
        number(col_b, fp.building, "building id");
        number(col_u, fp.user_id, "user id");
        number(col_p, fp.phone_id, "phone id");
        number(col_t, fp.timestamp, "timestamp");
        if (fp.floor < 0 || fp.building < 0) {
            throw ParseError(source, li, "negative floor or building id");
        }
        set.records.push_back(std::move(fp));
    }
    set.refresh_summary();
    return set;
}

inline FingerprintSet load_csv(const std::filesystem::path& path, const CsvSchema& schema = {}) {
    if (!std::filesystem::exists(path)) {
        throw DataError("dataset file not found: " + path.string());
    }
    return parse_csv(io::read_file(path), path.string(), schema);
}

// ---------------------------------------------------------------------------
// AP selection
// ---------------------------------------------------------------------------

struct ApSelectionReport {
    std::size_t original = 0;
    std::size_t after_all_missing = 0;  // stage 1
    std::size_t after_visibility = 0;   // stage 2
};

namespace detail {

inline FingerprintSet keep_columns(const FingerprintSet& set, const std::vector<std::size_t>& keep) {
    FingerprintSet out;
    out.ap_ids.reserve(keep.size());
    for (auto k : keep) {
        out.ap_ids.push_back(set.ap_ids[k]);
    }
    out.records.reserve(set.records.size());
    for (const auto& r : set.records) {
        Fingerprint fp = r;
        fp.rssi.resize(keep.size());
        for (std::size_t i = 0; i < keep.size(); ++i) {
            fp.rssi[i] = r.rssi[keep[i]];
        }
        out.records.push_back(std::move(fp));
    }
    out.coord_bounds = set.coord_bounds;
    out.building_count = set.building_count;
    out.floor_count = set.floor_count;
    return out;
}

inline std::vector<std::size_t> captured_counts(const FingerprintSet& set, int sentinel) {
    std::vector<std::size_t> counts(set.ap_ids.size(), 0);
    for (const auto& r : set.records) {
        for (std::size_t a = 0; a < counts.size(); ++a) {
            counts[a] += r.rssi[a] != sentinel ? 1 : 0;
        }
    }
    return counts;
}

}  // namespace detail

/// Drops never-captured APs, then APs captured in fewer than (1 - tau) of the
/// records. Record order is preserved.
inline FingerprintSet select_aps(const FingerprintSet& set, const PreprocessConfig& cfg,
                                 ApSelectionReport* report = nullptr) {
    cfg.validate();
    if (set.records.empty()) {
        throw DataError("cannot select APs of an empty dataset");
    }
    const auto counts = detail::captured_counts(set, cfg.missing_sentinel);
    const double n = static_cast<double>(set.records.size());
    // 1 - 0.98 rounds above 0.02; the slack keeps "exactly at the threshold" kept.
    const double min_count = (1.0 - cfg.visibility_threshold) * n * (1.0 - 1e-9);

    std::vector<std::size_t> stage1;
    std::vector<std::size_t> stage2;
    for (std::size_t a = 0; a < counts.size(); ++a) {
        if (counts[a] == 0) {
            continue;
        }
        stage1.push_back(a);
        if (static_cast<double>(counts[a]) >= min_count) {
            stage2.push_back(a);
        }
    }
    if (report) {
        *report = {counts.size(), stage1.size(), stage2.size()};
    }
    if (stage2.empty()) {
        throw DataError("degenerate dataset: AP selection eliminated every access point");
    }
    return detail::keep_columns(set, stage2);
}

// ---------------------------------------------------------------------------
// Powed representation
// ---------------------------------------------------------------------------

/// ((v - min_rssi) / -min_rssi)^beta
[[nodiscard]] inline double powed_value(double rssi, double min_rssi, double beta) {
    const double base = (rssi - min_rssi) / (-min_rssi);
    return std::pow(std::max(base, 0.0), beta);
}

/// Global minimum non-missing RSSI minus 1 dBm.
[[nodiscard]] inline double derive_min_rssi(const FingerprintSet& set, int sentinel) {
    int lowest = 1;
    for (const auto& r : set.records) {
        for (auto v : r.rssi) {
            if (v != sentinel && (lowest > 0 || v < lowest)) {
                lowest = v;
            }
        }
    }
    if (lowest > 0) {
        throw DataError("no captured RSSI values; cannot derive min_rssi");
    }
    return static_cast<double>(lowest) - 1.0;
}

namespace detail {

inline ProcessedSet transform_with(const FingerprintSet& set, int sentinel, double min_rssi, double beta,
                                   const CoordBounds& bounds, bool clamp_low) {
    ProcessedSet out;
    const auto rows = static_cast<Eigen::Index>(set.records.size());
    const auto cols = static_cast<Eigen::Index>(set.ap_ids.size());
    out.features.resize(rows, cols);
    out.labels.reserve(set.records.size());
    out.user_ids.reserve(set.records.size());
    const float zero_value = static_cast<float>(powed_value(min_rssi, min_rssi, beta));
    for (Eigen::Index i = 0; i < rows; ++i) {
        const auto& r = set.records[static_cast<std::size_t>(i)];
        for (Eigen::Index a = 0; a < cols; ++a) {
            const int v = r.rssi[static_cast<std::size_t>(a)];
            if (v == sentinel) {
                out.features(i, a) = zero_value;
                continue;
            }
            if (v <= min_rssi) {
                if (!clamp_low) {
                    throw ConfigError("RSSI " + std::to_string(v) + " dBm is not above min_rssi " +
                                      io::format_double(min_rssi));
                }
                out.features(i, a) = zero_value;
                continue;
            }
            out.features(i, a) = static_cast<float>(powed_value(v, min_rssi, beta));
        }
        out.labels.push_back({r.building, r.floor, bounds.normalize_x(r.x), bounds.normalize_y(r.y)});
        out.user_ids.push_back(r.user_id);
    }
    out.ap_ids = set.ap_ids;
    out.norm_bounds = bounds;
    out.min_rssi = min_rssi;
    out.powed_exponent = beta;
    out.building_count = set.building_count;
    out.floor_count = set.floor_count;
    return out;
}

}  // namespace detail

/// Fits min_rssi (unless configured) and coordinate bounds on `set` and maps
/// it to the powed representation. Missing readings become min_rssi, i.e. 0.
inline ProcessedSet powed_transform(const FingerprintSet& set, const PreprocessConfig& cfg) {
    cfg.validate();
    const double min_rssi = cfg.min_rssi ? *cfg.min_rssi : derive_min_rssi(set, cfg.missing_sentinel);
    return detail::transform_with(set, cfg.missing_sentinel, min_rssi, cfg.powed_exponent, set.coord_bounds,
                                  /*clamp_low=*/false);
}

/// Projects `raw` onto the fitted AP list and transforms it with the fitted
/// min_rssi, exponent and bounds. APs absent from `raw` count as missing;
/// readings at or below the fitted min_rssi clamp to 0.
inline ProcessedSet apply_fitted_pipeline(const FingerprintSet& raw, const ProcessedSet& fitted,
                                          const PreprocessConfig& cfg) {
    std::unordered_map<std::string, std::size_t> raw_cols;
    for (std::size_t i = 0; i < raw.ap_ids.size(); ++i) {
        raw_cols.emplace(raw.ap_ids[i], i);
    }
    FingerprintSet projected;
    projected.ap_ids = fitted.ap_ids;
    projected.records.reserve(raw.records.size());
    const auto sentinel = static_cast<std::int16_t>(cfg.missing_sentinel);
    std::vector<std::optional<std::size_t>> mapping;
    mapping.reserve(fitted.ap_ids.size());
    for (const auto& id : fitted.ap_ids) {
        auto it = raw_cols.find(id);
        mapping.push_back(it == raw_cols.end() ? std::nullopt : std::optional<std::size_t>(it->second));
    }
    for (const auto& r : raw.records) {
        Fingerprint fp = r;
        fp.rssi.assign(mapping.size(), sentinel);
        for (std::size_t a = 0; a < mapping.size(); ++a) {
            if (mapping[a]) {
                fp.rssi[a] = r.rssi[*mapping[a]];
            }
        }
        projected.records.push_back(std::move(fp));
    }
    projected.building_count = std::max(fitted.building_count, raw.building_count);
    projected.floor_count = std::max(fitted.floor_count, raw.floor_count);
    auto out = detail::transform_with(projected, cfg.missing_sentinel, fitted.min_rssi, fitted.powed_exponent,
                                      fitted.norm_bounds, /*clamp_low=*/true);
    out.building_count = fitted.building_count;
    out.floor_count = fitted.floor_count;
    return out;
}

// ---------------------------------------------------------------------------
// Splitting and partitioning
// ---------------------------------------------------------------------------

struct SplitIndices {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

/// Stratified by (building, floor). `ratio` is the training fraction. Test
/// counts are apportioned by largest remainder, so every stratum is within one
/// record of its ideal share and the total within one of N * (1 - ratio).
/// Strata with fewer than two records stay on the training side.
inline SplitIndices split_indices(const std::vector<PositionLabel>& labels, double ratio, std::uint64_t seed) {
    if (!(ratio > 0.0 && ratio < 1.0)) {
        throw ConfigError("split ratio must lie in (0, 1)");
    }
    std::map<std::pair<int, int>, std::vector<std::size_t>> strata;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        strata[{labels[i].building, labels[i].floor}].push_back(i);
    }
    struct Share {
        std::vector<std::size_t>* members;
        std::size_t test = 0;
        double remainder = 0.0;
        std::size_t order = 0;
    };
    std::vector<Share> shares;
    std::size_t eligible_total = 0;
    std::size_t assigned = 0;
    for (auto& [key, members] : strata) {
        if (members.size() < 2) {
            warn("stratum (building " + std::to_string(key.first) + ", floor " + std::to_string(key.second) +
                 ") has fewer than 2 records; kept on the training side");
            continue;
        }
        const double ideal = static_cast<double>(members.size()) * (1.0 - ratio);
        Share s{&members, static_cast<std::size_t>(std::floor(ideal)), 0.0, shares.size()};
        s.remainder = ideal - std::floor(ideal);
        assigned += s.test;
        eligible_total += members.size();
        shares.push_back(s);
    }
    const auto target = static_cast<std::size_t>(std::llround(static_cast<double>(eligible_total) * (1.0 - ratio)));
    std::vector<std::size_t> by_remainder(shares.size());
    for (std::size_t i = 0; i < shares.size(); ++i) {
        by_remainder[i] = i;
    }
    std::stable_sort(by_remainder.begin(), by_remainder.end(),
                     [&](std::size_t a, std::size_t b) { return shares[a].remainder > shares[b].remainder; });
    for (std::size_t k = 0; assigned < target && k < by_remainder.size(); ++k) {
        ++shares[by_remainder[k]].test;
        ++assigned;
    }

    Rng rng(seed);
    SplitIndices out;
    std::vector<bool> is_test(labels.size(), false);
    for (auto& s : shares) {
        std::vector<std::size_t> members = *s.members;
        // keep at least one record of every stratum on the training side
        s.test = std::min(s.test, members.size() - 1);
        rng.shuffle(members.begin(), members.end());
        for (std::size_t i = 0; i < s.test; ++i) {
            is_test[members[i]] = true;
        }
    }
    for (std::size_t i = 0; i < labels.size(); ++i) {
        (is_test[i] ? out.test : out.train).push_back(i);
    }
    return out;
}

inline std::pair<ProcessedSet, ProcessedSet> train_test_split(const ProcessedSet& set, double ratio,
                                                              std::uint64_t seed) {
    const auto idx = split_indices(set.labels, ratio, seed);
    return {set.subset(idx.train), set.subset(idx.test)};
}

namespace detail {

inline Partition deal_groups(std::vector<std::vector<std::size_t>> groups, std::size_t clients,
                             PartitionStrategy strategy, std::uint64_t seed) {
    if (clients > groups.size()) {
        throw DataError("partition error: " + std::to_string(clients) + " clients but only " +
                        std::to_string(groups.size()) + " groups under strategy " + to_string(strategy));
    }
    Partition p{std::vector<std::vector<std::size_t>>(clients), strategy, seed};
    for (std::size_t g = 0; g < groups.size(); ++g) {
        auto& shard = p.client_shards[g % clients];
        shard.insert(shard.end(), groups[g].begin(), groups[g].end());
    }
    for (auto& shard : p.client_shards) {
        std::sort(shard.begin(), shard.end());
    }
    return p;
}

}  // namespace detail

/// Splits the record indices of `set` across `clients` simulated clients.
inline Partition partition_clients(const ProcessedSet& set, std::size_t clients, PartitionStrategy strategy,
                                   std::uint64_t seed) {
    const std::size_t n = set.size();
    if (clients < 1 || clients > n) {
        throw DataError("partition error: client count must be in [1, " + std::to_string(n) + "]");
    }
    switch (strategy) {
        case PartitionStrategy::iid_uniform: {
            std::vector<std::size_t> order(n);
            for (std::size_t i = 0; i < n; ++i) {
                order[i] = i;
            }
            Rng rng(seed);
            rng.shuffle(order.begin(), order.end());
            Partition p{std::vector<std::vector<std::size_t>>(clients), strategy, seed};
            const std::size_t base = n / clients;
            const std::size_t extra = n % clients;
            std::size_t pos = 0;
            for (std::size_t c = 0; c < clients; ++c) {
                const std::size_t len = base + (c < extra ? 1 : 0);
                p.client_shards[c].assign(order.begin() + static_cast<std::ptrdiff_t>(pos),
                                          order.begin() + static_cast<std::ptrdiff_t>(pos + len));
                std::sort(p.client_shards[c].begin(), p.client_shards[c].end());
                pos += len;
            }
            return p;
        }
        case PartitionStrategy::by_user: {
            std::map<std::int64_t, std::vector<std::size_t>> by_user;
            for (std::size_t i = 0; i < n; ++i) {
                by_user[set.user_ids.empty() ? 0 : set.user_ids[i]].push_back(i);
            }
            std::vector<std::pair<std::int64_t, std::vector<std::size_t>>> groups(by_user.begin(), by_user.end());
            std::stable_sort(groups.begin(), groups.end(),
                             [](const auto& a, const auto& b) { return a.second.size() > b.second.size(); });
            std::vector<std::vector<std::size_t>> dealt;
            for (auto& g : groups) {
                dealt.push_back(std::move(g.second));
            }
            return detail::deal_groups(std::move(dealt), clients, strategy, seed);
        }
        case PartitionStrategy::by_building: {
            std::map<int, std::vector<std::size_t>> by_building;
            for (std::size_t i = 0; i < n; ++i) {
                by_building[set.labels[i].building].push_back(i);
            }
            std::vector<std::vector<std::size_t>> groups;
            for (auto& [b, members] : by_building) {
                groups.push_back(std::move(members));
            }
            return detail::deal_groups(std::move(groups), clients, strategy, seed);
        }
    }
    throw UsageError("unknown partition strategy");
}

/// IID shards of exactly `per_client` records each (scalability sweeps,
/// where the data seen grows with the client count).
inline Partition partition_fixed_size(std::size_t records, std::size_t clients, std::size_t per_client,
                                      std::uint64_t seed) {
    if (clients < 1 || per_client < 1 || clients * per_client > records) {
        throw DataError("partition error: cannot carve " + std::to_string(clients) + " shards of " +
                        std::to_string(per_client) + " from " + std::to_string(records) + " records");
    }
    std::vector<std::size_t> order(records);
    for (std::size_t i = 0; i < records; ++i) {
        order[i] = i;
    }
    Rng rng(seed);
    rng.shuffle(order.begin(), order.end());
    Partition p{std::vector<std::vector<std::size_t>>(clients), PartitionStrategy::iid_uniform, seed};
    for (std::size_t c = 0; c < clients; ++c) {
        auto first = order.begin() + static_cast<std::ptrdiff_t>(c * per_client);
        p.client_shards[c].assign(first, first + static_cast<std::ptrdiff_t>(per_client));
        std::sort(p.client_shards[c].begin(), p.client_shards[c].end());
    }
    return p;
}

// ---------------------------------------------------------------------------
// Processed-set cache: manifest.txt + features.f32 + labels.csv
// ---------------------------------------------------------------------------

inline void save_processed(const ProcessedSet& set, const std::filesystem::path& dir,
                           const PreprocessConfig& cfg = {}) {
    std::filesystem::create_directories(dir);
    io::Manifest m;
    m.set("format", "fedloc-processed-v1");
    m.set("rows", std::to_string(set.size()));
    m.set("cols", std::to_string(set.feature_count()));
    std::string ids;
    for (std::size_t i = 0; i < set.ap_ids.size(); ++i) {
        ids += (i ? "," : "") + set.ap_ids[i];
    }
    m.set("ap_ids", ids);
    const auto& b = set.norm_bounds;
    m.set("bounds", io::format_double(b.x_min) + "," + io::format_double(b.x_max) + "," + io::format_double(b.y_min) +
                        "," + io::format_double(b.y_max));
    m.set("min_rssi", io::format_double(set.min_rssi));
    m.set("powed_exponent", io::format_double(set.powed_exponent));
    m.set("building_count", std::to_string(set.building_count));
    m.set("floor_count", std::to_string(set.floor_count));
    m.set("config_hash", hex64(fnv1a(cfg.canonical())));
    m.set("features", "features.f32 little-endian float32 row-major");
    io::write_file(dir / "manifest.txt", m.to_string());

    std::string blob;
    append_le_f32(std::span<const float>(set.features.data(), static_cast<std::size_t>(set.features.size())), blob);
    io::write_file(dir / "features.f32", blob);

    std::string labels = "building,floor,x_norm,y_norm,user_id\n";
    for (std::size_t i = 0; i < set.size(); ++i) {
        const auto& l = set.labels[i];
        labels += std::to_string(l.building) + "," + std::to_string(l.floor) + "," + io::format_double(l.x) + "," +
                  io::format_double(l.y) + "," + std::to_string(set.user_ids.empty() ? 0 : set.user_ids[i]) + "\n";
    }
    io::write_file(dir / "labels.csv", labels);
}

inline CoordBounds parse_bounds(std::string_view text) {
    const auto parts = io::split(text, ',');
    CoordBounds b;
    if (parts.size() != 4 || !io::parse_number(parts[0], b.x_min) || !io::parse_number(parts[1], b.x_max) ||
        !io::parse_number(parts[2], b.y_min) || !io::parse_number(parts[3], b.y_max)) {
        throw DataError("malformed bounds '" + std::string(text) + "'");
    }
    return b;
}

inline std::vector<std::string> parse_ap_ids(std::string_view text) {
    std::vector<std::string> out;
    if (text.empty()) {
        return out;
    }
    for (auto id : io::split(text, ',')) {
        out.emplace_back(id);
    }
    return out;
}

inline ProcessedSet load_processed(const std::filesystem::path& dir) {
    const auto m = io::Manifest::parse(io::read_file(dir / "manifest.txt"));
    if (m.get("format") != "fedloc-processed-v1") {
        throw DataError("unsupported processed-set format in " + dir.string());
    }
    ProcessedSet set;
    const auto rows = m.get_number<std::size_t>("rows");
    const auto cols = m.get_number<std::size_t>("cols");
    set.ap_ids = parse_ap_ids(m.get("ap_ids"));
    if (set.ap_ids.size() != cols) {
        throw DataError("processed-set manifest: ap_ids/cols mismatch");
    }
    set.norm_bounds = parse_bounds(m.get("bounds"));
    set.min_rssi = m.get_number<double>("min_rssi");
    set.powed_exponent = m.get_number<double>("powed_exponent");
    set.building_count = m.get_number<int>("building_count");
    set.floor_count = m.get_number<int>("floor_count");

    const auto values = read_le_f32(io::read_file(dir / "features.f32"));
    if (values.size() != rows * cols) {
        throw DataError("processed-set feature blob has wrong size");
    }
    set.features = Eigen::Map<const Tensor2<float>>(values.data(), static_cast<Eigen::Index>(rows),
                                                    static_cast<Eigen::Index>(cols));

    const std::string labels_text = io::read_file(dir / "labels.csv");
    const auto lines = io::split(labels_text, '\n');
    for (std::size_t li = 1; li < lines.size(); ++li) {
        if (lines[li].empty()) {
            continue;
        }
        const auto f = io::split(lines[li], ',');
        PositionLabel l;
        std::int64_t user = 0;
        if (f.size() != 5 || !io::parse_number(f[0], l.building) || !io::parse_number(f[1], l.floor) ||
            !io::parse_number(f[2], l.x) || !io::parse_number(f[3], l.y) || !io::parse_number(f[4], user)) {
            throw ParseError((dir / "labels.csv").string(), li, "malformed label row");
        }
        set.labels.push_back(l);
        set.user_ids.push_back(user);
    }
    if (set.labels.size() != rows) {
        throw DataError("processed-set label count does not match features");
    }
    return set;
}

}  // namespace fedloc
