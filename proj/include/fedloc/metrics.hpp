#pragma once

// Building / floor / joint accuracies and planar mean distance errors.

#include "fedloc/common.hpp"

#include <cmath>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fedloc {

/// A labelled or predicted position; coordinates in meters.
struct Position {
    int building = 0;
    int floor = 0;
    double x = 0.0;
    double y = 0.0;

    bool operator==(const Position&) const = default;
};

enum class MdeVariant {
    eq6_as_printed,  // masked distance sum divided by N
    correct_subset,  // masked distance sum divided by the number of correct records
};

inline std::string to_string(MdeVariant v) {
    return v == MdeVariant::eq6_as_printed ? "eq6-as-printed" : "correct-subset";
}

inline MdeVariant parse_mde_variant(std::string_view s) {
    if (s == "eq6-as-printed" || s == "eq6") {
        return MdeVariant::eq6_as_printed;
    }
    if (s == "correct-subset") {
        return MdeVariant::correct_subset;
    }
    throw UsageError("unknown MDE variant '" + std::string(s) + "'");
}

struct Accuracies {
    double building = 0.0;
    double floor = 0.0;
    double joint = 0.0;
};

struct LocalizationMetrics {
    double b_acc = 0.0;
    double f_acc = 0.0;
    double acc = 0.0;
    double mde2d_eq6 = 0.0;
    double mde2d_correct = 0.0;
    double mde3d = 0.0;
    std::size_t n = 0;
    std::size_t n_correct = 0;
    bool no_correct_records = false;  // correct-subset MDE defaulted to 0

    [[nodiscard]] double mde2d(MdeVariant v) const { return v == MdeVariant::eq6_as_printed ? mde2d_eq6 : mde2d_correct; }
};

namespace detail {

inline void check_pair(std::span<const Position> predicted, std::span<const Position> truth) {
    if (predicted.size() != truth.size()) {
        throw ShapeError("metrics: prediction and label counts differ");
    }
    if (truth.empty()) {
        throw DataError("metrics: empty evaluation set");
    }
}

inline double planar_distance(const Position& a, const Position& b) {
    return std::hypot(a.x - b.x, a.y - b.y);
}

}  // namespace detail

inline Accuracies accuracies(std::span<const Position> predicted, std::span<const Position> truth) {
    detail::check_pair(predicted, truth);
    std::size_t b = 0;
    std::size_t f = 0;
    std::size_t both = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const bool b_ok = predicted[i].building == truth[i].building;
        const bool f_ok = predicted[i].floor == truth[i].floor;
        b += b_ok;
        f += f_ok;
        both += b_ok && f_ok;
    }
    const auto n = static_cast<double>(truth.size());
    return {static_cast<double>(b) / n, static_cast<double>(f) / n, static_cast<double>(both) / n};
}

/// Mean planar error restricted to records whose building and floor are both
/// correct. `no_correct` (optional) reports the 0-correct case for the
/// correct-subset variant.
inline double mde2d(std::span<const Position> predicted, std::span<const Position> truth, MdeVariant variant,
                    bool* no_correct = nullptr) {
    detail::check_pair(predicted, truth);
    double sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        if (predicted[i].building == truth[i].building && predicted[i].floor == truth[i].floor) {
            sum += detail::planar_distance(predicted[i], truth[i]);
            ++correct;
        }
    }
    if (no_correct) {
        *no_correct = correct == 0;
    }
    if (variant == MdeVariant::eq6_as_printed) {
        return sum / static_cast<double>(truth.size());
    }
    if (correct == 0) {
        warn("2D-MDE: no record has both building and floor correct; reporting 0");
        return 0.0;
    }
    return sum / static_cast<double>(correct);
}

/// Mean planar error over all records.
inline double mde3d(std::span<const Position> predicted, std::span<const Position> truth) {
    detail::check_pair(predicted, truth);
    double sum = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        sum += detail::planar_distance(predicted[i], truth[i]);
    }
    return sum / static_cast<double>(truth.size());
}

inline LocalizationMetrics compute_metrics(std::span<const Position> predicted, std::span<const Position> truth) {
    LocalizationMetrics m;
    const auto acc = accuracies(predicted, truth);
    m.b_acc = acc.building;
    m.f_acc = acc.floor;
    m.acc = acc.joint;
    m.n = truth.size();
    for (std::size_t i = 0; i < truth.size(); ++i) {
        m.n_correct += predicted[i].building == truth[i].building && predicted[i].floor == truth[i].floor;
    }
    m.mde2d_eq6 = mde2d(predicted, truth, MdeVariant::eq6_as_printed);
    m.no_correct_records = m.n_correct == 0;
    m.mde2d_correct = m.no_correct_records ? 0.0 : mde2d(predicted, truth, MdeVariant::correct_subset);
    m.mde3d = mde3d(predicted, truth);
    return m;
}

}  // namespace fedloc
