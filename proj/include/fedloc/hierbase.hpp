#pragma once

// Classical hierarchical estimator: mean-distance building selection, floor
// selection restricted to the chosen building, and a per-floor ridge
// regression from fingerprints to coordinates. Distances are Euclidean on
// the powed features.

#include "fedloc/common.hpp"
#include "fedloc/dataset.hpp"
#include "fedloc/hmodel.hpp"
#include "fedloc/metrics.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <span>
#include <utility>
#include <vector>

namespace fedloc::hierbase {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct FloorProfile {
    int floor = 0;
    std::vector<std::size_t> rows;  // indices into the training set
    Matrix fingerprints;            // R_f
    Matrix targets;                 // normalized (x, y) per row
};

struct BuildingProfile {
    int building = 0;
    std::vector<FloorProfile> floors;  // ascending floor id; R_b is their row union

    [[nodiscard]] std::size_t row_count() const {
        std::size_t n = 0;
        for (const auto& f : floors) {
            n += f.rows.size();
        }
        return n;
    }
};

/// One profile per building (ascending id), one sub-profile per non-empty
/// (building, floor) cell.
inline std::vector<BuildingProfile> build_profiles(const ProcessedSet& train) {
    std::map<int, std::map<int, std::vector<std::size_t>>> cells;
    for (std::size_t i = 0; i < train.size(); ++i) {
        cells[train.labels[i].building][train.labels[i].floor].push_back(i);
    }
    std::vector<BuildingProfile> out;
    for (auto& [b, floors] : cells) {
        BuildingProfile bp{b, {}};
        for (auto& [f, rows] : floors) {
            FloorProfile fp;
            fp.floor = f;
            fp.rows = rows;
            fp.fingerprints.resize(static_cast<Eigen::Index>(rows.size()), train.features.cols());
            fp.targets.resize(static_cast<Eigen::Index>(rows.size()), 2);
            for (std::size_t k = 0; k < rows.size(); ++k) {
                const auto r = static_cast<Eigen::Index>(k);
                fp.fingerprints.row(r) = train.features.row(static_cast<Eigen::Index>(rows[k])).cast<double>();
                fp.targets(r, 0) = train.labels[rows[k]].x;
                fp.targets(r, 1) = train.labels[rows[k]].y;
            }
            bp.floors.push_back(std::move(fp));
        }
        out.push_back(std::move(bp));
    }
    // Cells between the smallest and largest floor id that have no rows.
    for (const auto& bp : out) {
        if (bp.floors.empty()) {
            continue;
        }
        int expected = bp.floors.front().floor;
        for (const auto& fp : bp.floors) {
            for (; expected < fp.floor; ++expected) {
                warn("hierbase: no training rows for building " + std::to_string(bp.building) + ", floor " +
                     std::to_string(expected) + "; cell omitted");
            }
            expected = fp.floor + 1;
        }
    }
    return out;
}

/// Sum of Euclidean distances from `query` to every row of `rows`.
inline double distance_sum(std::span<const double> query, const Matrix& rows) {
    const Eigen::Map<const Eigen::RowVectorXd> q(query.data(), static_cast<Eigen::Index>(query.size()));
    if (rows.cols() != q.cols()) {
        throw ShapeError("hierbase: query width differs from profile width");
    }
    double sum = 0.0;
    for (Eigen::Index i = 0; i < rows.rows(); ++i) {
        sum += (rows.row(i) - q).norm();
    }
    return sum;
}

/// argmin over buildings of the mean distance to all of the building's rows;
/// ties go to the lowest building id.
inline int select_building(std::span<const double> query, const std::vector<BuildingProfile>& profiles) {
    if (profiles.empty()) {
        throw DataError("hierbase: no building profiles");
    }
    int best = profiles.front().building;
    double best_d = std::numeric_limits<double>::infinity();
    for (const auto& bp : profiles) {
        double sum = 0.0;
        for (const auto& fp : bp.floors) {
            sum += distance_sum(query, fp.fingerprints);
        }
        const double d = sum / static_cast<double>(bp.row_count());
        if (d < best_d) {
            best_d = d;
            best = bp.building;
        }
    }
    return best;
}

/// argmin over the floors of `building` of the mean distance.
inline int select_floor(std::span<const double> query, const BuildingProfile& building) {
    if (building.floors.empty()) {
        throw DataError("hierbase: building " + std::to_string(building.building) + " has no floors");
    }
    int best = building.floors.front().floor;
    double best_d = std::numeric_limits<double>::infinity();
    for (const auto& fp : building.floors) {
        const double d = distance_sum(query, fp.fingerprints) / static_cast<double>(fp.rows.size());
        if (d < best_d) {
            best_d = d;
            best = fp.floor;
        }
    }
    return best;
}

struct FloorRegressor {
    Matrix coefficients;         // features x 2
    Eigen::RowVector2d intercept{0.0, 0.0};
    double lambda = 1e-2;

    [[nodiscard]] Eigen::RowVector2d predict(std::span<const double> query) const {
        const Eigen::Map<const Eigen::RowVectorXd> q(query.data(), static_cast<Eigen::Index>(query.size()));
        if (q.cols() != coefficients.rows()) {
            throw ShapeError("regressor expects " + std::to_string(coefficients.rows()) + " features");
        }
        return q * coefficients + intercept;
    }
};

/// Ridge least squares on centered data:
///   beta = (Xc^T Xc + lambda I)^-1 Xc^T (l - mean l),  eps = mean l - mean X * beta.
/// Solved by column-pivoted QR of the stacked system [Xc; sqrt(lambda) I].
inline FloorRegressor fit_floor_regressor(const Matrix& x, const Matrix& targets, double lambda) {
    if (x.rows() < 1 || targets.rows() != x.rows() || targets.cols() != 2) {
        throw ShapeError("fit_floor_regressor: need >= 1 row and (x, y) targets");
    }
    if (!(lambda >= 0.0)) {
        throw ConfigError("ridge lambda must be non-negative");
    }
    const Eigen::Index n = x.rows();
    const Eigen::Index d = x.cols();
    const Eigen::RowVectorXd x_mean = x.colwise().mean();
    const Eigen::RowVector2d l_mean = targets.colwise().mean();

    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n + d, d);
    a.topRows(n) = x.rowwise() - x_mean;
    a.bottomRows(d).diagonal().setConstant(std::sqrt(lambda));
    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(n + d, 2);
    b.topRows(n) = targets.rowwise() - l_mean;

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
    if (qr.rank() < d) {
        throw NumericError("fit_floor_regressor: singular system (rank " + std::to_string(qr.rank()) + " < " +
                           std::to_string(d) + "); raise the ridge lambda");
    }
    FloorRegressor r;
    r.lambda = lambda;
    r.coefficients = qr.solve(b);
    r.intercept = l_mean - x_mean * r.coefficients;
    if (!r.coefficients.allFinite()) {
        throw NumericError("fit_floor_regressor: non-finite coefficients");
    }
    return r;
}

inline FloorRegressor fit_floor_regressor(const FloorProfile& cell, double lambda) {
    return fit_floor_regressor(cell.fingerprints, cell.targets, lambda);
}

/// Building -> floor -> per-floor regression chain.
class HierarchicalLocalizer {
public:
    HierarchicalLocalizer(const ProcessedSet& train, double lambda)
        : profiles_(build_profiles(train)), bounds_(train.norm_bounds), building_count_(train.building_count),
          floor_count_(train.floor_count) {
        for (std::size_t b = 0; b < profiles_.size(); ++b) {
            for (std::size_t f = 0; f < profiles_[b].floors.size(); ++f) {
                regressors_.emplace(std::pair{profiles_[b].building, profiles_[b].floors[f].floor},
                                    fit_floor_regressor(profiles_[b].floors[f], lambda));
            }
        }
    }

    [[nodiscard]] PositionEstimate localize(std::span<const double> query) const {
        const int b = select_building(query, profiles_);
        const BuildingProfile* bp = nullptr;
        for (const auto& p : profiles_) {
            if (p.building == b) {
                bp = &p;
            }
        }
        const int f = select_floor(query, *bp);
        const auto loc = regressors_.at({b, f}).predict(query);
        PositionEstimate e;
        e.building = b;
        e.floor = f;
        e.x = bounds_.denormalize_x(loc(0));
        e.y = bounds_.denormalize_y(loc(1));
        e.building_probs.assign(static_cast<std::size_t>(std::max(building_count_, b + 1)), 0.0);
        e.floor_probs.assign(static_cast<std::size_t>(std::max(floor_count_, f + 1)), 0.0);
        e.building_probs[static_cast<std::size_t>(b)] = 1.0;
        e.floor_probs[static_cast<std::size_t>(f)] = 1.0;
        return e;
    }

    [[nodiscard]] std::vector<PositionEstimate> localize_all(const ProcessedSet& set) const {
        std::vector<PositionEstimate> out;
        out.reserve(set.size());
        std::vector<double> q(set.feature_count());
        for (std::size_t i = 0; i < set.size(); ++i) {
            for (std::size_t a = 0; a < q.size(); ++a) {
                q[a] = static_cast<double>(set.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(a)));
            }
            out.push_back(localize(q));
        }
        return out;
    }

    [[nodiscard]] LocalizationMetrics evaluate(const ProcessedSet& set) const {
        const auto est = localize_all(set);
        return compute_metrics(positions_of(est), true_positions(set));
    }

    [[nodiscard]] const std::vector<BuildingProfile>& profiles() const { return profiles_; }

private:
    std::vector<BuildingProfile> profiles_;
    std::map<std::pair<int, int>, FloorRegressor> regressors_;
    CoordBounds bounds_;
    int building_count_ = 0;
    int floor_count_ = 0;
};

}  // namespace fedloc::hierbase
