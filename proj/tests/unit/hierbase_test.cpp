#include "fedloc/hierbase.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

using namespace fedloc;
using namespace fedloc::hierbase;

namespace {

ProcessedSet cells_set(const std::vector<std::vector<float>>& rows, const std::vector<std::pair<int, int>>& cells,
                       const std::vector<std::pair<double, double>>& targets) {
    ProcessedSet s;
    s.features.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t a = 0; a < rows[i].size(); ++a) {
            s.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(a)) = rows[i][a];
        }
        s.labels.push_back({cells[i].first, cells[i].second, targets[i].first, targets[i].second});
        s.user_ids.push_back(1);
    }
    s.norm_bounds = {0.0, 100.0, 0.0, 200.0};
    int nb = 0;
    int nf = 0;
    for (const auto& [b, f] : cells) {
        nb = std::max(nb, b + 1);
        nf = std::max(nf, f + 1);
    }
    s.building_count = nb;
    s.floor_count = nf;
    return s;
}

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        m.data()[i] = rng.uniform(-1.0, 1.0);
    }
    return m;
}

}  // namespace

TEST(Profiles, RowCountsAndUnion) {
    const auto s = cells_set({{0, 0}, {1, 0}, {1, 1}}, {{0, 0}, {0, 1}, {1, 0}}, {{0, 0}, {0, 0}, {0, 0}});
    const auto p = build_profiles(s);
    ASSERT_EQ(p.size(), 2u);
    EXPECT_EQ(p[0].row_count(), 2u);
    EXPECT_EQ(p[1].row_count(), 1u);
    EXPECT_EQ(p[0].row_count() + p[1].row_count(), s.size());
}

TEST(Profiles, ThreeBuildingsOnSyntheticSurvey) {
    const auto s = fedloc::testing::synthetic_processed(5);
    const auto p = build_profiles(s);
    EXPECT_EQ(p.size(), 3u);
    std::size_t total = 0;
    for (const auto& b : p) {
        total += b.row_count();
    }
    EXPECT_EQ(total, s.size());
}

TEST(SelectBuilding, HandDistances) {
    const auto s = cells_set({{1, 0}, {3, 4}}, {{0, 0}, {1, 0}}, {{0, 0}, {0, 0}});
    const auto p = build_profiles(s);
    const std::vector<double> q{0, 0};
    EXPECT_EQ(select_building(q, p), 0);
    const std::vector<double> own{3, 4};
    EXPECT_EQ(select_building(own, p), 1);
}

TEST(SelectFloor, HandDistancesAndSingleFloor) {
    // floor 0 rows at distance 2 from the query, floor 1 at distance 7
    const auto s = cells_set({{2, 0}, {0, 2}, {7, 0}}, {{0, 0}, {0, 0}, {0, 1}}, {{0, 0}, {0, 0}, {0, 0}});
    const auto p = build_profiles(s);
    const std::vector<double> q{0, 0};
    EXPECT_EQ(select_floor(q, p[0]), 0);

    const auto single = build_profiles(cells_set({{5, 5}}, {{0, 3}}, {{0, 0}}));
    EXPECT_EQ(select_floor(q, single[0]), 3);
}

TEST(Selection, MatchesBruteForceOnRandomToys) {
    for (int trial = 0; trial < 120; ++trial) {
        Rng rng(3000 + trial);
        const int nb = 2 + static_cast<int>(rng.below(3));
        const int nf = 1 + static_cast<int>(rng.below(4));
        const std::size_t width = 2 + rng.below(6);
        std::vector<std::vector<float>> rows;
        std::vector<std::pair<int, int>> cells;
        std::vector<std::pair<double, double>> targets;
        for (int i = 0; i < 20; ++i) {
            std::vector<float> r(width);
            for (auto& v : r) {
                v = static_cast<float>(rng.uniform());
            }
            rows.push_back(r);
            // make sure every building appears
            const int b = i < nb ? i : static_cast<int>(rng.below(static_cast<std::uint64_t>(nb)));
            cells.emplace_back(b, static_cast<int>(rng.below(static_cast<std::uint64_t>(nf))));
            targets.emplace_back(rng.uniform(), rng.uniform());
        }
        const auto s = cells_set(rows, cells, targets);
        const auto profiles = build_profiles(s);
        std::vector<double> q(width);
        for (auto& v : q) {
            v = rng.uniform();
        }
        auto dist = [&](std::size_t row) {
            double acc = 0.0;
            for (std::size_t a = 0; a < width; ++a) {
                const double d = q[a] - static_cast<double>(rows[row][a]);
                acc += d * d;
            }
            return std::sqrt(acc);
        };
        // brute force: mean distance per building, first minimum wins
        int best_b = -1;
        double best_bd = std::numeric_limits<double>::infinity();
        for (int b = 0; b < nb; ++b) {
            double sum = 0.0;
            int n = 0;
            for (std::size_t i = 0; i < rows.size(); ++i) {
                if (cells[i].first == b) {
                    sum += dist(i);
                    ++n;
                }
            }
            if (n > 0 && sum / n < best_bd) {
                best_bd = sum / n;
                best_b = b;
            }
        }
        const int got_b = select_building(q, profiles);
        ASSERT_EQ(got_b, best_b) << "trial " << trial;

        int best_f = -1;
        double best_fd = std::numeric_limits<double>::infinity();
        for (int f = 0; f < nf; ++f) {
            double sum = 0.0;
            int n = 0;
            for (std::size_t i = 0; i < rows.size(); ++i) {
                if (cells[i].first == best_b && cells[i].second == f) {
                    sum += dist(i);
                    ++n;
                }
            }
            if (n > 0 && sum / n < best_fd) {
                best_fd = sum / n;
                best_f = f;
            }
        }
        const auto& bp = *std::find_if(profiles.begin(), profiles.end(),
                                       [&](const BuildingProfile& p) { return p.building == best_b; });
        EXPECT_EQ(select_floor(q, bp), best_f) << "trial " << trial;
    }
}

TEST(Ridge, ExactInterpolationAtZeroLambda) {
    // three rows, two features: with the intercept the system is exactly determined
    Matrix x(3, 2);
    x << 0, 0, 1, 0, 0, 1;
    Matrix l(3, 2);
    l << 1, 2, 3, 5, -1, 4;
    const auto r = fit_floor_regressor(x, l, 0.0);
    for (Eigen::Index i = 0; i < 3; ++i) {
        const std::vector<double> q{x(i, 0), x(i, 1)};
        EXPECT_LT((r.predict(q) - l.row(i)).norm(), 1e-9);
    }
}

TEST(Ridge, LargeLambdaShrinksToMeanTarget) {
    Rng rng(5);
    const Matrix x = random_matrix(12, 4, rng);
    const Matrix l = random_matrix(12, 2, rng);
    const auto r = fit_floor_regressor(x, l, 1e12);
    EXPECT_LT(r.coefficients.norm(), 1e-10);
    const std::vector<double> q{0.3, -0.2, 0.9, 0.1};
    EXPECT_LT((r.predict(q) - l.colwise().mean()).norm(), 1e-9);
}

TEST(Ridge, MatchesNormalEquationsAndIsStationary) {
    for (int trial = 0; trial < 10; ++trial) {
        Rng rng(70 + trial);
        const Matrix x = random_matrix(30, 5, rng);
        const Matrix l = random_matrix(30, 2, rng);
        const double lambda = 1e-2;
        const auto r = fit_floor_regressor(x, l, lambda);

        // oracle: (Xc^T Xc + lambda I) beta = Xc^T lc via LDL^T
        const Matrix xc = x.rowwise() - x.colwise().mean();
        const Matrix lc = l.rowwise() - l.colwise().mean();
        const Eigen::MatrixXd gram = xc.transpose() * xc + lambda * Eigen::MatrixXd::Identity(5, 5);
        const Eigen::MatrixXd beta = gram.ldlt().solve(Eigen::MatrixXd(xc.transpose() * lc));
        const double residual_oracle = (xc * beta - lc).norm();
        const double residual = (xc * r.coefficients - lc).norm();
        EXPECT_NEAR(residual, residual_oracle, 1e-6);
        EXPECT_LT((r.coefficients - beta).norm(), 1e-8);

        // gradient of ||Xc b - lc||^2 + lambda ||b||^2 vanishes
        const Eigen::MatrixXd grad = xc.transpose() * (xc * r.coefficients - lc) + lambda * r.coefficients;
        const double scale = xc.norm() * lc.norm();
        EXPECT_LE(grad.norm(), 1e-6 * scale);
    }
}

TEST(Ridge, RankDeficientWithoutRegularizationThrows) {
    Rng rng(1);
    const Matrix x = random_matrix(2, 5, rng);
    const Matrix l = random_matrix(2, 2, rng);
    EXPECT_THROW((void)fit_floor_regressor(x, l, 0.0), NumericError);
    EXPECT_NO_THROW((void)fit_floor_regressor(x, l, 1e-2));
    EXPECT_THROW((void)fit_floor_regressor(x, l, -1.0), ConfigError);
}

TEST(Localizer, ThreeCellHandTrace) {
    // cells (b0,f0) at [0,0], (b0,f1) at [1,0], (b1,f0) at [1,1]
    const auto s = cells_set({{0, 0}, {1, 0}, {1, 1}}, {{0, 0}, {0, 1}, {1, 0}},
                             {{0.1, 0.2}, {0.3, 0.4}, {0.5, 0.6}});
    const HierarchicalLocalizer loc(s, 1e-2);
    // building means: b0 (0.9 + 0.1) / 2 = 0.5, b1 sqrt(0.01 + 1) ~ 1.005 -> b0
    // floor distances within b0: f0 0.9, f1 0.1 -> f1
    // single-row cell: coefficients 0, intercept = its target (0.3, 0.4) -> (30, 80) m
    const std::vector<double> q{0.9, 0.0};
    const auto e = loc.localize(q);
    EXPECT_EQ(e.building, 0);
    EXPECT_EQ(e.floor, 1);
    EXPECT_NEAR(e.x, 30.0, 1e-9);
    EXPECT_NEAR(e.y, 80.0, 1e-9);
    EXPECT_EQ(e.building_probs, (std::vector<double>{1.0, 0.0}));
}

TEST(Localizer, TrainingRowsRecoverTheirCell) {
    // one row per cell, far apart
    const auto s = cells_set({{0, 0, 0}, {0, 1, 0}, {1, 0, 1}, {1, 1, 1}}, {{0, 0}, {0, 1}, {1, 0}, {1, 1}},
                             {{0, 0}, {0, 1}, {1, 0}, {1, 1}});
    const HierarchicalLocalizer loc(s, 1e-2);
    const auto m = loc.evaluate(s);
    EXPECT_EQ(m.b_acc, 1.0);
    EXPECT_EQ(m.f_acc, 1.0);
    EXPECT_NEAR(m.mde3d, 0.0, 1e-9);
}

TEST(Localizer, SyntheticSurveyIsMostlyRight) {
    const auto all = fedloc::testing::synthetic_processed(40);
    const auto [train, test] = train_test_split(all, 0.9, 1);
    const HierarchicalLocalizer loc(train, 1e-2);
    const auto m = loc.evaluate(test);
    EXPECT_GE(m.b_acc, 0.95);
}
