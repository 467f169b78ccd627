#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "lasso_gate/calibration.hpp"
#include "test_support.hpp"

using namespace lasso_gate;

namespace {

CalibrationOptions small(Index validation = 500, unsigned threads = 0) {
    CalibrationOptions o;
    o.allow_small = true;
    o.validation_replicates = validation;
    o.threads = threads;
    return o;
}

} // namespace

TEST(OrderStatistic, Rank) {
    EXPECT_EQ(order_statistic_rank(0.05, 19), 19);
    EXPECT_EQ(order_statistic_rank(0.05, 10000), 9501);
    EXPECT_EQ(order_statistic_rank(0.05, 100), 96);
    EXPECT_EQ(order_statistic_rank(0.5, 9), 5);
}

TEST(Calibrate, RejectsBadArguments) {
    const SpectralFactor f = identity_factor(5);
    EXPECT_THROW(calibrate(f, 10, {0}, 0.0, 200, {}, small()), InputError);
    EXPECT_THROW(calibrate(f, 10, {0}, 1.0, 200, {}, small()), InputError);
    EXPECT_THROW(calibrate(f, 10, {-1}, 0.05, 200, {}, small()), InputError);
    EXPECT_THROW(calibrate(f, 10, {0}, 0.05, 50, {}, small()), InsufficientReplicatesError);
    // ceil(0.999 * 101) = 101 > 100
    EXPECT_THROW(calibrate(f, 10, {0}, 0.001, 100, {}, small()), InsufficientReplicatesError);
}

TEST(Calibrate, ProductionPolicyNeedsExplicitDowngrade) {
    EXPECT_THROW(calibrate(identity_factor(5), 10, {0}, 0.05, 500, {}), InsufficientReplicatesError);
    const CalibrationTable t = calibrate(identity_factor(5), 10, {0}, 0.05, 500, {}, small(200));
    EXPECT_TRUE(t.downgraded);
}

TEST(Calibrate, ImpossibleExceedanceGivesZero) {
    const CalibrationTable t = calibrate(identity_factor(5), 10, {0, 5, 7}, 0.05, 200, {1, 0}, small(200));
    ASSERT_EQ(t.entries.size(), 3u);
    EXPECT_GT(t.find(0)->lambda_r, 0.0);
    for (Index r : {5, 7}) {
        EXPECT_EQ(t.find(r)->lambda_r, 0.0);
        EXPECT_EQ(t.find(r)->exceedance_rate, 0.0);
    }
}

// For r = 0 the entry threshold is 2 max_j |x_j^T y|; simulate that
// statistic directly on the same draws, with no LASSO fit at all.
TEST(Calibrate, ZeroMatchesMaxCorrelationOracle) {
    const Index n = 40, p = 200, m = 1000;
    const RngSpec rng{77, 0};
    const SpectralFactor f = identity_factor(p);

    std::vector<double> stat(m);
    for (Index i = 0; i < m; ++i) {
        const Dataset d = simulate_null_dataset(f, n, rng.substream(static_cast<std::uint64_t>(i)));
        stat[static_cast<std::size_t>(i)] = 2.0 * (d.x.transpose() * d.y).cwiseAbs().maxCoeff();
    }
    const Index rank = order_statistic_rank(0.05, m);
    std::nth_element(stat.begin(), stat.begin() + (rank - 1), stat.end());
    const double oracle = stat[static_cast<std::size_t>(rank - 1)];

    const CalibrationTable refined = calibrate(f, n, {0}, 0.05, m, rng, small());
    EXPECT_NEAR(refined.entries[0].lambda_r, oracle, 1e-12 * oracle);

    CalibrationOptions grid_only = small();
    grid_only.scan.refine = false;
    const CalibrationTable coarse = calibrate(f, n, {0}, 0.05, m, rng, grid_only);
    const auto grid = lambda_grid(1.0);
    EXPECT_LE(coarse.entries[0].lambda_r, oracle);
    EXPECT_GE(coarse.entries[0].lambda_r, oracle * grid[1] * (1 - 1e-12));
}

TEST(Calibrate, DeterministicAcrossThreadCounts) {
    const SpectralFactor f = spectral_decompose(fixtures::equicorrelated(60, 0.3));
    const CalibrationTable a = calibrate(f, 25, {0, 2}, 0.05, 300, {5, 0}, small(200, 1));
    const CalibrationTable b = calibrate(f, 25, {2, 0}, 0.05, 300, {5, 0}, small(200, 4));
    ASSERT_EQ(a.entries.size(), b.entries.size());
    for (std::size_t i = 0; i < a.entries.size(); ++i) {
        EXPECT_EQ(a.entries[i].r, b.entries[i].r);
        EXPECT_EQ(a.entries[i].lambda_r, b.entries[i].lambda_r);
        EXPECT_EQ(a.entries[i].exceedance_rate, b.entries[i].exceedance_rate);
    }
    std::ostringstream sa, sb;
    write_calibration_csv(sa, a);
    write_calibration_csv(sb, b);
    EXPECT_EQ(sa.str(), sb.str());
}

TEST(Calibrate, SizeControlOnFreshValidation) {
    const SpectralFactor f = identity_factor(200);
    const CalibrationTable t = calibrate(f, 40, {0, 1, 2}, 0.05, production_replicates, {11, 0}, small(2000));
    EXPECT_TRUE(t.validated);
    const double band = size_band(0.05, 2000);
    EXPECT_NEAR(band, 0.0146, 1e-4);
    for (const auto& e : t.entries) EXPECT_NEAR(e.exceedance_rate, 0.05, band) << "r = " << e.r;

    // An independent batch also carries the quantile noise of the table.
    const double joint = 3.0 * std::sqrt(0.05 * 0.95 * (1.0 / 2000 + 1.0 / production_replicates));
    const auto checks = validate_size(t, f, 40, 2000, {11, 5ull << 40});
    for (const auto& c : checks) EXPECT_NEAR(c.observed_rate, 0.05, joint) << "r = " << c.r;
}

TEST(ValidateSize, ExtremeLambdas) {
    const SpectralFactor f = identity_factor(60);
    CalibrationTable t;
    t.alpha = 0.05;
    t.n = 20;
    t.p = 60;
    t.entries = {{0, 0.0, 0.0, 0}};

    // lambda_r = 0: read at the bottom of the grid, essentially saturated.
    auto checks = validate_size(t, f, 20, 200, {3, 0});
    EXPECT_GT(checks[0].observed_rate, 0.99);

    // Far above any activation threshold.
    Dataset probe = simulate_null_dataset(f, 20, {3, 1});
    t.entries[0].lambda_r = 10.0 * 2.0 * 19.0;  // 10 x the largest possible lambda_max (|x_j^T y| <= n - 1)
    checks = validate_size(t, f, 20, 200, {3, 0});
    EXPECT_EQ(checks[0].observed_rate, 0.0);
    EXPECT_LT(lambda_max(probe), t.entries[0].lambda_r);
}

// Equicorrelated markers give fewer effectively independent statistics, so
// the calibrated lambda_0 is smaller than under the identity.
TEST(Calibrate, CorrelationSensitivity) {
    const Index n = 40, p = 200;
    const SpectralFactor id = identity_factor(p);
    const SpectralFactor eq = spectral_decompose(fixtures::equicorrelated(p, 0.8));
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        const double l_id = calibrate(id, n, {0}, 0.05, 500, {seed, 0}, small(200)).entries[0].lambda_r;
        const double l_eq = calibrate(eq, n, {0}, 0.05, 500, {seed, 0}, small(200)).entries[0].lambda_r;
        EXPECT_LT(l_eq, l_id) << "seed " << seed;
    }
}

TEST(CalibrationCsv, RoundTrip) {
    const CalibrationTable t = calibrate(identity_factor(30), 15, {0, 1, 3}, 0.05, 200, {9, 4}, small(200));
    std::stringstream io;
    write_calibration_csv(io, t, {"note=unit test"});
    const std::string text = io.str();
    EXPECT_NE(text.find("r,lambda_r,exceedance_rate\n"), std::string::npos);
    const CalibrationTable back = read_calibration_csv(io);
    EXPECT_EQ(back.alpha, t.alpha);
    EXPECT_EQ(back.replicates, t.replicates);
    EXPECT_EQ(back.rng, t.rng);
    EXPECT_EQ(back.n, t.n);
    EXPECT_EQ(back.p, t.p);
    EXPECT_EQ(back.factor_fingerprint, t.factor_fingerprint);
    EXPECT_EQ(back.validated, t.validated);
    EXPECT_EQ(back.downgraded, t.downgraded);
    ASSERT_EQ(back.entries.size(), t.entries.size());
    for (std::size_t i = 0; i < t.entries.size(); ++i) {
        EXPECT_EQ(back.entries[i].r, t.entries[i].r);
        EXPECT_EQ(back.entries[i].lambda_r, t.entries[i].lambda_r);
        EXPECT_EQ(back.entries[i].nonmonotone, t.entries[i].nonmonotone);
    }
}

TEST(CalibrationCsv, RejectsMalformed) {
    std::stringstream no_header("# alpha=0.05\n0,1.0,0.05\n");
    EXPECT_THROW(read_calibration_csv(no_header), ParseError);
    std::stringstream missing_meta("r,lambda_r,exceedance_rate\n0,1.0,0.05\n");
    EXPECT_THROW(read_calibration_csv(missing_meta), ParseError);
}
