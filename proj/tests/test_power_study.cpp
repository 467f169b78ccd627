#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "lasso_gate/power_study.hpp"

using namespace lasso_gate;

namespace {

constexpr Index kN = 20;
constexpr Index kP = 50;

const CalibrationTable& identity_table() {
    static const CalibrationTable table = [] {
        CalibrationOptions o;
        o.validation_replicates = 2000;
        return calibrate(identity_factor(kP), kN, {0, 1, 2, 5}, 0.05, production_replicates, {3, 0}, o);
    }();
    return table;
}

ScenarioConfig small_config(Index runs) {
    ScenarioConfig c;
    c.n = kN;
    c.p = kP;
    c.runs = runs;
    c.r_values = {0, 1, 2, 5};
    c.rng = {42, 0};
    c.threads = 0;
    return c;
}

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

} // namespace

TEST(PowerStudy, TableIsUsable) {
    ASSERT_TRUE(identity_table().usable());
}

// With no effect every method is a size check. The U(r) rates also carry
// the quantile noise of the table.
TEST(PowerStudy, SizeAnchoringScenario1) {
    ScenarioConfig c = small_config(1000);
    c.beta_grid = {0.0};
    const PowerStudyResult res = simulate_scenario1(c, identity_table());
    ASSERT_EQ(res.curves.size(), 6u);
    for (const auto& curve : res.curves) {
        const bool lasso = curve.method.rfind("U(", 0) == 0;
        const double var = 0.05 * 0.95 * (1.0 / c.runs + (lasso ? 1.0 / production_replicates : 0.0));
        EXPECT_NEAR(curve.power[0], 0.05, 3.0 * std::sqrt(var)) << curve.method;
    }
}

TEST(PowerStudy, SizeAnchoringScenario2ZeroEffects) {
    ScenarioConfig c = small_config(1000);
    c.k_values = {0};
    c.mu = 0.4;
    const PowerStudyResult k0 = simulate_scenario2(c, identity_table());
    c.k_values = {3};
    c.mu = 0.0;
    const PowerStudyResult mu0 = simulate_scenario2(c, identity_table());
    for (const auto* res : {&k0, &mu0}) {
        for (const auto& curve : res->curves) {
            const bool lasso = curve.method.rfind("U(", 0) == 0;
            const double var = 0.05 * 0.95 * (1.0 / c.runs + (lasso ? 1.0 / production_replicates : 0.0));
            EXPECT_NEAR(curve.power[0], 0.05, 3.0 * std::sqrt(var)) << curve.method;
        }
    }
}

TEST(PowerStudy, CurveInvariantsAndAccounting) {
    ScenarioConfig c = small_config(200);
    c.beta_grid = {0.0, 0.5, 1.0};
    c.r_values = {0, 2, 5};
    const PowerStudyResult res = simulate_scenario1(c, identity_table());
    EXPECT_EQ(res.replicates, 600);
    EXPECT_EQ(res.lasso_fits, c.runs * 3 * 3);
    ASSERT_EQ(res.curves.size(), 5u);
    EXPECT_NE(res.curve("U(0)"), nullptr);
    EXPECT_NE(res.curve("t-Bonferroni"), nullptr);
    EXPECT_NE(res.curve("t-BH"), nullptr);
    EXPECT_EQ(res.curve("U(1)"), nullptr);
    for (const auto& curve : res.curves) {
        EXPECT_EQ(curve.x_axis, c.beta_grid);
        for (std::size_t i = 0; i < curve.power.size(); ++i) {
            EXPECT_GE(curve.power[i], 0.0);
            EXPECT_LE(curve.power[i], 1.0);
            EXPECT_DOUBLE_EQ(curve.mc_se[i], std::sqrt(curve.power[i] * (1.0 - curve.power[i]) / c.runs));
            // Powers are counts over runs.
            const double hits = curve.power[i] * c.runs;
            EXPECT_NEAR(hits, std::round(hits), 1e-9);
        }
    }
}

TEST(PowerStudy, Scenario2Accounting) {
    ScenarioConfig c = small_config(100);
    c.k_values = {1, 5, 50};
    const PowerStudyResult res = simulate_scenario2(c, identity_table());
    EXPECT_EQ(res.lasso_fits, c.runs * 3 * 4);
    EXPECT_EQ(res.curves.front().x_axis, (std::vector<double>{1, 5, 50}));
}

TEST(PowerStudy, UZeroPowerIncreasesWithEffect) {
    // At n = 20 power barely moves below beta_1 = 0.5, so adjacent points
    // there are ties and the check has no content.
    ScenarioConfig c = small_config(1000);
    c.beta_grid = {0.0, 0.5, 0.75, 1.0, 1.5};
    const PowerStudyResult res = simulate_scenario1(c, identity_table());
    const PowerCurve* u0 = res.curve("U(0)");
    ASSERT_NE(u0, nullptr);
    for (std::size_t i = 1; i < u0->power.size(); ++i)
        EXPECT_GE(u0->power[i], u0->power[i - 1] - 2.0 * std::max(u0->mc_se[i], u0->mc_se[i - 1])) << "point " << i;
    EXPECT_GT(u0->power.back(), 0.8);
}

TEST(PowerStudy, BonferroniAndBhAgreeInScenario1) {
    ScenarioConfig c = small_config(500);
    c.beta_grid = {0.25, 0.5, 1.0};
    const PowerStudyResult res = simulate_scenario1(c, identity_table());
    const PowerCurve* bonf = res.curve("t-Bonferroni");
    const PowerCurve* bh = res.curve("t-BH");
    for (std::size_t i = 0; i < bonf->power.size(); ++i) {
        EXPECT_LE(bonf->power[i], bh->power[i]);
        EXPECT_NEAR(bonf->power[i], bh->power[i], 3.0 * std::max(bonf->mc_se[i], bh->mc_se[i]));
    }
}

TEST(PowerStudy, ThreadCountDoesNotChangeResults) {
    ScenarioConfig c = small_config(150);
    c.beta_grid = {0.3, 0.9};
    c.threads = 1;
    const auto one = power_table_csv(simulate_scenario1(c, identity_table()).curves);
    c.threads = 4;
    const auto four = power_table_csv(simulate_scenario1(c, identity_table()).curves);
    EXPECT_EQ(one, four);

    c.k_values = {2, 10};
    c.threads = 1;
    const auto s2one = power_table_csv(simulate_scenario2(c, identity_table()).curves);
    c.threads = 3;
    EXPECT_EQ(s2one, power_table_csv(simulate_scenario2(c, identity_table()).curves));
}

TEST(PowerStudy, Preconditions) {
    ScenarioConfig c = small_config(100);
    c.r_values = {0, 3};
    EXPECT_THROW(simulate_scenario1(c, identity_table()), InputError);  // no entry for r = 3
    c = small_config(50);
    EXPECT_THROW(simulate_scenario1(c, identity_table()), InputError);
    c = small_config(100);
    c.alpha = 0.1;
    EXPECT_THROW(simulate_scenario1(c, identity_table()), InputError);
    c = small_config(100);
    c.beta_grid = {-0.1};
    EXPECT_THROW(simulate_scenario1(c, identity_table()), InputError);
    c = small_config(100);
    c.k_values = {kP + 1};
    EXPECT_THROW(simulate_scenario2(c, identity_table()), InputError);

    CalibrationTable wrong = identity_table();
    wrong.factor_fingerprint ^= 1;
    EXPECT_THROW(simulate_scenario1(small_config(100), wrong), FingerprintMismatchError);
    CalibrationTable unvalidated = identity_table();
    unvalidated.validated = false;
    EXPECT_THROW(simulate_scenario1(small_config(100), unvalidated), ValidationFailedError);
}

TEST(PowerExport, Format) {
    PowerCurve curve{"U(0)", {0.5, 1.0}, {0.25, 0.9}, {0.01, 0.02}};
    const std::string text = power_table_csv({curve});
    EXPECT_EQ(text, "x,method,power,mc_se\n0.5,U(0),0.25,0.01\n1,U(0),0.9,0.02\n");
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 3);
}

TEST(PowerExport, SortedByMethodThenX) {
    PowerCurve b{"t-BH", {2, 1}, {0.2, 0.1}, {0, 0}};
    PowerCurve a{"U(1)", {2, 1}, {0.4, 0.3}, {0, 0}};
    const std::string text = power_table_csv({b, a}, {"seed=1"});
    EXPECT_EQ(text, "# seed=1\nx,method,power,mc_se\n1,U(1),0.3,0\n2,U(1),0.4,0\n1,t-BH,0.1,0\n2,t-BH,0.2,0\n");
}

TEST(PowerExport, FileIsByteIdenticalOnReexport) {
    const auto dir = std::filesystem::temp_directory_path() / "lasso_gate_power_export";
    std::filesystem::create_directories(dir);
    PowerCurve curve{"U(0)", {0.1, 0.2}, {1.0 / 3.0, 0.5}, {0.001, 0.002}};
    export_power_tables({curve}, dir / "a.csv", {"version=x"});
    export_power_tables({curve}, dir / "b.csv", {"version=x"});
    EXPECT_EQ(read_file(dir / "a.csv"), read_file(dir / "b.csv"));
    EXPECT_EQ(read_file(dir / "a.csv"), power_table_csv({curve}, {"version=x"}));
    std::filesystem::remove_all(dir);
}

TEST(PowerExport, Errors) {
    EXPECT_THROW(power_table_csv({}), InputError);
    PowerCurve a{"U(0)", {1, 2}, {0.1, 0.2}, {0, 0}};
    PowerCurve b{"U(1)", {1, 3}, {0.1, 0.2}, {0, 0}};
    EXPECT_THROW(power_table_csv({a, b}), InputError);
    PowerCurve c{"U(2)", {1, 2}, {0.1}, {0}};
    EXPECT_THROW(power_table_csv({c}), InputError);
    EXPECT_THROW(export_power_tables({a}, "/nonexistent-dir/x/y.csv"), IoError);
}

TEST(PowerConfig, ParsesAllKeys) {
    std::istringstream in(R"(# study
n = 30
p=120
sigma_noise=0.5
runs=2000
r_values=0, 1,5
alpha=0.05
seed=99
stream=7
threads=2
beta_grid=0.2,0.4
k_values=1,2
scenarios=2
mu_values=0.4
calibration_replicates=500   # quick look
validation_replicates=300
allow_small_replicates=true
)");
    const PowerStudyConfig cfg = parse_power_config(in);
    EXPECT_EQ(cfg.base.n, 30);
    EXPECT_EQ(cfg.base.p, 120);
    EXPECT_DOUBLE_EQ(cfg.base.sigma_noise, 0.5);
    EXPECT_EQ(cfg.base.runs, 2000);
    EXPECT_EQ(cfg.base.r_values, (std::vector<Index>{0, 1, 5}));
    EXPECT_EQ(cfg.base.rng.seed, 99u);
    EXPECT_EQ(cfg.base.rng.stream, 7u);
    EXPECT_EQ(cfg.base.threads, 2u);
    EXPECT_EQ(cfg.base.beta_grid, (std::vector<double>{0.2, 0.4}));
    EXPECT_EQ(cfg.base.k_values, (std::vector<Index>{1, 2}));
    EXPECT_EQ(cfg.scenarios, (std::vector<int>{2}));
    EXPECT_EQ(cfg.mu_values, (std::vector<double>{0.4}));
    EXPECT_EQ(cfg.calibration_replicates, 500);
    EXPECT_EQ(cfg.validation_replicates, 300);
    EXPECT_TRUE(cfg.allow_small);

    const auto lines = describe(cfg);
    EXPECT_NE(std::find(lines.begin(), lines.end(), "seed=99"), lines.end());
    for (const auto& l : lines) EXPECT_EQ(l.find("threads"), std::string::npos);
}

TEST(PowerConfig, Defaults) {
    std::istringstream in("");
    const PowerStudyConfig cfg = parse_power_config(in);
    EXPECT_EQ(cfg.base.n, 40);
    EXPECT_EQ(cfg.base.p, 200);
    EXPECT_EQ(cfg.base.runs, 10000);
    EXPECT_EQ(cfg.base.r_values, (std::vector<Index>{0, 1, 2, 5, 10, 20}));
    EXPECT_EQ(cfg.base.beta_grid.size(), 10u);
    EXPECT_EQ(cfg.base.k_values, (std::vector<Index>{1, 2, 5, 10, 20, 50}));
    EXPECT_EQ(cfg.mu_values, (std::vector<double>{0.2, 0.4}));
    EXPECT_EQ(cfg.calibration_replicates, production_replicates);
}

TEST(PowerConfig, RejectsBadInput) {
    for (const char* text : {"bogus=1\n", "n\n", "runs=abc\n", "runs=50\n", "alpha=1.5\n", "scenarios=3\n",
                             "n=1,2\n", "allow_small_replicates=maybe\n", "r_values=\n"}) {
        std::istringstream in(text);
        EXPECT_THROW(parse_power_config(in), ParseError) << text;
    }
}

TEST(PowerConfig, MuFileTag) {
    EXPECT_EQ(mu_file_tag(0.2), "02");
    EXPECT_EQ(mu_file_tag(0.4), "04");
    EXPECT_EQ(mu_file_tag(1.0), "1");
}
