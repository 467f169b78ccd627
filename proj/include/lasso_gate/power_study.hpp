#pragma once

// Power simulations for the U(r) tests and the marginal t-test baselines.
//
// Scenario 1: one relevant marker, beta_1 over a grid, all others zero.
// Scenario 2: k relevant markers with beta_j ~ N(mu, sd = 0.5 mu), redrawn
//             every replicate, so each power is an average over effect
//             configurations.
// Markers are iid N(0, 1), noise N(0, sigma^2). Every replicate goes
// through the full procedure, including standardization, and is tested
// against one calibration table for the identity covariance.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "baselines.hpp"
#include "calibration.hpp"
#include "data_model.hpp"
#include "error.hpp"
#include "fingerprint.hpp"
#include "lasso_solver.hpp"
#include "parallel.hpp"
#include "rng.hpp"

namespace lasso_gate {

enum class Scenario { one_predictor, multi_predictor };

struct ScenarioConfig {
    Index n = 40;
    Index p = 200;
    double sigma_noise = 1.0;
    Index runs = 10000;
    std::vector<Index> r_values{0, 1, 2, 5, 10, 20};
    double alpha = 0.05;
    Scenario scenario = Scenario::one_predictor;
    std::vector<double> beta_grid{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
    std::vector<Index> k_values{1, 2, 5, 10, 20, 50};
    double mu = 0.4;
    RngSpec rng;
    unsigned threads = 0;
};

struct PowerCurve {
    std::string method;
    std::vector<double> x_axis;
    std::vector<double> power;
    std::vector<double> mc_se;
};

struct PowerStudyResult {
    std::vector<PowerCurve> curves;
    std::int64_t lasso_fits = 0;
    std::int64_t replicates = 0;

    const PowerCurve* curve(const std::string& method) const {
        for (const auto& c : curves)
            if (c.method == method) return &c;
        return nullptr;
    }
};

inline std::string u_label(Index r) { return "U(" + std::to_string(r) + ")"; }
inline const char* bonferroni_label = "t-Bonferroni";
inline const char* bh_label = "t-BH";

inline double mc_standard_error(double power, Index runs) {
    return std::sqrt(power * (1.0 - power) / static_cast<double>(runs));
}

namespace detail {

inline void check_power_preconditions(const ScenarioConfig& cfg, const CalibrationTable& table) {
    if (cfg.n < 4 || cfg.p < 1) throw InputError("power study needs n >= 4 and p >= 1");
    if (cfg.runs < 100) throw InputError("power study needs runs >= 100");
    if (!(cfg.sigma_noise >= 0.0)) throw InputError("sigma_noise must be non-negative");
    if (table.n != cfg.n || table.p != cfg.p)
        throw InputError("calibration table was built for n = " + std::to_string(table.n) +
                         ", p = " + std::to_string(table.p));
    if (table.factor_fingerprint != fingerprint(identity_factor(cfg.p), cfg.n))
        throw FingerprintMismatchError("power study requires a table calibrated for the identity covariance");
    if (std::abs(table.alpha - cfg.alpha) > 1e-12) throw InputError("calibration table alpha differs from config");
    if (!table.usable()) throw ValidationFailedError("calibration table did not pass size validation");
    for (Index r : cfg.r_values)
        if (!table.find(r)) throw InputError("calibration table has no entry for r = " + std::to_string(r));
}

inline std::uint64_t power_stream(const RngSpec& base, std::uint64_t scenario_tag, std::size_t point, std::size_t rep) {
    return base.stream + (scenario_tag << 56) + (static_cast<std::uint64_t>(point) << 36) + rep;
}

// draw_beta(engine, point, beta) fills the true coefficients for one replicate.
template <class DrawBeta>
PowerStudyResult run_power(const ScenarioConfig& cfg, const CalibrationTable& table, std::uint64_t scenario_tag,
                           const std::vector<double>& x_axis, const std::string& x_name, DrawBeta draw_beta) {
    const std::size_t n_r = cfg.r_values.size();
    const std::size_t methods = n_r + 2;
    const std::size_t points = x_axis.size();
    const auto runs = static_cast<std::size_t>(cfg.runs);

    std::vector<double> lambda_r(n_r);
    for (std::size_t i = 0; i < n_r; ++i) lambda_r[i] = table.find(cfg.r_values[i])->lambda_r;

    std::vector<unsigned char> rejects(points * runs * methods, 0);
    std::vector<std::int64_t> fits(points * runs, 0);

    parallel_for(points * runs, cfg.threads, [&](std::size_t job) {
        const std::size_t point = job / runs;
        const std::size_t rep = job % runs;
        try {
            Engine engine = make_engine({cfg.rng.seed, power_stream(cfg.rng, scenario_tag, point, rep)});
            VectorXd beta = VectorXd::Zero(cfg.p);
            draw_beta(engine, point, beta);
            MatrixXd x(cfg.n, cfg.p);
            fill_standard_normal(x.data(), x.data() + x.size(), engine);
            VectorXd noise(cfg.n);
            fill_standard_normal(noise.data(), noise.data() + noise.size(), engine);
            VectorXd y = x * beta + cfg.sigma_noise * noise;
            const Dataset data = standardize(make_dataset(std::move(y), std::move(x)));

            std::vector<double> lambdas;
            std::vector<std::size_t> which;
            for (std::size_t i = 0; i < n_r; ++i) {
                if (cfg.r_values[i] >= cfg.p) continue;
                lambdas.push_back(effective_lambda(lambda_r[i], data));
                which.push_back(i);
            }
            const auto counts = nonzero_counts(data, lambdas);
            fits[job] = static_cast<std::int64_t>(lambdas.size());

            unsigned char* row = &rejects[job * methods];
            for (std::size_t k = 0; k < which.size(); ++k)
                row[which[k]] = counts[k] > cfg.r_values[which[k]] ? 1 : 0;
            const MarginalTestResult marginal = marginal_t_tests(data);
            row[n_r] = bonferroni_global(marginal.p_values, cfg.alpha) ? 1 : 0;
            row[n_r + 1] = bh_global(marginal.p_values, cfg.alpha) ? 1 : 0;
        } catch (const Error& e) {
            char buf[96];
            std::snprintf(buf, sizeof buf, "%s = %g, replicate %zu: ", x_name.c_str(), x_axis[point], rep);
            throw Error(buf + std::string(e.what()));
        }
    });

    PowerStudyResult result;
    result.replicates = static_cast<std::int64_t>(points * runs);
    for (auto f : fits) result.lasso_fits += f;
    for (std::size_t m = 0; m < methods; ++m) {
        PowerCurve curve;
        curve.method = m < n_r ? u_label(cfg.r_values[m]) : (m == n_r ? bonferroni_label : bh_label);
        curve.x_axis = x_axis;
        for (std::size_t point = 0; point < points; ++point) {
            std::size_t hits = 0;
            for (std::size_t rep = 0; rep < runs; ++rep) hits += rejects[(point * runs + rep) * methods + m];
            const double power = static_cast<double>(hits) / static_cast<double>(runs);
            curve.power.push_back(power);
            curve.mc_se.push_back(mc_standard_error(power, cfg.runs));
        }
        result.curves.push_back(std::move(curve));
    }
    return result;
}

} // namespace detail

inline PowerStudyResult simulate_scenario1(const ScenarioConfig& cfg, const CalibrationTable& table) {
    detail::check_power_preconditions(cfg, table);
    for (double b : cfg.beta_grid)
        if (!(b >= 0.0)) throw InputError("beta_1 grid values must be non-negative");
    return detail::run_power(cfg, table, 1, cfg.beta_grid, "beta1",
                             [&](Engine&, std::size_t point, VectorXd& beta) { beta[0] = cfg.beta_grid[point]; });
}

inline PowerStudyResult simulate_scenario2(const ScenarioConfig& cfg, const CalibrationTable& table) {
    detail::check_power_preconditions(cfg, table);
    if (!(cfg.mu >= 0.0)) throw InputError("mu must be non-negative");
    std::vector<double> x_axis;
    for (Index k : cfg.k_values) {
        if (k < 0 || k > cfg.p) throw InputError("k must lie in [0, p]");
        x_axis.push_back(static_cast<double>(k));
    }
    // Distinct mu values must not share streams.
    const auto tag = 2 + (static_cast<std::uint64_t>(std::llround(cfg.mu * 1000.0)) & 0x3f) * 4;
    return detail::run_power(cfg, table, tag, x_axis, "k", [&](Engine& engine, std::size_t point, VectorXd& beta) {
        std::normal_distribution<double> effect(cfg.mu, 0.5 * cfg.mu);
        for (Index j = 0; j < cfg.k_values[point]; ++j) beta[j] = cfg.mu > 0.0 ? effect(engine) : 0.0;
    });
}

// --- export -----------------------------------------------------------------

inline std::string power_table_csv(const std::vector<PowerCurve>& curves,
                                   const std::vector<std::string>& provenance = {}) {
    if (curves.empty()) throw InputError("no power curves to export");
    for (const auto& c : curves) {
        if (c.x_axis != curves.front().x_axis) throw InputError("power curves do not share an x axis");
        if (c.power.size() != c.x_axis.size() || c.mc_se.size() != c.x_axis.size())
            throw InputError("power curve '" + c.method + "' has inconsistent lengths");
    }

    std::vector<std::tuple<std::string, double, double, double>> rows;
    for (const auto& c : curves)
        for (std::size_t i = 0; i < c.x_axis.size(); ++i) rows.emplace_back(c.method, c.x_axis[i], c.power[i], c.mc_se[i]);
    std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
        return std::tie(std::get<0>(a), std::get<1>(a)) < std::tie(std::get<0>(b), std::get<1>(b));
    });

    std::ostringstream out;
    for (const auto& line : provenance) out << "# " << line << '\n';
    out << "x,method,power,mc_se\n";
    char buf[128];
    for (const auto& [method, x, power, se] : rows) {
        std::snprintf(buf, sizeof buf, "%.10g,%s,%.10g,%.10g\n", x, method.c_str(), power, se);
        out << buf;
    }
    return out.str();
}

inline void export_power_tables(const std::vector<PowerCurve>& curves, const std::filesystem::path& path,
                                 const std::vector<std::string>& provenance = {}) {
    const std::string text = power_table_csv(curves, provenance);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw IoError("failed writing '" + path.string() + "'");
}

// --- config file --------------------------------------------------------------
//
// Plain key=value lines; '#' starts a comment. Lists are comma-separated.

struct PowerStudyConfig {
    ScenarioConfig base;
    std::vector<int> scenarios{1, 2};
    std::vector<double> mu_values{0.2, 0.4};
    Index calibration_replicates = production_replicates;
    Index validation_replicates = 2000;
    bool allow_small = false;
};

namespace detail {

template <class T>
std::vector<T> parse_list(const std::string& key, const std::string& value) {
    std::vector<T> out;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        std::istringstream is(item);
        T v{};
        if (!(is >> v) || !(is >> std::ws).eof()) throw ParseError("config: bad value '" + item + "' for " + key);
        out.push_back(v);
    }
    if (out.empty()) throw ParseError("config: empty list for " + key);
    return out;
}

template <class T>
T parse_scalar(const std::string& key, const std::string& value) {
    const auto list = parse_list<T>(key, value);
    if (list.size() != 1) throw ParseError("config: expected a single value for " + key);
    return list.front();
}

inline bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1" || value == "yes") return true;
    if (value == "false" || value == "0" || value == "no") return false;
    throw ParseError("config: bad boolean '" + value + "' for " + key);
}

inline std::string join_numbers(const std::vector<double>& v) {
    std::string s;
    char buf[32];
    for (std::size_t i = 0; i < v.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.10g", v[i]);
        s += (i ? "," : "") + std::string(buf);
    }
    return s;
}

template <class T>
std::string join_integers(const std::vector<T>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
}

} // namespace detail

inline PowerStudyConfig parse_power_config(std::istream& in) {
    PowerStudyConfig cfg;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ParseError("config line " + std::to_string(line_no) + ": expected key=value");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        auto& b = cfg.base;
        if (key == "n") b.n = detail::parse_scalar<Index>(key, value);
        else if (key == "p") b.p = detail::parse_scalar<Index>(key, value);
        else if (key == "sigma_noise") b.sigma_noise = detail::parse_scalar<double>(key, value);
        else if (key == "runs") b.runs = detail::parse_scalar<Index>(key, value);
        else if (key == "r_values") b.r_values = detail::parse_list<Index>(key, value);
        else if (key == "alpha") b.alpha = detail::parse_scalar<double>(key, value);
        else if (key == "seed") b.rng.seed = detail::parse_scalar<std::uint64_t>(key, value);
        else if (key == "stream") b.rng.stream = detail::parse_scalar<std::uint64_t>(key, value);
        else if (key == "threads") b.threads = detail::parse_scalar<unsigned>(key, value);
        else if (key == "beta_grid") b.beta_grid = detail::parse_list<double>(key, value);
        else if (key == "k_values") b.k_values = detail::parse_list<Index>(key, value);
        else if (key == "scenarios") cfg.scenarios = detail::parse_list<int>(key, value);
        else if (key == "mu_values") cfg.mu_values = detail::parse_list<double>(key, value);
        else if (key == "calibration_replicates") cfg.calibration_replicates = detail::parse_scalar<Index>(key, value);
        else if (key == "validation_replicates") cfg.validation_replicates = detail::parse_scalar<Index>(key, value);
        else if (key == "allow_small_replicates") cfg.allow_small = detail::parse_bool(key, value);
        else throw ParseError("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
    for (int s : cfg.scenarios)
        if (s != 1 && s != 2) throw ParseError("config: scenarios must be 1 and/or 2");
    if (!(cfg.base.alpha > 0.0 && cfg.base.alpha < 1.0)) throw ParseError("config: alpha must lie in (0, 1)");
    if (cfg.base.runs < 100) throw ParseError("config: runs must be at least 100");
    return cfg;
}

// key=value echo for output provenance. The thread count is left out on
// purpose: outputs must not depend on it.
inline std::vector<std::string> describe(const PowerStudyConfig& cfg) {
    const auto& b = cfg.base;
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", b.alpha);
    const std::string alpha = buf;
    std::snprintf(buf, sizeof buf, "%.17g", b.sigma_noise);
    return {
        "n=" + std::to_string(b.n),
        "p=" + std::to_string(b.p),
        "sigma_noise=" + std::string(buf),
        "runs=" + std::to_string(b.runs),
        "r_values=" + detail::join_integers(b.r_values),
        "alpha=" + alpha,
        "seed=" + std::to_string(b.rng.seed),
        "stream=" + std::to_string(b.rng.stream),
        "beta_grid=" + detail::join_numbers(b.beta_grid),
        "k_values=" + detail::join_integers(b.k_values),
        "scenarios=" + detail::join_integers(cfg.scenarios),
        "mu_values=" + detail::join_numbers(cfg.mu_values),
        "calibration_replicates=" + std::to_string(cfg.calibration_replicates),
        "validation_replicates=" + std::to_string(cfg.validation_replicates),
        "allow_small_replicates=" + std::string(cfg.allow_small ? "true" : "false"),
    };
}

// "0.2" -> "02", "0.4" -> "04": suffix used in scenario-2 file names.
inline std::string mu_file_tag(double mu) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", mu);
    std::string s;
    for (const char* c = buf; *c; ++c)
        if (*c != '.') s += *c;
    return s;
}

} // namespace lasso_gate
