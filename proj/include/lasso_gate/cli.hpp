#pragma once

// Command implementations behind the lasso-gate executable. Argument
// parsing lives in tools/; these functions take a filled CliConfig, write
// their outputs and return the process exit code.
//
// Exit codes: 0 ok, 1 internal failure, 2 input error, 3 calibration
// validation failure, 4 fingerprint mismatch.

#include <chrono>
#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "calibration.hpp"
#include "data_model.hpp"
#include "error.hpp"
#include "global_test.hpp"
#include "power_study.hpp"
#include "version.hpp"

namespace lasso_gate {

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int failure = 1;
inline constexpr int input = 2;
inline constexpr int validation = 3;
inline constexpr int fingerprint = 4;
} // namespace exit_code

struct CliConfig {
    std::string command;
    std::optional<std::filesystem::path> dataset_path;
    std::optional<std::filesystem::path> table_path;
    std::optional<std::filesystem::path> config_path;
    double alpha = 0.05;
    std::vector<Index> r;
    std::optional<Index> replicates;   // default depends on the command
    Index validation_replicates = 2000;
    std::uint64_t seed = 0;
    unsigned threads = 0;              // 0 = all hardware threads
    std::optional<std::filesystem::path> output_dir;
    bool allow_small = false;
};

namespace detail {

inline int guarded(std::ostream& err, const std::function<int()>& body) {
    try {
        return body();
    } catch (const FingerprintMismatchError& e) {
        err << "error: " << e.what() << '\n';
        return exit_code::fingerprint;
    } catch (const ValidationFailedError& e) {
        err << "error: " << e.what() << '\n';
        return exit_code::validation;
    } catch (const InputError& e) {
        err << "error: " << e.what() << '\n';
        return exit_code::input;
    } catch (const IoError& e) {
        err << "error: " << e.what() << '\n';
        return exit_code::input;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return exit_code::failure;
    }
}

inline const std::filesystem::path& require_path(const std::optional<std::filesystem::path>& p, const char* flag) {
    if (!p) throw InputError(std::string("missing required option ") + flag);
    return *p;
}

inline std::filesystem::path output_dir(const CliConfig& cfg) {
    std::filesystem::path dir = cfg.output_dir.value_or(".");
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory '" + dir.string() + "': " + ec.message());
    return dir;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw IoError("failed writing '" + path.string() + "'");
}

inline std::string fmt(const char* format, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, format, v);
    return buf;
}

inline std::string hex(std::uint64_t v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "0x%016" PRIx64, v);
    return buf;
}

inline CalibrationTable load_table(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open calibration table '" + path.string() + "'");
    return read_calibration_csv(in);
}

inline void print_table(std::ostream& out, const CalibrationTable& table) {
    out << "r\tlambda_r\texceedance_rate\n";
    for (const auto& e : table.entries)
        out << e.r << '\t' << fmt("%.6g", e.lambda_r) << '\t' << fmt("%.4f", e.exceedance_rate) << '\n';
    out << "validation: " << (table.validated ? "passed" : "FAILED") << " (" << table.validation_replicates
        << " replicates, band alpha +/- " << fmt("%.4f", size_band(table.alpha, table.validation_replicates))
        << ")\n";
}

} // namespace detail

inline int cmd_calibrate(const CliConfig& cfg, std::ostream& out, std::ostream& err) {
    return detail::guarded(err, [&] {
        const auto& data_path = detail::require_path(cfg.dataset_path, "--data");
        if (cfg.r.empty()) throw InputError("missing required option --r");
        const Dataset raw = read_dataset_csv(data_path);
        const PreparedData prepared = prepare(raw);

        CalibrationOptions options;
        options.threads = cfg.threads;
        options.allow_small = cfg.allow_small;
        options.validation_replicates = cfg.validation_replicates;
        const CalibrationTable table = calibrate(prepared.factor, prepared.data.n(), cfg.r, cfg.alpha,
                                                 cfg.replicates.value_or(production_replicates),
                                                 {cfg.seed, 0}, options);

        const auto path = detail::output_dir(cfg) / "calibration.csv";
        std::ostringstream text;
        write_calibration_csv(text, table,
                              {"command=calibrate", "data=" + data_path.string(),
                               "r=" + detail::join_integers(cfg.r),
                               "allow_small_replicates=" + std::string(cfg.allow_small ? "true" : "false")});
        detail::write_text(path, text.str());

        out << "calibrated " << table.entries.size() << " entries for n = " << table.n << ", p = " << table.p
            << " (" << table.replicates << " replicates, fingerprint " << detail::hex(table.factor_fingerprint)
            << ")\n";
        detail::print_table(out, table);
        out << "wrote " << path.string() << '\n';
        return table.validated ? exit_code::ok : exit_code::validation;
    });
}

inline int cmd_test(const CliConfig& cfg, std::ostream& out, std::ostream& err) {
    return detail::guarded(err, [&] {
        const auto& data_path = detail::require_path(cfg.dataset_path, "--data");
        if (cfg.r.size() != 1) throw InputError("test takes exactly one --r value");
        const Dataset raw = read_dataset_csv(data_path);

        std::optional<CalibrationTable> table;
        if (cfg.table_path) table = detail::load_table(*cfg.table_path);

        GlobalTestOptions options;
        options.calibration.threads = cfg.threads;
        options.calibration.allow_small = cfg.allow_small;
        options.calibration.validation_replicates = cfg.validation_replicates;
        const TestOutcome outcome =
            run_global_test(raw, cfg.r.front(), table ? table->alpha : cfg.alpha,
                            cfg.replicates.value_or(production_replicates), {cfg.seed, 0},
                            table ? &*table : nullptr, options);

        out << "U(" << outcome.r << ") = " << outcome.u_observed << " non-zero coefficients at lambda_r = "
            << detail::fmt("%.6g", outcome.lambda_r) << "; " << (outcome.reject ? "reject" : "do not reject")
            << " the global null at alpha = " << detail::fmt("%g", outcome.alpha) << '\n';
        const std::string record = format_outcome_record(outcome);
        out << record << '\n';

        if (cfg.output_dir) {
            const auto path = detail::output_dir(cfg) / "test_results.csv";
            const bool fresh = !std::filesystem::exists(path);
            std::ofstream file(path, std::ios::binary | std::ios::app);
            if (!file) throw IoError("cannot write '" + path.string() + "'");
            if (fresh)
                file << "# lasso-gate test results\n# version=" << version << "\nr,lambda_r,u_observed,reject,alpha\n";
            file << record << '\n';
        }
        return exit_code::ok;
    });
}

inline int cmd_validate(const CliConfig& cfg, std::ostream& out, std::ostream& err) {
    return detail::guarded(err, [&] {
        const auto& data_path = detail::require_path(cfg.dataset_path, "--data");
        const auto& table_path = detail::require_path(cfg.table_path, "--table");
        const CalibrationTable table = detail::load_table(table_path);
        const PreparedData prepared = prepare(read_dataset_csv(data_path));
        if (table.factor_fingerprint != prepared.fingerprint)
            throw FingerprintMismatchError("table fingerprint " + detail::hex(table.factor_fingerprint) +
                                           " does not match dataset fingerprint " +
                                           detail::hex(prepared.fingerprint));

        const Index replicates = cfg.replicates.value_or(2000);
        const auto checks = validate_size(table, prepared.factor, prepared.data.n(), replicates,
                                          {cfg.seed, validation_stream_offset}, cfg.threads);
        bool ok = true;
        std::ostringstream text;
        text << "# lasso-gate size validation\n# version=" << version << "\n# data=" << data_path.string()
             << "\n# table=" << table_path.string() << "\n# replicates=" << replicates << "\n# seed=" << cfg.seed
             << "\nr,lambda_r,observed_rate,within_band\n";
        out << "r\tlambda_r\tobserved_rate\n";
        for (const auto& c : checks) {
            ok = ok && c.within_band;
            out << c.r << '\t' << detail::fmt("%.6g", c.lambda_r) << '\t' << detail::fmt("%.4f", c.observed_rate)
                << (c.within_band ? "" : "\t(outside band)") << '\n';
            text << c.r << ',' << detail::fmt("%.17g", c.lambda_r) << ',' << detail::fmt("%.10g", c.observed_rate)
                 << ',' << (c.within_band ? "true" : "false") << '\n';
        }
        out << "band: alpha +/- " << detail::fmt("%.4f", size_band(table.alpha, replicates)) << '\n';
        if (cfg.output_dir) detail::write_text(detail::output_dir(cfg) / "validation.csv", text.str());
        return ok ? exit_code::ok : exit_code::validation;
    });
}

inline int cmd_power(const CliConfig& cfg, std::ostream& out, std::ostream& err) {
    return detail::guarded(err, [&] {
        const auto& config_path = detail::require_path(cfg.config_path, "--config");
        std::ifstream in(config_path);
        if (!in) throw IoError("cannot open config '" + config_path.string() + "'");
        PowerStudyConfig study = parse_power_config(in);
        if (cfg.threads != 0) study.base.threads = cfg.threads;
        const auto dir = detail::output_dir(cfg);
        const auto started = std::chrono::steady_clock::now();

        std::vector<std::string> provenance{"lasso-gate power study", std::string("version=") + version};
        for (auto& line : describe(study)) provenance.push_back(line);

        CalibrationOptions options;
        options.threads = study.base.threads;
        options.allow_small = study.allow_small;
        options.validation_replicates = study.validation_replicates;
        const CalibrationTable table =
            calibrate(identity_factor(study.base.p), study.base.n, study.base.r_values, study.base.alpha,
                      study.calibration_replicates, study.base.rng, options);
        {
            std::ostringstream text;
            write_calibration_csv(text, table, {"command=power", "covariance=identity"});
            detail::write_text(dir / "calibration_identity.csv", text.str());
        }
        detail::print_table(out, table);
        if (!table.validated) {
            err << "error: identity calibration failed its size validation\n";
            return exit_code::validation;
        }

        std::int64_t fits = 0;
        std::int64_t expected = 0;
        auto emit = [&](const PowerStudyResult& result, const std::string& name, const std::string& extra) {
            auto lines = provenance;
            lines.push_back(extra);
            lines.push_back("calibration_fingerprint=" + detail::hex(table.factor_fingerprint));
            detail::write_text(dir / name, power_table_csv(result.curves, lines));
            fits += result.lasso_fits;
            out << "wrote " << (dir / name).string() << '\n';
        };

        std::size_t n_r = 0;
        for (Index r : study.base.r_values)
            if (r < study.base.p) ++n_r;

        for (int scenario : study.scenarios) {
            if (scenario == 1) {
                ScenarioConfig sc = study.base;
                sc.scenario = Scenario::one_predictor;
                emit(simulate_scenario1(sc, table), "scenario1.csv", "scenario=1");
                expected += static_cast<std::int64_t>(sc.runs) * static_cast<std::int64_t>(sc.beta_grid.size()) *
                            static_cast<std::int64_t>(n_r);
            } else {
                for (double mu : study.mu_values) {
                    ScenarioConfig sc = study.base;
                    sc.scenario = Scenario::multi_predictor;
                    sc.mu = mu;
                    emit(simulate_scenario2(sc, table), "scenario2_mu" + mu_file_tag(mu) + ".csv",
                         "scenario=2 mu=" + detail::fmt("%g", mu));
                    expected += static_cast<std::int64_t>(sc.runs) *
                                static_cast<std::int64_t>(sc.k_values.size()) * static_cast<std::int64_t>(n_r);
                }
            }
        }

        const double seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        out << "lasso fits: " << fits << " (expected " << expected << ")\n";
        out << "wall clock: " << detail::fmt("%.1f", seconds) << " s\n";
        return fits == expected ? exit_code::ok : exit_code::failure;
    });
}

inline int run_command(const CliConfig& cfg, std::ostream& out, std::ostream& err) {
    if (cfg.command == "calibrate") return cmd_calibrate(cfg, out, err);
    if (cfg.command == "test") return cmd_test(cfg, out, err);
    if (cfg.command == "validate") return cmd_validate(cfg, out, err);
    if (cfg.command == "power") return cmd_power(cfg, out, err);
    err << "error: unknown command '" << cfg.command << "'\n";
    return exit_code::input;
}

} // namespace lasso_gate
