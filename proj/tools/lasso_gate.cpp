#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "lasso_gate/cli.hpp"

int main(int argc, char** argv) {
    using namespace lasso_gate;

    CLI::App app{"Global significance test for p > n linear models based on the LASSO non-zero count"};
    app.set_version_flag("--version", std::string(version));
    app.require_subcommand(1);

    CliConfig cfg;
    std::string data, table, config, out;
    Index replicates = 0;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--seed", cfg.seed, "RNG seed");
        sub->add_option("--threads", cfg.threads, "worker threads (0 = all cores)");
    };

    auto* calibrate = app.add_subcommand("calibrate", "Monte Carlo calibration of lambda_r for a dataset");
    calibrate->add_option("--data", data, "dataset CSV (first column y)")->required();
    calibrate->add_option("--r", cfg.r, "r values")->delimiter(',')->required();
    calibrate->add_option("--alpha", cfg.alpha, "significance level")->check(CLI::Range(0.0, 1.0));
    calibrate->add_option("--replicates", replicates, "Monte Carlo replicates (default 10000)");
    calibrate->add_option("--validation-replicates", cfg.validation_replicates, "size validation replicates");
    calibrate->add_flag("--allow-small-replicates", cfg.allow_small, "permit fewer than 10000 replicates");
    calibrate->add_option("--out", out, "output directory");
    add_common(calibrate);

    auto* test = app.add_subcommand("test", "Run the global test on a dataset");
    test->add_option("--data", data, "dataset CSV (first column y)")->required();
    test->add_option("--r", cfg.r, "r value")->required();
    test->add_option("--table", table, "calibration table CSV to reuse");
    test->add_option("--alpha", cfg.alpha, "significance level")->check(CLI::Range(0.0, 1.0));
    test->add_option("--replicates", replicates, "calibration replicates when no table is given (default 10000)");
    test->add_option("--validation-replicates", cfg.validation_replicates, "size validation replicates");
    test->add_flag("--allow-small-replicates", cfg.allow_small, "permit fewer than 10000 replicates");
    test->add_option("--out", out, "directory to append test_results.csv to");
    add_common(test);

    auto* validate = app.add_subcommand("validate", "Check the size of a calibration table on fresh null data");
    validate->add_option("--table", table, "calibration table CSV")->required();
    validate->add_option("--data", data, "dataset CSV the table was calibrated for")->required();
    validate->add_option("--replicates", replicates, "validation replicates (default 2000)");
    validate->add_option("--out", out, "output directory for validation.csv");
    add_common(validate);

    auto* power = app.add_subcommand("power", "Run the power study from a key=value config file");
    power->add_option("--config", config, "power study config")->required();
    power->add_option("--out", out, "output directory");
    power->add_option("--threads", cfg.threads, "worker threads (overrides config)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : exit_code::input;
    }

    cfg.command = app.get_subcommands().front()->get_name();
    if (!data.empty()) cfg.dataset_path = data;
    if (!table.empty()) cfg.table_path = table;
    if (!config.empty()) cfg.config_path = config;
    if (!out.empty()) cfg.output_dir = out;
    if (replicates > 0) cfg.replicates = replicates;
    return run_command(cfg, std::cout, std::cerr);
}
