#pragma once

// Monte Carlo calibration of lambda_r under the global null.
//
// Each replicate simulates a null dataset with the target correlation
// structure and records its entry threshold: the largest lambda at which
// the fit has more than r non-zero coefficients. lambda_r is an upper order
// statistic of those thresholds, so that a fresh null dataset exceeds r
// non-zeros at lambda_r with probability alpha.

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "data_model.hpp"
#include "error.hpp"
#include "fingerprint.hpp"
#include "lasso_solver.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "version.hpp"

namespace lasso_gate {

inline constexpr Index production_replicates = 10000;
inline constexpr Index minimum_replicates = 100;
// Validation draws live far away from the calibration streams.
inline constexpr std::uint64_t validation_stream_offset = 1ull << 40;

struct CalibrationEntry {
    Index r = 0;
    double lambda_r = 0.0;
    double exceedance_rate = 0.0;
    Index nonmonotone = 0;  // replicates whose count dipped back to <= r
};

struct CalibrationTable {
    double alpha = 0.05;
    Index replicates = 0;
    RngSpec rng;
    Index n = 0;
    Index p = 0;
    std::uint64_t factor_fingerprint = 0;
    std::vector<CalibrationEntry> entries;
    Index validation_replicates = 0;
    bool validated = false;
    bool downgraded = false;

    const CalibrationEntry* find(Index r) const {
        for (const auto& e : entries)
            if (e.r == r) return &e;
        return nullptr;
    }

    bool usable() const { return validated; }
};

struct CalibrationOptions {
    unsigned threads = 0;
    Index validation_replicates = 2000;
    bool allow_small = false;  // permit fewer than production_replicates
    EntryScanOptions scan;
};

// ceil((1 - alpha)(M + 1)), the 1-based rank of the calibrated order statistic.
inline Index order_statistic_rank(double alpha, Index replicates) {
    const double x = (1.0 - alpha) * static_cast<double>(replicates + 1);
    return static_cast<Index>(std::ceil(x - 1e-9 * x));
}

// Three binomial standard errors around alpha.
inline double size_band(double alpha, Index replicates) {
    return 3.0 * std::sqrt(alpha * (1.0 - alpha) / static_cast<double>(replicates));
}

// y ~ N(0, I_n) independent of X, rows of X ~ N(0, O D^2 O^T); both are then
// standardized exactly as real data are.
inline Dataset simulate_null_dataset(const SpectralFactor& factor, Index n, const RngSpec& rng) {
    Engine engine = make_engine(rng);
    VectorXd y(n);
    fill_standard_normal(y.data(), y.data() + n, engine);
    MatrixXd x = correlated_normals(factor, n, engine);
    return standardize(make_dataset(std::move(y), std::move(x)));
}

// lambda_r = 0 means no grid lambda produced more than r non-zeros in
// enough replicates; the count is then read at the bottom of the data's own
// grid, the smallest lambda the scan ever looks at.
inline double effective_lambda(double lambda_r, const Dataset& data, const EntryScanOptions& scan = {}) {
    if (lambda_r > 0.0) return lambda_r;
    const double lmax = lambda_max(data);
    return lmax > 0.0 ? lmax * scan.min_ratio : 1.0;
}

struct SizeCheck {
    Index r = 0;
    double lambda_r = 0.0;
    double observed_rate = 0.0;
    bool within_band = true;
};

inline std::vector<SizeCheck> validate_size(const CalibrationTable& table, const SpectralFactor& factor, Index n,
                                            Index replicates, const RngSpec& rng, unsigned threads = 0,
                                            const EntryScanOptions& scan = {}) {
    if (replicates < 1) throw InputError("validation needs at least one replicate");
    const std::size_t m = table.entries.size();
    const Index p = factor.p();
    std::vector<unsigned char> exceed(static_cast<std::size_t>(replicates) * m, 0);

    parallel_for(static_cast<std::size_t>(replicates), threads, [&](std::size_t rep) {
        const Dataset data = simulate_null_dataset(factor, n, rng.substream(rep));
        std::vector<double> lambdas;
        std::vector<std::size_t> which;
        for (std::size_t e = 0; e < m; ++e) {
            if (table.entries[e].r >= p) continue;
            lambdas.push_back(effective_lambda(table.entries[e].lambda_r, data, scan));
            which.push_back(e);
        }
        const auto counts = nonzero_counts(data, lambdas, scan.lasso);
        for (std::size_t k = 0; k < which.size(); ++k)
            exceed[rep * m + which[k]] = counts[k] > table.entries[which[k]].r ? 1 : 0;
    });

    std::vector<SizeCheck> out(m);
    const double band = size_band(table.alpha, replicates);
    for (std::size_t e = 0; e < m; ++e) {
        Index hits = 0;
        for (Index rep = 0; rep < replicates; ++rep) hits += exceed[static_cast<std::size_t>(rep) * m + e];
        out[e].r = table.entries[e].r;
        out[e].lambda_r = table.entries[e].lambda_r;
        out[e].observed_rate = static_cast<double>(hits) / static_cast<double>(replicates);
        // Degenerate entries (lambda_r = 0) cannot reach alpha by construction.
        out[e].within_band =
            table.entries[e].lambda_r == 0.0 || std::abs(out[e].observed_rate - table.alpha) <= band;
    }
    return out;
}

inline CalibrationTable calibrate(const SpectralFactor& factor, Index n, std::vector<Index> r_values, double alpha,
                                  Index replicates, const RngSpec& rng, const CalibrationOptions& options = {}) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw InputError("alpha must lie in (0, 1)");
    if (r_values.empty()) throw InputError("no r values requested");
    for (Index r : r_values)
        if (r < 0) throw InputError("r values must be non-negative");
    if (replicates < production_replicates && !options.allow_small)
        throw InsufficientReplicatesError("calibration requires at least " + std::to_string(production_replicates) +
                                          " replicates; got " + std::to_string(replicates) +
                                          " (explicit downgrade needed for fewer)");
    if (replicates < minimum_replicates)
        throw InsufficientReplicatesError("calibration needs at least " + std::to_string(minimum_replicates) +
                                          " replicates, got " + std::to_string(replicates));
    if (options.validation_replicates < minimum_replicates)
        throw InputError("validation needs at least " + std::to_string(minimum_replicates) + " replicates");
    const Index rank = order_statistic_rank(alpha, replicates);
    if (rank > replicates)
        throw InsufficientReplicatesError("order statistic " + std::to_string(rank) + " exceeds replicate count " +
                                          std::to_string(replicates));

    std::sort(r_values.begin(), r_values.end());
    r_values.erase(std::unique(r_values.begin(), r_values.end()), r_values.end());
    const std::size_t m = r_values.size();

    std::vector<double> thresholds(static_cast<std::size_t>(replicates) * m, 0.0);
    std::vector<unsigned char> nonmonotone(static_cast<std::size_t>(replicates) * m, 0);

    parallel_for(static_cast<std::size_t>(replicates), options.threads, [&](std::size_t rep) {
        const Dataset data = simulate_null_dataset(factor, n, rng.substream(rep));
        EntryScan scan;
        try {
            scan = scan_entry_thresholds(data, r_values, options.scan);
        } catch (const NoConvergenceError& e) {
            throw NoConvergenceError("calibration replicate " + std::to_string(rep) + ": " + e.what());
        }
        for (std::size_t i = 0; i < m; ++i) {
            thresholds[rep * m + i] = scan.thresholds[i];
            nonmonotone[rep * m + i] = scan.nonmonotone[i] ? 1 : 0;
        }
    });

    CalibrationTable table;
    table.alpha = alpha;
    table.replicates = replicates;
    table.rng = rng;
    table.n = n;
    table.p = factor.p();
    table.factor_fingerprint = fingerprint(factor, n);
    table.downgraded = replicates < production_replicates;

    std::vector<double> column(static_cast<std::size_t>(replicates));
    for (std::size_t i = 0; i < m; ++i) {
        CalibrationEntry entry;
        entry.r = r_values[i];
        for (Index rep = 0; rep < replicates; ++rep) {
            column[static_cast<std::size_t>(rep)] = thresholds[static_cast<std::size_t>(rep) * m + i];
            entry.nonmonotone += nonmonotone[static_cast<std::size_t>(rep) * m + i];
        }
        auto nth = column.begin() + (rank - 1);
        std::nth_element(column.begin(), nth, column.end());
        entry.lambda_r = entry.r >= table.p ? 0.0 : *nth;
        table.entries.push_back(entry);
    }

    const auto checks = validate_size(table, factor, n, options.validation_replicates,
                                      rng.substream(validation_stream_offset), options.threads, options.scan);
    table.validation_replicates = options.validation_replicates;
    table.validated = true;
    for (std::size_t i = 0; i < m; ++i) {
        table.entries[i].exceedance_rate = checks[i].observed_rate;
        table.validated = table.validated && checks[i].within_band;
    }
    return table;
}

// --- CSV --------------------------------------------------------------------

inline void write_calibration_csv(std::ostream& out, const CalibrationTable& table,
                                  const std::vector<std::string>& provenance = {}) {
    char buf[64];
    out << "# lasso-gate calibration table\n";
    out << "# version=" << version << '\n';
    for (const auto& line : provenance) out << "# " << line << '\n';
    std::snprintf(buf, sizeof buf, "%.17g", table.alpha);
    out << "# alpha=" << buf << '\n';
    out << "# replicates=" << table.replicates << '\n';
    out << "# seed=" << table.rng.seed << '\n';
    out << "# stream=" << table.rng.stream << '\n';
    out << "# n=" << table.n << '\n';
    out << "# p=" << table.p << '\n';
    std::snprintf(buf, sizeof buf, "0x%016" PRIx64, table.factor_fingerprint);
    out << "# factor_fingerprint=" << buf << '\n';
    out << "# validation_replicates=" << table.validation_replicates << '\n';
    out << "# validated=" << (table.validated ? "true" : "false") << '\n';
    out << "# downgraded=" << (table.downgraded ? "true" : "false") << '\n';
    out << "# nonmonotone=";
    for (std::size_t i = 0; i < table.entries.size(); ++i)
        out << (i ? ";" : "") << table.entries[i].r << ':' << table.entries[i].nonmonotone;
    out << '\n';
    out << "r,lambda_r,exceedance_rate\n";
    for (const auto& e : table.entries) {
        std::snprintf(buf, sizeof buf, "%.17g", e.lambda_r);
        out << e.r << ',' << buf << ',';
        std::snprintf(buf, sizeof buf, "%.10g", e.exceedance_rate);
        out << buf << '\n';
    }
}

inline CalibrationTable read_calibration_csv(std::istream& in) {
    std::map<std::string, std::string> meta;
    std::string line;
    std::size_t line_no = 0;
    bool header_seen = false;
    CalibrationTable table;

    auto number = [](const std::string& text, const std::string& what) {
        std::size_t pos = 0;
        double v = 0;
        try {
            v = std::stod(text, &pos);
        } catch (const std::exception&) {
            pos = 0;
        }
        if (pos != text.size() || text.empty()) throw ParseError("calibration table: bad " + what + " '" + text + "'");
        return v;
    };
    auto integer = [](const std::string& text, const std::string& what) {
        std::size_t pos = 0;
        unsigned long long v = 0;
        try {
            v = std::stoull(text, &pos, 0);
        } catch (const std::exception&) {
            pos = 0;
        }
        if (pos != text.size() || text.empty()) throw ParseError("calibration table: bad " + what + " '" + text + "'");
        return v;
    };

    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = detail::trim(line);
        if (t.empty()) continue;
        if (t[0] == '#') {
            const std::string body = detail::trim(t.substr(1));
            const auto eq = body.find('=');
            if (eq != std::string::npos) meta[detail::trim(body.substr(0, eq))] = detail::trim(body.substr(eq + 1));
            continue;
        }
        if (!header_seen) {
            if (t != "r,lambda_r,exceedance_rate")
                throw ParseError("calibration table: unexpected header '" + t + "'");
            header_seen = true;
            continue;
        }
        const auto cells = detail::split_csv_line(t);
        if (cells.size() != 3)
            throw ParseError("calibration table line " + std::to_string(line_no) + ": expected 3 fields");
        CalibrationEntry e;
        e.r = static_cast<Index>(integer(cells[0], "r"));
        e.lambda_r = number(cells[1], "lambda_r");
        e.exceedance_rate = number(cells[2], "exceedance_rate");
        table.entries.push_back(e);
    }
    if (!header_seen) throw ParseError("calibration table: missing header row");

    auto require = [&](const std::string& key) -> const std::string& {
        const auto it = meta.find(key);
        if (it == meta.end()) throw ParseError("calibration table: missing '# " + key + "=' line");
        return it->second;
    };
    auto boolean = [&](const std::string& key) {
        const std::string& v = require(key);
        if (v == "true") return true;
        if (v == "false") return false;
        throw ParseError("calibration table: bad boolean for " + key);
    };
    table.alpha = number(require("alpha"), "alpha");
    table.replicates = static_cast<Index>(integer(require("replicates"), "replicates"));
    table.rng.seed = integer(require("seed"), "seed");
    table.rng.stream = meta.count("stream") ? integer(meta["stream"], "stream") : 0;
    table.n = static_cast<Index>(integer(require("n"), "n"));
    table.p = static_cast<Index>(integer(require("p"), "p"));
    table.factor_fingerprint = integer(require("factor_fingerprint"), "factor_fingerprint");
    table.validation_replicates =
        meta.count("validation_replicates") ? static_cast<Index>(integer(meta["validation_replicates"], "count")) : 0;
    table.validated = boolean("validated");
    table.downgraded = meta.count("downgraded") ? boolean("downgraded") : false;

    if (meta.count("nonmonotone")) {
        std::stringstream ss(meta["nonmonotone"]);
        std::string item;
        while (std::getline(ss, item, ';')) {
            const auto colon = item.find(':');
            if (colon == std::string::npos) continue;
            const auto r = static_cast<Index>(integer(item.substr(0, colon), "nonmonotone r"));
            for (auto& e : table.entries)
                if (e.r == r) e.nonmonotone = static_cast<Index>(integer(item.substr(colon + 1), "nonmonotone count"));
        }
    }
    return table;
}

} // namespace lasso_gate
