#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "error.hpp"
#include "rng.hpp"

namespace lasso_gate {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

// Response vector plus n x p marker matrix. Storage is column-major because
// every hot loop in the solver walks one marker column at a time.
struct Dataset {
    VectorXd y;
    MatrixXd x;
    std::vector<std::string> marker_names;
    bool standardized = false;

    Index n() const { return x.rows(); }
    Index p() const { return x.cols(); }
};

inline Dataset make_dataset(VectorXd y, MatrixXd x, std::vector<std::string> names = {}) {
    if (y.size() != x.rows())
        throw InputError("response has " + std::to_string(y.size()) + " rows but marker matrix has " +
                         std::to_string(x.rows()));
    if (x.rows() < 3) throw InputError("need at least 3 samples, got " + std::to_string(x.rows()));
    if (x.cols() < 1) throw InputError("need at least one marker column");
    if (!y.allFinite() || !x.allFinite()) throw InputError("dataset contains non-finite values");
    if (!names.empty() && static_cast<Index>(names.size()) != x.cols())
        throw InputError("marker name count does not match column count");
    return Dataset{std::move(y), std::move(x), std::move(names), false};
}

namespace detail {

inline constexpr double degenerate_sd = 1e-12;

// Sample mean and standard deviation with the n-1 divisor.
inline std::pair<double, double> mean_sd(const Eigen::Ref<const VectorXd>& v) {
    const double mean = v.mean();
    const double ss = (v.array() - mean).square().sum();
    return {mean, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

} // namespace detail

// Centers every marker column and the response and scales them to unit
// sample standard deviation (n-1 divisor).
inline Dataset standardize(const Dataset& raw) {
    Dataset out = raw;
    for (Index j = 0; j < out.p(); ++j) {
        const auto [mean, sd] = detail::mean_sd(out.x.col(j));
        if (!(sd >= detail::degenerate_sd)) {
            const std::string name =
                raw.marker_names.empty() ? std::string() : raw.marker_names[static_cast<std::size_t>(j)];
            throw ConstantColumnError(static_cast<std::size_t>(j), name);
        }
        out.x.col(j) = (out.x.col(j).array() - mean) / sd;
    }
    const auto [ymean, ysd] = detail::mean_sd(out.y);
    if (!(ysd >= detail::degenerate_sd)) throw DegenerateResponseError();
    out.y = (out.y.array() - ymean) / ysd;
    out.standardized = true;
    return out;
}

inline MatrixXd sample_covariance(const Dataset& data) {
    if (!data.standardized) throw InputError("sample_covariance requires a standardized dataset");
    MatrixXd sigma = MatrixXd::Zero(data.p(), data.p());
    sigma.selfadjointView<Eigen::Lower>().rankUpdate(data.x.transpose(), 1.0 / static_cast<double>(data.n() - 1));
    sigma.triangularView<Eigen::StrictlyUpper>() = sigma.transpose();
    return sigma;
}

// Sigma = O D^2 O^T with O orthogonal and D >= 0 diagonal.
struct SpectralFactor {
    MatrixXd o;
    VectorXd d;
    Index source_rank = 0;

    Index p() const { return d.size(); }

    MatrixXd reconstruct() const { return o * d.array().square().matrix().asDiagonal() * o.transpose(); }
};

inline SpectralFactor identity_factor(Index p) {
    return SpectralFactor{MatrixXd::Identity(p, p), VectorXd::Ones(p), p};
}

// Eigenvalues below zero are round-off on a rank-deficient covariance and
// are clipped; eigenvalues under a relative floor are zeroed so they do
// not count toward the rank.
inline SpectralFactor spectral_decompose(const MatrixXd& sigma, double symmetry_tol = 1e-10) {
    if (sigma.rows() != sigma.cols() || sigma.rows() == 0) throw InputError("covariance must be square and non-empty");
    const double asym = (sigma - sigma.transpose()).cwiseAbs().maxCoeff();
    if (asym > symmetry_tol)
        throw NotSymmetricError("covariance asymmetry " + std::to_string(asym) + " exceeds tolerance");

    Eigen::SelfAdjointEigenSolver<MatrixXd> solver(sigma);
    if (solver.info() != Eigen::Success) throw NoConvergenceError("eigensolver failed to converge");

    const VectorXd& eig = solver.eigenvalues();
    const double floor = 1e-12 * std::max(1.0, eig.cwiseAbs().maxCoeff()) * static_cast<double>(sigma.rows());

    SpectralFactor f;
    f.o = solver.eigenvectors();
    f.d.resize(eig.size());
    for (Index i = 0; i < eig.size(); ++i) {
        const double v = eig[i] > floor ? eig[i] : 0.0;
        f.d[i] = std::sqrt(v);
        if (v > 0.0) ++f.source_rank;
    }
    return f;
}

// Rows are O D Z_i for iid standard normal Z_i. Components with d = 0 carry
// no variance, so only the non-zero ones are drawn.
inline MatrixXd correlated_normals(const SpectralFactor& factor, Index n, Engine& engine) {
    std::vector<Index> support;
    for (Index k = 0; k < factor.d.size(); ++k)
        if (factor.d[k] > 0.0) support.push_back(k);

    const Index p = factor.p();
    if (support.empty()) return MatrixXd::Zero(n, p);

    const Index rank = static_cast<Index>(support.size());
    MatrixXd loadings(p, rank);
    for (Index c = 0; c < rank; ++c) loadings.col(c) = factor.o.col(support[c]) * factor.d[support[c]];

    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> z(n, rank);
    fill_standard_normal(z.data(), z.data() + z.size(), engine);
    if (rank == p && loadings.isIdentity(0.0)) return z;  // Z I^T = Z exactly
    return z * loadings.transpose();
}

inline MatrixXd correlated_normals(const SpectralFactor& factor, Index n, const RngSpec& rng) {
    Engine engine = make_engine(rng);
    return correlated_normals(factor, n, engine);
}

// --- CSV I/O ---------------------------------------------------------------
//
// Header row whose first column is `y`, followed by marker names; one row
// per sample; no missing values.

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

inline double parse_double(const std::string& text, std::size_t line, std::size_t column) {
    const char* begin = text.c_str();
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (text.empty() || end != begin + text.size() || !std::isfinite(v))
        throw ParseError("line " + std::to_string(line) + ", column " + std::to_string(column + 1) +
                         ": not a number: '" + text + "'");
    return v;
}

} // namespace detail

inline Dataset read_dataset_csv(std::istream& in) {
    std::string line;
    std::size_t line_no = 0;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        ++line_no;
        if (!detail::trim(line).empty()) {
            header = detail::split_csv_line(line);
            break;
        }
    }
    if (header.empty()) throw ParseError("dataset is empty");
    if (header.front() != "y") throw ParseError("first header column must be 'y', got '" + header.front() + "'");
    if (header.size() < 2) throw ParseError("dataset has no marker columns");

    const std::size_t cols = header.size();
    std::vector<double> values;
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        const auto cells = detail::split_csv_line(line);
        if (cells.size() != cols)
            throw ParseError("line " + std::to_string(line_no) + ": expected " + std::to_string(cols) +
                             " fields, got " + std::to_string(cells.size()));
        for (std::size_t c = 0; c < cols; ++c) values.push_back(detail::parse_double(cells[c], line_no, c));
        ++rows;
    }

    const Index n = static_cast<Index>(rows);
    const Index p = static_cast<Index>(cols - 1);
    VectorXd y(n);
    MatrixXd x(n, p);
    for (Index i = 0; i < n; ++i) {
        y[i] = values[static_cast<std::size_t>(i) * cols];
        for (Index j = 0; j < p; ++j) x(i, j) = values[static_cast<std::size_t>(i) * cols + 1 + static_cast<std::size_t>(j)];
    }
    return make_dataset(std::move(y), std::move(x), std::vector<std::string>(header.begin() + 1, header.end()));
}

inline Dataset read_dataset_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open dataset '" + path.string() + "'");
    return read_dataset_csv(in);
}

inline void write_dataset_csv(std::ostream& out, const Dataset& data) {
    out << "y";
    for (Index j = 0; j < data.p(); ++j) {
        out << ',';
        if (data.marker_names.empty())
            out << "m" << (j + 1);
        else
            out << data.marker_names[static_cast<std::size_t>(j)];
    }
    out << '\n';
    char buf[32];
    for (Index i = 0; i < data.n(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g", data.y[i]);
        out << buf;
        for (Index j = 0; j < data.p(); ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", data.x(i, j));
            out << ',' << buf;
        }
        out << '\n';
    }
}

} // namespace lasso_gate
