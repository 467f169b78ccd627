#pragma once

// L1-penalized least squares in the unscaled form
//
//     L(beta) = ||y - X beta||_2^2 + lambda * ||beta||_1
//
// Note the convention: there is no 1/(2n) factor in front of the squared
// loss, so lambda here equals 2n times the lambda of glmnet-style solvers.
// The model has no intercept; data are expected to be centered.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "data_model.hpp"
#include "error.hpp"

namespace lasso_gate {

struct LassoOptions {
    double tol_cd = 1e-8;              // max |coefficient change| over a full sweep
    std::int64_t max_sweeps = 100000;
    double tol_kkt = 1e-6;             // absolute, on the gradient 2 x_j^T r
    bool record_objective = false;     // keep the per-sweep objective trace
};

struct LassoFit {
    VectorXd beta;
    double lambda = 0.0;
    double objective = 0.0;
    Index u = 0;                       // exact count of non-zero coefficients
    std::int64_t iterations = 0;       // coordinate-descent sweeps
    bool converged = false;
    double kkt_violation = 0.0;
    std::vector<double> objective_trace;
};

inline double soft_threshold(double z, double gamma) {
    if (z > gamma) return z - gamma;
    if (z < -gamma) return z + gamma;
    return 0.0;
}

inline double lasso_objective(const Dataset& data, const VectorXd& beta, double lambda) {
    return (data.y - data.x * beta).squaredNorm() + lambda * beta.lpNorm<1>();
}

inline Index count_nonzero(const VectorXd& beta) {
    return static_cast<Index>(std::count_if(beta.data(), beta.data() + beta.size(), [](double b) { return b != 0.0; }));
}

// Largest violation of the subgradient optimality conditions:
//   beta_j != 0:  |2 x_j^T r - lambda sign(beta_j)|
//   beta_j == 0:  max(|2 x_j^T r| - lambda, 0)
inline double kkt_violation(const Dataset& data, const VectorXd& beta, double lambda) {
    const VectorXd grad = 2.0 * (data.x.transpose() * (data.y - data.x * beta));
    double worst = 0.0;
    for (Index j = 0; j < beta.size(); ++j) {
        const double v = beta[j] != 0.0 ? std::abs(grad[j] - lambda * (beta[j] > 0 ? 1.0 : -1.0))
                                        : std::max(std::abs(grad[j]) - lambda, 0.0);
        worst = std::max(worst, v);
    }
    return worst;
}

// Smallest lambda whose solution is identically zero.
inline double lambda_max(const Dataset& data) {
    // Same dot-product kernel as the solver, so a fit at exactly this value
    // sees |x_j^T y| <= lambda / 2 without round-off disagreement.
    double best = 0.0;
    for (Index j = 0; j < data.p(); ++j) best = std::max(best, std::abs(data.x.col(j).dot(data.y)));
    return 2.0 * best;
}

// Cyclic coordinate descent holding its coefficients and residual between
// calls, so a descending sequence of lambdas is solved with warm starts.
// Holds a reference to the dataset, which must outlive the path.
class LassoPath {
public:
    explicit LassoPath(const Dataset& data, LassoOptions options = {})
        : data_(data), options_(options), beta_(VectorXd::Zero(data.p())), residual_(data.y),
          col_sq_norm_(data.x.colwise().squaredNorm().transpose()) {}

    const VectorXd& beta() const { return beta_; }

    void reset() { set_beta(VectorXd::Zero(data_.p())); }

    void set_beta(const VectorXd& beta) {
        if (beta.size() != data_.p()) throw InputError("warm start has wrong length");
        beta_ = beta;
        residual_ = data_.y - data_.x * beta_;
    }

    LassoFit solve(double lambda) {
        if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InputError("lambda must be finite and non-negative");
        if (lambda == 0.0 && data_.p() >= data_.n()) throw UnderdeterminedError();

        LassoFit fit;
        fit.lambda = lambda;
        std::int64_t sweeps = 0;

        // From a cold start, walk down from lambda_max by halving: far below
        // it, plain coordinate descent from zero activates nearly every
        // column and then crawls.
        if (beta_.isZero(0.0)) {
            const double lmax = lambda_max(data_);
            for (double l = 0.5 * lmax; l > 2.0 * lambda; l *= 0.5) descend(l, sweeps, nullptr);
        }
        fit.kkt_violation = descend(lambda, sweeps, options_.record_objective ? &fit.objective_trace : nullptr);

        fit.beta = beta_;
        fit.u = count_nonzero(beta_);
        fit.objective = residual_.squaredNorm() + lambda * beta_.lpNorm<1>();
        fit.iterations = sweeps;
        fit.converged = true;
        return fit;
    }

private:
    static constexpr int polish_interval = 25;

    // Runs coordinate descent at one lambda from the current iterate until
    // a full sweep moves no coefficient by tol_cd or more and the KKT
    // certificate holds. Returns the final KKT violation.
    double descend(double lambda, std::int64_t& sweeps, std::vector<double>* trace) {
        const double half = 0.5 * lambda;
        double tol = options_.tol_cd;

        // Start from an exact residual so drift does not accumulate along a path.
        residual_ = data_.y - data_.x * beta_;
        active_.clear();
        for (Index j = 0; j < data_.p(); ++j)
            if (beta_[j] != 0.0) active_.push_back(j);

        auto record = [&] {
            if (trace) trace->push_back(residual_.squaredNorm() + lambda * beta_.lpNorm<1>());
        };
        auto out_of_sweeps = [&] {
            return NoConvergenceError("coordinate descent did not converge within " +
                                      std::to_string(options_.max_sweeps) + " sweeps at lambda " +
                                      std::to_string(lambda));
        };

        for (;;) {
            if (sweeps >= options_.max_sweeps) throw out_of_sweeps();
            const double full_change = full_sweep(half);
            ++sweeps;
            record();
            if (full_change < tol) {
                const double kkt = kkt_violation(data_, beta_, lambda);
                if (kkt <= options_.tol_kkt) return kkt;
                // Coefficients barely move but the certificate is not met:
                // typical of an ill-conditioned active set. Try the exact
                // sign-fixed solve, otherwise tighten and keep sweeping.
                if (!newton_polish(half)) {
                    tol *= 0.1;
                    if (tol < 1e-18) throw out_of_sweeps();
                }
                continue;
            }
            int since_polish = 0;
            for (;;) {
                if (sweeps >= options_.max_sweeps) throw out_of_sweeps();
                const double change = active_sweep(half);
                ++sweeps;
                record();
                if (change < tol) break;
                if (++since_polish == polish_interval) {
                    since_polish = 0;
                    if (newton_polish(half)) break;
                }
            }
        }
    }

    // Exact step on the current active set A with signs s.
    //
    // While X_A is rank deficient, a null direction v (X_A v = 0, oriented
    // so s^T v <= 0) leaves the residual unchanged and does not raise the
    // penalty; moving along it until a coefficient reaches zero shrinks A.
    // Once X_A has full column rank, the objective on the orthant face is a
    // convex quadratic minimized by
    //     X_A^T X_A b = X_A^T y - (lambda/2) s.
    // If b keeps every sign it replaces the iterate; otherwise the iterate
    // moves toward b until the first coefficient reaches zero.
    // Returns true only when the full Newton step was taken.
    bool newton_polish(double half) {
        std::vector<Index> active = active_;
        VectorXd candidate = beta_;
        bool exact = false;
        bool moved = false;

        while (!active.empty()) {
            const Index k = static_cast<Index>(active.size());
            MatrixXd xa(data_.n(), k);
            VectorXd signs(k);
            VectorXd current(k);
            for (Index c = 0; c < k; ++c) {
                const Index j = active[static_cast<std::size_t>(c)];
                xa.col(c) = data_.x.col(j);
                current[c] = candidate[j];
                signs[c] = current[c] > 0 ? 1.0 : -1.0;
            }

            Eigen::FullPivLU<MatrixXd> lu(xa);
            VectorXd direction;
            bool null_step = false;
            if (lu.rank() < k) {
                direction = lu.kernel().col(0);
                if (signs.dot(direction) > 0.0) direction = -direction;
                null_step = true;
            } else {
                Eigen::LLT<MatrixXd> llt(xa.transpose() * xa);
                if (llt.info() != Eigen::Success) break;
                const VectorXd b = llt.solve(xa.transpose() * data_.y - half * signs);
                if (!b.allFinite()) break;
                direction = b - current;
            }

            // Largest step in (0, 1] (unbounded for null steps) keeping signs.
            double step = null_step ? std::numeric_limits<double>::infinity() : 1.0;
            Index blocking = -1;
            for (Index c = 0; c < k; ++c) {
                if (direction[c] * signs[c] >= 0.0) continue;
                const double t = -current[c] / direction[c];
                if (t < step) {
                    step = t;
                    blocking = c;
                }
            }
            if (blocking < 0 && null_step) break;  // v = 0 up to round-off
            if (!(step >= 0.0)) break;

            for (Index c = 0; c < k; ++c) {
                const Index j = active[static_cast<std::size_t>(c)];
                double v = c == blocking ? 0.0 : current[c] + step * direction[c];
                if (v * signs[c] < 0.0) v = 0.0;
                candidate[j] = v;
            }
            moved = true;
            std::vector<Index> kept;
            for (Index j : active)
                if (candidate[j] != 0.0) kept.push_back(j);
            active.swap(kept);
            if (!null_step) {
                exact = blocking < 0;
                break;
            }
        }
        if (!moved) return false;

        VectorXd residual = data_.y - data_.x * candidate;
        const double before = residual_.squaredNorm() + 2.0 * half * beta_.lpNorm<1>();
        const double after = residual.squaredNorm() + 2.0 * half * candidate.lpNorm<1>();
        if (!(after <= before * (1.0 + 1e-14))) return false;
        beta_ = std::move(candidate);
        residual_ = std::move(residual);
        active_ = std::move(active);
        return exact;
    }

    double update(Index j, double half) {
        const double norm = col_sq_norm_[j];
        if (norm == 0.0) return 0.0;
        const double old = beta_[j];
        const double z = data_.x.col(j).dot(residual_) + norm * old;
        const double next = soft_threshold(z, half) / norm;
        if (next == old) return 0.0;
        residual_.noalias() -= (next - old) * data_.x.col(j);
        beta_[j] = next;
        return std::abs(next - old);
    }

    double full_sweep(double half) {
        double max_change = 0.0;
        active_.clear();
        for (Index j = 0; j < data_.p(); ++j) {
            max_change = std::max(max_change, update(j, half));
            if (beta_[j] != 0.0) active_.push_back(j);
        }
        return max_change;
    }

    double active_sweep(double half) {
        double max_change = 0.0;
        for (Index j : active_) max_change = std::max(max_change, update(j, half));
        return max_change;
    }

    const Dataset& data_;
    LassoOptions options_;
    VectorXd beta_;
    VectorXd residual_;
    VectorXd col_sq_norm_;
    std::vector<Index> active_;
};

inline LassoFit fit_lasso(const Dataset& data, double lambda, const std::optional<VectorXd>& warm_start = std::nullopt,
                          const LassoOptions& options = {}) {
    LassoPath path(data, options);
    if (warm_start) path.set_beta(*warm_start);
    return path.solve(lambda);
}

// Descending, log-spaced: lambda_max down to lambda_max * min_ratio.
inline std::vector<double> lambda_grid(double lmax, std::size_t points = 200, double min_ratio = 1e-3) {
    std::vector<double> grid(points);
    if (points == 1) {
        grid[0] = lmax;
        return grid;
    }
    const double step = std::log(min_ratio) / static_cast<double>(points - 1);
    for (std::size_t k = 0; k < points; ++k) grid[k] = lmax * std::exp(step * static_cast<double>(k));
    grid[0] = lmax;
    return grid;
}

// Largest grid value whose fit has more than r non-zero coefficients, or 0
// if none does. The grid must be descending; fits are warm-started along it.
inline double entry_threshold(const Dataset& data, Index r, std::span<const double> grid,
                              const LassoOptions& options = {}) {
    if (r >= data.p()) return 0.0;
    LassoPath path(data, options);
    for (double lambda : grid)
        if (path.solve(lambda).u > r) return lambda;
    return 0.0;
}

// Non-zero counts at each requested lambda, solved along a warm path in
// descending order. Results are returned in the caller's order.
inline std::vector<Index> nonzero_counts(const Dataset& data, std::span<const double> lambdas,
                                         const LassoOptions& options = {}, std::vector<LassoFit>* fits = nullptr) {
    std::vector<std::size_t> order(lambdas.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return lambdas[a] > lambdas[b]; });

    std::vector<Index> counts(lambdas.size(), 0);
    if (fits) fits->assign(lambdas.size(), LassoFit{});
    LassoPath path(data, options);
    for (std::size_t i : order) {
        LassoFit fit = path.solve(lambdas[i]);
        counts[i] = fit.u;
        if (fits) (*fits)[i] = std::move(fit);
    }
    return counts;
}

struct EntryScanOptions {
    std::size_t grid_points = 200;
    double min_ratio = 1e-3;
    // Bisect inside the bracketing grid interval so the threshold is not
    // biased low by up to one grid step.
    bool refine = true;
    double refine_rel_tol = 1e-5;
    LassoOptions lasso;
};

struct EntryScan {
    std::vector<double> thresholds;     // per requested r
    std::vector<bool> nonmonotone;      // u fell back to <= r below the threshold
    double lambda_max = 0.0;
    std::int64_t fits = 0;
};

// Entry thresholds for several r at once from one descending path. The
// path stops as soon as every attainable r has been exceeded, so only the
// scanned stretch is checked for non-monotone counts.
//
// For r = 0 the refined threshold is lambda_max itself: the first
// coefficient enters exactly there.
inline EntryScan scan_entry_thresholds(const Dataset& data, std::span<const Index> r_values,
                                       const EntryScanOptions& options = {}) {
    const std::size_t m = r_values.size();
    EntryScan out;
    out.thresholds.assign(m, 0.0);
    out.nonmonotone.assign(m, false);
    out.lambda_max = lambda_max(data);
    if (out.lambda_max == 0.0) return out;

    const std::vector<double> grid = lambda_grid(out.lambda_max, options.grid_points, options.min_ratio);
    std::vector<std::ptrdiff_t> found(m, -1);
    auto pending = [&] {
        for (std::size_t i = 0; i < m; ++i)
            if (r_values[i] < data.p() && found[i] < 0) return true;
        return false;
    };

    LassoPath path(data, options.lasso);
    std::vector<VectorXd> betas;
    for (std::size_t k = 0; k < grid.size() && pending(); ++k) {
        const LassoFit fit = path.solve(grid[k]);
        ++out.fits;
        betas.push_back(fit.beta);
        for (std::size_t i = 0; i < m; ++i) {
            if (r_values[i] >= data.p()) continue;
            if (found[i] < 0) {
                if (fit.u > r_values[i]) found[i] = static_cast<std::ptrdiff_t>(k);
            } else if (fit.u <= r_values[i]) {
                out.nonmonotone[i] = true;
            }
        }
    }

    for (std::size_t i = 0; i < m; ++i) {
        if (found[i] < 0) continue;
        const auto k = static_cast<std::size_t>(found[i]);
        if (!options.refine || k == 0) {
            out.thresholds[i] = grid[k];
            continue;
        }
        if (r_values[i] == 0) {
            out.thresholds[i] = out.lambda_max;
            continue;
        }
        double lo = grid[k];
        double hi = grid[k - 1];
        path.set_beta(betas[k]);
        while (hi - lo > options.refine_rel_tol * hi) {
            const double mid = 0.5 * (lo + hi);
            const LassoFit fit = path.solve(mid);
            ++out.fits;
            if (fit.u > r_values[i])
                lo = mid;
            else
                hi = mid;
        }
        out.thresholds[i] = lo;
    }
    return out;
}

} // namespace lasso_gate
