#pragma once

// Per-marker simple linear regression t-tests and the two multiplicity
// corrections used as comparison methods.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "data_model.hpp"
#include "error.hpp"

namespace lasso_gate {

namespace detail {

// Modified Lentz evaluation of the continued fraction for I_x(a, b).
inline double beta_continued_fraction(double a, double b, double x) {
    constexpr int max_iter = 10000;
    constexpr double eps = 1e-16;
    constexpr double tiny = 1e-300;

    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < tiny) d = tiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= max_iter; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < tiny) d = tiny;
        c = 1.0 + aa / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < eps) return h;
    }
    throw NoConvergenceError("incomplete beta continued fraction did not converge");
}

} // namespace detail

// Regularized incomplete beta function I_x(a, b), a, b > 0, x in [0, 1].
inline double incomplete_beta(double a, double b, double x) {
    if (!(a > 0.0) || !(b > 0.0)) throw InputError("incomplete_beta: a and b must be positive");
    if (!(x >= 0.0 && x <= 1.0)) throw InputError("incomplete_beta: x must lie in [0, 1]");
    if (x == 0.0) return 0.0;
    if (x == 1.0) return 1.0;
    const double log_front =
        std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(log_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * detail::beta_continued_fraction(a, b, x) / a;
    return 1.0 - front * detail::beta_continued_fraction(b, a, 1.0 - x) / b;
}

// Two-sided tail P(|T| >= |t|) for Student's t with df degrees of freedom.
inline double student_t_two_sided(double t, double df) {
    if (!(df > 0.0)) throw InputError("degrees of freedom must be positive");
    if (std::isinf(t)) return 0.0;
    return incomplete_beta(0.5 * df, 0.5, df / (df + t * t));
}

inline double student_t_cdf(double t, double df) {
    const double tail = 0.5 * student_t_two_sided(t, df);
    return t >= 0.0 ? 1.0 - tail : tail;
}

struct MarginalTestResult {
    VectorXd t_stats;
    VectorXd p_values;
    Index df = 0;
};

// Regress y on each x_j separately (with intercept) and test the slope.
inline MarginalTestResult marginal_t_tests(const Dataset& data) {
    const Index n = data.n();
    if (n < 4) throw InputError("marginal t-tests need at least 4 samples");
    MarginalTestResult out;
    out.df = n - 2;
    out.t_stats.resize(data.p());
    out.p_values.resize(data.p());

    const VectorXd yc = data.y.array() - data.y.mean();
    const double syy = yc.squaredNorm();
    for (Index j = 0; j < data.p(); ++j) {
        const VectorXd xc = data.x.col(j).array() - data.x.col(j).mean();
        const double sxx = xc.squaredNorm();
        const double sxy = xc.dot(yc);
        const double slope = sxy / sxx;
        const double rss = std::max(syy - slope * sxy, 0.0);
        if (!(sxx > 0.0) || rss <= 1e-14 * syy) throw DegenerateFitError(static_cast<std::size_t>(j));
        const double se = std::sqrt(rss / static_cast<double>(out.df) / sxx);
        out.t_stats[j] = slope / se;
        out.p_values[j] = student_t_two_sided(out.t_stats[j], static_cast<double>(out.df));
    }
    return out;
}

inline bool bonferroni_global(const VectorXd& p_values, double alpha) {
    if (p_values.size() == 0) return false;
    return p_values.minCoeff() <= alpha / static_cast<double>(p_values.size());
}

// Global decision from Benjamini-Hochberg: reject when the step-up
// procedure makes at least one discovery.
inline bool bh_global(const VectorXd& p_values, double alpha) {
    std::vector<double> sorted(p_values.data(), p_values.data() + p_values.size());
    std::sort(sorted.begin(), sorted.end());
    const double m = static_cast<double>(sorted.size());
    for (std::size_t i = 0; i < sorted.size(); ++i)
        if (sorted[i] <= static_cast<double>(i + 1) / m * alpha) return true;
    return false;
}

} // namespace lasso_gate
