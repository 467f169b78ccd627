#pragma once

#include <Eigen/Dense>

#include <cstdint>

#include "lasso_gate/data_model.hpp"
#include "lasso_gate/rng.hpp"

namespace lasso_gate::fixtures {

inline Dataset random_dataset(Index n, Index p, std::uint64_t seed, bool standardized = true) {
    Engine engine = make_engine({seed, 7});
    VectorXd y(n);
    MatrixXd x(n, p);
    fill_standard_normal(y.data(), y.data() + n, engine);
    fill_standard_normal(x.data(), x.data() + x.size(), engine);
    Dataset d = make_dataset(std::move(y), std::move(x));
    return standardized ? standardize(d) : d;
}

inline MatrixXd equicorrelated(Index p, double rho) {
    MatrixXd s = MatrixXd::Constant(p, p, rho);
    s.diagonal().setOnes();
    return s;
}

} // namespace lasso_gate::fixtures
