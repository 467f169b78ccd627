#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "data_model.hpp"

namespace lasso_gate {

// Stable 64-bit digest (FNV-1a) of the sample size, the dimension and the
// covariance eigenvalues d^2 quantized at 1e-6. Tables calibrated for one
// correlation structure are only reused on an exact digest match.
inline std::uint64_t fingerprint(const SpectralFactor& factor, Index n) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    auto mix = [&h](std::int64_t v) {
        auto u = static_cast<std::uint64_t>(v);
        for (int b = 0; b < 8; ++b) {
            h ^= (u >> (8 * b)) & 0xffu;
            h *= 0x100000001b3ull;
        }
    };
    mix(static_cast<std::int64_t>(n));
    mix(static_cast<std::int64_t>(factor.p()));

    std::vector<double> eig(factor.d.data(), factor.d.data() + factor.d.size());
    for (double& v : eig) v *= v;
    std::sort(eig.begin(), eig.end());
    for (double v : eig) mix(std::llround(v * 1e6));
    return h;
}

} // namespace lasso_gate
