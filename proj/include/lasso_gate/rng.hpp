#pragma once

#include <cstdint>
#include <random>

namespace lasso_gate {

// Reproducible random source: a (seed, stream) pair names one deviate
// sequence. Parallel work derives streams from the work item index, never
// from the worker, so results do not depend on the thread count.
struct RngSpec {
    std::uint64_t seed = 0;
    std::uint64_t stream = 0;

    RngSpec substream(std::uint64_t offset) const { return {seed, stream + offset}; }

    friend bool operator==(const RngSpec&, const RngSpec&) = default;
};

using Engine = std::mt19937_64;

inline Engine make_engine(const RngSpec& spec) {
    const auto lo = [](std::uint64_t v) { return static_cast<std::uint32_t>(v & 0xffffffffu); };
    const auto hi = [](std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); };
    std::seed_seq seq{lo(spec.seed), hi(spec.seed), lo(spec.stream), hi(spec.stream),
                      0x6c617373u /* domain tag */};
    return Engine(seq);
}

// Fill [first, last) with iid standard normal deviates.
template <class It>
void fill_standard_normal(It first, It last, Engine& engine) {
    std::normal_distribution<double> normal(0.0, 1.0);
    for (; first != last; ++first) *first = normal(engine);
}

} // namespace lasso_gate
