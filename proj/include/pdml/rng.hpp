#pragma once

#include <cstdint>
#include <random>

#include "pdml/types.hpp"

namespace pdml {

// All randomness goes through explicitly passed generators of this type.
using Rng = std::mt19937_64;

// SplitMix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Seed for stream `index` of `master`. Distinct (master, index) pairs give
// unrelated seeds, so stream m does not depend on how many other streams exist
// or which worker runs it.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) noexcept {
    return splitmix64(splitmix64(master) ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

inline Rng make_stream(std::uint64_t master, std::uint64_t index) {
    return Rng(derive_seed(master, index));
}

// Independent child stream drawn from a parent generator.
inline Rng fork(Rng& parent) { return Rng(splitmix64(parent())); }

inline void fill_standard_normal(Rng& rng, Eigen::Ref<Vector> out) {
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Index i = 0; i < out.size(); ++i) out[i] = normal(rng);
}

inline Vector standard_normal(Rng& rng, Index n) {
    Vector v(n);
    fill_standard_normal(rng, v);
    return v;
}

}  // namespace pdml
