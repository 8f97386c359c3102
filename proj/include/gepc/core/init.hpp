#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>

#include "gepc/core/tensor.hpp"

namespace gepc {

using Rng = std::mt19937_64;

/// Independent seed for a named stream (splitmix64 of seed and stream).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

enum class InitScheme { uniform_fan_in, normal_fan_in };

inline const char* to_string(InitScheme s) {
    return s == InitScheme::uniform_fan_in ? "uniform_fan_in" : "normal_fan_in";
}

inline InitScheme init_scheme_from_string(const std::string& s) {
    if (s == "uniform_fan_in") return InitScheme::uniform_fan_in;
    if (s == "normal_fan_in") return InitScheme::normal_fan_in;
    throw ConfigError("unknown init scheme '" + s + "'");
}

/// Fills a weight tensor with fan-in scaled noise: U(-1/sqrt(fan_in), 1/sqrt(fan_in))
/// or N(0, 1/fan_in).
inline Tensor init_weight(Shape shape, std::size_t fan_in, InitScheme scheme, Rng& rng) {
    Tensor t(std::move(shape));
    const real bound = real{1} / std::sqrt(static_cast<real>(std::max<std::size_t>(fan_in, 1)));
    if (scheme == InitScheme::uniform_fan_in) {
        std::uniform_real_distribution<real> d(-bound, bound);
        for (auto& v : t.vec()) v = d(rng);
    } else {
        std::normal_distribution<real> d(0, bound);
        for (auto& v : t.vec()) v = d(rng);
    }
    return t;
}

}  // namespace gepc
