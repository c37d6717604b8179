#pragma once

#include <cstdint>
#include <random>
#include <string>

#include "tilerun/error.hpp"
#include "tilerun/matrix.hpp"

namespace tilerun {

// int:   uniform integers in [-4, 4]; products of these stay exactly
//        representable, which is what the bitwise oracle tests rely on.
// float: uniform reals in [-1, 1).
enum class Distribution { int_uniform, float_uniform };

inline Distribution parse_distribution(const std::string& s) {
  if (s == "int") return Distribution::int_uniform;
  if (s == "float") return Distribution::float_uniform;
  throw ConfigError("unknown distribution '" + s + "' (expected int or float)");
}

template <typename T = double>
MatrixBuf<T> random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed,
                           Distribution dist = Distribution::int_uniform) {
  MatrixBuf<T> m(rows, cols);
  std::mt19937_64 rng(seed);
  if (dist == Distribution::int_uniform) {
    std::uniform_int_distribution<int> u(-4, 4);
    for (auto& v : m.data()) v = static_cast<T>(u(rng));
  } else {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (auto& v : m.data()) v = static_cast<T>(u(rng));
  }
  return m;
}

}  // namespace tilerun
