#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>

#include "cloak/errors.hpp"
#include "cloak/tensor_core.hpp"

namespace testutil {

inline double rel_err(const cloak::Mat& a, const cloak::Mat& b) {
  return (a - b).norm() / std::max(b.norm(), 1e-300);
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

inline cloak::Mat random_spd(std::mt19937_64& rng, int dim) {
  std::normal_distribution<double> n01;
  cloak::Mat a(dim, dim);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) a(i, j) = n01(rng);
  return a * a.transpose() + 0.5 * cloak::Mat::Identity(dim, dim);
}

/// Uniform point in the shell r_lo < |x| < r_hi, away from the polar axis.
inline cloak::Vec random_point(std::mt19937_64& rng, double r_lo, double r_hi) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double r = r_lo + (r_hi - r_lo) * u(rng);
  const double th = 0.1 + (std::acos(-1.0) - 0.2) * u(rng);
  const double ph = 2.0 * std::acos(-1.0) * u(rng);
  return cloak::point_from_spherical(r, th, ph);
}

template <class F>
cloak::ErrorKind kind_of(F&& f) {
  try {
    f();
  } catch (const cloak::Error& e) {
    return e.kind();
  }
  return static_cast<cloak::ErrorKind>(-1);
}

}  // namespace testutil
