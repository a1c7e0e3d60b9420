#pragma once

#include <span>
#include <vector>

namespace cloak {

/// Least-squares slope of log(y) against log(x).
double loglog_slope(std::span<const double> x, std::span<const double> y);

/// Observed convergence orders log(e_k/e_{k+1}) / log(h_k/h_{k+1}).
std::vector<double> observed_orders(std::span<const double> h, std::span<const double> err);

/// Pairwise (cascade) summation; the association order depends only on the
/// length, so results are reproducible.
double pairwise_sum(std::span<const double> v);

}  // namespace cloak
