#include "cloak/numerics.hpp"

#include <cmath>

#include "cloak/errors.hpp"

namespace cloak {

double loglog_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2)
    fail(ErrorKind::InvalidArgument, "log-log fit needs >= 2 matching points");
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0))
      fail(ErrorKind::InvalidArgument, "log-log fit needs positive data");
    const double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

std::vector<double> observed_orders(std::span<const double> h, std::span<const double> err) {
  if (h.size() != err.size()) fail(ErrorKind::InvalidArgument, "size mismatch");
  std::vector<double> out;
  for (std::size_t k = 0; k + 1 < h.size(); ++k)
    out.push_back(std::log(err[k] / err[k + 1]) / std::log(h[k] / h[k + 1]));
  return out;
}

double pairwise_sum(std::span<const double> v) {
  if (v.size() <= 8) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t half = v.size() / 2;
  return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

}  // namespace cloak
