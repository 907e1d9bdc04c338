#ifndef OCHAIN_STATS_HPP
#define OCHAIN_STATS_HPP

#include <cmath>
#include <cstdint>
#include <vector>

#include "error.hpp"

namespace ochain {

struct Estimate {
  double mean = 0.0, se = 0.0;
};

// Welford; merge() makes partial accumulators combinable in any grouping.
class Accumulator {
 public:
  void add(double x) {
    ++n_;
    const double d = x - mean_;
    mean_ += d / static_cast<double>(n_);
    m2_ += d * (x - mean_);
  }
  void merge(const Accumulator& o) {
    if (o.n_ == 0) return;
    const double n = static_cast<double>(n_ + o.n_);
    const double d = o.mean_ - mean_;
    mean_ += d * static_cast<double>(o.n_) / n;
    m2_ += o.m2_ + d * d * static_cast<double>(n_) * static_cast<double>(o.n_) / n;
    n_ += o.n_;
  }
  std::uint64_t count() const { return n_; }
  double mean() const { return mean_; }
  double variance() const { return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0; }
  double stderr_() const { return n_ > 1 ? std::sqrt(variance() / static_cast<double>(n_)) : 0.0; }
  Estimate estimate() const { return {mean(), stderr_()}; }

 private:
  std::uint64_t n_ = 0;
  double mean_ = 0.0, m2_ = 0.0;
};

inline Estimate estimate_of(const std::vector<double>& x) {
  if (x.size() < 2) throw domain_error("need at least two samples for a standard error");
  Accumulator a;
  for (double v : x) a.add(v);
  return a.estimate();
}

// |a - b| in units of the combined standard error
inline double z_score(const Estimate& a, const Estimate& b) {
  const double s = std::hypot(a.se, b.se);
  return s > 0.0 ? std::abs(a.mean - b.mean) / s : (a.mean == b.mean ? 0.0 : INFINITY);
}

// Least-squares slope of y on x.
inline double fit_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw domain_error("fit_slope needs two equal-length series");
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i] / n;
    my += y[i] / n;
  }
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxy / sxx;
}

}  // namespace ochain

#endif
