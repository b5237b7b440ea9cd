#pragma once

// Central finite-difference oracle used by the layer and loss tests. The
// numeric side only ever calls the forward path, so it stays independent
// of the analytic backward implementations it checks.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "protofed/rng.hpp"
#include "protofed/tensor.hpp"

namespace gradcheck {

inline double central_diff(double* slot, const std::function<double()>& loss,
                           double h = 1e-5) {
  const double orig = *slot;
  *slot = orig + h;
  const double up = loss();
  *slot = orig - h;
  const double down = loss();
  *slot = orig;
  return (up - down) / (2.0 * h);
}

inline double rel_error(double analytic, double numeric) {
  const double scale = std::max({1.0, std::fabs(analytic), std::fabs(numeric)});
  return std::fabs(analytic - numeric) / scale;
}

struct Report {
  double max_rel_error = 0.0;
  std::string worst;  // which buffer/index was worst
  std::size_t checked = 0;
};

/// Compares an analytic gradient buffer against finite differences of
/// `loss` w.r.t. the matching value buffer.
inline void check_buffer(std::vector<double>& values,
                         const std::vector<double>& analytic,
                         const std::function<double()>& loss,
                         const std::string& name, Report& report,
                         double h = 1e-5) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double numeric = central_diff(&values[i], loss, h);
    const double err = rel_error(analytic[i], numeric);
    ++report.checked;
    if (err > report.max_rel_error) {
      report.max_rel_error = err;
      report.worst = name + "[" + std::to_string(i) + "]";
    }
  }
}

/// Fills a tensor with uniform values in [lo, hi].
inline void randomize(protofed::Tensor& t, protofed::Rng& rng, double lo = -1.0,
                      double hi = 1.0) {
  for (double& v : t.data) v = rng.uniform(lo, hi);
}

/// Random projection vector so the scalar test loss sum(r * y) exercises
/// every output coordinate with distinct weights.
inline std::vector<double> projection(std::size_t n, protofed::Rng& rng) {
  std::vector<double> r(n);
  for (double& v : r) v = rng.uniform(-1.0, 1.0);
  return r;
}

inline double dot(const std::vector<double>& r, const protofed::Tensor& y) {
  double s = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) s += r[i] * y.data[i];
  return s;
}

}  // namespace gradcheck
