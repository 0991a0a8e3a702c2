#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

namespace acsel {

struct NelderMeadOptions {
  std::size_t max_evaluations = 20000;
  /// Stop when f_max - f_min <= ftol_rel * |f_min| + ftol_abs ...
  double ftol_rel = 1e-12;
  double ftol_abs = 1e-10;
  /// ... and every vertex is within xtol (scaled) of the best one.
  double xtol = 1e-8;
};

struct NelderMeadResult {
  std::vector<double> x;
  double value = 0.0;
  std::size_t evaluations = 0;
  std::size_t iterations = 0;
  bool converged = false;
};

/// Derivative-free simplex minimisation with dimension-adaptive coefficients
/// (Gao and Han, 2012). `f` maps std::span<const double> to double; it may
/// return +inf for unusable points.
template <class F>
NelderMeadResult nelder_mead(F&& f, std::vector<double> x0, std::span<const double> step,
                             const NelderMeadOptions& opt = {}) {
  const std::size_t dim = x0.size();
  NelderMeadResult res;
  if (dim == 0) {
    res.value = f(std::span<const double>(x0));
    res.x = std::move(x0);
    res.evaluations = 1;
    res.converged = true;
    return res;
  }
  const double nd = static_cast<double>(dim);
  const double alpha = 1.0;
  const double beta = 1.0 + 2.0 / nd;
  const double gamma = 0.75 - 1.0 / (2.0 * nd);
  const double delta = 1.0 - 1.0 / nd;

  std::vector<std::vector<double>> pts(dim + 1, x0);
  std::vector<double> vals(dim + 1);
  auto eval = [&](const std::vector<double>& x) {
    ++res.evaluations;
    const double v = f(std::span<const double>(x));
    return std::isnan(v) ? std::numeric_limits<double>::infinity() : v;
  };
  for (std::size_t i = 0; i < dim; ++i) pts[i + 1][i] += step[i];
  for (std::size_t i = 0; i <= dim; ++i) vals[i] = eval(pts[i]);

  std::vector<std::size_t> order(dim + 1);
  std::vector<double> centroid(dim), xr(dim), xe(dim), xc(dim);
  auto sort_simplex = [&] {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return vals[a] < vals[b]; });
    std::vector<std::vector<double>> p2(dim + 1);
    std::vector<double> v2(dim + 1);
    for (std::size_t i = 0; i <= dim; ++i) {
      p2[i] = std::move(pts[order[i]]);
      v2[i] = vals[order[i]];
    }
    pts = std::move(p2);
    vals = std::move(v2);
  };
  auto converged = [&] {
    const double fspread = vals[dim] - vals[0];
    if (!(fspread <= opt.ftol_rel * std::abs(vals[0]) + opt.ftol_abs)) return false;
    for (std::size_t i = 1; i <= dim; ++i)
      for (std::size_t j = 0; j < dim; ++j)
        if (std::abs(pts[i][j] - pts[0][j]) > opt.xtol * (1.0 + std::abs(pts[0][j]))) return false;
    return true;
  };

  sort_simplex();
  while (res.evaluations < opt.max_evaluations) {
    if (converged()) {
      res.converged = true;
      break;
    }
    ++res.iterations;
    std::fill(centroid.begin(), centroid.end(), 0.0);
    for (std::size_t i = 0; i < dim; ++i)
      for (std::size_t j = 0; j < dim; ++j) centroid[j] += pts[i][j];
    for (double& c : centroid) c /= nd;

    const auto& worst = pts[dim];
    for (std::size_t j = 0; j < dim; ++j) xr[j] = centroid[j] + alpha * (centroid[j] - worst[j]);
    const double fr = eval(xr);

    if (fr < vals[0]) {
      for (std::size_t j = 0; j < dim; ++j) xe[j] = centroid[j] + beta * (xr[j] - centroid[j]);
      const double fe = eval(xe);
      if (fe < fr) {
        pts[dim] = xe;
        vals[dim] = fe;
      } else {
        pts[dim] = xr;
        vals[dim] = fr;
      }
    } else if (fr < vals[dim - 1]) {
      pts[dim] = xr;
      vals[dim] = fr;
    } else {
      bool shrink = false;
      if (fr < vals[dim]) {
        for (std::size_t j = 0; j < dim; ++j) xc[j] = centroid[j] + gamma * (xr[j] - centroid[j]);
        const double fc = eval(xc);
        if (fc <= fr) {
          pts[dim] = xc;
          vals[dim] = fc;
        } else {
          shrink = true;
        }
      } else {
        for (std::size_t j = 0; j < dim; ++j) xc[j] = centroid[j] - gamma * (xr[j] - centroid[j]);
        const double fc = eval(xc);
        if (fc < vals[dim]) {
          pts[dim] = xc;
          vals[dim] = fc;
        } else {
          shrink = true;
        }
      }
      if (shrink) {
        for (std::size_t i = 1; i <= dim; ++i) {
          for (std::size_t j = 0; j < dim; ++j)
            pts[i][j] = pts[0][j] + delta * (pts[i][j] - pts[0][j]);
          vals[i] = eval(pts[i]);
        }
      }
    }
    sort_simplex();
  }
  if (!res.converged) res.converged = converged();
  res.x = pts[0];
  res.value = vals[0];
  return res;
}

}  // namespace acsel
