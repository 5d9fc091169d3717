#pragma once

#include <cmath>
#include <span>
#include <vector>

namespace esnp::linalg {

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

struct CgResult {
  int iterations = 0;
  double residual = 0;  // Euclidean norm of b - A x
  bool converged = false;
};

/// Conjugate gradients for a symmetric positive (semi)definite operator.
/// `apply(in, out)` writes A*in into out. `x` holds the initial guess.
/// Singular systems converge when b lies in the range of A.
template <class Apply>
CgResult conjugate_gradient(Apply&& apply, std::span<const double> b, std::vector<double>& x,
                            double abs_tol, int max_iter) {
  const std::size_t n = b.size();
  std::vector<double> r(n), p(n), ap(n);
  apply(std::span<const double>(x), std::span<double>(ap));
  for (std::size_t k = 0; k < n; ++k) r[k] = b[k] - ap[k];
  double rr = dot(r, r);
  CgResult res;
  res.residual = std::sqrt(rr);
  if (res.residual <= abs_tol) {
    res.converged = true;
    return res;
  }
  p = r;
  for (int it = 1; it <= max_iter; ++it) {
    apply(std::span<const double>(p), std::span<double>(ap));
    double pap = dot(p, ap);
    if (!(pap > 0)) {
      res.iterations = it;
      return res;
    }
    double alpha = rr / pap;
    for (std::size_t k = 0; k < n; ++k) {
      x[k] += alpha * p[k];
      r[k] -= alpha * ap[k];
    }
    double rr_new = dot(r, r);
    res.iterations = it;
    res.residual = std::sqrt(rr_new);
    if (res.residual <= abs_tol) {
      res.converged = true;
      return res;
    }
    double beta = rr_new / rr;
    rr = rr_new;
    for (std::size_t k = 0; k < n; ++k) p[k] = r[k] + beta * p[k];
  }
  return res;
}

}  // namespace esnp::linalg
