#pragma once

#include <fftw3.h>

#include <algorithm>
#include <complex>
#include <cstring>
#include <map>
#include <mutex>
#include <utility>
#include <vector>

#include "esnp/grid.hpp"

namespace esnp {

using Complex = std::complex<double>;

/// Half-plane Fourier coefficients of a real torus field, normalized so
/// that f(x) = sum_k fhat_k exp(i k.x). Storage is ny rows of nx/2+1
/// entries (the FFTW r2c layout); the other half follows from
/// fhat_{-k} = conj(fhat_k).
class SpectralCoefficients {
public:
  explicit SpectralCoefficients(const Grid& grid)
      : grid_(grid), c_(std::size_t(grid.ny()) * (grid.nx() / 2 + 1)) {
    require_torus(grid, "spectral coefficients");
  }

  const Grid& grid() const noexcept { return grid_; }
  int rows() const noexcept { return grid_.ny(); }
  int cols() const noexcept { return grid_.nx() / 2 + 1; }
  std::size_t size() const noexcept { return c_.size(); }

  Complex& at(int col, int row) noexcept { return c_[std::size_t(row) * cols() + col]; }
  Complex at(int col, int row) const noexcept { return c_[std::size_t(row) * cols() + col]; }
  Complex* data() noexcept { return c_.data(); }
  const Complex* data() const noexcept { return c_.data(); }

  int kx(int col) const noexcept { return col; }
  int ky(int row) const noexcept { return row <= grid_.ny() / 2 ? row : row - grid_.ny(); }

  /// Wavenumbers seen by first derivatives: Nyquist components are zero
  /// so that odd-order multipliers keep the data Hermitian.
  double kx_deriv(int col) const noexcept { return col == grid_.nx() / 2 ? 0.0 : double(col); }
  double ky_deriv(int row) const noexcept {
    int k = ky(row);
    return (2 * std::abs(k) == grid_.ny()) ? 0.0 : double(k);
  }

  /// Number of lattice points represented by entry (col, row).
  double multiplicity(int col) const noexcept {
    return (col == 0 || 2 * col == grid_.nx()) ? 1.0 : 2.0;
  }

  /// Coefficient at an arbitrary lattice point, folding by symmetry.
  Complex coefficient(int kx, int ky) const {
    int nx = grid_.nx(), ny = grid_.ny();
    auto wrap = [](int k, int n) { return ((k % n) + n) % n; };
    int ckx = wrap(kx, nx), cky = wrap(ky, ny);
    if (ckx <= nx / 2) return at(ckx, cky);
    return std::conj(at(nx - ckx, wrap(-ky, ny)));
  }

  template <class F>
  void for_each(F&& fn) {
    for (int r = 0; r < rows(); ++r)
      for (int c = 0; c < cols(); ++c) fn(c, r, at(c, r));
  }

  SpectralCoefficients& operator*=(double a) noexcept {
    for (auto& z : c_) z *= a;
    return *this;
  }
  SpectralCoefficients& operator+=(const SpectralCoefficients& o) {
    require_same_grid(grid_, o.grid_);
    for (std::size_t k = 0; k < c_.size(); ++k) c_[k] += o.c_[k];
    return *this;
  }

private:
  Grid grid_;
  std::vector<Complex> c_;
};

namespace detail {

struct FftPlans {
  fftw_plan forward = nullptr;
  fftw_plan backward = nullptr;
};

class FftPlanCache {
public:
  static FftPlanCache& instance() {
    static FftPlanCache cache;
    return cache;
  }

  FftPlans get(int nx, int ny) {
    std::lock_guard lock(mutex_);
    auto it = plans_.find({nx, ny});
    if (it != plans_.end()) return it->second;
    // FFTW planning is not thread-safe; execution with new arrays is.
    std::vector<double> real(std::size_t(nx) * ny);
    std::vector<Complex> spec(std::size_t(ny) * (nx / 2 + 1));
    auto* cplx = reinterpret_cast<fftw_complex*>(spec.data());
    unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    FftPlans p;
    p.forward = fftw_plan_dft_r2c_2d(ny, nx, real.data(), cplx, flags);
    p.backward = fftw_plan_dft_c2r_2d(ny, nx, cplx, real.data(), flags);
    plans_.emplace(std::pair{nx, ny}, p);
    return p;
  }

  ~FftPlanCache() {
    for (auto& [key, p] : plans_) {
      fftw_destroy_plan(p.forward);
      fftw_destroy_plan(p.backward);
    }
  }

private:
  std::mutex mutex_;
  std::map<std::pair<int, int>, FftPlans> plans_;
};

}  // namespace detail

inline SpectralCoefficients forward_transform(const ScalarField& f) {
  const Grid& g = f.grid();
  require_torus(g, "spectral_transform");
  SpectralCoefficients out(g);
  auto plans = detail::FftPlanCache::instance().get(g.nx(), g.ny());
  // r2c leaves its input intact
  fftw_execute_dft_r2c(plans.forward, const_cast<double*>(f.raw().data()),
                       reinterpret_cast<fftw_complex*>(out.data()));
  out *= 1.0 / double(g.size());
  return out;
}

inline ScalarField inverse_transform(const SpectralCoefficients& c) {
  const Grid& g = c.grid();
  auto plans = detail::FftPlanCache::instance().get(g.nx(), g.ny());
  std::vector<Complex> scratch(c.data(), c.data() + c.size());
  ScalarField out(g);
  fftw_execute_dft_c2r(plans.backward, reinterpret_cast<fftw_complex*>(scratch.data()),
                       out.raw().data());
  return out;
}

}  // namespace esnp
