#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "esnp/error.hpp"

namespace esnp {

enum class Domain : std::uint8_t {
  Torus2Pi = 0,             // [0, 2pi)^2, periodic, pseudo-spectral
  UnitSquareDirichlet = 1,  // [0, 1]^2 nodes including the boundary
};

inline std::string to_string(Domain d) {
  return d == Domain::Torus2Pi ? "torus" : "square";
}

namespace detail {
inline bool has_small_prime_factors(int n) {
  for (int p : {2, 3, 5, 7})
    while (n % p == 0) n /= p;
  return n == 1;
}
}  // namespace detail

/// Uniform tensor grid. Torus points sit at x_i = 2 pi i / nx; square
/// points at x_i = i / (nx - 1) and include both boundary lines.
class Grid {
public:
  Grid(int nx, int ny, Domain domain) : nx_(nx), ny_(ny), domain_(domain) {
    if (nx < 8 || ny < 8 || nx % 2 != 0 || ny % 2 != 0)
      throw ArgumentError("grid sizes must be even and >= 8, got " + std::to_string(nx) +
                          "x" + std::to_string(ny));
    if (domain == Domain::Torus2Pi) {
      if (!detail::has_small_prime_factors(nx) || !detail::has_small_prime_factors(ny))
        throw ArgumentError("torus grid sizes must factor into primes {2,3,5,7}");
      dx_ = 2.0 * std::numbers::pi / nx;
      dy_ = 2.0 * std::numbers::pi / ny;
    } else {
      if (nx != ny) throw ArgumentError("unit-square grids must be square (nx == ny)");
      dx_ = 1.0 / (nx - 1);
      dy_ = dx_;
    }
  }

  int nx() const noexcept { return nx_; }
  int ny() const noexcept { return ny_; }
  Domain domain() const noexcept { return domain_; }
  bool is_torus() const noexcept { return domain_ == Domain::Torus2Pi; }
  double dx() const noexcept { return dx_; }
  double dy() const noexcept { return dy_; }
  double spacing() const noexcept { return dx_; }
  std::size_t size() const noexcept { return std::size_t(nx_) * std::size_t(ny_); }
  std::size_t index(int i, int j) const noexcept { return std::size_t(j) * nx_ + i; }
  double x(int i) const noexcept { return i * dx_; }
  double y(int j) const noexcept { return j * dy_; }

  double area() const noexcept {
    return is_torus() ? 4.0 * std::numbers::pi * std::numbers::pi : 1.0;
  }

  /// Quadrature weight of node (i, j): equal weights on the torus,
  /// tensor trapezoid on the square.
  double weight(int i, int j) const noexcept {
    if (is_torus()) return dx_ * dy_;
    double wx = (i == 0 || i == nx_ - 1) ? 0.5 : 1.0;
    double wy = (j == 0 || j == ny_ - 1) ? 0.5 : 1.0;
    return wx * wy * dx_ * dy_;
  }

  bool on_boundary(int i, int j) const noexcept {
    return !is_torus() && (i == 0 || j == 0 || i == nx_ - 1 || j == ny_ - 1);
  }

  bool operator==(const Grid& o) const noexcept {
    return nx_ == o.nx_ && ny_ == o.ny_ && domain_ == o.domain_;
  }

private:
  int nx_;
  int ny_;
  Domain domain_;
  double dx_ = 0;
  double dy_ = 0;
};

/// Real grid function, row-major with x fastest.
class ScalarField {
public:
  explicit ScalarField(const Grid& grid, double value = 0.0)
      : grid_(grid), values_(grid.size(), value) {}
  ScalarField(const Grid& grid, std::vector<double> values)
      : grid_(grid), values_(std::move(values)) {
    if (values_.size() != grid_.size()) throw ArgumentError("field size does not match grid");
  }

  template <class F>
  static ScalarField sample(const Grid& grid, F&& fn) {
    ScalarField f(grid);
    for (int j = 0; j < grid.ny(); ++j)
      for (int i = 0; i < grid.nx(); ++i) f(i, j) = fn(grid.x(i), grid.y(j));
    return f;
  }

  const Grid& grid() const noexcept { return grid_; }
  std::size_t size() const noexcept { return values_.size(); }
  double& operator()(int i, int j) noexcept { return values_[grid_.index(i, j)]; }
  double operator()(int i, int j) const noexcept { return values_[grid_.index(i, j)]; }
  double& operator[](std::size_t k) noexcept { return values_[k]; }
  double operator[](std::size_t k) const noexcept { return values_[k]; }
  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  std::vector<double>& raw() noexcept { return values_; }
  const std::vector<double>& raw() const noexcept { return values_; }

  bool all_finite() const noexcept {
    for (double v : values_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  ScalarField& operator+=(const ScalarField& o) {
    check(o);
    for (std::size_t k = 0; k < values_.size(); ++k) values_[k] += o.values_[k];
    return *this;
  }
  ScalarField& operator-=(const ScalarField& o) {
    check(o);
    for (std::size_t k = 0; k < values_.size(); ++k) values_[k] -= o.values_[k];
    return *this;
  }
  ScalarField& operator*=(double a) noexcept {
    for (double& v : values_) v *= a;
    return *this;
  }
  ScalarField& operator+=(double a) noexcept {
    for (double& v : values_) v += a;
    return *this;
  }
  /// this += a * o
  ScalarField& axpy(double a, const ScalarField& o) {
    check(o);
    for (std::size_t k = 0; k < values_.size(); ++k) values_[k] += a * o.values_[k];
    return *this;
  }

  friend ScalarField operator+(ScalarField a, const ScalarField& b) { return a += b; }
  friend ScalarField operator-(ScalarField a, const ScalarField& b) { return a -= b; }
  friend ScalarField operator*(double s, ScalarField a) { return a *= s; }
  friend ScalarField operator*(ScalarField a, double s) { return a *= s; }
  friend ScalarField operator-(ScalarField a) { return a *= -1.0; }

  bool operator==(const ScalarField& o) const noexcept {
    return grid_ == o.grid_ && values_ == o.values_;
  }

private:
  void check(const ScalarField& o) const {
    if (!(grid_ == o.grid_)) throw DomainMismatchError("fields live on different grids");
  }

  Grid grid_;
  std::vector<double> values_;
};

/// Pointwise product.
inline ScalarField operator*(const ScalarField& a, const ScalarField& b) {
  if (!(a.grid() == b.grid())) throw DomainMismatchError("fields live on different grids");
  ScalarField out(a.grid());
  for (std::size_t k = 0; k < a.size(); ++k) out[k] = a[k] * b[k];
  return out;
}

struct VectorField {
  ScalarField x;
  ScalarField y;

  explicit VectorField(const Grid& grid) : x(grid), y(grid) {}
  VectorField(ScalarField x_component, ScalarField y_component)
      : x(std::move(x_component)), y(std::move(y_component)) {
    if (!(x.grid() == y.grid()))
      throw DomainMismatchError("vector components live on different grids");
  }

  template <class F>
  static VectorField sample(const Grid& grid, F&& fn) {
    VectorField v(grid);
    for (int j = 0; j < grid.ny(); ++j)
      for (int i = 0; i < grid.nx(); ++i) {
        auto [a, b] = fn(grid.x(i), grid.y(j));
        v.x(i, j) = a;
        v.y(i, j) = b;
      }
    return v;
  }

  const Grid& grid() const noexcept { return x.grid(); }
  bool all_finite() const noexcept { return x.all_finite() && y.all_finite(); }

  VectorField& operator+=(const VectorField& o) {
    x += o.x;
    y += o.y;
    return *this;
  }
  VectorField& operator-=(const VectorField& o) {
    x -= o.x;
    y -= o.y;
    return *this;
  }
  VectorField& operator*=(double a) noexcept {
    x *= a;
    y *= a;
    return *this;
  }
  VectorField& axpy(double a, const VectorField& o) {
    x.axpy(a, o.x);
    y.axpy(a, o.y);
    return *this;
  }
  friend VectorField operator+(VectorField a, const VectorField& b) { return a += b; }
  friend VectorField operator-(VectorField a, const VectorField& b) { return a -= b; }
  friend VectorField operator*(double s, VectorField a) { return a *= s; }

  bool operator==(const VectorField& o) const noexcept { return x == o.x && y == o.y; }
};

inline void require_same_grid(const Grid& a, const Grid& b) {
  if (!(a == b)) throw DomainMismatchError("fields live on different grids");
}

inline void require_torus(const Grid& g, const char* op) {
  if (!g.is_torus())
    throw DomainMismatchError(std::string(op) + " requires a Torus2Pi grid");
}

inline void require_square(const Grid& g, const char* op) {
  if (g.is_torus())
    throw DomainMismatchError(std::string(op) + " requires a UnitSquareDirichlet grid");
}

}  // namespace esnp
