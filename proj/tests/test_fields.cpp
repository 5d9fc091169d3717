#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <random>

#include "esnp/field_io.hpp"
#include "esnp/fields.hpp"
#include "esnp/poisson.hpp"

using namespace esnp;
namespace {
constexpr double pi = std::numbers::pi;

Grid torus(int n = 32) { return Grid(n, n, Domain::Torus2Pi); }

ScalarField smooth_random(const Grid& g, unsigned seed, int band = 4) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> nd;
  ScalarField f(g);
  for (int kx = 0; kx <= band; ++kx)
    for (int ky = -band; ky <= band; ++ky) {
      double a = nd(gen), b = nd(gen);
      f += ScalarField::sample(g, [&](double x, double y) {
        return a * std::cos(kx * x + ky * y) + b * std::sin(kx * x + ky * y);
      });
    }
  return f;
}

double rel_l2(const ScalarField& a, const ScalarField& b) {
  ScalarField d = a;
  d -= b;
  return fields::l2_norm(d) / std::max(fields::l2_norm(b), 1e-300);
}
}  // namespace

TEST(Grid, RejectsBadSizes) {
  EXPECT_THROW(Grid(6, 6, Domain::Torus2Pi), ArgumentError);
  EXPECT_THROW(Grid(9, 8, Domain::Torus2Pi), ArgumentError);
  EXPECT_THROW(Grid(22, 22, Domain::Torus2Pi), ArgumentError);  // factor 11
  EXPECT_THROW(Grid(16, 32, Domain::UnitSquareDirichlet), ArgumentError);
  EXPECT_NO_THROW(Grid(48, 48, Domain::Torus2Pi));
}

TEST(Grid, Spacing) {
  EXPECT_DOUBLE_EQ(torus(64).spacing(), 2 * pi / 64);
  EXPECT_DOUBLE_EQ(Grid(33 + 1, 34, Domain::UnitSquareDirichlet).spacing(), 1.0 / 33);
}

TEST(Spectral, ConstantHasOnlyZeroMode) {
  auto c = forward_transform(ScalarField(torus(), 1.0));
  for (int r = 0; r < c.rows(); ++r)
    for (int col = 0; col < c.cols(); ++col) {
      double expect = (r == 0 && col == 0) ? 1.0 : 0.0;
      EXPECT_NEAR(std::abs(c.at(col, r)), expect, 1e-15);
    }
}

TEST(Spectral, CosineHasTwoConjugateCoefficients) {
  Grid g = torus();
  auto c = forward_transform(ScalarField::sample(g, [](double x, double) { return std::cos(x); }));
  EXPECT_NEAR(std::abs(c.coefficient(1, 0) - 0.5), 0, 1e-15);
  EXPECT_NEAR(std::abs(c.coefficient(-1, 0) - 0.5), 0, 1e-15);
  int nonzero = 0;
  for (int kx = -15; kx <= 15; ++kx)
    for (int ky = -15; ky <= 15; ++ky)
      if (std::abs(c.coefficient(kx, ky)) > 1e-14) ++nonzero;
  EXPECT_EQ(nonzero, 2);
}

TEST(Spectral, RoundTrip) {
  Grid g = torus(48);
  auto f = smooth_random(g, 3);
  EXPECT_LT(rel_l2(inverse_transform(forward_transform(f)), f), 1e-12);
}

TEST(Spectral, SquareGridRejected) {
  Grid g(16, 16, Domain::UnitSquareDirichlet);
  EXPECT_THROW(forward_transform(ScalarField(g)), DomainMismatchError);
}

TEST(Spectral, Parseval) {
  Grid g = torus(32);
  auto f = smooth_random(g, 5);
  double n = fields::l2_norm(f);
  EXPECT_NEAR(fields::spectral_energy(forward_transform(f)), n * n, 1e-12 * n * n);
}

TEST(Fields, NormsOfSimpleFields) {
  Grid g = torus();
  EXPECT_NEAR(fields::l2_norm(ScalarField(g, 1.0)), 2 * pi, 1e-13);
  auto c = ScalarField::sample(g, [](double x, double) { return std::cos(x); });
  EXPECT_NEAR(fields::l2_norm(c), std::sqrt(2 * pi * pi), 1e-13);
  ScalarField zero(g);
  for (double p : {1.0, 2.0, 3.0, double(INFINITY)}) EXPECT_EQ(fields::lp_norm(zero, p), 0.0);
  EXPECT_THROW(fields::lp_norm(c, 0.5), ArgumentError);
}

TEST(Fields, L4NormOfCosineMatchesClosedForm) {
  Grid g = torus(64);
  auto c = ScalarField::sample(g, [](double x, double) { return std::cos(x); });
  // int cos^4 = (3/8)(2 pi)^2
  EXPECT_NEAR(fields::lp_norm(c, 4.0), std::pow(1.5 * pi * pi, 0.25), 1e-13);
}

TEST(Fields, FractionalLaplacianExamples) {
  Grid g = torus();
  auto c = ScalarField::sample(g, [](double x, double) { return std::cos(x); });
  EXPECT_LT(rel_l2(fields::fractional_laplacian(c, 2.0), c), 1e-13);
  auto s2 = ScalarField::sample(g, [](double, double y) { return std::sin(2 * y); });
  ScalarField twice = s2;
  twice *= 2.0;
  EXPECT_LT(rel_l2(fields::fractional_laplacian(s2, 1.0), twice), 1e-13);
  auto f = smooth_random(g, 7);
  f += -fields::mean(f);
  EXPECT_LT(rel_l2(fields::fractional_laplacian(f, 0.0), f), 1e-13);
}

TEST(Fields, FractionalLaplacianNegativeNeedsMeanZero) {
  Grid g = torus();
  ScalarField f = ScalarField::sample(g, [](double x, double) { return 1.0 + std::cos(x); });
  EXPECT_THROW(fields::fractional_laplacian(f, -1.0), PreconditionError);
}

TEST(Fields, FractionalLaplacianSemigroup) {
  Grid g = torus();
  auto f = smooth_random(g, 11);
  f += -fields::mean(f);
  for (auto [s, t] : {std::pair{0.5, 1.5}, {-1.0, 2.0}, {-0.7, -0.3}}) {
    auto lhs = fields::fractional_laplacian(fields::fractional_laplacian(f, t), s);
    EXPECT_LT(rel_l2(lhs, fields::fractional_laplacian(f, s + t)), 1e-10);
  }
}

TEST(Fields, Poincare) {
  Grid g = torus();
  auto f = smooth_random(g, 13);
  f += -fields::mean(f);
  EXPECT_LE(fields::l2_norm(f), fields::l2_norm(fields::fractional_laplacian(f, 1.0)));
  auto low = ScalarField::sample(g, [](double x, double y) { return std::cos(x) + 0.3 * std::sin(y); });
  EXPECT_NEAR(fields::l2_norm(low), fields::l2_norm(fields::fractional_laplacian(low, 1.0)), 1e-12);
}

TEST(Leray, FixesDivergenceFreeAndKillsGradients) {
  Grid g = torus();
  auto v = VectorField::sample(g, [](double, double y) { return std::pair{-std::sin(y), 0.0}; });
  auto pv = fields::leray_project(v);
  EXPECT_LT(rel_l2(pv.x, v.x), 1e-14);
  EXPECT_LT(fields::l2_norm(pv.y), 1e-14);
  auto grad = fields::gradient(ScalarField::sample(g, [](double x, double) { return std::cos(x); }));
  EXPECT_LT(fields::l2_norm(fields::leray_project(grad)), 1e-14);
}

TEST(Leray, MatchesModewiseFormula) {
  Grid g = torus();
  // v = (cos y + cos(x+y), cos x); at k = (1,1) the coefficient of x-part is 1/2.
  auto v = VectorField::sample(g, [](double x, double y) {
    return std::pair{std::cos(y) + std::cos(x + y), std::cos(x)};
  });
  auto pv = fields::leray_project(v);
  auto px = forward_transform(pv.x), py = forward_transform(pv.y);
  // k = (1,1): v_hat = (1/2, 0); (I - k k^T/2) v_hat = (1/4, -1/4)
  EXPECT_NEAR(std::abs(px.coefficient(1, 1) - 0.25), 0, 1e-14);
  EXPECT_NEAR(std::abs(py.coefficient(1, 1) + 0.25), 0, 1e-14);
  // (cos y, cos x) is already transverse mode by mode
  EXPECT_NEAR(std::abs(px.coefficient(0, 1) - 0.5), 0, 1e-14);
  EXPECT_NEAR(std::abs(py.coefficient(1, 0) - 0.5), 0, 1e-14);
}

TEST(Leray, IdempotentSelfAdjointDivergenceFree) {
  Grid g = torus(32);
  VectorField v{smooth_random(g, 1), smooth_random(g, 2)};
  VectorField w{smooth_random(g, 3), smooth_random(g, 4)};
  auto pv = fields::leray_project(v);
  auto ppv = fields::leray_project(pv);
  VectorField d = ppv;
  d -= pv;
  EXPECT_LT(fields::l2_norm(d), 1e-13 * fields::l2_norm(pv));
  double a = fields::inner(pv, w), b = fields::inner(v, fields::leray_project(w));
  EXPECT_NEAR(a, b, 1e-10 * std::abs(a));
  EXPECT_LT(fields::l2_norm(fields::divergence(pv)), 1e-10 * fields::h1_norm(v));
}

TEST(Dealias, Behaviour) {
  Grid g = torus(32);
  auto low = smooth_random(g, 9, 3);
  EXPECT_LT(rel_l2(fields::dealias(low), low), 1e-14);
  auto nyq = ScalarField::sample(g, [](double x, double) { return std::cos(16 * x); });
  EXPECT_LT(fields::l2_norm(fields::dealias(nyq)), 1e-14);
}

TEST(Dealias, ProductDiffersOnlyAboveCutoff) {
  Grid g = torus(32);
  auto a = ScalarField::sample(g, [](double x, double y) { return std::cos(7 * x + 2 * y); });
  auto b = ScalarField::sample(g, [](double x, double y) { return std::sin(5 * x - 3 * y); });
  auto raw = forward_transform(a * b);
  auto cut = forward_transform(fields::dealiased_product(a, b));
  for (int r = 0; r < raw.rows(); ++r)
    for (int col = 0; col < raw.cols(); ++col) {
      bool above = raw.kx(col) > 32 / 3 || std::abs(raw.ky(r)) > 32 / 3;
      if (above)
        EXPECT_LT(std::abs(cut.at(col, r)), 1e-15);
      else
        EXPECT_NEAR(std::abs(cut.at(col, r) - raw.at(col, r)), 0.0, 1e-15);
    }
}

TEST(Calculus, TorusGradientAndAdvect) {
  Grid g = torus();
  auto c = ScalarField::sample(g, [](double x, double) { return std::cos(x); });
  auto grad = fields::gradient(c);
  auto ms = ScalarField::sample(g, [](double x, double) { return -std::sin(x); });
  EXPECT_LT(rel_l2(grad.x, ms), 1e-13);
  EXPECT_LT(fields::l2_norm(grad.y), 1e-13);
  VectorField u(g);
  u.x += 1.0;
  auto s = ScalarField::sample(g, [](double x, double) { return std::sin(x); });
  EXPECT_LT(rel_l2(fields::advect(u, s), c), 1e-13);
}

TEST(Calculus, AdvectionIsSkew) {
  Grid g = torus(32);
  VectorField u = fields::dealias(fields::leray_project(VectorField{smooth_random(g, 21, 3), smooth_random(g, 22, 3)}));
  auto f = smooth_random(g, 23, 3);
  double lhs = fields::inner(fields::advect(u, f), f);
  double scale = fields::l2_norm(fields::advect(u, f)) * fields::l2_norm(f);
  EXPECT_LT(std::abs(lhs), 1e-10 * scale);
}

TEST(Calculus, SquareDifferencesAreSecondOrder) {
  auto err = [](int n) {
    Grid g(n, n, Domain::UnitSquareDirichlet);
    auto f = ScalarField::sample(g, [](double x, double y) { return std::sin(2 * x) * std::exp(y); });
    auto ex = ScalarField::sample(g, [](double x, double y) { return 2 * std::cos(2 * x) * std::exp(y); });
    auto gx = fields::gradient(f).x;
    gx -= ex;
    return fields::lp_norm(gx, INFINITY);
  };
  double expected = std::pow(33.0 / 17.0, 2);  // h = 1/17 vs 1/33
  EXPECT_NEAR(err(18) / err(34), expected, 0.15 * expected);
}

TEST(FieldIo, RoundTrip) {
  Grid g(16, 16, Domain::UnitSquareDirichlet);
  auto f = ScalarField::sample(g, [](double x, double y) { return x - 3 * y * y; });
  auto p = std::filesystem::temp_directory_path() / "esnp_field_io_test.esnp";
  io::write_fields(p.string(), {f});
  auto back = io::read_fields(p.string()).at(0);
  EXPECT_EQ(back.grid(), g);
  EXPECT_TRUE(back == f);
  std::filesystem::remove(p);
}
