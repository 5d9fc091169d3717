#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "esnp/initial_data.hpp"
#include "esnp/observables.hpp"
#include "esnp/picard.hpp"

using namespace esnp;
namespace {
constexpr double pi = std::numbers::pi;

double rel_l2(const ScalarField& a, const ScalarField& b) {
  ScalarField d = a;
  d -= b;
  return fields::l2_norm(d) / std::max(fields::l2_norm(b), 1e-300);
}

SystemState torus_state(int n, std::vector<SpeciesParams> params, std::vector<double> means,
                        double eps, double uamp, std::uint64_t seed) {
  InitialDataConfig cfg;
  cfg.params = std::move(params);
  cfg.means = std::move(means);
  cfg.epsilon = eps;
  cfg.velocity_amplitude = uamp;
  cfg.seed = seed;
  return make_initial_data(InitialKind::Neutral, Grid(n, n, Domain::Torus2Pi), cfg);
}
}  // namespace

TEST(ChargeDensity, Examples) {
  Grid g(16, 16, Domain::Torus2Pi);
  auto c = ScalarField::sample(g, [](double x, double) { return 1 + std::cos(x); });
  std::vector<SpeciesParams> pm{{1, 1}, {1, -1}};
  EXPECT_EQ(fields::l2_norm(charge_density({c, c}, pm)), 0.0);
  EXPECT_TRUE(charge_density({c}, {{1, 1}}) == c);
  auto rho = charge_density({ScalarField(g, 1), ScalarField(g, 1), ScalarField(g, 0.5)},
                            {{1, 1}, {1, -1}, {1, 2}});
  for (double v : rho.values()) EXPECT_DOUBLE_EQ(v, 1.0);
}

TEST(IonicFlux, Examples) {
  Grid g(32, 32, Domain::Torus2Pi);
  SpeciesParams p{0.7, 1};
  ScalarField kappa(g, 1.3);
  EXPECT_LT(fields::l2_norm(ionic_flux_divergence(kappa, ScalarField(g, 2.0), p)), 1e-13);
  auto phi = ScalarField::sample(g, [](double x, double) { return std::cos(x); });
  auto expect = ScalarField::sample(g, [](double x, double) { return -0.7 * 1.3 * std::cos(x); });
  EXPECT_LT(rel_l2(ionic_flux_divergence(kappa, phi, p), expect), 1e-13);
  auto c = ScalarField::sample(g, [](double x, double y) { return 2 + std::sin(x) * std::cos(2 * y); });
  ScalarField heat = fields::laplacian(c);
  heat *= 0.7;
  EXPECT_LT(rel_l2(ionic_flux_divergence(c, ScalarField(g), p), heat), 1e-13);
}

TEST(IonicFlux, SquareBlockingFluxIntegratesToZero) {
  Grid g(24, 24, Domain::UnitSquareDirichlet);
  auto c = ScalarField::sample(g, [](double x, double y) { return 1 + x * y + std::cos(3 * x); });
  auto phi = ScalarField::sample(g, [](double x, double y) { return std::sin(2 * x + y); });
  auto div = ionic_flux_divergence(c, phi, {1.0, 2.0, BoundaryKind::Blocking});
  EXPECT_LT(std::abs(fields::integral(div)), 1e-12);
}

TEST(NavierStokesRhs, Examples) {
  Grid g(32, 32, Domain::Torus2Pi);
  auto f = presets::taylor_green(g, 0.3);
  auto out = navier_stokes_explicit_rhs(VectorField(g), ScalarField(g), ScalarField(g), f);
  VectorField d = out;
  d -= f;
  EXPECT_LT(fields::l2_norm(d), 1e-14);

  auto rho = ScalarField::sample(g, [](double x, double) { return std::cos(x); });
  auto phi = poisson::solve_poisson_periodic(rho);
  auto elec = navier_stokes_explicit_rhs(VectorField(g), rho, phi, VectorField(g));
  EXPECT_LT(fields::l2_norm(elec), 1e-10);

  // u.grad u = -(1/2)(sin 2x, sin 2y) = grad((cos 2x + cos 2y)/4) for Taylor-Green
  auto u = presets::taylor_green(g, 1.0);
  auto adv_x = fields::advect(u, u.x);
  auto hand = ScalarField::sample(g, [](double x, double) { return -0.5 * std::sin(2 * x); });
  EXPECT_LT(rel_l2(adv_x, hand), 1e-13);
  auto conv = navier_stokes_explicit_rhs(u, ScalarField(g), ScalarField(g), VectorField(g));
  EXPECT_LT(fields::l2_norm(conv), 1e-12);
}

TEST(Step, ZeroStateIsFixedPoint) {
  Grid g(16, 16, Domain::Torus2Pi);
  SystemState s(g);
  s.params = {{1, 1}, {1, -1}};
  s.c = {ScalarField(g), ScalarField(g)};
  s.noise = make_noise(g, std::vector<double>(8, 0.0));
  auto next = step(s, 0.01);
  EXPECT_EQ(fields::l2_norm(next.u), 0.0);
  EXPECT_EQ(fields::l2_norm(next.c[0]), 0.0);
  EXPECT_DOUBLE_EQ(next.t, 0.01);
}

TEST(Step, UnchargedModeDecaysByImplicitMultiplier) {
  Grid g(16, 16, Domain::Torus2Pi);
  SystemState s(g);
  s.params = {{0.6, 0}};
  s.c = {ScalarField::sample(g, [](double x, double y) { return 2 + std::cos(2 * x + y); })};
  refresh_potential(s);
  const double dt = 0.01, factor = 1 / (1 + 0.6 * 5 * dt);
  for (int n = 0; n < 5; ++n) s = step(s, dt);
  auto expect = ScalarField::sample(g, [&](double x, double y) {
    return 2 + std::pow(factor, 5) * std::cos(2 * x + y);
  });
  EXPECT_LT(rel_l2(s.c[0], expect), 1e-13);
}

TEST(Step, CflViolationAdvisesStep) {
  Grid g(16, 16, Domain::Torus2Pi);
  SystemState s(g);
  s.u = presets::taylor_green(g, 4.0);
  try {
    step(s, 0.1);
    FAIL();
  } catch (const StepRejectedError& e) {
    EXPECT_NEAR(e.advised_dt(), 0.25 * g.spacing() / 4.0, 1e-12);
  }
  EXPECT_THROW(step(s, -1.0), ArgumentError);
}

TEST(Step, NonFiniteStateRaisesBlowUp) {
  Grid g(16, 16, Domain::Torus2Pi);
  SystemState s(g);
  s.u.x(3, 3) = std::nan("");
  EXPECT_THROW(step(s, 0.01), BlowUpError);
}

TEST(Step, OrnsteinUhlenbeckVariance) {
  Grid g(16, 16, Domain::Torus2Pi);
  SystemState base(g);
  base.noise = make_noise(g, {0.05});
  base.options.nonlinear = false;
  const double T = 0.5, dt = 0.005, amp = 0.05;
  const double k2 = base.noise.basis->eigenvalues[0];
  const auto& g1 = base.noise.mode(0);
  const int paths = 1000;
  std::vector<double> x(paths);
  for (int p = 0; p < paths; ++p) {
    SystemState s = base;
    s.rng = RngStream::derive(12345, p);
    for (int n = 0; n < int(T / dt + 0.5); ++n) s = step(s, dt);
    x[p] = fields::inner(s.u, g1) / fields::inner(g1, g1);
  }
  double m = 0, v = 0;
  for (double xi : x) m += xi / paths;
  for (double xi : x) v += (xi - m) * (xi - m) / (paths - 1);
  double oracle = amp * amp / (2 * k2) * (1 - std::exp(-2 * k2 * T));
  double se = oracle * std::sqrt(2.0 / (paths - 1));
  EXPECT_NEAR(v, oracle, 3 * se);
}

TEST(Step, ConservesMeansAndDivergence) {
  auto s = torus_state(32, {{1, 1}, {0.5, -1}, {0.8, 2}}, {1, 1.5, 0.25}, 0.3, 0.5, 7);
  s.noise = make_noise(s.grid(), std::vector<double>(8, 0.5));
  std::vector<double> m0;
  for (auto& c : s.c) m0.push_back(fields::mean(c));
  for (int n = 0; n < 500; ++n) {
    s = step(s, 2e-3);
    ASSERT_LT(fields::l2_norm(fields::divergence(s.u)), 1e-10 * (1 + fields::h1_norm(s.u)));
  }
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(fields::mean(s.c[i]), m0[i], 1e-12 * m0[i]);
}

TEST(Step, SameSeedIsBitwiseReproducible) {
  auto a = torus_state(16, {{1, 1}, {1, -1}}, {1, 1}, 0.2, 0.3, 3);
  a.noise = make_noise(a.grid(), std::vector<double>(8, 0.4));
  auto b = a;
  for (int n = 0; n < 50; ++n) {
    a = step(a, 0.01);
    b = step(b, 0.01);
  }
  EXPECT_TRUE(a.u.x == b.u.x && a.u.y == b.u.y && a.c[0] == b.c[0] && a.c[1] == b.c[1]);
  EXPECT_TRUE(a.rng == b.rng);
}

TEST(Step, EnergyNonIncreasingWithoutForcing) {
  auto s = torus_state(32, {{1, 1}, {1, -1}}, {1, 1}, 0.4, 1.0, 5);
  double e = obs::kinetic_energy(s) + obs::potential_energy(s);
  const double dt = 2e-3;
  for (int n = 0; n < 200; ++n) {
    s = step(s, dt);
    double e1 = obs::kinetic_energy(s) + obs::potential_energy(s);
    EXPECT_LE(e1, e + dt * dt * (1 + e));
    e = e1;
  }
}

TEST(StepBounded, SteadyDataIsStationary) {
  Grid g(16, 16, Domain::UnitSquareDirichlet);
  InitialDataConfig cfg;
  cfg.params = {{1, 1, BoundaryKind::Dirichlet, 0.4}, {0.5, -1, BoundaryKind::Blocking}, {1, 2, BoundaryKind::Blocking}};
  cfg.means = {0, 0.6, 0.3};
  cfg.epsilon = 0;
  cfg.potential_gamma = 0.2;
  auto s = make_initial_data(InitialKind::SteadyPlusPerturbation, g, cfg);
  auto s0 = s;
  for (int n = 0; n < 100; ++n) s = step_bounded(s, 0.01);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_LT(rel_l2(s.c[i], s0.c[i]), 1e-12);
  EXPECT_LT(fields::l2_norm(s.u), 1e-12);
}

TEST(StepBounded, BlockingMeanConservedOverManySteps) {
  Grid g(16, 16, Domain::UnitSquareDirichlet);
  InitialDataConfig cfg;
  cfg.params = {{1, 1, BoundaryKind::Dirichlet, 0.5}, {1, -1, BoundaryKind::Blocking}};
  cfg.epsilon = 0.3;
  cfg.velocity_amplitude = 0.3;
  cfg.seed = 4;
  auto s = make_initial_data(InitialKind::SteadyPlusPerturbation, g, cfg);
  s.noise = make_noise(g, std::vector<double>(8, 0.3));
  const double m0 = fields::mean(s.c[1]);
  for (int n = 0; n < 10000; ++n) s = step_bounded(s, 2e-3);
  EXPECT_NEAR(fields::mean(s.c[1]), m0, 1e-12 * m0);
  EXPECT_LT(fields::l2_norm(stokes::discrete_divergence(s.u)), 1e-10 * (1 + fields::h1_norm(s.u)));
}

TEST(StepBounded, DirichletDecayMatchesDiscreteEigenvalue) {
  Grid g(24, 24, Domain::UnitSquareDirichlet);
  InitialDataConfig cfg;
  cfg.params = {{0.5, 0, BoundaryKind::Dirichlet, 1.0}};
  cfg.epsilon = 0.5;
  cfg.shape = PerturbationShape::LowestMode;
  auto s = make_initial_data(InitialKind::SteadyPlusPerturbation, g, cfg);
  const double dt = 1e-3, h = g.dx();
  const double lam = 2 * (4 / (h * h)) * std::pow(std::sin(pi * h / 2), 2);
  ObservableSeries dev("dev");
  for (int n = 0; n <= 200; ++n) {
    dev.push(s.t, obs::lp_decay_series(std::span(&s, 1), 2.0, {1.0})[0].value);
    s = step_bounded(s, dt);
  }
  double expected = std::log(1 + 0.5 * lam * dt) / dt;  // amplitude rate of the scheme
  EXPECT_NEAR(obs::fit_decay_rate(dev).rate, expected, 1e-8 * expected);
  EXPECT_NEAR(expected, 0.5 * 2 * pi * pi, 0.02 * pi * pi);
}

TEST(StepBounded, RejectsTorus) {
  SystemState s(Grid(16, 16, Domain::Torus2Pi));
  EXPECT_THROW(step_bounded(s, 0.01), DomainMismatchError);
}

TEST(Positivity, HalvingOrErrorNeverSilentClamp) {
  Grid g(16, 16, Domain::Torus2Pi);
  SystemState s(g);
  s.params = {{1e-3, 0}};
  s.c = {ScalarField::sample(g, [](double x, double) { return std::max(0.0, std::cos(x)) * 2; })};
  s.u = presets::single_mode(g, 0, 1, 1.0);
  s.u = VectorField{ScalarField(g, 1.0), ScalarField(g)};
  refresh_potential(s);
  bool threw = false;
  try {
    for (int n = 0; n < 50; ++n) s = step(s, 0.09);
  } catch (const BlowUpError&) {
    threw = true;
  }
  if (!threw) EXPECT_GE(s.min_concentration, -1e-8 * 2);
  EXPECT_FALSE(s.clamped);
}

TEST(Positivity, ClampFlagIsRecorded) {
  Grid g(16, 16, Domain::Torus2Pi);
  SystemState s(g);
  s.params = {{1e-3, 0}};
  s.c = {ScalarField::sample(g, [](double x, double) { return std::max(0.0, std::cos(x)); })};
  s.u = VectorField{ScalarField(g, 1.0), ScalarField(g)};
  s.options.clamp_negative = true;
  refresh_potential(s);
  for (int n = 0; n < 20; ++n) s = step(s, 0.09);
  EXPECT_TRUE(s.clamped);
  EXPECT_GE(s.min_concentration, 0.0);
}

TEST(InitialData, Examples) {
  auto a = torus_state(16, {{1, 1}, {1, -1}, {1, 2}}, {1, 1.4, 0.2}, 0.2, 0.3, 11);
  auto b = torus_state(16, {{1, 1}, {1, -1}, {1, 2}}, {1, 1.4, 0.2}, 0.2, 0.3, 11);
  EXPECT_TRUE(a.c[0] == b.c[0] && a.c[2] == b.c[2] && a.u.x == b.u.x);
  double net = 0;
  for (std::size_t i = 0; i < 3; ++i) net += a.params[i].z * fields::mean(a.c[i]);
  EXPECT_LT(std::abs(net), 1e-14);
  for (auto& c : a.c) EXPECT_GE(*std::min_element(c.values().begin(), c.values().end()), 0.0);

  InitialDataConfig cfg;
  cfg.params = {{2.0, 0}};
  cfg.seed = 5;
  auto t = make_initial_data(InitialKind::TwoSpeciesPaper, Grid(32, 32, Domain::Torus2Pi), cfg);
  EXPECT_EQ(t.params[0].z, 1.0);
  EXPECT_EQ(t.params[1].z, -1.0);
  EXPECT_EQ(t.params[1].D, 2.0);
  EXPECT_LT(std::abs(fields::mean(charge_density(t))), 1e-14);
}

TEST(InitialData, InfeasibleNeutralityRejected) {
  InitialDataConfig cfg;
  cfg.params = {{1, 1}, {1, 2}};
  cfg.means = {1, 1};
  EXPECT_THROW(make_initial_data(InitialKind::Neutral, Grid(16, 16, Domain::Torus2Pi), cfg), ConfigError);
  cfg.params = {{1, 1, BoundaryKind::Blocking}};
  EXPECT_THROW(make_initial_data(InitialKind::Neutral, Grid(16, 16, Domain::Torus2Pi), cfg), ArgumentError);
}

TEST(Picard, ZeroDataGivesZeroIterates) {
  Grid g(16, 16, Domain::Torus2Pi);
  SystemState s(g);
  s.params = {{1, 1}, {1, -1}};
  s.c = {ScalarField(g), ScalarField(g)};
  auto r = picard_solve(s, 0.05, 0.005, 6, 0.0);
  for (double d : r.distances) EXPECT_EQ(d, 0.0);
}

TEST(Picard, ConvergesToStepTrajectory) {
  auto s = torus_state(16, {{1, 1}, {1, -1}}, {1, 1}, 0.3, 0.5, 21);
  s.noise = make_noise(s.grid(), std::vector<double>(8, 0.3));
  s.rng = RngStream(99);
  const double T0 = 0.05, dt = 0.001;
  auto r = picard_solve(s, T0, dt, 40, 1e-13);
  EXPECT_TRUE(r.converged);
  for (std::size_t m = 5; m + 1 < r.distances.size(); ++m)
    if (r.distances[m - 1] > 1e-13) EXPECT_LT(r.distances[m], 0.9 * r.distances[m - 1]);
  SystemState d = s;
  double worst = 0;
  for (std::size_t n = 1; n < r.limit.size(); ++n) {
    d = step(d, dt);
    worst = std::max(worst, std::sqrt(obs::state_distance_sq(d, r.limit[n])));
  }
  EXPECT_LT(worst, 1e-6);
}

TEST(Shadow, IdenticalStatesStayIdentical) {
  auto p = torus_state(16, {{1, 1}, {1, -1}}, {1, 1}, 0.3, 0.5, 2);
  p.noise = make_noise(p.grid(), std::vector<double>(8, 0.5));
  auto s = p;
  ShadowControl ctrl{p.noise.basis, 8, 10.0, 1.0};
  for (int n = 0; n < 50; ++n) shadow_step(p, s, 0.01, ctrl);
  EXPECT_TRUE(p.u.x == s.u.x && p.c[0] == s.c[0]);
  EXPECT_EQ(ctrl.integral, 0.0);
}

TEST(Shadow, ZeroLambdaMatchesIndependentRun) {
  auto p = torus_state(16, {{1, 1}, {1, -1}}, {1, 1}, 0.3, 0.5, 2);
  p.noise = make_noise(p.grid(), std::vector<double>(8, 0.5));
  auto s = torus_state(16, {{1, 1}, {1, -1}}, {1, 1}, 0.3, 0.5, 8);
  s.noise = p.noise;
  s.rng = p.rng;
  auto alone = s;
  ShadowControl ctrl{p.noise.basis, 8, 0.0};
  for (int n = 0; n < 30; ++n) {
    shadow_step(p, s, 0.01, ctrl);
    alone = step(alone, 0.01);
  }
  EXPECT_TRUE(s.u.x == alone.u.x && s.c[1] == alone.c[1]);
}

TEST(Shadow, ZeroBudgetFiresImmediately) {
  auto p = torus_state(16, {{1, 1}, {1, -1}}, {1, 1}, 0.3, 0.5, 2);
  p.noise = make_noise(p.grid(), std::vector<double>(8, 0.5));
  auto s = torus_state(16, {{1, 1}, {1, -1}}, {1, 1}, 0.3, 0.5, 8);
  s.noise = p.noise;
  auto alone = s;
  alone.rng = p.rng;
  ShadowControl ctrl{p.noise.basis, 8, 50.0, 0.0};
  for (int n = 0; n < 10; ++n) {
    shadow_step(p, s, 0.01, ctrl);
    alone = step(alone, 0.01);
  }
  EXPECT_TRUE(ctrl.fired);
  EXPECT_EQ(ctrl.fired_at, 0.0);
  EXPECT_TRUE(s.u.x == alone.u.x);
}

TEST(Shadow, ControlContractsLowModes) {
  auto p = torus_state(16, {{1, 1}, {1, -1}}, {1, 1}, 0.3, 0.5, 2);
  p.noise = make_noise(p.grid(), std::vector<double>(8, 0.5));
  auto s = torus_state(16, {{1, 1}, {1, -1}}, {1, 1}, 0.3, 0.5, 8);
  s.noise = p.noise;
  double d0 = obs::state_distance_sq(p, s);
  ShadowControl ctrl{std::make_shared<const ModeBasis>(torus_mode_basis(p.grid(), 16)), 16, 50.0};
  for (int n = 0; n < 200; ++n) shadow_step(p, s, 0.01, ctrl);
  EXPECT_LT(obs::state_distance_sq(p, s), 1e-3 * d0);
}
