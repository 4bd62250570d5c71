#include <cmath>
#include <numbers>
#include <sstream>

#include "doctest.h"

#include "chaosflow/oracles.hpp"
#include "chaosflow/quadrature.hpp"
#include "test_util.hpp"

using namespace chaosflow;
using testutil::desk_theta0;
using testutil::rel;

namespace {

const VelocityBasis& desk_basis() {
  static const VelocityBasis b = build_divergence_free_basis(CovarianceSpec{}, 1);
  return b;
}

PropagatorConfig config(int n_t, int n_w, int N, double dt) {
  PropagatorConfig c;
  c.nu = 1.0;
  c.n_t = n_t;
  c.n_w = n_w;
  c.N = N;
  c.dt = dt;
  c.output_times = {0.5, 1.0};
  return c;
}

}  // namespace

TEST_CASE("quadrature rules integrate polynomials exactly") {
  const QuadratureRule g = gauss_legendre(5, 0.0, 2.0);
  for (int p = 0; p <= 9; ++p) {
    double s = 0.0;
    for (std::size_t j = 0; j < g.nodes.size(); ++j) s += g.weights[j] * std::pow(g.nodes[j], p);
    CHECK(rel(s, std::pow(2.0, p + 1) / (p + 1)) <= 1e-14);
  }
  const QuadratureRule h = gauss_hermite_normal(6);
  double m4 = 0.0;
  for (std::size_t j = 0; j < h.nodes.size(); ++j) m4 += h.weights[j] * std::pow(h.nodes[j], 4);
  CHECK(m4 == doctest::Approx(3.0).epsilon(1e-13));

  const double t = 0.8;
  for (int N = 0; N <= 3; ++N) {
    double vol = 0.0;
    for (const auto& n : simplex_rule(N, t, 4)) vol += n.weight;
    CHECK(rel(vol, std::pow(t, N) / std::tgamma(N + 1.0)) <= 1e-14);
  }
  double m = 0.0;
  for (const auto& n : simplex_rule(2, t, 3)) {
    CHECK(n.s[0] <= n.s[1]);
    m += n.weight * n.s[0] * n.s[1];
  }
  CHECK(rel(m, std::pow(t, 4) / 8.0) <= 1e-14);
}

TEST_CASE("level zero is the deterministic heat flow") {
  const Generator gen(1.0, covariance_at_zero(desk_basis()).matrix);
  const SpectralField theta0 = desk_theta0();
  const double v = iterated_integral_level_norm(theta0, desk_basis(), gen, 0, 0.7, 8);
  CHECK(rel(v, norm_squared(heat_semigroup_apply(theta0, 0.7, gen.diffusion()))) <= 1e-14);
}

TEST_CASE("single-mode first level matches a closed form") {
  // theta0 = cos(x_1) against one mode s e cos(z.x) with z = (0, 1): the
  // product splits into sin((1,1).x) and sin((1,-1).x), so
  //   ||T_{t-u} M T_u theta0||^2 = s^2 (e.w)^2 pi^2 e^{-2 kappa u} e^{-4 kappa (t-u)}.
  const VelocityBasis one = desk_basis().prefix(1);
  const VelocityMode& m = one.mode(0);
  REQUIRE(m.wavevector == WaveVector({0, 1}));
  const double nu = 0.4, c0 = 0.9, t = 0.6;
  const double kappa = 0.5 * (nu + c0);
  const SpectralField theta0 = SpectralField::cosine(2, 3, {1, 0});
  const double ew = m.polarization[0];
  const double a = 2.0 * kappa, b = 4.0 * kappa;
  const double want = m.amplitude * m.amplitude * ew * ew * std::numbers::pi * std::numbers::pi *
                      (std::exp(-a * t) - std::exp(-b * t)) / (b - a);
  const double got = iterated_integral_level_norm(theta0, one, nu, c0, 1, t, 20);
  CHECK(rel(got, want) <= 1e-10);
}

TEST_CASE("finite-basis oracle reproduces the propagator") {
  const PropagatorConfig cfg = config(2, 4, 2, 1.0 / 256);
  const GridSpec grid{2, 4, 8};
  const SpectralField theta0 = desk_theta0();
  const ChaosSolution sol = solve_propagator(theta0, desk_basis(), cfg, grid);
  const VelocityBasis modes = desk_basis().prefix(cfg.n_w);
  const TimeBasis tb(cfg.T, cfg.n_t);
  for (int N = 1; N <= 2; ++N) {
    const auto coeffs = iterated_integral_coefficients(theta0, modes, sol.generator(), tb, N, 1.0, 12);
    const auto [lo, hi] = sol.level_range(N);
    REQUIRE(coeffs.size() == hi - lo);
    double err = 0.0, ref = 0.0;
    for (const auto& [alpha, f] : coeffs) {
      const SpectralField& g = sol.coefficient(sol.rank(alpha), 1);
      err += norm_squared(g - f.resized(g.radius()));
      ref += norm_squared(f);
    }
    CHECK(std::sqrt(err / ref) <= 1e-9);
    const double lvl = iterated_integral_level_norm(theta0, modes, sol.generator(), tb, N, 1.0, 12);
    CHECK(rel(lvl, ref) <= 1e-12);
  }
}

TEST_CASE("tail oracle reproduces the carried outflow integral") {
  const PropagatorConfig cfg = config(2, 4, 1, 1.0 / 256);
  const ChaosSolution sol = solve_propagator(desk_theta0(), desk_basis(), cfg, GridSpec{2, 4, 8});
  const VelocityBasis modes = desk_basis().prefix(cfg.n_w);
  const double want = sol.level_integrals(1).outflow.back();
  const double got = iterated_integral_tail(desk_theta0(), modes, sol.generator(), 1, 1.0, 12, TimeBasis(1.0, 2));
  CHECK(rel(got, want) <= 1e-9);
}

TEST_CASE("oracles refuse work beyond their budget") {
  const Generator gen(1.0, covariance_at_zero(desk_basis()).matrix);
  try {
    (void)iterated_integral_level_norm(desk_theta0(), desk_basis(), gen, 3, 1.0, 10, 1e4);
    FAIL("expected a budget refusal");
  } catch (const OracleBudgetError& e) {
    CHECK(e.estimated_cost() > 1e4);
  }
}

TEST_CASE("energy ledger without noise closes") {
  PropagatorConfig cfg = config(1, 0, 2, 1.0 / 512);
  cfg.output_times = {0.0, 0.25, 0.5, 1.0};
  const ChaosSolution sol = solve_propagator(desk_theta0(), desk_basis(), cfg, GridSpec{2, 4, 8});
  const EnergyReport rep = energy_balance_report(sol);
  REQUIRE(rep.rows.size() == 4);
  CHECK(rep.rows[0].e_l2 == doctest::Approx(rep.theta0_norm2).epsilon(1e-15));
  CHECK(rep.rows[0].dissipation == 0.0);
  for (const auto& r : rep.rows) {
    CHECK(r.tail == 0.0);
    CHECK(r.time_leak == 0.0);
    CHECK(std::abs(r.residual) <= 1e-10);
  }
  std::ostringstream os;
  rep.write_csv(os);
  CHECK(os.str().rfind("t,e_l2,dissipation,tail,time_leak,residual,closed_residual\n", 0) == 0);
}

TEST_CASE("the truncated system balances once the inter-level leak is counted") {
  const PropagatorConfig cfg = config(2, 8, 2, 1.0 / 256);
  const ChaosSolution sol = solve_propagator(desk_theta0(), desk_basis(), cfg, GridSpec{2, 4, 8});
  const EnergyReport rep = energy_balance_report(sol);
  CHECK(rep.max_abs_closed_residual() <= 1e-6);
  const TailDecayStudy st = tail_decay_study(sol);
  REQUIRE(st.rows.size() == 3);
  CHECK(!st.flagged);
  for (const auto& r : st.rows) CHECK(std::abs(r.deficit - r.tail - r.time_leak) <= 1e-6);
}

TEST_CASE("the leak shrinks like 1/n_t") {
  const GridSpec grid{2, 4, 8};
  std::vector<double> leak;
  for (int nt : {3, 6}) {
    const ChaosSolution sol = solve_propagator(desk_theta0(), desk_basis(), config(nt, 8, 2, 1.0 / 256), grid);
    leak.push_back(energy_balance_report(sol).rows.back().time_leak);
  }
  CHECK(leak[0] > 0.0);
  const double ratio = leak[1] / leak[0];
  CHECK(ratio > 0.45);
  CHECK(ratio < 0.6);
}

TEST_CASE("Brownian increments") {
  const TimeBasis tb(1.0, 3);
  const GaussianSample s = GaussianSample::draw(3, 2, 4, 0);
  const NoisePath p = brownian_increments(s, tb, 2, 32);
  double w = 0.0;
  for (int j = 0; j < 16; ++j) w += p(1, j);
  CHECK(w == doctest::Approx(brownian_from_sample(s, tb, 2, 0.5)).epsilon(1e-13));

  // with the complement the marginal law is Brownian
  const int n = 4000;
  double v_half = 0.0, cov = 0.0;
  for (int q = 0; q < n; ++q) {
    const GaussianSample g = GaussianSample::draw(3, 1, 8, q);
    const NoisePath c = brownian_increments(g, tb, 1, 16, 1000 + q);
    double x = 0.0;
    for (int j = 0; j < 8; ++j) x += c(0, j);
    v_half += x * x;
    cov += c(0, 2) * c(0, 11);
  }
  v_half /= n;
  cov /= n;
  CHECK(std::abs(v_half - 0.5) <= 5.0 * 0.5 * std::sqrt(2.0 / n));
  CHECK(std::abs(cov) <= 5.0 * (1.0 / 16) / std::sqrt(n));
}

TEST_CASE("Monte Carlo solver without noise is the heat flow") {
  const NoisePath noise(0, 64, 1.0);
  const auto out = direct_mc_solve(desk_theta0(), desk_basis(), 1.0, noise, {0.5, 1.0}, 6);
  REQUIRE(out.size() == 2);
  const SpectralField want = heat_semigroup_apply(desk_theta0(), 1.0, 0.5).resized(6);
  CHECK(norm_squared(out[1] - want) <= 1e-28);
  const auto m = moment_equation_second_moment(desk_theta0(), desk_basis(), 1.0, 0, {1.0}, 6, 1.0 / 64);
  CHECK(rel(m[0], norm_squared(want)) <= 1e-12);
}

TEST_CASE("second-moment equation agrees with the complete chaos expansion") {
  // Weak noise so the expansion converges after a few levels.
  CovarianceSpec spec;
  spec.A0 = 0.05;
  const VelocityBasis basis = build_divergence_free_basis(spec, 1);
  const SpectralField theta0 = SpectralField::cosine(2, 6, {1, 0});
  const Generator gen(1.0, covariance_at_zero(basis).matrix);
  double chaos = 0.0;
  for (int N = 0; N <= 3; ++N) chaos += iterated_integral_level_norm(theta0, basis, gen, N, 1.0, 10);
  const auto m = moment_equation_second_moment(theta0, basis, 1.0, 8, {1.0}, 6, 1.0 / 64);
  CHECK(rel(m[0], chaos) <= 1e-5);
}

TEST_CASE("Monte Carlo estimates are reproducible") {
  const PropagatorConfig cfg = config(2, 4, 1, 1.0 / 64);
  McSettings mc;
  mc.n_paths = 20;
  mc.n_steps = 64;
  mc.radius = 6;
  const McEstimate a = mc_second_moment(desk_theta0(), desk_basis(), cfg, mc);
  mc.workers = 3;
  const McEstimate b = mc_second_moment(desk_theta0(), desk_basis(), cfg, mc);
  CHECK(a.value == b.value);
  CHECK(a.std_error == b.std_error);
  CHECK(a.std_error > 0.0);
  std::ostringstream os;
  write_mc_csv(os, {a});
  CHECK(os.str().rfind("estimator,n_paths,dt_mc,value,std_error\n", 0) == 0);
}
