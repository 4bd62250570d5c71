#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "doctest.h"

#include "chaosflow/velocity_model.hpp"
#include "test_util.hpp"

using namespace chaosflow;
using testutil::rel;

namespace {

CovarianceSpec desk_spec() { return CovarianceSpec{}; }

}  // namespace

TEST_CASE("half lattice picks one of each +-z pair") {
  for (int d : {2, 3}) {
    for (int R : {1, 2}) {
      const auto h = half_lattice(d, R);
      const std::size_t full = static_cast<std::size_t>(std::pow(2 * R + 1, d)) - 1;
      CHECK(h.size() == full / 2);
      for (std::size_t j = 0; j < h.size(); ++j) {
        CHECK(!h[j].is_zero());
        CHECK(h[j] > -h[j]);
        if (j > 0) CHECK(h[j - 1] < h[j]);
      }
    }
  }
}

TEST_CASE("polarizations are orthonormal and transverse") {
  for (const WaveVector& z : {WaveVector{1, 2}, WaveVector{0, 1}, WaveVector{1, -1, 2}, WaveVector{0, 0, 1}}) {
    const auto e = transverse_polarizations(z);
    REQUIRE(static_cast<int>(e.size()) == z.dim() - 1);
    for (std::size_t a = 0; a < e.size(); ++a) {
      double dot = 0.0;
      for (int j = 0; j < z.dim(); ++j) dot += e[a][j] * z[j];
      CHECK(std::abs(dot) < 1e-15);
      for (std::size_t b = 0; b < e.size(); ++b)
        CHECK(std::abs(e[a].dot(e[b]) - (a == b ? 1.0 : 0.0)) < 1e-15);
    }
  }
}

TEST_CASE("spectral density") {
  const CovarianceSpec spec = desk_spec();
  CHECK(solenoidal_weight(spec, 1.0) == doctest::Approx(std::pow(2.0, -1.5)).epsilon(1e-15));
  const Eigen::MatrixXd C = spectral_density(spec, WaveVector{1, 1});
  const double w = std::pow(3.0, -1.5);
  CHECK(C(0, 0) == doctest::Approx(0.5 * w));
  CHECK(C(0, 1) == doctest::Approx(-0.5 * w));
  Eigen::VectorXd z(2);
  z << 1, 1;
  CHECK((C * z).norm() < 1e-16);

  CovarianceSpec bad = spec;
  bad.alpha = 2.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = spec;
  bad.a = 0.5;
  CHECK_THROWS(build_divergence_free_basis(bad, 1));
}

TEST_CASE("basis size, amplitudes and c0") {
  const VelocityBasis basis = build_divergence_free_basis(desk_spec(), 1);
  CHECK(basis.size() == 8);
  CHECK(basis.max_shift() == 1);
  for (const auto& m : basis.modes())
    CHECK(m.amplitude == doctest::Approx(std::sqrt(2.0 * solenoidal_weight(basis.spec(), m.wavevector.norm_squared()))));
  const auto cz = covariance_at_zero(basis);
  CHECK(std::abs(cz.c0 - 2.0 * (std::pow(2.0, -1.5) + std::pow(3.0, -1.5))) < 1e-14);
  CHECK(std::abs(cz.c0 - 1.0920069606462981) < 1e-14);
  // isotropic at this shell
  CHECK(std::abs(cz.matrix(0, 0) - cz.matrix(1, 1)) < 1e-14);
  CHECK(std::abs(cz.matrix(0, 1)) < 1e-14);
  CHECK(basis.prefix(3).size() == 3);

  std::ostringstream os;
  basis.write_csv(os);
  CHECK(os.str().find('\n') != std::string::npos);
}

TEST_CASE("modes are divergence free and the one-point covariance is x-independent") {
  for (int d : {2, 3}) {
    CovarianceSpec spec = desk_spec();
    spec.dim = d;
    const VelocityBasis basis = build_divergence_free_basis(spec, d == 2 ? 2 : 1);
    for (const auto& m : basis.modes()) {
      std::vector<SpectralField> comps;
      for (int j = 0; j < d; ++j) comps.push_back(m.component(j, basis.shell_radius()));
      const SpectralField dv = divergence(comps);
      double worst = 0.0;
      for (const Complex& c : dv.data()) worst = std::max(worst, std::abs(c));
      CHECK(worst <= 1e-12);
    }
    const Eigen::MatrixXd C0 = covariance_at_zero(basis).matrix;
    std::mt19937_64 gen(3);
    std::uniform_real_distribution<double> u(0.0, 2.0 * std::numbers::pi);
    for (int trial = 0; trial < 10; ++trial) {
      std::vector<double> x(d);
      for (double& v : x) v = u(gen);
      Eigen::MatrixXd S = Eigen::MatrixXd::Zero(d, d);
      for (const auto& m : basis.modes()) {
        const Eigen::VectorXd s = m.evaluate(x);
        S += s * s.transpose();
      }
      CHECK((S - C0).cwiseAbs().maxCoeff() <= 1e-12);
    }
  }
}

TEST_CASE("kernel identity against the truncated lattice covariance") {
  const VelocityBasis basis = build_divergence_free_basis(desk_spec(), 2);
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> u(0.0, 2.0 * std::numbers::pi);
  for (int trial = 0; trial < 20; ++trial) {
    const double x[2] = {u(gen), u(gen)};
    const double y[2] = {u(gen), u(gen)};
    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(2, 2);
    for (const auto& m : basis.modes()) S += m.evaluate(x) * m.evaluate(y).transpose();
    const double r[2] = {x[0] - y[0], x[1] - y[1]};
    const Eigen::MatrixXd L = lattice_covariance(basis.spec(), 2, r);
    CHECK((S - L).cwiseAbs().maxCoeff() <= 1e-10);
  }
}

TEST_CASE("sum of ||M_k f||^2 equals the advective quadratic form") {
  const VelocityBasis basis = build_divergence_free_basis(desk_spec(), 2);
  const Eigen::MatrixXd C0 = covariance_at_zero(basis).matrix;
  const GridSpec grid{2, 4, 8};
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const SpectralField f = random_band_field(2, 4, 4, seed);
    double sum = 0.0;
    for (std::size_t k = 0; k < basis.size(); ++k) sum += norm_squared(apply_Mk(basis, k, f, grid));
    CHECK(rel(sum, advective_energy(C0, f)) <= 1e-10);
  }
}

TEST_CASE("M_k agrees with pointwise sigma_k . grad f") {
  const VelocityBasis basis = build_divergence_free_basis(desk_spec(), 1);
  const GridSpec grid{2, 3, 4};
  const SpectralField f = random_band_field(2, 3, 3, 17);
  const auto g = gradient(f);
  for (std::size_t k = 0; k < basis.size(); ++k) {
    const SpectralField mf = apply_Mk(basis, k, f, grid);
    CHECK(mf.radius() == 4);
    CHECK(mf.is_real());
    const auto got = testutil::on_grid(12, [&](std::span<const double> x) { return mf.evaluate(x); });
    const auto want = testutil::on_grid(12, [&](std::span<const double> x) {
      const Eigen::VectorXd s = basis.mode(k).evaluate(x);
      return s[0] * g[0].evaluate(x) + s[1] * g[1].evaluate(x);
    });
    for (std::size_t j = 0; j < got.size(); ++j) CHECK(std::abs(got[j] - want[j]) <= 1e-12);
  }
}

TEST_CASE("tabulated mode operator matches apply_Mk") {
  const VelocityBasis basis = build_divergence_free_basis(desk_spec(), 2);
  const GridSpec grid{2, 3, 5};
  const SpectralField f = random_band_field(2, 3, 3, 23);
  for (std::size_t k = 0; k < basis.size(); ++k) {
    const SpectralField direct = apply_Mk(basis, k, f, grid);
    const ModeOperator op(basis.mode(k), 2, 3, direct.radius());
    SpectralField tab(2, direct.radius());
    op.apply_add(f.data(), tab.data(), 2.0);
    tab.axpy(-2.0, direct);
    CHECK(std::sqrt(norm_squared(tab)) <= 1e-13 * std::sqrt(norm_squared(direct)) + 1e-300);
  }
}

TEST_CASE("M_k is antisymmetric") {
  // sigma_k is divergence free, so (M_k f, g) = -(f, M_k g).
  const VelocityBasis basis = build_divergence_free_basis(desk_spec(), 1);
  const GridSpec grid{2, 3, 4};
  const SpectralField f = random_band_field(2, 3, 3, 1);
  const SpectralField g = random_band_field(2, 3, 3, 2);
  for (std::size_t k = 0; k < basis.size(); ++k) {
    const double a = inner_product(apply_Mk(basis, k, f, grid), g);
    const double b = inner_product(f, apply_Mk(basis, k, g, grid));
    CHECK(std::abs(a + b) <= 1e-12 * (std::abs(a) + 1.0));
  }
}

TEST_CASE("apply_Mk refuses to outgrow the cap") {
  const VelocityBasis basis = build_divergence_free_basis(desk_spec(), 1);
  const GridSpec grid{2, 3, 3};
  CHECK_THROWS_AS(apply_Mk(basis, 0, SpectralField(2, 3), grid), GridOverflowError);
}
