#include <cmath>
#include <numbers>

#include "doctest.h"

#include "chaosflow/spectral_field.hpp"
#include "test_util.hpp"

using namespace chaosflow;
using testutil::on_grid;
using testutil::rel;

TEST_CASE("flat index follows lexicographic wavevector order") {
  const SpectralField f(2, 3);
  CHECK(f.size() == 49);
  for (std::size_t n = 0; n < f.size(); ++n) {
    const WaveVector z = f.wavevector(n);
    CHECK(f.flat_index(z) == n);
    CHECK(f.flat_index(-z) == f.size() - 1 - n);
    if (n > 0) CHECK(f.wavevector(n - 1) < z);
  }
  CHECK_THROWS_AS((void)f.flat_index({4, 0}), std::out_of_range);
  CHECK(f.coeff({5, 5}) == Complex{});
}

TEST_CASE("real modes evaluate to a cos + b sin") {
  SpectralField f(2, 2);
  f.add_real_mode({1, -2}, 0.7, -1.3);
  f.add_real_mode({0, 0}, 0.25, 0.0);
  CHECK(f.is_real());
  for (double x1 : {0.1, 1.7, 4.0}) {
    for (double x2 : {0.3, 2.9}) {
      const double x[2] = {x1, x2};
      const double want = 0.25 + 0.7 * std::cos(x1 - 2 * x2) - 1.3 * std::sin(x1 - 2 * x2);
      CHECK(f.evaluate(x) == doctest::Approx(want).epsilon(1e-14));
    }
  }
}

TEST_CASE("Parseval matches trapezoidal quadrature on a 32^2 grid") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const SpectralField f = random_band_field(2, 4, 4, seed);
    const auto v = on_grid(32, [&](std::span<const double> x) { return f.evaluate(x); });
    double quad = 0.0;
    for (double y : v) quad += y * y;
    quad *= std::pow(2.0 * std::numbers::pi / 32.0, 2);
    CHECK(rel(norm_squared(f), quad) <= 1e-10);
  }
}

TEST_CASE("gradient norm matches quadrature of the physical gradient") {
  const SpectralField f = random_band_field(2, 3, 3, 11);
  const auto g = gradient(f);
  REQUIRE(g.size() == 2);
  const auto v = on_grid(24, [&](std::span<const double> x) {
    const double a = g[0].evaluate(x), b = g[1].evaluate(x);
    return a * a + b * b;
  });
  double quad = 0.0;
  for (double y : v) quad += y;
  quad *= std::pow(2.0 * std::numbers::pi / 24.0, 2);
  CHECK(rel(gradient_norm_squared(f), quad) <= 1e-10);
  CHECK(rel(norm_squared(g[0]) + norm_squared(g[1]), gradient_norm_squared(f)) <= 1e-13);
}

TEST_CASE("mode products agree with pointwise products on an oversampled grid") {
  const SpectralField f = random_band_field(2, 3, 3, 5);
  const GridSpec grid{2, 3, 6};
  for (Parity p : {Parity::Cos, Parity::Sin}) {
    const WaveVector z{2, -1};
    const SpectralField prod = mode_multiply_shift(f, z, p, 5, grid);
    CHECK(prod.is_real());
    const auto got = on_grid(24, [&](std::span<const double> x) { return prod.evaluate(x); });
    const auto want = on_grid(24, [&](std::span<const double> x) {
      const double phase = z[0] * x[0] + z[1] * x[1];
      return f.evaluate(x) * (p == Parity::Cos ? std::cos(phase) : std::sin(phase));
    });
    double err = 0.0, ref = 0.0;
    for (std::size_t j = 0; j < got.size(); ++j) {
      err += (got[j] - want[j]) * (got[j] - want[j]);
      ref += want[j] * want[j];
    }
    CHECK(std::sqrt(err / ref) <= 1e-10);
  }
}

TEST_CASE("mode products respect the growth cap and projection policy") {
  const SpectralField f = SpectralField::cosine(2, 2, {2, 0});
  const GridSpec grid{2, 2, 3};
  CHECK_THROWS_AS(mode_multiply_shift(f, {1, 1}, Parity::Cos, 4, grid), GridOverflowError);
  CHECK_THROWS_AS(mode_multiply_shift(f, {1, 1}, Parity::Cos, 2, grid), std::invalid_argument);
  const SpectralField dropped = mode_multiply_shift(f, {1, 1}, Parity::Cos, 2, grid, Projection::Allow);
  // cos(2x) cos(x+y) = [cos(3x+y) + cos(x-y)] / 2; the first term leaves the cube.
  CHECK(std::abs(dropped.coeff({1, -1}) - Complex(0.25, 0.0)) < 1e-15);
  CHECK(dropped.coeff({3, 1}) == Complex{});
}

TEST_CASE("resizing refuses to drop energy unless asked") {
  const SpectralField f = SpectralField::sine(2, 3, {3, 0});
  CHECK_THROWS_AS((void)f.resized(2), std::invalid_argument);
  CHECK(norm_squared(f.resized(2, Projection::Allow)) == 0.0);
  const SpectralField g = f.resized(5);
  CHECK(norm_squared(g) == doctest::Approx(norm_squared(f)).epsilon(1e-15));
  CHECK(g.support_radius() == 3);
  CHECK(inner_product(f, g) == doctest::Approx(norm_squared(f)).epsilon(1e-15));
}

TEST_CASE("heat semigroup") {
  const SpectralField f = random_band_field(2, 3, 3, 9);
  const SpectralField a = heat_semigroup_apply(heat_semigroup_apply(f, 0.3, 0.7), 0.2, 0.7);
  const SpectralField b = heat_semigroup_apply(f, 0.5, 0.7);
  CHECK(std::sqrt(norm_squared(a - b)) <= 1e-14 * std::sqrt(norm_squared(f)));
  const SpectralField z = heat_semigroup_apply(f, 1.0, 0.0);
  CHECK(norm_squared(z - f) == 0.0);
  CHECK_THROWS_AS(heat_semigroup_apply(f, -0.1, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(heat_semigroup_apply(f, 0.1, -1.0), std::invalid_argument);
  const Eigen::MatrixXd D = 0.7 * Eigen::MatrixXd::Identity(2, 2);
  CHECK(norm_squared(heat_semigroup_apply(f, 0.5, D) - b) <= 1e-28);
  // d/dt ||T_t f||^2 = -2 kappa ||grad T_t f||^2
  const double h = 1e-5;
  const double slope = (norm_squared(heat_semigroup_apply(f, h, 0.7)) - norm_squared(f)) / h;
  CHECK(slope == doctest::Approx(-2.0 * 0.7 * gradient_norm_squared(f)).epsilon(1e-3));
}

TEST_CASE("arithmetic requires matching shapes") {
  SpectralField a(2, 2), b(2, 3);
  CHECK_THROWS(a += b);
  SpectralField c = random_band_field(2, 2, 2, 1);
  SpectralField d = c;
  d.axpy(-1.0, c);
  CHECK(norm_squared(d) == 0.0);
  CHECK(norm_squared(2.0 * c) == doctest::Approx(4.0 * norm_squared(c)));
}

TEST_CASE("three-dimensional fields") {
  const SpectralField f = random_band_field(3, 1, 2, 4);
  CHECK(f.size() == 125);
  CHECK(f.is_real());
  const GridSpec grid{3, 2, 3};
  const SpectralField g = mode_multiply_shift(f, {0, 1, -1}, Parity::Sin, 3, grid);
  const double x[3] = {0.4, 1.1, 5.0};
  CHECK(g.evaluate(x) == doctest::Approx(f.evaluate(x) * std::sin(x[1] - x[2])).epsilon(1e-12));
}
