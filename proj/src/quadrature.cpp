#include "chaosflow/quadrature.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include <Eigen/Eigenvalues>

namespace chaosflow {

QuadratureRule gauss_legendre(int n, double a, double b) {
  if (n < 1) throw std::invalid_argument("gauss_legendre: need n >= 1");
  QuadratureRule rule{std::vector<double>(n), std::vector<double>(n)};
  const double mid = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  for (int j = 0; j < (n + 1) / 2; ++j) {
    double x = std::cos(std::numbers::pi * (j + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int m = 2; m <= n; ++m) {
        const double p2 = ((2.0 * m - 1.0) * x * p1 - (m - 1.0) * p0) / m;
        p0 = p1;
        p1 = p2;
      }
      if (n == 1) p0 = 1.0;
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    // recompute derivative at the converged root
    double p0 = 1.0, p1 = x;
    for (int m = 2; m <= n; ++m) {
      const double p2 = ((2.0 * m - 1.0) * x * p1 - (m - 1.0) * p0) / m;
      p0 = p1;
      p1 = p2;
    }
    if (n == 1) p0 = 1.0;
    dp = n * (x * p1 - p0) / (x * x - 1.0);
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.nodes[j] = mid - half * x;
    rule.nodes[n - 1 - j] = mid + half * x;
    rule.weights[j] = rule.weights[n - 1 - j] = half * w;
  }
  return rule;
}

QuadratureRule gauss_hermite_normal(int n) {
  if (n < 1) throw std::invalid_argument("gauss_hermite_normal: need n >= 1");
  // Golub-Welsch on the Jacobi matrix of the monic probabilists' Hermite family.
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) J(k, k - 1) = J(k - 1, k) = std::sqrt(static_cast<double>(k));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(J);
  QuadratureRule rule{std::vector<double>(n), std::vector<double>(n)};
  for (int k = 0; k < n; ++k) {
    rule.nodes[k] = eig.eigenvalues()[k];
    rule.weights[k] = eig.eigenvectors()(0, k) * eig.eigenvectors()(0, k);
  }
  return rule;
}

namespace {

void nest(int level, double upper, double weight, int q, std::vector<double>& s, std::vector<SimplexNode>& out) {
  if (level < 0) {
    out.push_back({s, weight});
    return;
  }
  const QuadratureRule r = gauss_legendre(q, 0.0, upper);
  for (int j = 0; j < q; ++j) {
    s[level] = r.nodes[j];
    nest(level - 1, r.nodes[j], weight * r.weights[j], q, s, out);
  }
}

}  // namespace

std::vector<SimplexNode> simplex_rule(int N, double t, int q) {
  if (N < 0) throw std::invalid_argument("simplex_rule: negative dimension");
  if (t < 0.0) throw std::invalid_argument("simplex_rule: negative time");
  std::vector<SimplexNode> out;
  std::vector<double> s(N);
  nest(N - 1, t, 1.0, q, s, out);
  return out;
}

}  // namespace chaosflow
