#pragma once

#include <vector>

namespace chaosflow {

struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// n-point Gauss-Legendre rule on [a, b].
QuadratureRule gauss_legendre(int n, double a = -1.0, double b = 1.0);

/// n-point Gauss rule for the standard normal density (weights sum to 1).
QuadratureRule gauss_hermite_normal(int n);

/// Node of a nested product rule on {0 < s_1 < ... < s_N < t}.
struct SimplexNode {
  std::vector<double> s;  // ascending
  double weight = 0.0;
};

/// Nested Gauss-Legendre: s_N on [0, t], s_{j} on [0, s_{j+1}], q points per level.
/// N = 0 yields a single node of weight 1.
std::vector<SimplexNode> simplex_rule(int N, double t, int q);

}  // namespace chaosflow
