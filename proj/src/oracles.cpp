#include "chaosflow/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "chaosflow/csv.hpp"
#include "chaosflow/parallel.hpp"
#include "chaosflow/quadrature.hpp"
#include "chaosflow/random.hpp"

namespace chaosflow {

namespace {

double ipow(double b, int e) {
  double r = 1.0;
  for (int j = 0; j < e; ++j) r *= b;
  return r;
}

void check_budget(const char* what, int levels, int q, std::size_t n_modes, double extra, double budget) {
  double chains = 0.0;
  for (int j = 1; j <= levels; ++j) chains += ipow(static_cast<double>(n_modes), j);
  const double cost = ipow(q, levels) * std::max(chains, 1.0) * extra;
  if (cost > budget) {
    std::ostringstream os;
    os << what << ": refusing N=" << levels << " with quad_order=" << q << " and " << n_modes
       << " modes; estimated cost " << cost << " operator applications exceeds budget " << budget;
    throw OracleBudgetError(os.str(), cost);
  }
}

/// Chains T_{t-s_N} M_{k_N} ... M_{k_1} T_{s_1} theta0 for one simplex node,
/// for every k-tuple, with k_1 the most significant digit.
class ChainBuilder {
 public:
  ChainBuilder(const SpectralField& theta0, const VelocityBasis& modes, const Eigen::MatrixXd& diffusion, int N,
               int extra_levels)
      : theta0_(theta0), modes_(modes), diffusion_(diffusion), N_(N) {
    grid_.dim = theta0.dim();
    grid_.base_radius = theta0.radius();
    grid_.growth_cap = theta0.radius() + (N + extra_levels) * modes.max_shift();
  }

  const GridSpec& grid() const { return grid_; }

  void build(const std::vector<double>& s, double t, std::vector<SpectralField>& out) {
    out.clear();
    if (N_ == 0) {
      out.push_back(heat_semigroup_apply(theta0_, t, diffusion_));
      return;
    }
    s_ = &s;
    t_ = t;
    recurse(1, heat_semigroup_apply(theta0_, s[0], diffusion_), out);
  }

  /// sum_k ||M_k f||^2 with M_k applied directly.
  double advective(const SpectralField& f) const {
    double sum = 0.0;
    for (std::size_t k = 0; k < modes_.size(); ++k) sum += norm_squared(apply_Mk(modes_, k, f, grid_));
    return sum;
  }

 private:
  void recurse(int j, const SpectralField& f, std::vector<SpectralField>& out) {
    const double next = j == N_ ? t_ : (*s_)[j];
    const double gap = std::max(0.0, next - (*s_)[j - 1]);
    for (std::size_t k = 0; k < modes_.size(); ++k) {
      SpectralField g = heat_semigroup_apply(apply_Mk(modes_, k, f, grid_), gap, diffusion_);
      if (j == N_) {
        out.push_back(std::move(g));
      } else {
        recurse(j + 1, g, out);
      }
    }
  }

  const SpectralField& theta0_;
  const VelocityBasis& modes_;
  const Eigen::MatrixXd& diffusion_;
  int N_;
  GridSpec grid_;
  const std::vector<double>* s_ = nullptr;
  double t_ = 0.0;
};

void check_oracle_args(const SpectralField& theta0, const VelocityBasis& basis, const Generator& gen, int N, double t,
                       int q) {
  if (N < 0) throw std::invalid_argument("iterated integral: negative level");
  if (t < 0.0) throw std::invalid_argument("iterated integral: negative time");
  if (q < 1) throw std::invalid_argument("iterated integral: quad_order must be positive");
  if (theta0.dim() != basis.dim() || gen.diffusion().rows() != basis.dim()) {
    throw std::invalid_argument("iterated integral: dimension mismatch");
  }
}

double complete_level_sum(const SpectralField& theta0, const VelocityBasis& basis, const Generator& gen, int N,
                          double t, int q, bool advective) {
  ChainBuilder chains(theta0, basis, gen.diffusion(), N, advective ? 1 : 0);
  std::vector<SpectralField> out;
  double total = 0.0;
  for (const SimplexNode& node : simplex_rule(N, t, q)) {
    chains.build(node.s, t, out);
    double sum = 0.0;
    for (const auto& f : out) sum += advective ? chains.advective(f) : norm_squared(f);
    total += node.weight * sum;
  }
  return total;
}

std::vector<std::pair<MultiIndex, SpectralField>> finite_coefficients(const SpectralField& theta0,
                                                                      const VelocityBasis& basis, const Generator& gen,
                                                                      const TimeBasis& tb, int N, double t, int q) {
  const int n_w = static_cast<int>(basis.size());
  const int n_t = tb.size();
  std::vector<std::pair<MultiIndex, SpectralField>> result;
  std::unordered_map<MultiIndex, std::size_t, MultiIndexHash> pos;
  const int radius = theta0.radius() + N * basis.max_shift();
  for (const MultiIndex& a : enumerate_multiindices(n_t, n_w, N)) {
    if (a.order() != N) continue;
    pos.emplace(a, result.size());
    result.emplace_back(a, SpectralField(theta0.dim(), radius));
  }

  std::size_t n_k = 1, n_i = 1;
  for (int j = 0; j < N; ++j) {
    n_k *= static_cast<std::size_t>(n_w);
    n_i *= static_cast<std::size_t>(n_t);
  }
  // Decode tuples, most significant digit first.
  auto digits = [N](std::size_t code, std::size_t base) {
    std::vector<int> d(N);
    for (int j = N - 1; j >= 0; --j) {
      d[j] = static_cast<int>(code % base);
      code /= base;
    }
    return d;
  };
  std::vector<std::vector<int>> itup(n_i);
  for (std::size_t c = 0; c < n_i; ++c) itup[c] = digits(c, static_cast<std::size_t>(n_t));
  struct Target {
    std::size_t pos;
    double factor;
  };
  std::vector<Target> table(n_k * n_i);
  for (std::size_t kc = 0; kc < n_k; ++kc) {
    const std::vector<int> kt = digits(kc, static_cast<std::size_t>(n_w));
    for (std::size_t ic = 0; ic < n_i; ++ic) {
      std::vector<MultiIndex::Entry> e;
      for (int j = 0; j < N; ++j) e.push_back({{itup[ic][j] + 1, kt[j] + 1}, 1});
      const MultiIndex a(std::move(e));
      table[kc * n_i + ic] = {pos.at(a), std::sqrt(a.factorial())};
    }
  }

  ChainBuilder chains(theta0, basis, gen.diffusion(), N, 0);
  std::vector<SpectralField> out;
  std::vector<double> mprod(n_i);
  for (const SimplexNode& node : simplex_rule(N, t, q)) {
    chains.build(node.s, t, out);
    for (std::size_t ic = 0; ic < n_i; ++ic) {
      double p = node.weight;
      for (int j = 0; j < N; ++j) p *= tb.eval(itup[ic][j] + 1, node.s[j]);
      mprod[ic] = p;
    }
    for (std::size_t kc = 0; kc < n_k; ++kc) {
      const SpectralField f = out[kc].radius() == radius ? out[kc] : out[kc].resized(radius);
      for (std::size_t ic = 0; ic < n_i; ++ic) {
        const Target& tg = table[kc * n_i + ic];
        result[tg.pos].second.axpy(tg.factor * mprod[ic], f);
      }
    }
  }
  return result;
}

}  // namespace

double iterated_integral_level_norm(const SpectralField& theta0, const VelocityBasis& basis, const Generator& gen,
                                    int N, double t, int quad_order, double budget) {
  check_oracle_args(theta0, basis, gen, N, t, quad_order);
  check_budget("iterated_integral_level_norm", N, quad_order, basis.size(), 1.0, budget);
  return complete_level_sum(theta0, basis, gen, N, t, quad_order, false);
}

double iterated_integral_level_norm(const SpectralField& theta0, const VelocityBasis& basis, double nu, double c0,
                                    int N, double t, int quad_order, double budget) {
  return iterated_integral_level_norm(theta0, basis, Generator(nu, c0, basis.dim()), N, t, quad_order, budget);
}

std::vector<std::pair<MultiIndex, SpectralField>> iterated_integral_coefficients(
    const SpectralField& theta0, const VelocityBasis& basis, const Generator& gen, const TimeBasis& tb, int N, double t,
    int quad_order, double budget) {
  check_oracle_args(theta0, basis, gen, N, t, quad_order);
  if (t > tb.horizon()) throw std::invalid_argument("iterated integral: t beyond the time-basis horizon");
  check_budget("iterated_integral_coefficients", N, quad_order, basis.size(), ipow(tb.size(), N), budget);
  return finite_coefficients(theta0, basis, gen, tb, N, t, quad_order);
}

double iterated_integral_level_norm(const SpectralField& theta0, const VelocityBasis& basis, const Generator& gen,
                                    const TimeBasis& tb, int N, double t, int quad_order, double budget) {
  double sum = 0.0;
  for (const auto& [alpha, f] : iterated_integral_coefficients(theta0, basis, gen, tb, N, t, quad_order, budget)) {
    sum += norm_squared(f);
  }
  return sum;
}

double iterated_integral_tail(const SpectralField& theta0, const VelocityBasis& basis, const Generator& gen, int N,
                              double t, int quad_order, const std::optional<TimeBasis>& tb, double budget) {
  check_oracle_args(theta0, basis, gen, N, t, quad_order);
  if (!tb) {
    check_budget("iterated_integral_tail", N + 1, quad_order, basis.size(), 1.0, budget);
    // Outermost simplex variable is the time at which the tail flux is read.
    double total = 0.0;
    const QuadratureRule outer = gauss_legendre(quad_order, 0.0, t);
    for (int j = 0; j < quad_order; ++j) {
      total += outer.weights[j] * complete_level_sum(theta0, basis, gen, N, outer.nodes[j], quad_order, true);
    }
    return total;
  }
  if (t > tb->horizon()) throw std::invalid_argument("iterated integral: t beyond the time-basis horizon");
  check_budget("iterated_integral_tail", N + 1, quad_order, basis.size(), ipow(tb->size(), N), budget);
  const QuadratureRule outer = gauss_legendre(quad_order, 0.0, t);
  GridSpec grid{theta0.dim(), theta0.radius(), theta0.radius() + (N + 1) * basis.max_shift()};
  double total = 0.0;
  for (int j = 0; j < quad_order; ++j) {
    double sum = 0.0;
    for (const auto& [alpha, f] : finite_coefficients(theta0, basis, gen, *tb, N, outer.nodes[j], quad_order)) {
      for (std::size_t k = 0; k < basis.size(); ++k) sum += norm_squared(apply_Mk(basis, k, f, grid));
    }
    total += outer.weights[j] * sum;
  }
  return total;
}

// Energy ledger
// -----------------------------------------------------------------------------

double EnergyReport::max_abs_residual() const {
  double m = 0.0;
  for (const auto& r : rows) m = std::max(m, std::abs(r.residual));
  return m;
}

double EnergyReport::max_abs_closed_residual() const {
  double m = 0.0;
  for (const auto& r : rows) m = std::max(m, std::abs(r.closed_residual));
  return m;
}

void EnergyReport::write_csv(std::ostream& os) const {
  os << "t,e_l2,dissipation,tail,time_leak,residual,closed_residual\n";
  for (const auto& r : rows) {
    os << csv::num(r.t) << ',' << csv::num(r.e_l2) << ',' << csv::num(r.dissipation) << ',' << csv::num(r.tail) << ','
       << csv::num(r.time_leak) << ',' << csv::num(r.residual) << ',' << csv::num(r.closed_residual) << '\n';
  }
}

namespace {

struct LevelLedger {
  double e_l2 = 0.0, dissipation = 0.0, tail = 0.0, leak = 0.0;
};

LevelLedger ledger_at(const ChaosSolution& sol, std::size_t ti, int N) {
  LevelLedger l;
  const double nu = sol.config().nu;
  for (int n = 0; n <= N; ++n) {
    const auto [b, e] = sol.level_range(n);
    for (std::size_t r = b; r < e; ++r) l.e_l2 += norm_squared(sol.coefficient(r, ti));
    const LevelIntegrals& li = sol.level_integrals(n);
    l.dissipation += nu * li.gradient[ti];
    if (n > 0) l.leak += sol.level_integrals(n - 1).outflow[ti] - li.inflow[ti];
  }
  l.tail = sol.level_integrals(N).outflow[ti];
  return l;
}

}  // namespace

EnergyReport energy_balance_report(const ChaosSolution& sol) {
  EnergyReport rep;
  rep.theta0_norm2 = norm_squared(sol.initial_condition());
  rep.nu = sol.config().nu;
  rep.N = sol.max_level();
  for (std::size_t ti = 0; ti < sol.times().size(); ++ti) {
    const LevelLedger l = ledger_at(sol, ti, sol.max_level());
    EnergyRow row;
    row.t = sol.times()[ti];
    row.e_l2 = l.e_l2;
    row.dissipation = l.dissipation;
    row.tail = l.tail;
    row.time_leak = l.leak;
    row.residual = l.e_l2 + l.dissipation + l.tail - rep.theta0_norm2;
    row.closed_residual = row.residual + l.leak;
    for (double v : {rep.theta0_norm2, row.e_l2, row.dissipation, row.tail, row.time_leak, row.closed_residual}) {
      if (!std::isfinite(v)) {
        throw InvariantBreach("energy ledger: non-finite entry at t=" + std::to_string(row.t));
      }
    }
    rep.rows.push_back(row);
  }
  return rep;
}

void TailDecayStudy::write_csv(std::ostream& os) const {
  if (flagged) os << "# " << note << '\n';
  os << "N,e_l2,dissipation,tail,deficit,time_leak\n";
  for (const auto& r : rows) {
    os << r.N << ',' << csv::num(r.e_l2) << ',' << csv::num(r.dissipation) << ',' << csv::num(r.tail) << ','
       << csv::num(r.deficit) << ',' << csv::num(r.time_leak) << '\n';
  }
}

TailDecayStudy tail_decay_study(const ChaosSolution& sol) {
  TailDecayStudy study;
  const std::size_t ti = sol.times().size() - 1;
  const double norm0 = norm_squared(sol.initial_condition());
  for (int N = 0; N <= sol.max_level(); ++N) {
    const LevelLedger l = ledger_at(sol, ti, N);
    study.rows.push_back({N, l.tail, norm0 - l.e_l2 - l.dissipation, l.leak, l.e_l2, l.dissipation});
  }
  if (sol.config().nu == 0.0) {
    study.flagged = true;
    study.note = "nu = 0: no decay of the truncation tail is guaranteed; values reported only";
  }
  return study;
}

TailDecayStudy tail_decay_study(const SpectralField& theta0, const VelocityBasis& basis, const PropagatorConfig& cfg,
                                const GridSpec& grid, int workers) {
  PropagatorConfig c = cfg;
  c.output_times = {cfg.T};
  return tail_decay_study(solve_propagator(theta0, basis, c, grid, {}, workers));
}

// Monte Carlo
// -----------------------------------------------------------------------------

NoisePath::NoisePath(int n_w, int n_steps, double T) : n_w_(n_w), n_steps_(n_steps), T_(T) {
  if (n_w < 0) throw std::invalid_argument("noise path: negative n_w");
  if (n_steps < 1) throw std::invalid_argument("noise path: dt_mc must be positive (n_steps >= 1)");
  if (!(T > 0.0)) throw std::invalid_argument("noise path: requires T > 0");
  dw_.assign(static_cast<std::size_t>(n_w) * n_steps, 0.0);
}

NoisePath brownian_increments(const GaussianSample& sample, const TimeBasis& tb, int n_w, int n_steps,
                              std::optional<std::uint64_t> complement_seed) {
  if (sample.n_w() < n_w || sample.n_t() < tb.size()) {
    throw std::invalid_argument("brownian_increments: sample does not cover (n_t, n_w)");
  }
  const double T = tb.horizon();
  NoisePath path(n_w, n_steps, T);
  const double h = T / n_steps;
  auto grid_time = [&](int j) { return std::min(T, T * j / n_steps); };
  for (int k = 0; k < n_w; ++k) {
    double prev = 0.0;
    for (int j = 0; j < n_steps; ++j) {
      const double w = brownian_from_sample(sample, tb, k + 1, grid_time(j + 1));
      path(k, j) = w - prev;
      prev = w;
    }
  }
  if (!complement_seed) return path;

  // Given the sample, the increments are Gaussian with covariance h I - B B^T,
  // B(j, i) = int_{cell j} m_i. With B / sqrt(h) = Q R its square root is
  // sqrt(h) [(I - Q Q^T) + Q S Q^T], S = (I - R R^T)^{1/2}.
  const int n_t = tb.size();
  if (n_steps < n_t) throw std::invalid_argument("brownian_increments: need at least n_t steps");
  Eigen::MatrixXd B(n_steps, n_t);
  for (int j = 0; j < n_steps; ++j)
    for (int i = 1; i <= n_t; ++i) B(j, i - 1) = tb.integral(i, grid_time(j), grid_time(j + 1)) / std::sqrt(h);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(B);
  const Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(n_steps, n_t);
  const Eigen::MatrixXd R = qr.matrixQR().topRows(n_t).triangularView<Eigen::Upper>();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(Eigen::MatrixXd::Identity(n_t, n_t) - R * R.transpose());
  const Eigen::VectorXd lam = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  const Eigen::MatrixXd S = eig.eigenvectors() * lam.asDiagonal() * eig.eigenvectors().transpose();
  for (int k = 0; k < n_w; ++k) {
    NormalStream stream(*complement_seed, static_cast<std::uint64_t>(k));
    Eigen::VectorXd z(n_steps);
    for (int j = 0; j < n_steps; ++j) z[j] = stream.next();
    const Eigen::VectorXd c = Q.transpose() * z;
    const Eigen::VectorXd r = std::sqrt(h) * (z - Q * c + Q * (S * c));
    for (int j = 0; j < n_steps; ++j) path(k, j) += r[j];
  }
  return path;
}

std::vector<SpectralField> direct_mc_solve(const SpectralField& theta0, const VelocityBasis& basis, double nu,
                                           const NoisePath& noise, const std::vector<double>& output_times,
                                           int radius, int noise_sign) {
  if (nu < 0.0) throw std::invalid_argument("direct_mc_solve: requires nu >= 0");
  if (noise_sign != 1 && noise_sign != -1) throw std::invalid_argument("noise_sign must be +1 or -1");
  if (static_cast<std::size_t>(noise.n_w()) > basis.size()) {
    throw std::invalid_argument("direct_mc_solve: more noises than velocity modes");
  }
  if (theta0.support_radius() > radius) {
    throw GridOverflowError("direct_mc_solve: initial condition extends beyond the Monte Carlo radius " +
                            std::to_string(radius));
  }
  const VelocityBasis modes = basis.prefix(static_cast<std::size_t>(noise.n_w()));
  const Generator gen(nu, covariance_at_zero(modes).matrix);
  const int d = theta0.dim();
  const double h = noise.dt();

  SpectralField theta = theta0.resized(radius, Projection::Allow);
  std::vector<double> decay(theta.size());
  for (std::size_t j = 0; j < theta.size(); ++j) decay[j] = std::exp(-gen.rate(theta.wavevector(j)) * h);
  std::vector<ModeOperator> ops;
  for (int k = 0; k < noise.n_w(); ++k) ops.emplace_back(modes.mode(k), d, radius, radius);

  std::vector<long> out_steps;
  for (double t : output_times) {
    const long j = std::lround(t / h);
    if (j < 0 || j > noise.n_steps() || std::abs(t - j * h) > 0.5 * h) {
      throw std::invalid_argument("direct_mc_solve: output time off the step grid");
    }
    out_steps.push_back(j);
  }

  std::vector<SpectralField> out(output_times.size());
  SpectralField next(d, radius);
  const long last = out_steps.empty() ? 0 : *std::max_element(out_steps.begin(), out_steps.end());
  for (long step = 0;; ++step) {
    for (std::size_t o = 0; o < out_steps.size(); ++o)
      if (out_steps[o] == step) out[o] = theta;
    if (step == last) break;
    next = theta;
    for (int k = 0; k < noise.n_w(); ++k) {
      ops[k].apply_add(theta.data(), next.data(), noise_sign * noise(k, static_cast<int>(step)));
    }
    for (std::size_t j = 0; j < next.size(); ++j) next.data()[j] *= decay[j];
    std::swap(theta, next);
    if (!theta.all_finite()) {
      throw InvariantBreach("direct_mc_solve: non-finite field at t=" + std::to_string((step + 1) * h));
    }
  }
  return out;
}

std::vector<double> moment_equation_second_moment(const SpectralField& theta0, const VelocityBasis& basis, double nu,
                                                  int n_w, const std::vector<double>& times, int radius, double dt) {
  if (nu < 0.0) throw std::invalid_argument("moment equation: requires nu >= 0");
  if (!(dt > 0.0)) throw std::invalid_argument("moment equation: requires dt > 0");
  if (n_w < 0 || static_cast<std::size_t>(n_w) > basis.size()) throw std::invalid_argument("moment equation: bad n_w");
  if (theta0.support_radius() > radius) throw GridOverflowError("moment equation: initial condition beyond radius");
  const VelocityBasis modes = basis.prefix(static_cast<std::size_t>(n_w));
  const Generator gen(nu, covariance_at_zero(modes).matrix);
  const int d = theta0.dim();
  const SpectralField th = theta0.resized(radius, Projection::Allow);
  const auto n = static_cast<Eigen::Index>(th.size());

  using Sparse = Eigen::SparseMatrix<Complex, Eigen::RowMajor>;
  std::vector<Sparse> M;
  for (int k = 0; k < n_w; ++k) {
    const ModeOperator op(modes.mode(k), d, radius, radius);
    std::vector<Eigen::Triplet<Complex>> trip;
    std::vector<Complex> e(static_cast<std::size_t>(n)), col(static_cast<std::size_t>(n));
    for (Eigen::Index c = 0; c < n; ++c) {
      std::fill(col.begin(), col.end(), Complex{});
      e[c] = 1.0;
      op.apply_add(e, col, 1.0);
      e[c] = 0.0;
      for (Eigen::Index r = 0; r < n; ++r)
        if (col[r] != Complex{}) trip.emplace_back(r, c, col[r]);
    }
    Sparse m(n, n);
    m.setFromTriplets(trip.begin(), trip.end());
    M.push_back(std::move(m));
  }
  Eigen::VectorXd rate(n);
  for (Eigen::Index j = 0; j < n; ++j) rate[j] = gen.rate(th.wavevector(static_cast<std::size_t>(j)));
  Eigen::MatrixXd e_full(n, n), e_half(n, n);
  for (Eigen::Index a = 0; a < n; ++a)
    for (Eigen::Index b = 0; b < n; ++b) {
      e_full(a, b) = std::exp(-(rate[a] + rate[b]) * dt);
      e_half(a, b) = std::exp(-(rate[a] + rate[b]) * 0.5 * dt);
    }
  auto force = [&](const Eigen::MatrixXcd& P) {
    Eigen::MatrixXcd F = Eigen::MatrixXcd::Zero(n, n);
    for (const Sparse& m : M) {
      const Eigen::MatrixXcd MP = m * P;
      F.noalias() += (m.conjugate() * MP.transpose()).transpose();
    }
    return F;
  };

  Eigen::VectorXcd v(n);
  for (Eigen::Index j = 0; j < n; ++j) v[j] = th.data()[static_cast<std::size_t>(j)];
  Eigen::MatrixXcd P = v * v.adjoint();
  const double vol = torus_volume(d);
  std::vector<double> out;
  double t = 0.0;
  for (double target : times) {
    if (target < t - 1e-12) throw std::invalid_argument("moment equation: times must increase");
    const long steps = std::lround((target - t) / dt);
    if (std::abs(t + steps * dt - target) > 1e-9) throw std::invalid_argument("moment equation: time off the dt grid");
    for (long s = 0; s < steps; ++s) {
      const Eigen::MatrixXcd k1 = force(P);
      const Eigen::MatrixXcd k2 = force(e_half.cwiseProduct(P + 0.5 * dt * k1));
      const Eigen::MatrixXcd k3 = force(e_half.cwiseProduct(P) + 0.5 * dt * k2);
      const Eigen::MatrixXcd k4 = force(e_full.cwiseProduct(P) + dt * e_half.cwiseProduct(k3));
      P = e_full.cwiseProduct(P) +
          dt / 6.0 * (e_full.cwiseProduct(k1) + 2.0 * e_half.cwiseProduct(k2 + k3) + k4);
    }
    t += steps * dt;
    out.push_back(vol * P.diagonal().real().sum());
  }
  return out;
}

void write_mc_csv(std::ostream& os, const std::vector<McEstimate>& rows) {
  os << "estimator,n_paths,dt_mc,value,std_error\n";
  for (const auto& r : rows) {
    os << r.estimator << ',' << r.n_paths << ',' << csv::num(r.dt_mc) << ',' << csv::num(r.value) << ','
       << csv::num(r.std_error) << '\n';
  }
}

namespace {

std::uint64_t complement_stream(std::uint64_t master_seed, std::uint64_t path) {
  return mix_seed(mix_seed(master_seed, 0x636f6d706c656dull), path);
}

std::pair<double, double> mean_and_se(const std::vector<double>& v) {
  const double n = static_cast<double>(v.size());
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= n;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, v.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0};
}

}  // namespace

McEstimate mc_second_moment(const SpectralField& theta0, const VelocityBasis& basis, const PropagatorConfig& cfg,
                            const McSettings& mc, int noise_sign) {
  if (mc.n_paths < 2) throw std::invalid_argument("mc_second_moment: requires n_paths >= 2");
  const TimeBasis tb(cfg.T, cfg.n_t);
  std::vector<double> values(static_cast<std::size_t>(mc.n_paths));
  parallel_for(values.size(), mc.workers, [&](std::size_t p) {
    const GaussianSample sample = GaussianSample::draw(cfg.n_t, cfg.n_w, mc.master_seed, p);
    const NoisePath noise =
        brownian_increments(sample, tb, cfg.n_w, mc.n_steps, complement_stream(mc.master_seed, p));
    const auto fields = direct_mc_solve(theta0, basis, cfg.nu, noise, {cfg.T}, mc.radius, noise_sign);
    values[p] = norm_squared(fields.front());
  });
  const auto [mean, se] = mean_and_se(values);
  return {"euler_maruyama_second_moment", mc.n_paths, cfg.T / mc.n_steps, mean, se};
}

std::vector<PathwiseRow> pathwise_gap(const ChaosSolution& sol, const VelocityBasis& basis, const McSettings& mc,
                                      bool with_complement) {
  if (mc.n_paths < 1) throw std::invalid_argument("pathwise_gap: requires n_paths >= 1");
  const PropagatorConfig& cfg = sol.config();
  const TimeBasis tb(cfg.T, cfg.n_t);
  const int levels = sol.max_level() + 1;
  std::vector<std::vector<double>> err(levels, std::vector<double>(static_cast<std::size_t>(mc.n_paths)));
  parallel_for(static_cast<std::size_t>(mc.n_paths), mc.workers, [&](std::size_t p) {
    const GaussianSample sample = GaussianSample::draw(cfg.n_t, cfg.n_w, mc.master_seed, p);
    const std::optional<std::uint64_t> seed =
        with_complement ? std::optional<std::uint64_t>(complement_stream(mc.master_seed, p)) : std::nullopt;
    const NoisePath noise = brownian_increments(sample, tb, cfg.n_w, mc.n_steps, seed);
    const SpectralField path =
        direct_mc_solve(sol.initial_condition(), basis, cfg.nu, noise, {cfg.T}, mc.radius,
                        sol.conventions().noise_sign)
            .front();
    for (int N = 0; N < levels; ++N) {
      const SpectralField chaos = reconstruct(sol, sample, cfg.T, N);
      const int r = std::max(chaos.radius(), path.radius());
      const SpectralField diff = path.resized(r) - chaos.resized(r);
      err[N][p] = std::sqrt(norm_squared(diff));
    }
  });
  std::vector<PathwiseRow> rows;
  for (int N = 0; N < levels; ++N) {
    const auto [mean, se] = mean_and_se(err[N]);
    rows.push_back({N, mean, se});
  }
  return rows;
}

}  // namespace chaosflow
