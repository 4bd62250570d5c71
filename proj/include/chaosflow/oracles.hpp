#pragma once

// Brute-force checks for the propagator: iterated integrals over the time
// simplex, the energy ledger, truncation tails, and a direct Euler-Maruyama
// solver of the Ito equation.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "chaosflow/chaos_basis.hpp"
#include "chaosflow/propagator.hpp"
#include "chaosflow/spectral_field.hpp"
#include "chaosflow/velocity_model.hpp"

namespace chaosflow {

/// Refusal threshold for the iterated-integral oracles, counted in operator
/// applications (simplex nodes times mode tuples).
inline constexpr double kDefaultOracleBudget = 5.0e7;

/// Raised when an oracle evaluation would exceed its budget.
class OracleBudgetError : public std::runtime_error {
 public:
  OracleBudgetError(const std::string& what, double estimated_cost)
      : std::runtime_error(what), cost_(estimated_cost) {}
  double estimated_cost() const { return cost_; }

 private:
  double cost_;
};

/// Sum over all k-tuples of int_{0<s_1<..<s_N<t} ||T_{t-s_N} M_{k_N} ... M_{k_1} T_{s_1} theta0||^2,
/// i.e. the level-N energy for a complete time basis. Every mode of `basis` is used.
double iterated_integral_level_norm(const SpectralField& theta0, const VelocityBasis& basis, const Generator& gen,
                                    int N, double t, int quad_order, double budget = kDefaultOracleBudget);
double iterated_integral_level_norm(const SpectralField& theta0, const VelocityBasis& basis, double nu, double c0,
                                    int N, double t, int quad_order, double budget = kDefaultOracleBudget);

/// Level-N coefficients for the finite time basis `tb`:
///   theta_alpha(t) = sqrt(alpha!) sum over orderings (i_j, k_j) of alpha of
///   int_simplex prod_j m_{i_j}(s_j) T_{t-s_N} M_{k_N} ... M_{k_1} T_{s_1} theta0.
/// Returned in graded enumeration order.
std::vector<std::pair<MultiIndex, SpectralField>> iterated_integral_coefficients(
    const SpectralField& theta0, const VelocityBasis& basis, const Generator& gen, const TimeBasis& tb, int N, double t,
    int quad_order, double budget = kDefaultOracleBudget);

/// sum_{|alpha|=N} ||theta_alpha(t)||^2 for the finite time basis.
double iterated_integral_level_norm(const SpectralField& theta0, const VelocityBasis& basis, const Generator& gen,
                                    const TimeBasis& tb, int N, double t, int quad_order,
                                    double budget = kDefaultOracleBudget);

/// F_N(t) = int_0^t sum_{|alpha|=N} sum_k ||M_k theta_alpha(s)||^2 ds as an
/// (N+1)-fold iterated integral, with M_k applied directly. With tb set the
/// finite time basis is used, otherwise the complete one.
double iterated_integral_tail(const SpectralField& theta0, const VelocityBasis& basis, const Generator& gen, int N,
                              double t, int quad_order, const std::optional<TimeBasis>& tb = std::nullopt,
                              double budget = kDefaultOracleBudget);

// Energy ledger
// -----------------------------------------------------------------------------

struct EnergyRow {
  double t = 0.0;
  double e_l2 = 0.0;         ///< sum_{|alpha|<=N} ||theta_alpha(t)||^2
  double dissipation = 0.0;  ///< nu sum_{|alpha|<=N} int_0^t ||grad theta_alpha||^2
  double tail = 0.0;         ///< F_N(t)
  /// sum_{n=1..N} int_0^t (outflow of level n-1 - inflow of level n): energy the
  /// finite time basis fails to pass between levels; zero for a complete basis.
  double time_leak = 0.0;
  /// e_l2 + dissipation + tail - ||theta0||^2
  double residual = 0.0;
  /// residual + time_leak: the balance of the truncated system itself.
  double closed_residual = 0.0;
};

struct EnergyReport {
  double theta0_norm2 = 0.0;
  double nu = 0.0;
  int N = 0;
  std::vector<EnergyRow> rows;

  double max_abs_residual() const;
  double max_abs_closed_residual() const;
  /// Columns t,e_l2,dissipation,tail,time_leak,residual,closed_residual.
  void write_csv(std::ostream& os) const;
};

EnergyReport energy_balance_report(const ChaosSolution& sol);

struct TailDecayRow {
  int N = 0;
  double tail = 0.0;       ///< F_N(T)
  double deficit = 0.0;    ///< ||theta0||^2 - E||theta_N||^2(T) - nu int E||grad theta_N||^2
  double time_leak = 0.0;  ///< leak of the truncation at N
  double e_l2 = 0.0;       ///< E||theta_N||^2(T)
  double dissipation = 0.0;
};

struct TailDecayStudy {
  std::vector<TailDecayRow> rows;  ///< N = 0..N_max
  /// Set for nu = 0, where no decay is guaranteed.
  bool flagged = false;
  std::string note;

  void write_csv(std::ostream& os) const;
};

/// One propagator run at N_max; levels n <= N of that run coincide with a run at N.
TailDecayStudy tail_decay_study(const SpectralField& theta0, const VelocityBasis& basis, const PropagatorConfig& cfg,
                                const GridSpec& grid, int workers = 1);
TailDecayStudy tail_decay_study(const ChaosSolution& sol);

// Monte Carlo
// -----------------------------------------------------------------------------

/// Brownian increments dw_k over a uniform grid on [0, T].
class NoisePath {
 public:
  NoisePath(int n_w, int n_steps, double T);

  int n_w() const { return n_w_; }
  int n_steps() const { return n_steps_; }
  double dt() const { return T_ / n_steps_; }
  double horizon() const { return T_; }
  /// Increment of noise k (0-based) over step j.
  double& operator()(int k, int j) { return dw_[static_cast<std::size_t>(k) * n_steps_ + j]; }
  double operator()(int k, int j) const { return dw_[static_cast<std::size_t>(k) * n_steps_ + j]; }

 private:
  int n_w_;
  int n_steps_;
  double T_;
  std::vector<double> dw_;
};

/// Increments of the Brownian motions seen by the sample. Without a
/// complement seed these are the increments of brownian_from_sample, i.e. the
/// projection of w_k onto the span of the first n_t time modes. With a seed
/// the part of w_k orthogonal to that span is drawn from its conditional law
/// given the sample, so the result is an exact Brownian increment sequence
/// whose time-mode coordinates are the sample.
NoisePath brownian_increments(const GaussianSample& sample, const TimeBasis& tb, int n_w, int n_steps,
                              std::optional<std::uint64_t> complement_seed = std::nullopt);

/// Euler-Maruyama in the interaction picture for
///   d theta = A theta dt + noise_sign sum_k M_k theta dw_k,
/// theta <- T_h (theta + noise_sign sum_k M_k theta dw_k), on a fixed cube of
/// radius `radius`; modes pushed beyond it are dropped. Uses the first
/// noise.n_w() modes of the basis. Returns the field at each output time,
/// snapped to the step grid.
std::vector<SpectralField> direct_mc_solve(const SpectralField& theta0, const VelocityBasis& basis, double nu,
                                           const NoisePath& noise, const std::vector<double>& output_times,
                                           int radius, int noise_sign = +1);

/// E||theta(t)||^2 from the closed equation for the covariance
/// P = E[theta^ theta^H] of the Fourier coefficients on a cube of the given radius,
///   P' = A P + P A^H + sum_k M_k P M_k^H,
/// with the same mode dropping as direct_mc_solve. Integrating-factor RK4 with step dt.
/// Uses the first n_w modes of the basis.
std::vector<double> moment_equation_second_moment(const SpectralField& theta0, const VelocityBasis& basis, double nu,
                                                  int n_w, const std::vector<double>& times, int radius, double dt);

struct McEstimate {
  std::string estimator;
  int n_paths = 0;
  double dt_mc = 0.0;
  double value = 0.0;
  double std_error = 0.0;
};

void write_mc_csv(std::ostream& os, const std::vector<McEstimate>& rows);

struct McSettings {
  int n_paths = 2000;
  int n_steps = 512;
  int radius = 8;
  std::uint64_t master_seed = 1;
  int workers = 1;
};

/// E||theta(T)||^2 over independent Brownian paths. Path p uses
/// GaussianSample::draw(n_t, n_w, master_seed, p) plus its conditional complement.
McEstimate mc_second_moment(const SpectralField& theta0, const VelocityBasis& basis, const PropagatorConfig& cfg,
                            const McSettings& mc, int noise_sign = +1);

struct PathwiseRow {
  int N = 0;
  double mean_error = 0.0;  ///< average over paths of ||theta_MC(T) - theta_chaos,N(T)||
  double std_error = 0.0;
};

/// Shared-noise comparison of the Monte Carlo path and the chaos reconstruction
/// truncated at N = 0..sol.max_level(), at time T.
std::vector<PathwiseRow> pathwise_gap(const ChaosSolution& sol, const VelocityBasis& basis, const McSettings& mc,
                                      bool with_complement = true);

}  // namespace chaosflow
