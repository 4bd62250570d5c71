#pragma once

// Chaos coefficients theta_alpha of the passive scalar: the lower-triangular
// system
//
//   d/dt theta_alpha = A theta_alpha + sum_{i,k} sqrt(alpha_i^k) m_i(t) M_k theta_{alpha - (i,k)},
//   theta_alpha(0)   = theta_0 [|alpha| = 0],
//
// with A = 0.5 (nu Laplacian + C^{ij}(0) D_i D_j).

#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "chaosflow/chaos_basis.hpp"
#include "chaosflow/spectral_field.hpp"
#include "chaosflow/velocity_model.hpp"

namespace chaosflow {

/// Sign pairing between the chaos coefficients and a pathwise solution.
/// The coefficients always follow the +M_k form of the propagator system;
/// noise_sign selects which Ito equation, d theta = A theta dt + s M_k theta dw_k,
/// the reconstructed field solves.
struct Conventions {
  HermiteConvention hermite = HermiteConvention::Rodrigues;
  int noise_sign = +1;

  /// (noise_sign * h)^{|alpha|}, h = -1 for the Rodrigues Hermite convention.
  double reconstruction_sign(int order) const;
  std::string describe() const;
};

struct PropagatorConfig {
  double nu = 1.0;
  double T = 1.0;
  int n_t = 3;
  int n_w = 8;
  int N = 3;
  double dt = 1.0 / 512.0;
  std::vector<double> output_times{1.0};

  void validate() const;
};

/// Elliptic part A = 0.5 (nu Laplacian + C^{ij} D_i D_j) as a Fourier multiplier.
class Generator {
 public:
  Generator(double nu, Eigen::MatrixXd c0_matrix);
  /// Isotropic C(0) = c0 I.
  Generator(double nu, double c0, int dim);

  double nu() const { return nu_; }
  const Eigen::MatrixXd& c0_matrix() const { return c0_; }
  /// Symmetric tensor D with A = -z^T D z in Fourier space.
  const Eigen::MatrixXd& diffusion() const { return diffusion_; }
  /// z^T D z >= 0
  double rate(const WaveVector& z) const;

 private:
  double nu_;
  Eigen::MatrixXd c0_;
  Eigen::MatrixXd diffusion_;
};

SpectralField apply_A(const SpectralField& f, double nu, double c0);
SpectralField apply_A(const SpectralField& f, const Generator& gen);

/// Levelwise time integrals of the energy terms, one value per output time.
struct LevelIntegrals {
  std::vector<double> gradient;  ///< sum_{|alpha|=n} int ||grad theta_alpha||^2
  std::vector<double> outflow;   ///< sum_{|alpha|=n} int sum_k ||M_k theta_alpha||^2
  std::vector<double> inflow;    ///< sum_{|alpha|=n} int 2 (F_alpha, theta_alpha), F the forcing
};

class ChaosSolution {
 public:
  const PropagatorConfig& config() const { return config_; }
  const Conventions& conventions() const { return conventions_; }
  const Generator& generator() const { return generator_; }
  double c0() const { return c0_; }
  int dim() const { return dim_; }

  const std::vector<MultiIndex>& indices() const { return indices_; }
  std::size_t rank(const MultiIndex& alpha) const;
  int max_level() const { return config_.N; }
  /// Ranks [begin, end) of level n.
  std::pair<std::size_t, std::size_t> level_range(int n) const;

  /// Snapped output times.
  const std::vector<double>& times() const { return times_; }
  /// Index of an output time; throws for times not in the output set.
  std::size_t time_index(double t) const;

  const SpectralField& coefficient(std::size_t rank, std::size_t time_index) const;
  const SpectralField& initial_condition() const { return theta0_; }
  const LevelIntegrals& level_integrals(int n) const { return integrals_.at(n); }

 private:
  friend ChaosSolution solve_propagator(const SpectralField&, const VelocityBasis&, const PropagatorConfig&,
                                        const GridSpec&, const Conventions&, int);

  ChaosSolution(PropagatorConfig cfg, Conventions conv, Generator gen)
      : config_(std::move(cfg)), conventions_(conv), generator_(std::move(gen)) {}

  PropagatorConfig config_;
  Conventions conventions_;
  Generator generator_;
  double c0_ = 0.0;
  int dim_ = 0;
  SpectralField theta0_;
  std::vector<MultiIndex> indices_;
  std::unordered_map<MultiIndex, std::size_t, MultiIndexHash> rank_;
  std::vector<std::size_t> level_start_;
  std::vector<double> times_;
  std::vector<std::vector<SpectralField>> fields_;  // [time][rank]
  std::vector<LevelIntegrals> integrals_;           // [level]
};

/// Integrates all levels together with a fourth-order integrating-factor
/// Runge-Kutta scheme: the semigroup of A is applied exactly and only the
/// level coupling is discretized. Level n only reads levels n and n-1, so
/// the triangular structure survives the joint stepping.
///
/// Uses the first cfg.n_w modes of the basis; C(0) is computed from those
/// modes. Throws GridOverflowError when base_radius + N * max|z_k| exceeds the
/// grid cap, and InvariantBreach when a coefficient becomes non-finite.
ChaosSolution solve_propagator(const SpectralField& theta0, const VelocityBasis& basis, const PropagatorConfig& cfg,
                               const GridSpec& grid, const Conventions& conv = {}, int workers = 1);

/// sum_{|alpha| <= max_order} theta_alpha(t) xi_alpha(sample), signed per the
/// conventions; max_order < 0 means all levels.
SpectralField reconstruct(const ChaosSolution& sol, const GaussianSample& sample, double t, int max_order = -1);

struct ChaosMoments {
  SpectralField mean;
  double second_moment_l2 = 0.0;
  double grad_second_moment = 0.0;
};

ChaosMoments chaos_moments(const ChaosSolution& sol, double t);

}  // namespace chaosflow
