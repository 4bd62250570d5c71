#pragma once

// Isotropic Gaussian velocity field, white in time, with spectral density
//
//   C^(z) = A0 (1+|z|^2)^{-(d+alpha)/2} [ a zz^T/|z|^2 + b/(d-1) (I - zz^T/|z|^2) ]
//
// realized on the torus by a finite family of divergence-free single-mode
// fields sigma_k(x) = s e {cos|sin}(z.x).

#include <iosfwd>
#include <vector>

#include <Eigen/Dense>

#include "chaosflow/spectral_field.hpp"

namespace chaosflow {

struct CovarianceSpec {
  double A0 = 1.0;
  double a = 0.0;      ///< weight of the gradient (longitudinal) part
  double b = 1.0;      ///< weight of the solenoidal part
  double alpha = 1.0;  ///< spectral exponent, 0 < alpha < 2
  int dim = 2;

  void validate() const;
};

/// Matrix-valued spectral density at a nonzero frequency.
Eigen::MatrixXd spectral_density(const CovarianceSpec& spec, const Eigen::VectorXd& z);
Eigen::MatrixXd spectral_density(const CovarianceSpec& spec, const WaveVector& z);

/// Scalar weight of the solenoidal projector, A0 b / ((d-1) (1+|z|^2)^{(d+alpha)/2}).
double solenoidal_weight(const CovarianceSpec& spec, double z_norm_squared);

struct VelocityMode {
  WaveVector wavevector;
  Eigen::VectorXd polarization;  ///< unit, orthogonal to wavevector
  double amplitude = 0.0;        ///< sqrt(2 * solenoidal_weight)
  Parity parity = Parity::Cos;

  /// sigma_k(x) as a d-vector.
  Eigen::VectorXd evaluate(std::span<const double> x) const;
  /// Component j of sigma_k as a spectral field on a cube of the given radius.
  SpectralField component(int j, int radius) const;
};

class VelocityBasis {
 public:
  VelocityBasis(CovarianceSpec spec, int shell_radius, std::vector<VelocityMode> modes);

  const CovarianceSpec& spec() const { return spec_; }
  int shell_radius() const { return shell_radius_; }
  int dim() const { return spec_.dim; }
  std::size_t size() const { return modes_.size(); }
  const VelocityMode& mode(std::size_t k) const { return modes_.at(k); }
  const std::vector<VelocityMode>& modes() const { return modes_; }
  /// Largest |z|_inf over the modes; 0 for an empty basis.
  int max_shift() const;

  /// The first n modes, in basis order.
  VelocityBasis prefix(std::size_t n) const;

  /// One row per mode: index, z components, polarization, amplitude, parity.
  void write_csv(std::ostream& os) const;

 private:
  CovarianceSpec spec_;
  int shell_radius_;
  std::vector<VelocityMode> modes_;
};

/// Nonzero z with |z|_inf <= R whose first nonzero component is positive,
/// in ascending lexicographic order.
std::vector<WaveVector> half_lattice(int dim, int shell_radius);

/// Orthonormal basis of the complement of z, d-1 vectors.
std::vector<Eigen::VectorXd> transverse_polarizations(const WaveVector& z);

VelocityBasis build_divergence_free_basis(const CovarianceSpec& spec, int shell_radius);

struct CovarianceAtZero {
  Eigen::MatrixXd matrix;
  double c0 = 0.0;  ///< trace / d
};

/// sum_k sigma_k(x) sigma_k(x)^T, which is independent of x.
CovarianceAtZero covariance_at_zero(const VelocityBasis& basis);

/// Truncated lattice covariance sum_{|z|_inf<=R, z != 0} C^(z) e^{i z.r} at separation r.
Eigen::MatrixXd lattice_covariance(const CovarianceSpec& spec, int shell_radius, std::span<const double> r);

/// M_k f = sigma_k . grad f, computed as a gradient followed by an exact
/// carrier product. The result lives on radius(f) + |z_k|_inf.
SpectralField apply_Mk(const VelocityBasis& basis, std::size_t k, const SpectralField& f,
                       const GridSpec& grid);

/// sum_k ||M_k f||^2 evaluated as the quadratic form (C(0) grad f, grad f).
double advective_energy(const Eigen::MatrixXd& c0_matrix, const SpectralField& f);

/// Tabulated M_k between two fixed cube radii. Output modes beyond out_radius
/// are dropped, so callers that need exactness pick out_radius >= in_radius + |z_k|_inf.
class ModeOperator {
 public:
  ModeOperator(const VelocityMode& mode, int dim, int in_radius, int out_radius);

  int in_radius() const { return in_radius_; }
  int out_radius() const { return out_radius_; }

  /// out += scale * M_k in
  void apply_add(std::span<const Complex> in, std::span<Complex> out, double scale) const;

 private:
  struct Entry {
    std::size_t out;
    std::ptrdiff_t from_minus;  ///< index of w - z in the input cube or -1
    std::ptrdiff_t from_plus;   ///< index of w + z or -1
    Complex weight;
  };
  int in_radius_;
  int out_radius_;
  Parity parity_;
  std::vector<Entry> entries_;
};

}  // namespace chaosflow
