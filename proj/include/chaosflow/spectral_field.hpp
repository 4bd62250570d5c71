#pragma once

// Band-limited real scalar fields on the 2*pi-periodic d-torus, stored as
// Fourier amplitudes on the cube |z|_inf <= radius.

#include <array>
#include <complex>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "chaosflow/errors.hpp"

namespace chaosflow {

inline constexpr int kMaxDim = 4;

using Complex = std::complex<double>;

/// Integer lattice frequency on the 2*pi-torus.
class WaveVector {
 public:
  WaveVector() = default;
  explicit WaveVector(int dim);
  WaveVector(std::initializer_list<int> components);
  explicit WaveVector(std::span<const int> components);

  int dim() const { return dim_; }
  int operator[](int j) const { return c_[j]; }
  int& operator[](int j) { return c_[j]; }

  int max_norm() const;
  long norm_squared() const;
  bool is_zero() const { return max_norm() == 0; }

  WaveVector operator-() const;
  friend WaveVector operator+(const WaveVector& a, const WaveVector& b);
  friend WaveVector operator-(const WaveVector& a, const WaveVector& b);

  /// Lexicographic on components (after dimension).
  friend auto operator<=>(const WaveVector&, const WaveVector&) = default;
  friend bool operator==(const WaveVector&, const WaveVector&) = default;

  std::string to_string() const;

 private:
  int dim_ = 0;
  std::array<int, kMaxDim> c_{};
};

/// Discretization of the torus: fields start at base_radius and may grow up to
/// growth_cap through products with velocity modes.
struct GridSpec {
  int dim = 2;
  int base_radius = 4;
  int growth_cap = 8;

  void validate() const;
};

enum class Parity { Cos, Sin };

/// Whether an operation may drop output modes beyond the requested radius.
enum class Projection { Forbid, Allow };

const char* to_string(Parity p);

class SpectralField {
 public:
  SpectralField() = default;
  SpectralField(int dim, int radius);

  static SpectralField constant(int dim, int radius, double value);
  /// amplitude * cos(z.x)
  static SpectralField cosine(int dim, int radius, const WaveVector& z, double amplitude = 1.0);
  /// amplitude * sin(z.x)
  static SpectralField sine(int dim, int radius, const WaveVector& z, double amplitude = 1.0);

  int dim() const { return dim_; }
  int radius() const { return radius_; }
  int side() const { return 2 * radius_ + 1; }
  std::size_t size() const { return coeffs_.size(); }

  bool contains(const WaveVector& z) const { return z.max_norm() <= radius_; }
  std::size_t flat_index(const WaveVector& z) const;
  WaveVector wavevector(std::size_t flat) const;

  /// Amplitude of e^{i z.x}; zero for z outside the stored cube.
  Complex coeff(const WaveVector& z) const;
  void set(const WaveVector& z, Complex value);
  /// Adds a*cos(z.x) + b*sin(z.x), keeping the reality constraint.
  void add_real_mode(const WaveVector& z, double cos_amp, double sin_amp);

  std::span<const Complex> data() const { return coeffs_; }
  std::span<Complex> data() { return coeffs_; }

  /// Point value at x in physical space.
  double evaluate(std::span<const double> x) const;

  /// coeff(-z) == conj(coeff(z)) within tol for every stored z.
  bool is_real(double tol = 1e-12) const;
  bool all_finite() const;
  /// Largest |z|_inf carrying a coefficient above tol in magnitude; -1 if none.
  int support_radius(double tol = 0.0) const;

  /// Copy onto a cube of another radius; shrinking requires Projection::Allow
  /// unless the dropped coefficients are all exactly zero.
  SpectralField resized(int radius, Projection proj = Projection::Forbid) const;

  SpectralField& operator+=(const SpectralField& other);
  SpectralField& operator-=(const SpectralField& other);
  SpectralField& operator*=(double s);
  /// this += a * x
  SpectralField& axpy(double a, const SpectralField& x);

  friend SpectralField operator+(SpectralField a, const SpectralField& b) { return a += b; }
  friend SpectralField operator-(SpectralField a, const SpectralField& b) { return a -= b; }
  friend SpectralField operator*(double s, SpectralField a) { return a *= s; }

 private:
  void require_compatible(const SpectralField& other) const;

  int dim_ = 0;
  int radius_ = 0;
  std::vector<Complex> coeffs_;
};

/// Real field with independent standard normal cos/sin amplitudes on every
/// |z|_inf <= band_radius, stored on a cube of the given radius.
SpectralField random_band_field(int dim, int band_radius, int radius, std::uint64_t seed, std::uint64_t stream = 0);

/// (2*pi)^d, the torus volume.
double torus_volume(int dim);

/// L2 inner product on the torus via Parseval. Fields may have different radii.
double inner_product(const SpectralField& f, const SpectralField& g);
double norm_squared(const SpectralField& f);

std::vector<SpectralField> gradient(const SpectralField& f);
/// ||grad f||^2 evaluated from the spectrum directly.
double gradient_norm_squared(const SpectralField& f);
SpectralField divergence(std::span<const SpectralField> v);

/// exp(-kappa |z|^2 t) multiplier.
SpectralField heat_semigroup_apply(const SpectralField& f, double t, double kappa);
/// exp(-t z^T D z) multiplier for a symmetric positive semidefinite D.
SpectralField heat_semigroup_apply(const SpectralField& f, double t, const Eigen::MatrixXd& diffusion);

/// Exact product of f with cos(z.x) or sin(z.x), written on a cube of radius
/// out_radius.
SpectralField mode_multiply_shift(const SpectralField& f, const WaveVector& z, Parity parity,
                                  int out_radius, const GridSpec& grid,
                                  Projection proj = Projection::Forbid);

}  // namespace chaosflow
