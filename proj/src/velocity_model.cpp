#include "chaosflow/velocity_model.hpp"

#include <cmath>
#include <ostream>

#include "chaosflow/csv.hpp"

namespace chaosflow {

void CovarianceSpec::validate() const {
  if (dim < 2) throw std::invalid_argument("covariance: dimension d must be >= 2");
  if (dim > kMaxDim) throw std::invalid_argument("covariance: dimension above supported maximum");
  if (!(alpha > 0.0 && alpha < 2.0)) throw std::invalid_argument("covariance: requires 0 < alpha < 2");
  if (!(A0 > 0.0)) throw std::invalid_argument("covariance: requires A0 > 0");
  if (a < 0.0 || b < 0.0) throw std::invalid_argument("covariance: requires a >= 0 and b >= 0");
  if (!(a + b > 0.0)) throw std::invalid_argument("covariance: requires a + b > 0");
}

double solenoidal_weight(const CovarianceSpec& spec, double z_norm_squared) {
  return spec.A0 * spec.b / ((spec.dim - 1) * std::pow(1.0 + z_norm_squared, 0.5 * (spec.dim + spec.alpha)));
}

Eigen::MatrixXd spectral_density(const CovarianceSpec& spec, const Eigen::VectorXd& z) {
  spec.validate();
  if (z.size() != spec.dim) throw std::invalid_argument("spectral_density: dimension mismatch");
  const double zz = z.squaredNorm();
  if (zz == 0.0) throw std::invalid_argument("spectral_density: z = 0 has no projector");
  const double decay = spec.A0 / std::pow(1.0 + zz, 0.5 * (spec.dim + spec.alpha));
  const Eigen::MatrixXd longitudinal = z * z.transpose() / zz;
  const Eigen::MatrixXd transverse = Eigen::MatrixXd::Identity(spec.dim, spec.dim) - longitudinal;
  return decay * (spec.a * longitudinal + spec.b / (spec.dim - 1) * transverse);
}

Eigen::MatrixXd spectral_density(const CovarianceSpec& spec, const WaveVector& z) {
  Eigen::VectorXd v(z.dim());
  for (int j = 0; j < z.dim(); ++j) v[j] = z[j];
  return spectral_density(spec, v);
}

// VelocityMode
// -----------------------------------------------------------------------------

Eigen::VectorXd VelocityMode::evaluate(std::span<const double> x) const {
  double phase = 0.0;
  for (int j = 0; j < wavevector.dim(); ++j) phase += wavevector[j] * x[j];
  const double carrier = parity == Parity::Cos ? std::cos(phase) : std::sin(phase);
  return amplitude * carrier * polarization;
}

SpectralField VelocityMode::component(int j, int radius) const {
  const int d = wavevector.dim();
  const double amp = amplitude * polarization[j];
  return parity == Parity::Cos ? SpectralField::cosine(d, radius, wavevector, amp)
                               : SpectralField::sine(d, radius, wavevector, amp);
}

// VelocityBasis
// -----------------------------------------------------------------------------

VelocityBasis::VelocityBasis(CovarianceSpec spec, int shell_radius, std::vector<VelocityMode> modes)
    : spec_(spec), shell_radius_(shell_radius), modes_(std::move(modes)) {}

int VelocityBasis::max_shift() const {
  int m = 0;
  for (const auto& mode : modes_) m = std::max(m, mode.wavevector.max_norm());
  return m;
}

VelocityBasis VelocityBasis::prefix(std::size_t n) const {
  if (n > modes_.size()) {
    throw std::invalid_argument("velocity basis has " + std::to_string(modes_.size()) +
                                " modes, requested " + std::to_string(n));
  }
  return VelocityBasis(spec_, shell_radius_, std::vector<VelocityMode>(modes_.begin(), modes_.begin() + n));
}

void VelocityBasis::write_csv(std::ostream& os) const {
  const int d = dim();
  os << "mode";
  for (int j = 0; j < d; ++j) os << ",z" << j + 1;
  for (int j = 0; j < d; ++j) os << ",e" << j + 1;
  os << ",amplitude,parity\n";
  for (std::size_t k = 0; k < modes_.size(); ++k) {
    const auto& m = modes_[k];
    os << k;
    for (int j = 0; j < d; ++j) os << ',' << m.wavevector[j];
    for (int j = 0; j < d; ++j) os << ',' << csv::num(m.polarization[j]);
    os << ',' << csv::num(m.amplitude) << ',' << to_string(m.parity) << '\n';
  }
}

std::vector<WaveVector> half_lattice(int dim, int shell_radius) {
  std::vector<WaveVector> out;
  WaveVector z(dim);
  for (int j = 0; j < dim; ++j) z[j] = -shell_radius;
  while (true) {
    int first = 0;
    for (int j = 0; j < dim && first == 0; ++j) first = z[j];
    if (first > 0) out.push_back(z);
    int j = dim - 1;
    while (j >= 0 && z[j] == shell_radius) z[j--] = -shell_radius;
    if (j < 0) break;
    ++z[j];
  }
  return out;
}

std::vector<Eigen::VectorXd> transverse_polarizations(const WaveVector& z) {
  const int d = z.dim();
  if (z.is_zero()) throw std::invalid_argument("transverse_polarizations: z = 0");
  Eigen::VectorXd zhat(d);
  for (int j = 0; j < d; ++j) zhat[j] = z[j];
  zhat.normalize();

  if (d == 2) return {Eigen::Vector2d(-zhat[1], zhat[0])};

  // Drop the axis most parallel to z (lowest index on ties), then Gram-Schmidt
  // the remaining axes against z and each other.
  int dropped = 0;
  for (int j = 1; j < d; ++j)
    if (std::abs(z[j]) > std::abs(z[dropped])) dropped = j;

  std::vector<Eigen::VectorXd> frame;
  for (int j = 0; j < d; ++j) {
    if (j == dropped) continue;
    Eigen::VectorXd e = Eigen::VectorXd::Unit(d, j);
    e -= e.dot(zhat) * zhat;
    for (const auto& prev : frame) e -= e.dot(prev) * prev;
    frame.push_back(e.normalized());
  }
  return frame;
}

VelocityBasis build_divergence_free_basis(const CovarianceSpec& spec, int shell_radius) {
  spec.validate();
  if (spec.a != 0.0) {
    throw std::invalid_argument("unsupported regime: velocity basis is only built for a = 0 (divergence-free)");
  }
  if (shell_radius < 1) throw std::invalid_argument("shell_radius must be >= 1");
  std::vector<VelocityMode> modes;
  for (const auto& z : half_lattice(spec.dim, shell_radius)) {
    const double amp = std::sqrt(2.0 * solenoidal_weight(spec, static_cast<double>(z.norm_squared())));
    for (const auto& e : transverse_polarizations(z)) {
      modes.push_back({z, e, amp, Parity::Cos});
      modes.push_back({z, e, amp, Parity::Sin});
    }
  }
  return VelocityBasis(spec, shell_radius, std::move(modes));
}

CovarianceAtZero covariance_at_zero(const VelocityBasis& basis) {
  const int d = basis.dim();
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(d, d);
  // cos^2 + sin^2 = 1 across each parity pair, so each mode carries half of s^2 e e^T.
  for (const auto& m : basis.modes()) c += 0.5 * m.amplitude * m.amplitude * m.polarization * m.polarization.transpose();
  return {c, c.trace() / d};
}

Eigen::MatrixXd lattice_covariance(const CovarianceSpec& spec, int shell_radius, std::span<const double> r) {
  const int d = spec.dim;
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(d, d);
  for (const auto& z : half_lattice(d, shell_radius)) {
    double phase = 0.0;
    for (int j = 0; j < d; ++j) phase += z[j] * r[j];
    // z and -z contribute the same matrix with conjugate phases.
    c += 2.0 * std::cos(phase) * spectral_density(spec, z);
  }
  return c;
}

SpectralField apply_Mk(const VelocityBasis& basis, std::size_t k, const SpectralField& f, const GridSpec& grid) {
  const VelocityMode& m = basis.mode(k);
  if (f.dim() != basis.dim()) throw std::invalid_argument("apply_Mk: dimension mismatch");
  const auto grad = gradient(f);
  SpectralField directional(f.dim(), f.radius());
  for (int j = 0; j < f.dim(); ++j) directional.axpy(m.polarization[j], grad[j]);
  SpectralField out = mode_multiply_shift(directional, m.wavevector, m.parity,
                                          f.radius() + m.wavevector.max_norm(), grid);
  out *= m.amplitude;
  return out;
}

double advective_energy(const Eigen::MatrixXd& c0_matrix, const SpectralField& f) {
  const int d = f.dim();
  const auto c = f.data();
  double sum = 0.0;
  for (std::size_t n = 0; n < c.size(); ++n) {
    if (c[n] == Complex{}) continue;
    const WaveVector z = f.wavevector(n);
    double q = 0.0;
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) q += z[i] * c0_matrix(i, j) * z[j];
    sum += q * std::norm(c[n]);
  }
  return torus_volume(d) * sum;
}

// ModeOperator
// -----------------------------------------------------------------------------

ModeOperator::ModeOperator(const VelocityMode& mode, int dim, int in_radius, int out_radius)
    : in_radius_(in_radius), out_radius_(out_radius), parity_(mode.parity) {
  const SpectralField in_shape(dim, in_radius);
  const SpectralField out_shape(dim, out_radius);
  const WaveVector& z = mode.wavevector;
  for (std::size_t n = 0; n < out_shape.size(); ++n) {
    const WaveVector w = out_shape.wavevector(n);
    double ew = 0.0;
    for (int j = 0; j < dim; ++j) ew += mode.polarization[j] * w[j];
    if (ew == 0.0) continue;
    const WaveVector lo = w - z;
    const WaveVector hi = w + z;
    const std::ptrdiff_t from_minus = in_shape.contains(lo) ? static_cast<std::ptrdiff_t>(in_shape.flat_index(lo)) : -1;
    const std::ptrdiff_t from_plus = in_shape.contains(hi) ? static_cast<std::ptrdiff_t>(in_shape.flat_index(hi)) : -1;
    if (from_minus < 0 && from_plus < 0) continue;
    // e.(w -+ z) = e.w since e is orthogonal to z.
    const Complex weight = parity_ == Parity::Cos ? Complex(0.0, 0.5 * mode.amplitude * ew)
                                                  : Complex(0.5 * mode.amplitude * ew, 0.0);
    entries_.push_back({n, from_minus, from_plus, weight});
  }
}

void ModeOperator::apply_add(std::span<const Complex> in, std::span<Complex> out, double scale) const {
  const double sign = parity_ == Parity::Cos ? 1.0 : -1.0;
  for (const auto& e : entries_) {
    Complex acc{};
    if (e.from_minus >= 0) acc += in[e.from_minus];
    if (e.from_plus >= 0) acc += sign * in[e.from_plus];
    out[e.out] += scale * e.weight * acc;
  }
}

}  // namespace chaosflow
