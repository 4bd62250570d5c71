#include "chaosflow/spectral_field.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "chaosflow/random.hpp"

namespace chaosflow {

namespace {

void require_dim(int dim) {
  if (dim < 1 || dim > kMaxDim) {
    throw std::invalid_argument("dimension must be in [1, " + std::to_string(kMaxDim) +
                                "], got " + std::to_string(dim));
  }
}

}  // namespace

// WaveVector
// -----------------------------------------------------------------------------

WaveVector::WaveVector(int dim) : dim_(dim) { require_dim(dim); }

WaveVector::WaveVector(std::initializer_list<int> components)
    : WaveVector(std::span<const int>(components.begin(), components.size())) {}

WaveVector::WaveVector(std::span<const int> components) : dim_(static_cast<int>(components.size())) {
  require_dim(dim_);
  std::copy(components.begin(), components.end(), c_.begin());
}

int WaveVector::max_norm() const {
  int m = 0;
  for (int j = 0; j < dim_; ++j) m = std::max(m, std::abs(c_[j]));
  return m;
}

long WaveVector::norm_squared() const {
  long s = 0;
  for (int j = 0; j < dim_; ++j) s += static_cast<long>(c_[j]) * c_[j];
  return s;
}

WaveVector WaveVector::operator-() const {
  WaveVector r = *this;
  for (int j = 0; j < dim_; ++j) r.c_[j] = -c_[j];
  return r;
}

WaveVector operator+(const WaveVector& a, const WaveVector& b) {
  if (a.dim_ != b.dim_) throw std::invalid_argument("wavevector dimension mismatch");
  WaveVector r = a;
  for (int j = 0; j < a.dim_; ++j) r.c_[j] += b.c_[j];
  return r;
}

WaveVector operator-(const WaveVector& a, const WaveVector& b) { return a + (-b); }

std::string WaveVector::to_string() const {
  std::ostringstream os;
  os << '(';
  for (int j = 0; j < dim_; ++j) os << (j ? "," : "") << c_[j];
  os << ')';
  return os.str();
}

// GridSpec
// -----------------------------------------------------------------------------

void GridSpec::validate() const {
  require_dim(dim);
  if (base_radius <= 0) throw std::invalid_argument("grid: base_radius must be > 0");
  if (growth_cap < base_radius) throw std::invalid_argument("grid: requires base_radius <= growth_cap");
}

const char* to_string(Parity p) { return p == Parity::Cos ? "cos" : "sin"; }

// SpectralField
// -----------------------------------------------------------------------------

SpectralField::SpectralField(int dim, int radius) : dim_(dim), radius_(radius) {
  require_dim(dim);
  if (radius < 0) throw std::invalid_argument("field radius must be >= 0");
  std::size_t n = 1;
  for (int j = 0; j < dim; ++j) n *= static_cast<std::size_t>(side());
  coeffs_.assign(n, Complex{});
}

SpectralField SpectralField::constant(int dim, int radius, double value) {
  SpectralField f(dim, radius);
  f.set(WaveVector(dim), value);
  return f;
}

SpectralField SpectralField::cosine(int dim, int radius, const WaveVector& z, double amplitude) {
  SpectralField f(dim, radius);
  f.add_real_mode(z, amplitude, 0.0);
  return f;
}

SpectralField SpectralField::sine(int dim, int radius, const WaveVector& z, double amplitude) {
  SpectralField f(dim, radius);
  f.add_real_mode(z, 0.0, amplitude);
  return f;
}

std::size_t SpectralField::flat_index(const WaveVector& z) const {
  if (z.dim() != dim_) throw std::invalid_argument("wavevector dimension mismatch");
  if (!contains(z)) throw std::out_of_range("wavevector " + z.to_string() + " outside field radius");
  std::size_t idx = 0;
  for (int j = 0; j < dim_; ++j) idx = idx * side() + static_cast<std::size_t>(z[j] + radius_);
  return idx;
}

WaveVector SpectralField::wavevector(std::size_t flat) const {
  WaveVector z(dim_);
  for (int j = dim_ - 1; j >= 0; --j) {
    z[j] = static_cast<int>(flat % side()) - radius_;
    flat /= side();
  }
  return z;
}

Complex SpectralField::coeff(const WaveVector& z) const {
  if (z.dim() != dim_) throw std::invalid_argument("wavevector dimension mismatch");
  return contains(z) ? coeffs_[flat_index(z)] : Complex{};
}

void SpectralField::set(const WaveVector& z, Complex value) { coeffs_[flat_index(z)] = value; }

void SpectralField::add_real_mode(const WaveVector& z, double cos_amp, double sin_amp) {
  if (z.is_zero()) {
    coeffs_[flat_index(z)] += cos_amp;
    return;
  }
  // a cos + b sin = (a - i b)/2 e^{izx} + (a + i b)/2 e^{-izx}
  coeffs_[flat_index(z)] += Complex(0.5 * cos_amp, -0.5 * sin_amp);
  coeffs_[flat_index(-z)] += Complex(0.5 * cos_amp, 0.5 * sin_amp);
}

double SpectralField::evaluate(std::span<const double> x) const {
  if (static_cast<int>(x.size()) != dim_) throw std::invalid_argument("point dimension mismatch");
  double sum = 0.0;
  for (std::size_t n = 0; n < coeffs_.size(); ++n) {
    if (coeffs_[n] == Complex{}) continue;
    const WaveVector z = wavevector(n);
    double phase = 0.0;
    for (int j = 0; j < dim_; ++j) phase += z[j] * x[j];
    sum += (coeffs_[n] * std::polar(1.0, phase)).real();
  }
  return sum;
}

bool SpectralField::is_real(double tol) const {
  // The cube is symmetric, so -z has flat index size-1-n.
  const std::size_t n_total = coeffs_.size();
  for (std::size_t n = 0; n < n_total; ++n) {
    if (std::abs(coeffs_[n_total - 1 - n] - std::conj(coeffs_[n])) > tol) return false;
  }
  return true;
}

bool SpectralField::all_finite() const {
  return std::all_of(coeffs_.begin(), coeffs_.end(),
                     [](Complex c) { return std::isfinite(c.real()) && std::isfinite(c.imag()); });
}

int SpectralField::support_radius(double tol) const {
  int r = -1;
  for (std::size_t n = 0; n < coeffs_.size(); ++n) {
    if (std::abs(coeffs_[n]) > tol) r = std::max(r, wavevector(n).max_norm());
  }
  return r;
}

SpectralField SpectralField::resized(int radius, Projection proj) const {
  SpectralField out(dim_, radius);
  for (std::size_t n = 0; n < coeffs_.size(); ++n) {
    const WaveVector z = wavevector(n);
    if (out.contains(z)) {
      out.coeffs_[out.flat_index(z)] = coeffs_[n];
    } else if (proj == Projection::Forbid && coeffs_[n] != Complex{}) {
      throw std::invalid_argument("resize to radius " + std::to_string(radius) +
                                  " would drop mode " + z.to_string());
    }
  }
  return out;
}

void SpectralField::require_compatible(const SpectralField& other) const {
  if (dim_ != other.dim_ || radius_ != other.radius_) {
    throw std::invalid_argument("field shape mismatch: (d=" + std::to_string(dim_) + ", K=" +
                                std::to_string(radius_) + ") vs (d=" + std::to_string(other.dim_) +
                                ", K=" + std::to_string(other.radius_) + ")");
  }
}

SpectralField& SpectralField::operator+=(const SpectralField& other) { return axpy(1.0, other); }
SpectralField& SpectralField::operator-=(const SpectralField& other) { return axpy(-1.0, other); }

SpectralField& SpectralField::operator*=(double s) {
  for (auto& c : coeffs_) c *= s;
  return *this;
}

SpectralField& SpectralField::axpy(double a, const SpectralField& x) {
  require_compatible(x);
  for (std::size_t n = 0; n < coeffs_.size(); ++n) coeffs_[n] += a * x.coeffs_[n];
  return *this;
}

// Free operations
// -----------------------------------------------------------------------------

double torus_volume(int dim) { return std::pow(2.0 * std::numbers::pi, dim); }

double inner_product(const SpectralField& f, const SpectralField& g) {
  if (f.dim() != g.dim()) throw std::invalid_argument("inner_product: dimension mismatch");
  double sum = 0.0;
  if (f.radius() == g.radius()) {
    const auto a = f.data();
    const auto b = g.data();
    for (std::size_t n = 0; n < a.size(); ++n) sum += a[n].real() * b[n].real() + a[n].imag() * b[n].imag();
  } else {
    const SpectralField& small = f.radius() < g.radius() ? f : g;
    const SpectralField& large = f.radius() < g.radius() ? g : f;
    const auto a = small.data();
    for (std::size_t n = 0; n < a.size(); ++n) {
      const Complex b = large.coeff(small.wavevector(n));
      sum += a[n].real() * b.real() + a[n].imag() * b.imag();
    }
  }
  return torus_volume(f.dim()) * sum;
}

double norm_squared(const SpectralField& f) { return inner_product(f, f); }

std::vector<SpectralField> gradient(const SpectralField& f) {
  std::vector<SpectralField> grad(f.dim(), SpectralField(f.dim(), f.radius()));
  const auto c = f.data();
  for (std::size_t n = 0; n < c.size(); ++n) {
    const WaveVector z = f.wavevector(n);
    for (int j = 0; j < f.dim(); ++j) grad[j].data()[n] = Complex(0.0, z[j]) * c[n];
  }
  return grad;
}

double gradient_norm_squared(const SpectralField& f) {
  const auto c = f.data();
  double sum = 0.0;
  for (std::size_t n = 0; n < c.size(); ++n) {
    sum += static_cast<double>(f.wavevector(n).norm_squared()) * std::norm(c[n]);
  }
  return torus_volume(f.dim()) * sum;
}

SpectralField divergence(std::span<const SpectralField> v) {
  if (v.empty()) throw std::invalid_argument("divergence: empty vector field");
  const int d = v[0].dim();
  if (static_cast<int>(v.size()) != d) throw std::invalid_argument("divergence: need d components");
  for (const auto& c : v) {
    if (c.dim() != d || c.radius() != v[0].radius()) {
      throw std::invalid_argument("divergence: mismatched components");
    }
  }
  SpectralField out(d, v[0].radius());
  for (std::size_t n = 0; n < out.size(); ++n) {
    const WaveVector z = out.wavevector(n);
    Complex s{};
    for (int j = 0; j < d; ++j) s += Complex(0.0, z[j]) * v[j].data()[n];
    out.data()[n] = s;
  }
  return out;
}

SpectralField heat_semigroup_apply(const SpectralField& f, double t, double kappa) {
  if (t < 0.0) throw std::invalid_argument("heat semigroup: negative time");
  if (kappa < 0.0) throw std::invalid_argument("heat semigroup: negative diffusivity");
  SpectralField out = f;
  for (std::size_t n = 0; n < out.size(); ++n) {
    out.data()[n] *= std::exp(-kappa * static_cast<double>(f.wavevector(n).norm_squared()) * t);
  }
  return out;
}

SpectralField heat_semigroup_apply(const SpectralField& f, double t, const Eigen::MatrixXd& diffusion) {
  if (t < 0.0) throw std::invalid_argument("heat semigroup: negative time");
  if (diffusion.rows() != f.dim() || diffusion.cols() != f.dim()) {
    throw std::invalid_argument("heat semigroup: diffusion tensor shape mismatch");
  }
  SpectralField out = f;
  for (std::size_t n = 0; n < out.size(); ++n) {
    const WaveVector z = f.wavevector(n);
    double q = 0.0;
    for (int i = 0; i < f.dim(); ++i)
      for (int j = 0; j < f.dim(); ++j) q += z[i] * diffusion(i, j) * z[j];
    if (q < 0.0) throw std::invalid_argument("heat semigroup: diffusion tensor not positive semidefinite");
    out.data()[n] *= std::exp(-q * t);
  }
  return out;
}

SpectralField mode_multiply_shift(const SpectralField& f, const WaveVector& z, Parity parity,
                                  int out_radius, const GridSpec& grid, Projection proj) {
  if (z.dim() != f.dim() || grid.dim != f.dim()) {
    throw std::invalid_argument("mode_multiply_shift: dimension mismatch");
  }
  if (out_radius > grid.growth_cap) {
    throw GridOverflowError("grid overflow: product needs radius " + std::to_string(out_radius) +
                            " but growth cap is " + std::to_string(grid.growth_cap));
  }
  if (proj == Projection::Forbid && out_radius < f.radius() + z.max_norm()) {
    throw std::invalid_argument("mode_multiply_shift: out_radius " + std::to_string(out_radius) +
                                " cannot hold product of radius " + std::to_string(f.radius()) +
                                " field with mode " + z.to_string());
  }
  // cos: c/2 to v+z and v-z;  sin: -i c/2 to v+z, +i c/2 to v-z
  const Complex to_plus = parity == Parity::Cos ? Complex(0.5, 0.0) : Complex(0.0, -0.5);
  const Complex to_minus = parity == Parity::Cos ? Complex(0.5, 0.0) : Complex(0.0, 0.5);
  SpectralField out(f.dim(), out_radius);
  const auto c = f.data();
  for (std::size_t n = 0; n < c.size(); ++n) {
    if (c[n] == Complex{}) continue;
    const WaveVector v = f.wavevector(n);
    const WaveVector up = v + z;
    const WaveVector down = v - z;
    if (out.contains(up)) out.data()[out.flat_index(up)] += to_plus * c[n];
    if (out.contains(down)) out.data()[out.flat_index(down)] += to_minus * c[n];
  }
  return out;
}

SpectralField random_band_field(int dim, int band_radius, int radius, std::uint64_t seed, std::uint64_t stream) {
  if (band_radius < 0 || band_radius > radius) throw std::invalid_argument("random_band_field: need 0 <= band <= radius");
  SpectralField f(dim, radius);
  const SpectralField band(dim, band_radius);
  NormalStream normal(seed, stream);
  for (std::size_t n = 0; n < band.size(); ++n) {
    const WaveVector z = band.wavevector(n);
    int lead = 0;
    for (int j = 0; j < dim && lead == 0; ++j) lead = z[j];
    if (lead < 0) continue;
    const double a = normal.next();
    const double b = lead > 0 ? normal.next() : 0.0;
    f.add_real_mode(z, a, b);
  }
  return f;
}

}  // namespace chaosflow
