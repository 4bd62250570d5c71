#pragma once

// Cameron-Martin apparatus: cosine time basis on [0,T], Hermite polynomials,
// multi-indices over (time mode i, noise k) cells, and Gaussian samples.

#include <cstdint>
#include <iosfwd>
#include <utility>
#include <vector>

namespace chaosflow {

/// m_1 = 1/sqrt(T), m_i = sqrt(2/T) cos(pi (i-1) t / T) for i >= 2, i = 1..n_t.
class TimeBasis {
 public:
  TimeBasis(double horizon, int n_modes);

  double horizon() const { return T_; }
  int size() const { return n_; }

  double eval(int i, double t) const;
  /// Integral of m_i over [0, t].
  double antiderivative(int i, double t) const;
  /// Integral of m_i over [t0, t1].
  double integral(int i, double t0, double t1) const;

 private:
  void check(int i, double t) const;
  double T_;
  int n_;
};

/// H_n(t) = e^{t^2/2} d^n/dt^n e^{-t^2/2} taken literally equals (-1)^n He_n(t).
enum class HermiteConvention { Rodrigues, Probabilist };

double hermite_eval(int n, double t, HermiteConvention conv = HermiteConvention::Rodrigues);

const char* to_string(HermiteConvention c);

/// Sparse multi-index alpha_i^k over cells (i, k), 1-based.
class MultiIndex {
 public:
  struct Cell {
    int i;
    int k;
    friend auto operator<=>(const Cell&, const Cell&) = default;
  };
  struct Entry {
    Cell cell;
    int count;
    friend bool operator==(const Entry&, const Entry&) = default;
  };

  MultiIndex() = default;
  explicit MultiIndex(std::vector<Entry> entries);

  /// Single 1 at (i, k).
  static MultiIndex unit(int i, int k);

  int order() const;
  double factorial() const;
  int count(int i, int k) const;
  bool empty() const { return entries_.empty(); }
  const std::vector<Entry>& entries() const { return entries_; }

  /// alpha with entry (i, k) decreased by one; throws if it is already zero.
  MultiIndex decremented(int i, int k) const;
  MultiIndex incremented(int i, int k) const;
  /// Pointwise sum.
  friend MultiIndex operator+(const MultiIndex& a, const MultiIndex& b);

  friend bool operator==(const MultiIndex&, const MultiIndex&) = default;

  std::string to_string() const;

 private:
  std::vector<Entry> entries_;  // sorted by cell, counts > 0
};

struct MultiIndexHash {
  std::size_t operator()(const MultiIndex& a) const;
};

/// All alpha with support in i <= n_t, k <= n_w and |alpha| <= N. Graded:
/// by order, then by the flattened entry vector (cells in (i, k) row-major
/// order) in descending lexicographic order, so (1,1) precedes (1,2).
std::vector<MultiIndex> enumerate_multiindices(int n_t, int n_w, int N);

/// binomial(n_t n_w + N, N)
std::uint64_t multiindex_count(int n_t, int n_w, int N);

/// xi(i, k) for i = 1..n_t, k = 1..n_w: independent standard normals.
class GaussianSample {
 public:
  GaussianSample(int n_t, int n_w, std::vector<double> values, std::uint64_t seed = 0);

  /// Sample number `index` of the stream identified by master_seed. Each
  /// (master_seed, index) pair maps to the same values regardless of order.
  static GaussianSample draw(int n_t, int n_w, std::uint64_t master_seed, std::uint64_t index);

  int n_t() const { return n_t_; }
  int n_w() const { return n_w_; }
  std::uint64_t seed() const { return seed_; }
  double operator()(int i, int k) const;

  /// Rows "i,k,value".
  void write_csv(std::ostream& os) const;
  static GaussianSample read_csv(std::istream& is);

 private:
  int n_t_;
  int n_w_;
  std::vector<double> xi_;  // (i-1) * n_w + (k-1)
  std::uint64_t seed_;
};

/// (1/sqrt(alpha!)) prod H_{alpha_i^k}(xi_ik).
double xi_alpha(const MultiIndex& alpha, const GaussianSample& sample,
                HermiteConvention conv = HermiteConvention::Rodrigues);

/// w_k(t) = sum_i xi_ik int_0^t m_i(s) ds.
double brownian_from_sample(const GaussianSample& sample, const TimeBasis& basis, int k, double t);

}  // namespace chaosflow
