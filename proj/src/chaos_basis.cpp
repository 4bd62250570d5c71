#include "chaosflow/chaos_basis.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "chaosflow/csv.hpp"
#include "chaosflow/random.hpp"

namespace chaosflow {

// TimeBasis
// -----------------------------------------------------------------------------

TimeBasis::TimeBasis(double horizon, int n_modes) : T_(horizon), n_(n_modes) {
  if (!(horizon > 0.0)) throw std::invalid_argument("time basis: requires T > 0");
  if (n_modes < 1) throw std::invalid_argument("time basis: requires n_t >= 1");
}

void TimeBasis::check(int i, double t) const {
  if (i < 1 || i > n_) throw std::out_of_range("time mode index " + std::to_string(i) + " outside 1.." + std::to_string(n_));
  if (t < 0.0 || t > T_) throw std::invalid_argument("time " + std::to_string(t) + " outside [0, T]");
}

double TimeBasis::eval(int i, double t) const {
  check(i, t);
  if (i == 1) return 1.0 / std::sqrt(T_);
  return std::sqrt(2.0 / T_) * std::cos(std::numbers::pi * (i - 1) * t / T_);
}

double TimeBasis::antiderivative(int i, double t) const {
  check(i, t);
  if (i == 1) return t / std::sqrt(T_);
  const double w = std::numbers::pi * (i - 1) / T_;
  return std::sqrt(2.0 / T_) * std::sin(w * t) / w;
}

double TimeBasis::integral(int i, double t0, double t1) const {
  return antiderivative(i, t1) - antiderivative(i, t0);
}

// Hermite
// -----------------------------------------------------------------------------

double hermite_eval(int n, double t, HermiteConvention conv) {
  if (n < 0) throw std::invalid_argument("hermite_eval: negative degree");
  // Rodrigues: H_{n+1} = -t H_n - n H_{n-1};  probabilist: He_{n+1} = t He_n - n He_{n-1}.
  const double s = conv == HermiteConvention::Rodrigues ? -1.0 : 1.0;
  double prev = 1.0;
  if (n == 0) return prev;
  double cur = s * t;
  for (int m = 1; m < n; ++m) {
    const double next = s * t * cur - m * prev;
    prev = cur;
    cur = next;
  }
  return cur;
}

const char* to_string(HermiteConvention c) {
  return c == HermiteConvention::Rodrigues ? "rodrigues(-1)^n*He_n" : "probabilist-He_n";
}

// MultiIndex
// -----------------------------------------------------------------------------

MultiIndex::MultiIndex(std::vector<Entry> entries) : entries_(std::move(entries)) {
  std::sort(entries_.begin(), entries_.end(), [](const Entry& a, const Entry& b) { return a.cell < b.cell; });
  std::vector<Entry> merged;
  for (const auto& e : entries_) {
    if (e.cell.i < 1 || e.cell.k < 1) throw std::invalid_argument("multi-index cells are 1-based");
    if (e.count < 0) throw std::invalid_argument("multi-index entries must be nonnegative");
    if (e.count == 0) continue;
    if (!merged.empty() && merged.back().cell == e.cell) {
      merged.back().count += e.count;
    } else {
      merged.push_back(e);
    }
  }
  entries_ = std::move(merged);
}

MultiIndex MultiIndex::unit(int i, int k) { return MultiIndex({{{i, k}, 1}}); }

int MultiIndex::order() const {
  int s = 0;
  for (const auto& e : entries_) s += e.count;
  return s;
}

double MultiIndex::factorial() const {
  double f = 1.0;
  for (const auto& e : entries_)
    for (int m = 2; m <= e.count; ++m) f *= m;
  return f;
}

int MultiIndex::count(int i, int k) const {
  for (const auto& e : entries_)
    if (e.cell.i == i && e.cell.k == k) return e.count;
  return 0;
}

MultiIndex MultiIndex::decremented(int i, int k) const {
  std::vector<Entry> out = entries_;
  for (auto& e : out) {
    if (e.cell.i == i && e.cell.k == k) {
      --e.count;
      return MultiIndex(std::move(out));
    }
  }
  throw std::logic_error("cannot decrement zero entry (" + std::to_string(i) + "," + std::to_string(k) + ")");
}

MultiIndex MultiIndex::incremented(int i, int k) const { return *this + unit(i, k); }

MultiIndex operator+(const MultiIndex& a, const MultiIndex& b) {
  std::vector<MultiIndex::Entry> all = a.entries_;
  all.insert(all.end(), b.entries_.begin(), b.entries_.end());
  return MultiIndex(std::move(all));
}

std::string MultiIndex::to_string() const {
  std::ostringstream os;
  os << '{';
  for (std::size_t n = 0; n < entries_.size(); ++n) {
    const auto& e = entries_[n];
    os << (n ? " " : "") << '(' << e.cell.i << ',' << e.cell.k << ")^" << e.count;
  }
  os << '}';
  return os.str();
}

std::size_t MultiIndexHash::operator()(const MultiIndex& a) const {
  std::uint64_t h = 0x84222325cbf29ce4ull;
  for (const auto& e : a.entries()) {
    h = splitmix64(h ^ (static_cast<std::uint64_t>(e.cell.i) << 40) ^ (static_cast<std::uint64_t>(e.cell.k) << 16) ^
                   static_cast<std::uint64_t>(e.count));
  }
  return static_cast<std::size_t>(h);
}

namespace {

void compositions(int remaining, std::size_t cell, std::vector<int>& counts, int n_w,
                  std::vector<MultiIndex>& out) {
  if (cell + 1 == counts.size()) {
    counts[cell] = remaining;
    std::vector<MultiIndex::Entry> entries;
    for (std::size_t c = 0; c < counts.size(); ++c) {
      if (counts[c] > 0) entries.push_back({{static_cast<int>(c) / n_w + 1, static_cast<int>(c) % n_w + 1}, counts[c]});
    }
    out.emplace_back(std::move(entries));
    return;
  }
  for (int c = remaining; c >= 0; --c) {
    counts[cell] = c;
    compositions(remaining - c, cell + 1, counts, n_w, out);
  }
  counts[cell] = 0;
}

}  // namespace

std::vector<MultiIndex> enumerate_multiindices(int n_t, int n_w, int N) {
  if (N < 0) throw std::invalid_argument("enumerate_multiindices: negative order N");
  if (n_t < 1 || n_w < 0) throw std::invalid_argument("enumerate_multiindices: requires n_t >= 1, n_w >= 0");
  std::vector<MultiIndex> out{MultiIndex{}};
  const std::size_t cells = static_cast<std::size_t>(n_t) * static_cast<std::size_t>(n_w);
  if (cells == 0) return out;
  std::vector<int> counts(cells, 0);
  for (int n = 1; n <= N; ++n) compositions(n, 0, counts, n_w, out);
  return out;
}

std::uint64_t multiindex_count(int n_t, int n_w, int N) {
  const std::uint64_t m = static_cast<std::uint64_t>(n_t) * static_cast<std::uint64_t>(n_w);
  std::uint64_t c = 1;
  for (std::uint64_t j = 1; j <= static_cast<std::uint64_t>(N); ++j) c = c * (m + j) / j;
  return c;
}

// GaussianSample
// -----------------------------------------------------------------------------

GaussianSample::GaussianSample(int n_t, int n_w, std::vector<double> values, std::uint64_t seed)
    : n_t_(n_t), n_w_(n_w), xi_(std::move(values)), seed_(seed) {
  if (n_t < 0 || n_w < 0) throw std::invalid_argument("gaussian sample: negative dimensions");
  if (xi_.size() != static_cast<std::size_t>(n_t) * static_cast<std::size_t>(n_w)) {
    throw std::invalid_argument("gaussian sample: value count does not match n_t * n_w");
  }
  for (double v : xi_)
    if (!std::isfinite(v)) throw std::invalid_argument("gaussian sample: non-finite entry");
}

GaussianSample GaussianSample::draw(int n_t, int n_w, std::uint64_t master_seed, std::uint64_t index) {
  NormalStream stream(master_seed, index);
  std::vector<double> xi(static_cast<std::size_t>(n_t) * static_cast<std::size_t>(n_w));
  for (auto& v : xi) v = stream.next();
  return GaussianSample(n_t, n_w, std::move(xi), mix_seed(master_seed, index));
}

double GaussianSample::operator()(int i, int k) const {
  if (i < 1 || i > n_t_ || k < 1 || k > n_w_) {
    throw std::out_of_range("sample cell (" + std::to_string(i) + "," + std::to_string(k) + ") outside sample");
  }
  return xi_[static_cast<std::size_t>(i - 1) * n_w_ + (k - 1)];
}

void GaussianSample::write_csv(std::ostream& os) const {
  os << "# seed=" << seed_ << " n_t=" << n_t_ << " n_w=" << n_w_ << "\n";
  os << "i,k,value\n";
  for (int i = 1; i <= n_t_; ++i)
    for (int k = 1; k <= n_w_; ++k) os << i << ',' << k << ',' << csv::num((*this)(i, k)) << '\n';
}

GaussianSample GaussianSample::read_csv(std::istream& is) {
  std::string line;
  std::uint64_t seed = 0;
  struct Row {
    int i, k;
    double v;
  };
  std::vector<Row> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto pos = line.find("seed=");
      if (pos != std::string::npos) seed = std::stoull(line.substr(pos + 5));
      continue;
    }
    if (line.rfind("i,k", 0) == 0) continue;
    std::istringstream ls(line);
    Row r{};
    char c1 = 0, c2 = 0;
    if (!(ls >> r.i >> c1 >> r.k >> c2 >> r.v) || c1 != ',' || c2 != ',') {
      throw std::invalid_argument("gaussian sample csv: malformed row '" + line + "'");
    }
    rows.push_back(r);
  }
  int n_t = 0, n_w = 0;
  for (const auto& r : rows) {
    n_t = std::max(n_t, r.i);
    n_w = std::max(n_w, r.k);
  }
  std::vector<double> xi(static_cast<std::size_t>(n_t) * n_w, std::nan(""));
  for (const auto& r : rows) xi[static_cast<std::size_t>(r.i - 1) * n_w + (r.k - 1)] = r.v;
  return GaussianSample(n_t, n_w, std::move(xi), seed);
}

double xi_alpha(const MultiIndex& alpha, const GaussianSample& sample, HermiteConvention conv) {
  double p = 1.0;
  for (const auto& e : alpha.entries()) p *= hermite_eval(e.count, sample(e.cell.i, e.cell.k), conv);
  return p / std::sqrt(alpha.factorial());
}

double brownian_from_sample(const GaussianSample& sample, const TimeBasis& basis, int k, double t) {
  if (basis.size() > sample.n_t()) throw std::invalid_argument("brownian_from_sample: time basis larger than sample");
  double w = 0.0;
  for (int i = 1; i <= basis.size(); ++i) w += sample(i, k) * basis.antiderivative(i, t);
  return w;
}

}  // namespace chaosflow
