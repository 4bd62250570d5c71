#include "chaosflow/harness.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "json.hpp"

#include "chaosflow/csv.hpp"
#include "chaosflow/oracles.hpp"
#include "chaosflow/random.hpp"

namespace chaosflow {

namespace fs = std::filesystem;

// Initial conditions
// -----------------------------------------------------------------------------

SpectralField InitialCondition::build(int dim, int radius) const {
  SpectralField f(dim, radius);
  if (preset == "single-mode") {
    if (static_cast<int>(wavevector.size()) != dim) throw ConfigError("initial.wavevector must have d components");
    f.add_real_mode(WaveVector(std::span<const int>(wavevector)), amplitude, 0.0);
  } else if (preset == "two-mode") {
    WaveVector e1(dim), z2(dim);
    e1[0] = 1;
    z2[0] = 1;
    z2[1] = 2;
    f.add_real_mode(e1, 1.0, 0.0);
    f.add_real_mode(z2, 0.5, 0.0);
  } else if (preset == "random-band") {
    f = random_band_field(dim, band_radius, radius, seed);
  } else {
    throw ConfigError("initial.preset '" + preset + "' is not one of single-mode, two-mode, random-band");
  }
  return f;
}

// Parsing
// -----------------------------------------------------------------------------

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double x = 0.0;
  try {
    x = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty()) throw ConfigError(key + ": '" + v + "' is not a number");
  return x;
}

// Also accepts a rational shorthand such as 1/512.
double to_real(const std::string& key, const std::string& v) {
  const auto slash = v.find('/');
  if (slash != std::string::npos) {
    const double den = to_double(key, trim(v.substr(slash + 1)));
    if (den == 0.0) throw ConfigError(key + ": division by zero in '" + v + "'");
    return to_double(key, trim(v.substr(0, slash))) / den;
  }
  return to_double(key, v);
}

long long to_integer(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  long long x = 0;
  try {
    x = std::stoll(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty()) throw ConfigError(key + ": '" + v + "' is not an integer");
  return x;
}

int to_int(const std::string& key, const std::string& v) {
  const long long x = to_integer(key, v);
  if (x < -1000000000LL || x > 1000000000LL) throw ConfigError(key + ": value out of range");
  return static_cast<int>(x);
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  if (v.empty() || v[0] == '-') throw ConfigError(key + ": '" + v + "' is not a nonnegative integer");
  std::size_t used = 0;
  std::uint64_t x = 0;
  try {
    x = std::stoull(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size()) throw ConfigError(key + ": '" + v + "' is not a nonnegative integer");
  return x;
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T, typename Fn>
std::vector<T> list_of(const std::string& key, const std::string& v, Fn conv) {
  std::vector<T> out;
  for (const auto& s : split_list(v)) out.push_back(conv(key, s));
  if (out.empty()) throw ConfigError(key + ": empty list");
  return out;
}

template <typename T>
std::string join(const std::vector<T>& v) {
  std::ostringstream os;
  for (std::size_t j = 0; j < v.size(); ++j) {
    if (j) os << ',';
    if constexpr (std::is_floating_point_v<T>) {
      os << csv::num(v[j]);
    } else {
      os << v[j];
    }
  }
  return os.str();
}

using Setter = std::function<void(ExperimentConfig&, const std::string& key, const std::string& value)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"kind", [](auto& c, auto&, auto& v) { c.kind = v; }},
      {"covariance.A0", [](auto& c, auto& k, auto& v) { c.covariance.A0 = to_real(k, v); }},
      {"covariance.a", [](auto& c, auto& k, auto& v) { c.covariance.a = to_real(k, v); }},
      {"covariance.b", [](auto& c, auto& k, auto& v) { c.covariance.b = to_real(k, v); }},
      {"covariance.alpha", [](auto& c, auto& k, auto& v) { c.covariance.alpha = to_real(k, v); }},
      {"covariance.dim",
       [](auto& c, auto& k, auto& v) {
         c.covariance.dim = to_int(k, v);
         c.grid.dim = c.covariance.dim;
       }},
      {"basis.shell_radius", [](auto& c, auto& k, auto& v) { c.shell_radius = to_int(k, v); }},
      {"grid.base_radius", [](auto& c, auto& k, auto& v) { c.grid.base_radius = to_int(k, v); }},
      {"grid.growth_cap", [](auto& c, auto& k, auto& v) { c.grid.growth_cap = to_int(k, v); }},
      {"propagator.nu", [](auto& c, auto& k, auto& v) { c.propagator.nu = to_real(k, v); }},
      {"propagator.T", [](auto& c, auto& k, auto& v) { c.propagator.T = to_real(k, v); }},
      {"propagator.n_t", [](auto& c, auto& k, auto& v) { c.propagator.n_t = to_int(k, v); }},
      {"propagator.n_w", [](auto& c, auto& k, auto& v) { c.propagator.n_w = to_int(k, v); }},
      {"propagator.N", [](auto& c, auto& k, auto& v) { c.propagator.N = to_int(k, v); }},
      {"propagator.dt", [](auto& c, auto& k, auto& v) { c.propagator.dt = to_real(k, v); }},
      {"propagator.output_times",
       [](auto& c, auto& k, auto& v) { c.propagator.output_times = list_of<double>(k, v, to_real); }},
      {"conventions.hermite",
       [](auto& c, auto& k, auto& v) {
         if (v == "rodrigues") {
           c.conventions.hermite = HermiteConvention::Rodrigues;
         } else if (v == "probabilist") {
           c.conventions.hermite = HermiteConvention::Probabilist;
         } else {
           throw ConfigError(k + ": expected rodrigues or probabilist, got '" + v + "'");
         }
       }},
      {"conventions.noise_sign", [](auto& c, auto& k, auto& v) { c.conventions.noise_sign = to_int(k, v); }},
      {"initial.preset", [](auto& c, auto&, auto& v) { c.initial.preset = v; }},
      {"initial.wavevector", [](auto& c, auto& k, auto& v) { c.initial.wavevector = list_of<int>(k, v, to_int); }},
      {"initial.amplitude", [](auto& c, auto& k, auto& v) { c.initial.amplitude = to_real(k, v); }},
      {"initial.band_radius", [](auto& c, auto& k, auto& v) { c.initial.band_radius = to_int(k, v); }},
      {"initial.seed", [](auto& c, auto& k, auto& v) { c.initial.seed = to_u64(k, v); }},
      {"mc.n_paths", [](auto& c, auto& k, auto& v) { c.mc.n_paths = to_int(k, v); }},
      {"mc.n_steps", [](auto& c, auto& k, auto& v) { c.mc.n_steps = to_int(k, v); }},
      {"mc.radius", [](auto& c, auto& k, auto& v) { c.mc.radius = to_int(k, v); }},
      {"mc.pathwise_paths", [](auto& c, auto& k, auto& v) { c.mc.pathwise_paths = to_int(k, v); }},
      {"mc.pathwise_steps", [](auto& c, auto& k, auto& v) { c.mc.pathwise_steps = to_int(k, v); }},
      {"convergence.n_t_values",
       [](auto& c, auto& k, auto& v) { c.convergence.n_t_values = list_of<int>(k, v, to_int); }},
      {"convergence.dt_values",
       [](auto& c, auto& k, auto& v) { c.convergence.dt_values = list_of<double>(k, v, to_real); }},
      {"convergence.shell_radii",
       [](auto& c, auto& k, auto& v) { c.convergence.shell_radii = list_of<int>(k, v, to_int); }},
      {"energy.tolerance", [](auto& c, auto& k, auto& v) { c.energy_tolerance = to_real(k, v); }},
      {"run.master_seed", [](auto& c, auto& k, auto& v) { c.master_seed = to_u64(k, v); }},
      {"run.out_dir", [](auto& c, auto&, auto& v) { c.out_dir = v; }},
      {"run.workers", [](auto& c, auto& k, auto& v) { c.workers = to_int(k, v); }},
  };
  return table;
}

std::size_t basis_mode_count(int dim, int shell_radius) {
  std::size_t cube = 1;
  for (int j = 0; j < dim; ++j) cube *= static_cast<std::size_t>(2 * shell_radius + 1);
  return (cube - 1) / 2 * static_cast<std::size_t>(dim - 1) * 2;
}

std::string fmt(double x) { return csv::num(x); }

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  std::map<std::string, int> seen;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value', got '" + line + "'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    if (seen.count(key)) {
      throw ConfigError("line " + std::to_string(lineno) + ": key '" + key + "' repeats line " +
                        std::to_string(seen[key]));
    }
    seen[key] = lineno;
    it->second(cfg, key, value);
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

void ExperimentConfig::validate() const {
  const auto& kinds = experiment_kinds();
  if (std::find(kinds.begin(), kinds.end(), kind) == kinds.end()) {
    throw ConfigError("kind '" + kind + "' is not one of validate-basis, propagate, energy, compare-mc, convergence");
  }
  const CovarianceSpec& cv = covariance;
  if (cv.dim < 2 || cv.dim > kMaxDim) throw ConfigError("covariance.dim = " + std::to_string(cv.dim) + " violates 2 <= d <= 4");
  if (!(cv.alpha > 0.0 && cv.alpha < 2.0)) throw ConfigError("covariance.alpha = " + fmt(cv.alpha) + " violates 0 < α < 2");
  if (!(cv.A0 > 0.0)) throw ConfigError("covariance.A0 = " + fmt(cv.A0) + " violates A0 > 0");
  if (cv.a < 0.0 || cv.b < 0.0) throw ConfigError("covariance weights violate a >= 0 and b >= 0");
  if (!(cv.a + cv.b > 0.0)) throw ConfigError("covariance weights violate a + b > 0");
  if (cv.a != 0.0) {
    throw ConfigError("covariance.a = " + fmt(cv.a) + ": only divergence-free velocity (a = 0) is supported");
  }
  if (grid.dim != cv.dim) throw ConfigError("grid dimension differs from covariance.dim");
  if (shell_radius < 1) throw ConfigError("basis.shell_radius = " + std::to_string(shell_radius) + " violates shell_radius >= 1");

  const PropagatorConfig& p = propagator;
  if (!(p.nu >= 0.0)) throw ConfigError("propagator.nu = " + fmt(p.nu) + " violates ν ≥ 0");
  if (!(p.T > 0.0)) throw ConfigError("propagator.T violates T > 0");
  if (p.n_t < 1) throw ConfigError("propagator.n_t violates n_t >= 1");
  if (p.N < 0) throw ConfigError("propagator.N violates N >= 0");
  if (!(p.dt > 0.0)) throw ConfigError("propagator.dt violates dt > 0");
  const std::size_t modes = basis_mode_count(cv.dim, shell_radius);
  if (p.n_w < 0 || static_cast<std::size_t>(p.n_w) > modes) {
    throw ConfigError("propagator.n_w = " + std::to_string(p.n_w) + " violates 0 <= n_w <= " + std::to_string(modes) +
                      " (modes in the shell)");
  }
  try {
    p.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("propagator.output_times: ") + e.what());
  }
  for (double t : p.output_times) {
    const double steps = t / p.dt;
    if (std::abs(steps - std::round(steps)) > 1e-9 * std::max(1.0, steps)) {
      throw ConfigError("propagator.output_times: " + fmt(t) + " is not a multiple of dt");
    }
  }
  if (std::abs(p.output_times.back() - p.T) > 1e-12) throw ConfigError("propagator.output_times must end at T");

  if (grid.base_radius < 0) throw ConfigError("grid.base_radius violates base_radius >= 0");
  const int shift = p.n_w == 0 ? 0 : shell_radius;
  if (grid.base_radius + p.N * shift > grid.growth_cap) {
    throw ConfigError("grid.growth_cap = " + std::to_string(grid.growth_cap) +
                      " violates base_radius + N * shell_radius <= growth_cap (needs " +
                      std::to_string(grid.base_radius + p.N * shift) + ")");
  }
  if (conventions.noise_sign != 1 && conventions.noise_sign != -1) {
    throw ConfigError("conventions.noise_sign violates noise_sign in {+1, -1}");
  }
  const SpectralField init = initial.build(cv.dim, std::max(grid.base_radius, initial.band_radius + 1));
  if (init.support_radius() > grid.base_radius) {
    throw ConfigError("initial condition violates support within grid.base_radius");
  }
  if (initial.preset == "single-mode" && initial.wavevector.size() != static_cast<std::size_t>(cv.dim)) {
    throw ConfigError("initial.wavevector must have d components");
  }
  if (mc.n_paths < 2) throw ConfigError("mc.n_paths violates n_paths >= 2");
  if (mc.n_steps < p.n_t || mc.pathwise_steps < p.n_t) throw ConfigError("mc steps violate n_steps >= n_t");
  if (mc.pathwise_paths < 1) throw ConfigError("mc.pathwise_paths violates pathwise_paths >= 1");
  if (mc.radius < grid.base_radius) throw ConfigError("mc.radius violates radius >= grid.base_radius");
  for (int n : convergence.n_t_values)
    if (n < 1) throw ConfigError("convergence.n_t_values violate n_t >= 1");
  for (double h : convergence.dt_values)
    if (!(h > 0.0)) throw ConfigError("convergence.dt_values violate dt > 0");
  for (int r : convergence.shell_radii)
    if (r < 1) throw ConfigError("convergence.shell_radii violate shell_radius >= 1");
  if (!(energy_tolerance > 0.0)) throw ConfigError("energy.tolerance violates tolerance > 0");
  if (workers < 1) throw ConfigError("run.workers violates workers >= 1");
  if (out_dir.empty()) throw ConfigError("run.out_dir must not be empty");
}

std::vector<std::pair<std::string, std::string>> ExperimentConfig::echo() const {
  return {
      {"kind", kind},
      {"covariance.A0", fmt(covariance.A0)},
      {"covariance.a", fmt(covariance.a)},
      {"covariance.b", fmt(covariance.b)},
      {"covariance.alpha", fmt(covariance.alpha)},
      {"covariance.dim", std::to_string(covariance.dim)},
      {"basis.shell_radius", std::to_string(shell_radius)},
      {"grid.base_radius", std::to_string(grid.base_radius)},
      {"grid.growth_cap", std::to_string(grid.growth_cap)},
      {"propagator.nu", fmt(propagator.nu)},
      {"propagator.T", fmt(propagator.T)},
      {"propagator.n_t", std::to_string(propagator.n_t)},
      {"propagator.n_w", std::to_string(propagator.n_w)},
      {"propagator.N", std::to_string(propagator.N)},
      {"propagator.dt", fmt(propagator.dt)},
      {"propagator.output_times", join(propagator.output_times)},
      {"conventions.hermite", conventions.hermite == HermiteConvention::Rodrigues ? "rodrigues" : "probabilist"},
      {"conventions.noise_sign", std::to_string(conventions.noise_sign)},
      {"initial.preset", initial.preset},
      {"initial.wavevector", join(initial.wavevector)},
      {"initial.amplitude", fmt(initial.amplitude)},
      {"initial.band_radius", std::to_string(initial.band_radius)},
      {"initial.seed", std::to_string(initial.seed)},
      {"mc.n_paths", std::to_string(mc.n_paths)},
      {"mc.n_steps", std::to_string(mc.n_steps)},
      {"mc.radius", std::to_string(mc.radius)},
      {"mc.pathwise_paths", std::to_string(mc.pathwise_paths)},
      {"mc.pathwise_steps", std::to_string(mc.pathwise_steps)},
      {"convergence.n_t_values", join(convergence.n_t_values)},
      {"convergence.dt_values", join(convergence.dt_values)},
      {"convergence.shell_radii", join(convergence.shell_radii)},
      {"energy.tolerance", fmt(energy_tolerance)},
      {"run.master_seed", std::to_string(master_seed)},
      {"run.out_dir", out_dir},
      {"run.workers", std::to_string(workers)},
  };
}

// Output helpers
// -----------------------------------------------------------------------------

void write_coefficient_dump(std::ostream& os, const ChaosSolution& sol) {
  const PropagatorConfig& c = sol.config();
  os << "# nu=" << csv::num(c.nu) << " c0=" << csv::num(sol.c0()) << " N=" << c.N << " n_t=" << c.n_t
     << " n_w=" << c.n_w << " dt=" << csv::num(c.dt) << " T=" << csv::num(c.T) << '\n';
  os << "# conventions: " << sol.conventions().describe() << '\n';
  os << "alpha_rank,t";
  for (int j = 1; j <= sol.dim(); ++j) os << ",z" << j;
  os << ",re,im\n";
  for (std::size_t ti = 0; ti < sol.times().size(); ++ti) {
    const std::string t = csv::num(sol.times()[ti]);
    for (std::size_t r = 0; r < sol.indices().size(); ++r) {
      const SpectralField& f = sol.coefficient(r, ti);
      for (std::size_t n = 0; n < f.size(); ++n) {
        const Complex v = f.data()[n];
        if (v == Complex{}) continue;
        const WaveVector z = f.wavevector(n);
        os << r << ',' << t;
        for (int j = 0; j < z.dim(); ++j) os << ',' << z[j];
        os << ',' << csv::num(v.real()) << ',' << csv::num(v.imag()) << '\n';
      }
    }
  }
}

namespace {

struct CheckRow {
  std::string check;
  double value;
  double tolerance;  // negative: informational
  bool pass() const { return tolerance < 0.0 || (std::isfinite(value) && value <= tolerance); }
};

void write_checks(std::ostream& os, const std::vector<CheckRow>& rows) {
  os << "check,value,tolerance,pass\n";
  for (const auto& r : rows) {
    os << r.check << ',' << csv::num(r.value) << ',' << (r.tolerance < 0.0 ? std::string("") : csv::num(r.tolerance))
       << ',' << (r.tolerance < 0.0 ? "info" : (r.pass() ? "pass" : "fail")) << '\n';
  }
}

std::vector<CheckRow> basis_checks(const VelocityBasis& basis, std::uint64_t seed) {
  std::vector<CheckRow> rows;
  const int d = basis.dim();
  const CovarianceAtZero cov = covariance_at_zero(basis);
  rows.push_back({"n_modes", static_cast<double>(basis.size()), -1.0});
  rows.push_back({"c0", cov.c0, -1.0});
  rows.push_back({"isotropy_max_abs", (cov.matrix - cov.c0 * Eigen::MatrixXd::Identity(d, d)).cwiseAbs().maxCoeff(),
                  1e-12});

  double div = 0.0;
  for (const auto& m : basis.modes()) {
    std::vector<SpectralField> comps;
    for (int j = 0; j < d; ++j) comps.push_back(m.component(j, basis.shell_radius()));
    const SpectralField dv = divergence(comps);
    for (const Complex c : dv.data()) div = std::max(div, std::abs(c));
  }
  rows.push_back({"divergence_max_abs", div, 1e-12});

  NormalStream rng(seed, 0x6261736973ull);
  auto point = [&] {
    std::vector<double> x(d);
    for (auto& v : x) v = 2.0 * std::numbers::pi * (0.5 + 0.25 * rng.next());
    return x;
  };
  double xind = 0.0, kernel = 0.0;
  for (int s = 0; s < 8; ++s) {
    const auto x = point();
    const auto y = point();
    Eigen::MatrixXd sxx = Eigen::MatrixXd::Zero(d, d), sxy = Eigen::MatrixXd::Zero(d, d);
    for (const auto& m : basis.modes()) {
      const Eigen::VectorXd vx = m.evaluate(x), vy = m.evaluate(y);
      sxx += vx * vx.transpose();
      sxy += vx * vy.transpose();
    }
    xind = std::max(xind, (sxx - cov.matrix).cwiseAbs().maxCoeff());
    std::vector<double> r(d);
    for (int j = 0; j < d; ++j) r[j] = x[j] - y[j];
    kernel = std::max(kernel, (sxy - lattice_covariance(basis.spec(), basis.shell_radius(), r)).cwiseAbs().maxCoeff());
  }
  rows.push_back({"x_independence_max_abs", xind, 1e-12});
  rows.push_back({"kernel_identity_max_abs", kernel, 1e-10});

  GridSpec grid{d, 3, 3 + basis.max_shift()};
  double norm_rel = 0.0;
  for (int s = 0; s < 20; ++s) {
    const SpectralField f = random_band_field(d, 3, 3, seed, 100 + static_cast<std::uint64_t>(s));
    double lhs = 0.0;
    for (std::size_t k = 0; k < basis.size(); ++k) lhs += norm_squared(apply_Mk(basis, k, f, grid));
    const double rhs = cov.c0 * gradient_norm_squared(f);
    norm_rel = std::max(norm_rel, std::abs(lhs - rhs) / rhs);
  }
  rows.push_back({"norm_identity_max_rel", norm_rel, 1e-10});
  return rows;
}

class Outputs {
 public:
  Outputs(const ExperimentConfig& cfg, std::vector<std::string> planned, std::ostream* log)
      : cfg_(cfg), planned_(std::move(planned)), log_(log), start_(std::chrono::steady_clock::now()) {
    fs::create_directories(cfg.out_dir);
    write_manifest("running", {});
  }

  std::ofstream open(const std::string& name) {
    if (std::find(planned_.begin(), planned_.end(), name) == planned_.end()) {
      throw std::logic_error("output file '" + name + "' missing from the manifest");
    }
    std::ofstream os(fs::path(cfg_.out_dir) / name, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + (fs::path(cfg_.out_dir) / name).string());
    written_.push_back(name);
    return os;
  }

  void say(const std::string& msg) const {
    if (log_) *log_ << msg << '\n';
  }

  void finish(const std::vector<std::string>& breaches) {
    write_manifest(breaches.empty() ? "pass" : "invariant-breach", breaches);
  }

  const std::vector<std::string>& files() const { return planned_; }

 private:
  void write_manifest(const std::string& status, const std::vector<std::string>& breaches) {
    nlohmann::ordered_json j;
    j["tool"] = "chaosflow";
    j["version"] = kVersion;
    j["status"] = status;
    nlohmann::ordered_json echo = nlohmann::ordered_json::object();
    for (const auto& [k, v] : cfg_.echo()) echo[k] = v;
    j["config"] = echo;
    j["conventions"] = {{"hermite", to_string(cfg_.conventions.hermite)},
                        {"noise_sign", cfg_.conventions.noise_sign},
                        {"description", cfg_.conventions.describe()}};
    j["files"] = planned_;
    j["breaches"] = breaches;
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    if (status == "running") {
      j["wall_clock_seconds"] = nullptr;
    } else {
      j["wall_clock_seconds"] = secs;
    }
    std::ofstream os(fs::path(cfg_.out_dir) / "manifest.json", std::ios::binary);
    os << j.dump(2) << '\n';
  }

  const ExperimentConfig& cfg_;
  std::vector<std::string> planned_;
  std::vector<std::string> written_;
  std::ostream* log_;
  std::chrono::steady_clock::time_point start_;
};

std::vector<std::string> planned_files(const std::string& kind) {
  if (kind == "validate-basis") return {"basis.csv", "basis_report.csv"};
  if (kind == "propagate") return {"indices.csv", "coefficients.csv", "moments.csv"};
  if (kind == "energy") return {"energy.csv", "tail_decay.csv"};
  if (kind == "compare-mc") return {"mc.csv", "pathwise.csv"};
  return {"convergence_N.csv", "convergence_nt.csv", "convergence_dt.csv", "convergence_shell.csv"};
}

ChaosSolution solve(const ExperimentConfig& cfg, const VelocityBasis& basis, const PropagatorConfig& p,
                    const GridSpec& grid) {
  const SpectralField theta0 = cfg.initial.build(cfg.covariance.dim, grid.base_radius);
  return solve_propagator(theta0, basis, p, grid, cfg.conventions, cfg.workers);
}

double total_distance(const ChaosSolution& a, const ChaosSolution& b) {
  const std::size_t ta = a.times().size() - 1, tb = b.times().size() - 1;
  double s = 0.0;
  for (std::size_t r = 0; r < a.indices().size(); ++r) s += norm_squared(a.coefficient(r, ta) - b.coefficient(r, tb));
  return std::sqrt(s);
}

void run_validate_basis(const ExperimentConfig& cfg, Outputs& out, std::vector<std::string>& breaches) {
  const VelocityBasis basis = build_divergence_free_basis(cfg.covariance, cfg.shell_radius);
  {
    auto os = out.open("basis.csv");
    basis.write_csv(os);
  }
  const auto rows = basis_checks(basis, cfg.master_seed);
  {
    auto os = out.open("basis_report.csv");
    write_checks(os, rows);
  }
  for (const auto& r : rows) {
    out.say(r.check + " = " + csv::num(r.value) + (r.tolerance < 0 ? "" : (r.pass() ? "  pass" : "  FAIL")));
    if (!r.pass()) breaches.push_back(r.check + " exceeds " + csv::num(r.tolerance));
  }
}

void run_propagate(const ExperimentConfig& cfg, Outputs& out, std::vector<std::string>&) {
  const VelocityBasis basis = build_divergence_free_basis(cfg.covariance, cfg.shell_radius);
  const ChaosSolution sol = solve(cfg, basis, cfg.propagator, cfg.grid);
  {
    auto os = out.open("indices.csv");
    os << "alpha_rank,order,multi_index\n";
    for (std::size_t r = 0; r < sol.indices().size(); ++r) {
      os << r << ',' << sol.indices()[r].order() << ",\"" << sol.indices()[r].to_string() << "\"\n";
    }
  }
  {
    auto os = out.open("coefficients.csv");
    write_coefficient_dump(os, sol);
  }
  auto os = out.open("moments.csv");
  os << "t,mean_l2,second_moment_l2,grad_second_moment\n";
  for (double t : sol.times()) {
    const ChaosMoments m = chaos_moments(sol, t);
    os << csv::num(t) << ',' << csv::num(norm_squared(m.mean)) << ',' << csv::num(m.second_moment_l2) << ','
       << csv::num(m.grad_second_moment) << '\n';
    out.say("t=" + csv::num(t) + " E||theta||^2=" + csv::num(m.second_moment_l2));
  }
}

void run_energy(const ExperimentConfig& cfg, Outputs& out, std::vector<std::string>& breaches) {
  const VelocityBasis basis = build_divergence_free_basis(cfg.covariance, cfg.shell_radius);
  const ChaosSolution sol = solve(cfg, basis, cfg.propagator, cfg.grid);
  const EnergyReport rep = energy_balance_report(sol);
  {
    auto os = out.open("energy.csv");
    rep.write_csv(os);
  }
  {
    auto os = out.open("tail_decay.csv");
    tail_decay_study(sol).write_csv(os);
  }
  out.say("max |closed_residual| = " + csv::num(rep.max_abs_closed_residual()) +
          ", max |residual| = " + csv::num(rep.max_abs_residual()) +
          ", time_leak(T) = " + csv::num(rep.rows.back().time_leak));
  if (!(rep.max_abs_closed_residual() <= cfg.energy_tolerance)) {
    breaches.push_back("energy balance of the truncated system: |closed_residual| = " +
                       csv::num(rep.max_abs_closed_residual()) + " > " + csv::num(cfg.energy_tolerance));
  }
  double prev = rep.theta0_norm2;
  for (const auto& r : rep.rows) {
    if (r.tail < 0.0) breaches.push_back("tail >= 0 at t=" + csv::num(r.t));
    if (cfg.propagator.nu == 0.0 && r.e_l2 > prev * (1.0 + 1e-12)) {
      breaches.push_back("nu = 0: E||theta_N||^2 nonincreasing and <= ||theta0||^2 at t=" + csv::num(r.t));
    }
    prev = r.e_l2;
  }
}

void run_compare_mc(const ExperimentConfig& cfg, Outputs& out, std::vector<std::string>& breaches) {
  const VelocityBasis basis = build_divergence_free_basis(cfg.covariance, cfg.shell_radius);
  PropagatorConfig p = cfg.propagator;
  p.output_times = {p.T};
  const ChaosSolution sol = solve(cfg, basis, p, cfg.grid);
  const double chaos = chaos_moments(sol, p.T).second_moment_l2;
  out.say("chaos E||theta(T)||^2 = " + csv::num(chaos));

  McSettings mc{cfg.mc.n_paths, cfg.mc.n_steps, cfg.mc.radius, cfg.master_seed, cfg.workers};
  const McEstimate coarse = mc_second_moment(sol.initial_condition(), basis, p, mc, cfg.conventions.noise_sign);
  McSettings fine = mc;
  fine.n_steps = 2 * mc.n_steps;
  McEstimate halved = mc_second_moment(sol.initial_condition(), basis, p, fine, cfg.conventions.noise_sign);
  halved.estimator += "_half_dt";
  const double exact = moment_equation_second_moment(sol.initial_condition(), basis, p.nu, p.n_w, {p.T},
                                                     cfg.mc.radius, p.dt)
                           .front();
  {
    auto os = out.open("mc.csv");
    write_mc_csv(os, {{"chaos_second_moment", 0, p.dt, chaos, 0.0},
                      coarse,
                      halved,
                      {"moment_equation", 0, p.dt, exact, 0.0}});
  }
  out.say("Monte Carlo = " + csv::num(coarse.value) + " +- " + csv::num(coarse.std_error) +
          ", half dt = " + csv::num(halved.value) + ", moment equation = " + csv::num(exact));

  McSettings pw{cfg.mc.pathwise_paths, cfg.mc.pathwise_steps, cfg.mc.radius, cfg.master_seed, cfg.workers};
  const auto gaps = pathwise_gap(sol, basis, pw, true);
  const auto resolved = pathwise_gap(sol, basis, pw, false);
  {
    auto os = out.open("pathwise.csv");
    os << "noise,N,mean_error,std_error\n";
    for (const auto& r : gaps) os << "brownian," << r.N << ',' << csv::num(r.mean_error) << ',' << csv::num(r.std_error) << '\n';
    for (const auto& r : resolved)
      os << "resolved_modes," << r.N << ',' << csv::num(r.mean_error) << ',' << csv::num(r.std_error) << '\n';
  }
  const double z = std::abs(coarse.value - chaos) / coarse.std_error;
  if (!(z <= 3.0)) {
    breaches.push_back("chaos vs Monte Carlo E||theta(T)||^2 within 3 standard errors: off by " + csv::num(z) +
                       " standard errors");
  }
}

void run_convergence(const ExperimentConfig& cfg, Outputs& out, std::vector<std::string>&) {
  const VelocityBasis basis = build_divergence_free_basis(cfg.covariance, cfg.shell_radius);
  PropagatorConfig p = cfg.propagator;
  p.output_times = {p.T};
  {
    const ChaosSolution sol = solve(cfg, basis, p, cfg.grid);
    auto os = out.open("convergence_N.csv");
    tail_decay_study(sol).write_csv(os);
    out.say("N sweep done");
  }
  {
    auto os = out.open("convergence_nt.csv");
    os << "n_t,n_indices,e_l2,tail,time_leak,residual,closed_residual\n";
    for (int n_t : cfg.convergence.n_t_values) {
      PropagatorConfig q = p;
      q.n_t = n_t;
      const ChaosSolution sol = solve(cfg, basis, q, cfg.grid);
      const EnergyRow r = energy_balance_report(sol).rows.back();
      os << n_t << ',' << sol.indices().size() << ',' << csv::num(r.e_l2) << ',' << csv::num(r.tail) << ','
         << csv::num(r.time_leak) << ',' << csv::num(r.residual) << ',' << csv::num(r.closed_residual) << '\n';
      out.say("n_t=" + std::to_string(n_t) + " done");
    }
  }
  {
    auto os = out.open("convergence_dt.csv");
    os << "dt,error,observed_order\n";
    std::vector<double> dts = cfg.convergence.dt_values;
    std::sort(dts.begin(), dts.end(), std::greater<>());
    PropagatorConfig r = p;
    r.dt = dts.back() / 4.0;
    const ChaosSolution ref = solve(cfg, basis, r, cfg.grid);
    double prev_err = 0.0, prev_dt = 0.0;
    for (double h : dts) {
      PropagatorConfig q = p;
      q.dt = h;
      const ChaosSolution sol = solve(cfg, basis, q, cfg.grid);
      const double err = total_distance(sol, ref);
      os << csv::num(h) << ',' << csv::num(err) << ',';
      if (prev_dt > 0.0) os << csv::num(std::log(prev_err / err) / std::log(prev_dt / h));
      os << '\n';
      prev_err = err;
      prev_dt = h;
    }
    out.say("dt sweep done");
  }
  {
    auto os = out.open("convergence_shell.csv");
    os << "shell_radius,n_modes,c0,second_moment_N1\n";
    for (int R : cfg.convergence.shell_radii) {
      CovarianceSpec cv = cfg.covariance;
      const VelocityBasis b = build_divergence_free_basis(cv, R);
      PropagatorConfig q = p;
      q.N = 1;
      q.n_w = static_cast<int>(b.size());
      GridSpec g = cfg.grid;
      g.growth_cap = std::max(g.growth_cap, g.base_radius + R);
      const ChaosSolution sol = solve(cfg, b, q, g);
      os << R << ',' << b.size() << ',' << csv::num(covariance_at_zero(b).c0) << ','
         << csv::num(chaos_moments(sol, q.T).second_moment_l2) << '\n';
    }
    out.say("shell sweep done");
  }
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& cfg, std::ostream* log) {
  cfg.validate();
  Outputs out(cfg, planned_files(cfg.kind), log);
  RunResult result;
  result.files = out.files();
  try {
    if (cfg.kind == "validate-basis") {
      run_validate_basis(cfg, out, result.breaches);
    } else if (cfg.kind == "propagate") {
      run_propagate(cfg, out, result.breaches);
    } else if (cfg.kind == "energy") {
      run_energy(cfg, out, result.breaches);
    } else if (cfg.kind == "compare-mc") {
      run_compare_mc(cfg, out, result.breaches);
    } else {
      run_convergence(cfg, out, result.breaches);
    }
  } catch (const InvariantBreach& e) {
    result.breaches.push_back(e.what());
  } catch (const GridOverflowError& e) {
    result.breaches.push_back(e.what());
  }
  out.finish(result.breaches);
  result.exit_code = result.breaches.empty() ? 0 : 1;
  return result;
}

}  // namespace chaosflow
