#include "chaosflow/propagator.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "chaosflow/parallel.hpp"

namespace chaosflow {

double Conventions::reconstruction_sign(int order) const {
  const int h = hermite == HermiteConvention::Rodrigues ? -1 : 1;
  return (order % 2 == 0 || noise_sign * h == 1) ? 1.0 : -1.0;
}

std::string Conventions::describe() const {
  std::ostringstream os;
  os << "hermite=" << to_string(hermite) << ";noise_sign=" << (noise_sign > 0 ? "+" : "-")
     << ";pathwise_equation=dtheta=A*theta*dt" << (noise_sign > 0 ? "+" : "-") << "M_k*theta*dw_k";
  return os.str();
}

void PropagatorConfig::validate() const {
  if (nu < 0.0) throw std::invalid_argument("propagator: requires nu >= 0");
  if (!(T > 0.0)) throw std::invalid_argument("propagator: requires T > 0");
  if (n_t < 1) throw std::invalid_argument("propagator: requires n_t >= 1");
  if (n_w < 0) throw std::invalid_argument("propagator: requires n_w >= 0");
  if (N < 0) throw std::invalid_argument("propagator: requires N >= 0");
  if (!(dt > 0.0)) throw std::invalid_argument("propagator: requires dt > 0");
  if (output_times.empty()) throw std::invalid_argument("propagator: no output times");
  for (std::size_t j = 0; j < output_times.size(); ++j) {
    const double t = output_times[j];
    if (t < 0.0 || t > T) throw std::invalid_argument("propagator: output times must lie in [0, T]");
    if (j > 0 && !(t > output_times[j - 1])) throw std::invalid_argument("propagator: output times must increase");
  }
}

// Generator
// -----------------------------------------------------------------------------

Generator::Generator(double nu, Eigen::MatrixXd c0_matrix) : nu_(nu), c0_(std::move(c0_matrix)) {
  if (nu < 0.0) throw std::invalid_argument("generator: requires nu >= 0");
  if (c0_.rows() != c0_.cols()) throw std::invalid_argument("generator: C(0) must be square");
  if (c0_.size() > 0 && c0_.diagonal().minCoeff() < 0.0) {
    throw std::invalid_argument("generator: C(0) must be positive semidefinite");
  }
  const auto d = c0_.rows();
  diffusion_ = 0.5 * (nu * Eigen::MatrixXd::Identity(d, d) + c0_);
}

namespace {

Eigen::MatrixXd isotropic(double c0, int dim) {
  if (c0 < 0.0) throw std::invalid_argument("generator: requires c0 >= 0");
  return c0 * Eigen::MatrixXd::Identity(dim, dim);
}

}  // namespace

Generator::Generator(double nu, double c0, int dim) : Generator(nu, isotropic(c0, dim)) {}

double Generator::rate(const WaveVector& z) const {
  double q = 0.0;
  for (int i = 0; i < z.dim(); ++i)
    for (int j = 0; j < z.dim(); ++j) q += z[i] * diffusion_(i, j) * z[j];
  return q;
}

SpectralField apply_A(const SpectralField& f, const Generator& gen) {
  if (gen.diffusion().rows() != f.dim()) throw std::invalid_argument("apply_A: dimension mismatch");
  SpectralField out = f;
  for (std::size_t n = 0; n < out.size(); ++n) out.data()[n] *= -gen.rate(f.wavevector(n));
  return out;
}

SpectralField apply_A(const SpectralField& f, double nu, double c0) {
  if (nu < 0.0 || c0 < 0.0) throw std::invalid_argument("apply_A: requires nu >= 0 and c0 >= 0");
  return apply_A(f, Generator(nu, c0, f.dim()));
}

// ChaosSolution
// -----------------------------------------------------------------------------

std::size_t ChaosSolution::rank(const MultiIndex& alpha) const {
  const auto it = rank_.find(alpha);
  if (it == rank_.end()) throw std::out_of_range("multi-index " + alpha.to_string() + " not in solution");
  return it->second;
}

std::pair<std::size_t, std::size_t> ChaosSolution::level_range(int n) const {
  if (n < 0 || n > config_.N) throw std::out_of_range("level outside 0..N");
  return {level_start_[n], level_start_[n + 1]};
}

std::size_t ChaosSolution::time_index(double t) const {
  for (std::size_t j = 0; j < times_.size(); ++j) {
    if (std::abs(times_[j] - t) <= 0.5 * config_.dt) return j;
  }
  throw std::invalid_argument("time " + std::to_string(t) + " is not an output time");
}

const SpectralField& ChaosSolution::coefficient(std::size_t rank, std::size_t time_index) const {
  return fields_.at(time_index).at(rank);
}

// Solver
// -----------------------------------------------------------------------------

namespace {

struct Term {
  std::size_t parent;  // local rank at level n-1
  int k;               // 0-based noise index
  int i;               // 1-based time mode
  double weight;       // sqrt(alpha_i^k)
};

struct Level {
  std::size_t begin = 0;
  std::size_t count = 0;
  int radius = 0;
  std::size_t size = 0;
  std::vector<double> grad_weight;  // |z|^2
  std::vector<double> adv_weight;   // z^T C(0) z
  std::vector<double> e_full;       // exp(-h z^T D z)
  std::vector<double> e_half;
  std::vector<ModeOperator> ops;                // per k, level n-1 -> n
  std::vector<std::vector<Term>> terms;         // per local alpha
};

using State = std::vector<std::vector<Complex>>;  // [level][local * size + idx]

struct Integrands {
  std::vector<double> grad, out, in;  // [level]
};

class Stepper {
 public:
  Stepper(std::vector<Level>& levels, const TimeBasis& tb, int n_w, int dim, int workers)
      : levels_(levels), tb_(tb), n_w_(n_w), volume_(torus_volume(dim)), workers_(workers) {
    for (std::size_t n = 1; n < levels_.size(); ++n) {
      scratch_.emplace_back(levels_[n - 1].count * static_cast<std::size_t>(n_w) * levels_[n].size);
    }
  }

  /// forcing <- F(state, t); also returns the energy integrands at (state, forcing).
  Integrands forcing(const State& state, double t, State& forcing) {
    const std::size_t L = levels_.size();
    Integrands q{std::vector<double>(L), std::vector<double>(L), std::vector<double>(L)};
    std::vector<double> m(tb_.size() + 1);
    const double tc = std::min(t, tb_.horizon());
    for (int i = 1; i <= tb_.size(); ++i) m[i] = tb_.eval(i, tc);

    for (std::size_t n = 1; n < L; ++n) {
      const Level& lo = levels_[n - 1];
      const Level& hi = levels_[n];
      auto& g = scratch_[n - 1];
      std::fill(g.begin(), g.end(), Complex{});
      // M_k theta_beta for every parent beta and noise k.
      parallel_for(lo.count, workers_, [&](std::size_t b) {
        std::span<const Complex> in(state[n - 1].data() + b * lo.size, lo.size);
        for (int k = 0; k < n_w_; ++k) {
          std::span<Complex> out(g.data() + (b * n_w_ + k) * hi.size, hi.size);
          hi.ops[k].apply_add(in, out, 1.0);
        }
      });
      parallel_for(hi.count, workers_, [&](std::size_t a) {
        std::span<Complex> f(forcing[n].data() + a * hi.size, hi.size);
        std::fill(f.begin(), f.end(), Complex{});
        for (const Term& term : hi.terms[a]) {
          const double c = term.weight * m[term.i];
          const Complex* src = g.data() + (term.parent * n_w_ + term.k) * hi.size;
          for (std::size_t j = 0; j < hi.size; ++j) f[j] += c * src[j];
        }
      });
    }

    for (std::size_t n = 0; n < L; ++n) {
      const Level& lv = levels_[n];
      std::vector<double> gr(lv.count), ou(lv.count), in(lv.count);
      parallel_for(lv.count, workers_, [&](std::size_t a) {
        const Complex* u = state[n].data() + a * lv.size;
        double sg = 0.0, so = 0.0, si = 0.0;
        for (std::size_t j = 0; j < lv.size; ++j) {
          const double p = std::norm(u[j]);
          sg += lv.grad_weight[j] * p;
          so += lv.adv_weight[j] * p;
        }
        if (n > 0) {
          const Complex* f = forcing[n].data() + a * lv.size;
          for (std::size_t j = 0; j < lv.size; ++j) si += f[j].real() * u[j].real() + f[j].imag() * u[j].imag();
        }
        gr[a] = volume_ * sg;
        ou[a] = volume_ * so;
        in[a] = 2.0 * volume_ * si;
      });
      for (std::size_t a = 0; a < lv.count; ++a) {
        q.grad[n] += gr[a];
        q.out[n] += ou[a];
        q.in[n] += in[a];
      }
    }
    return q;
  }

 private:
  std::vector<Level>& levels_;
  const TimeBasis& tb_;
  int n_w_;
  double volume_;
  int workers_;
  std::vector<std::vector<Complex>> scratch_;
};

State make_state(const std::vector<Level>& levels) {
  State s;
  for (const auto& lv : levels) s.emplace_back(lv.count * lv.size);
  return s;
}

// dst = E * (a + c * b), E a per-wavevector factor repeated across fields
template <typename Fn>
void for_each_entry(const std::vector<Level>& levels, int workers, Fn&& fn) {
  for (std::size_t n = 0; n < levels.size(); ++n) {
    const Level& lv = levels[n];
    parallel_for(lv.count, workers, [&](std::size_t a) {
      for (std::size_t j = 0; j < lv.size; ++j) fn(n, a * lv.size + j, j);
    });
  }
}

}  // namespace

ChaosSolution solve_propagator(const SpectralField& theta0, const VelocityBasis& basis, const PropagatorConfig& cfg,
                               const GridSpec& grid, const Conventions& conv, int workers) {
  cfg.validate();
  grid.validate();
  if (conv.noise_sign != 1 && conv.noise_sign != -1) throw std::invalid_argument("noise_sign must be +1 or -1");
  if (theta0.dim() != basis.dim() || grid.dim != basis.dim()) {
    throw std::invalid_argument("solve_propagator: dimension mismatch between theta0, basis and grid");
  }
  if (!theta0.is_real(1e-12)) throw std::invalid_argument("solve_propagator: theta0 violates the reality constraint");

  const VelocityBasis noise = basis.prefix(static_cast<std::size_t>(cfg.n_w));
  const CovarianceAtZero cov = covariance_at_zero(noise);
  const int shift = noise.max_shift();
  if (grid.base_radius + cfg.N * shift > grid.growth_cap) {
    throw GridOverflowError("grid overflow: level " + std::to_string(cfg.N) + " needs radius " +
                            std::to_string(grid.base_radius + cfg.N * shift) + " but growth cap is " +
                            std::to_string(grid.growth_cap));
  }

  ChaosSolution sol(cfg, conv, Generator(cfg.nu, cov.matrix));
  sol.c0_ = cov.c0;
  sol.dim_ = basis.dim();
  sol.theta0_ = theta0.resized(grid.base_radius);
  sol.indices_ = enumerate_multiindices(cfg.n_t, cfg.n_w, cfg.N);
  for (std::size_t r = 0; r < sol.indices_.size(); ++r) sol.rank_.emplace(sol.indices_[r], r);

  const int d = basis.dim();
  const double h = cfg.dt;
  const Generator& gen = sol.generator_;

  // Level layouts.
  std::vector<Level> levels(cfg.N + 1);
  sol.level_start_.assign(cfg.N + 2, 0);
  for (std::size_t r = 0; r < sol.indices_.size(); ++r) ++sol.level_start_[sol.indices_[r].order() + 1];
  for (int n = 0; n <= cfg.N; ++n) sol.level_start_[n + 1] += sol.level_start_[n];
  for (int n = 0; n <= cfg.N; ++n) {
    Level& lv = levels[n];
    lv.begin = sol.level_start_[n];
    lv.count = sol.level_start_[n + 1] - lv.begin;
    lv.radius = grid.base_radius + n * shift;
    const SpectralField shape(d, lv.radius);
    lv.size = shape.size();
    for (std::size_t j = 0; j < lv.size; ++j) {
      const WaveVector z = shape.wavevector(j);
      const double rate = gen.rate(z);
      lv.grad_weight.push_back(static_cast<double>(z.norm_squared()));
      double adv = 0.0;
      for (int a = 0; a < d; ++a)
        for (int b = 0; b < d; ++b) adv += z[a] * cov.matrix(a, b) * z[b];
      lv.adv_weight.push_back(adv);
      lv.e_full.push_back(std::exp(-rate * h));
      lv.e_half.push_back(std::exp(-rate * 0.5 * h));
    }
    if (n > 0) {
      for (int k = 0; k < cfg.n_w; ++k) lv.ops.emplace_back(noise.mode(k), d, levels[n - 1].radius, lv.radius);
      lv.terms.resize(lv.count);
      for (std::size_t a = 0; a < lv.count; ++a) {
        const MultiIndex& alpha = sol.indices_[lv.begin + a];
        for (const auto& e : alpha.entries()) {
          const std::size_t parent = sol.rank_.at(alpha.decremented(e.cell.i, e.cell.k)) - levels[n - 1].begin;
          lv.terms[a].push_back({parent, e.cell.k - 1, e.cell.i, std::sqrt(static_cast<double>(e.count))});
        }
      }
    }
  }

  // Output schedule.
  std::vector<long> out_steps;
  for (double t : cfg.output_times) {
    const long j = std::lround(t / h);
    if (std::abs(t - j * h) > 0.5 * h) throw std::invalid_argument("output time cannot be snapped to the dt grid");
    out_steps.push_back(j);
    sol.times_.push_back(j * h);
  }
  for (std::size_t j = 1; j < out_steps.size(); ++j) {
    if (out_steps[j] == out_steps[j - 1]) throw std::invalid_argument("two output times snap to the same step");
  }

  const TimeBasis tb(cfg.T, cfg.n_t);
  Stepper stepper(levels, tb, cfg.n_w, d, workers);

  State u = make_state(levels);
  {
    const auto src = sol.theta0_.data();
    std::copy(src.begin(), src.end(), u[0].begin());
  }
  State s = make_state(levels), k1 = make_state(levels), k2 = make_state(levels), k3 = make_state(levels),
        k4 = make_state(levels);

  const std::size_t L = levels.size();
  std::vector<double> acc_grad(L, 0.0), acc_out(L, 0.0), acc_in(L, 0.0);
  sol.integrals_.assign(L, LevelIntegrals{});

  auto snapshot = [&](double t) {
    std::vector<SpectralField> fields;
    fields.reserve(sol.indices_.size());
    for (std::size_t n = 0; n < L; ++n) {
      const Level& lv = levels[n];
      for (std::size_t a = 0; a < lv.count; ++a) {
        SpectralField f(d, lv.radius);
        std::copy_n(u[n].begin() + a * lv.size, lv.size, f.data().begin());
        if (!f.all_finite()) {
          for (std::size_t j = 0; j < f.size(); ++j) {
            const Complex c = f.data()[j];
            if (!std::isfinite(c.real()) || !std::isfinite(c.imag())) {
              throw InvariantBreach("non-finite chaos coefficient: alpha rank " + std::to_string(lv.begin + a) + " " +
                                    sol.indices_[lv.begin + a].to_string() + ", t=" + std::to_string(t) +
                                    ", wavevector " + f.wavevector(j).to_string());
            }
          }
        }
        fields.push_back(std::move(f));
      }
    }
    sol.fields_.push_back(std::move(fields));
    for (std::size_t n = 0; n < L; ++n) {
      sol.integrals_[n].gradient.push_back(acc_grad[n]);
      sol.integrals_[n].outflow.push_back(acc_out[n]);
      sol.integrals_[n].inflow.push_back(acc_in[n]);
    }
  };

  std::size_t next_out = 0;
  const long last = out_steps.back();
  for (long step = 0;; ++step) {
    while (next_out < out_steps.size() && out_steps[next_out] == step) {
      snapshot(step * h);
      ++next_out;
    }
    if (step == last) break;
    const double t = step * h;

    const Integrands q1 = stepper.forcing(u, t, k1);
    for_each_entry(levels, workers, [&](std::size_t n, std::size_t p, std::size_t j) {
      s[n][p] = levels[n].e_half[j] * (u[n][p] + 0.5 * h * k1[n][p]);
    });
    const Integrands q2 = stepper.forcing(s, t + 0.5 * h, k2);
    for_each_entry(levels, workers, [&](std::size_t n, std::size_t p, std::size_t j) {
      s[n][p] = levels[n].e_half[j] * u[n][p] + 0.5 * h * k2[n][p];
    });
    const Integrands q3 = stepper.forcing(s, t + 0.5 * h, k3);
    for_each_entry(levels, workers, [&](std::size_t n, std::size_t p, std::size_t j) {
      s[n][p] = levels[n].e_full[j] * u[n][p] + h * levels[n].e_half[j] * k3[n][p];
    });
    const Integrands q4 = stepper.forcing(s, t + h, k4);
    for_each_entry(levels, workers, [&](std::size_t n, std::size_t p, std::size_t j) {
      const Level& lv = levels[n];
      u[n][p] = lv.e_full[j] * u[n][p] +
                h / 6.0 * (lv.e_full[j] * k1[n][p] + 2.0 * lv.e_half[j] * (k2[n][p] + k3[n][p]) + k4[n][p]);
    });
    for (std::size_t n = 0; n < L; ++n) {
      acc_grad[n] += h / 6.0 * (q1.grad[n] + 2.0 * q2.grad[n] + 2.0 * q3.grad[n] + q4.grad[n]);
      acc_out[n] += h / 6.0 * (q1.out[n] + 2.0 * q2.out[n] + 2.0 * q3.out[n] + q4.out[n]);
      acc_in[n] += h / 6.0 * (q1.in[n] + 2.0 * q2.in[n] + 2.0 * q3.in[n] + q4.in[n]);
    }
  }
  return sol;
}

SpectralField reconstruct(const ChaosSolution& sol, const GaussianSample& sample, double t, int max_order) {
  const std::size_t ti = sol.time_index(t);
  if (sample.n_t() < sol.config().n_t || sample.n_w() < sol.config().n_w) {
    throw std::invalid_argument("reconstruct: sample does not cover (n_t, n_w)");
  }
  const int radius = sol.coefficient(sol.indices().size() - 1, ti).radius();
  SpectralField out(sol.dim(), radius);
  for (std::size_t r = 0; r < sol.indices().size(); ++r) {
    const MultiIndex& alpha = sol.indices()[r];
    if (max_order >= 0 && alpha.order() > max_order) break;
    const double w = sol.conventions().reconstruction_sign(alpha.order()) *
                     xi_alpha(alpha, sample, sol.conventions().hermite);
    const SpectralField& f = sol.coefficient(r, ti);
    if (f.radius() == radius) {
      out.axpy(w, f);
    } else {
      out.axpy(w, f.resized(radius));
    }
  }
  return out;
}

ChaosMoments chaos_moments(const ChaosSolution& sol, double t) {
  const std::size_t ti = sol.time_index(t);
  ChaosMoments m{sol.coefficient(0, ti), 0.0, 0.0};
  for (std::size_t r = 0; r < sol.indices().size(); ++r) {
    const SpectralField& f = sol.coefficient(r, ti);
    m.second_moment_l2 += norm_squared(f);
    m.grad_second_moment += gradient_norm_squared(f);
  }
  return m;
}

}  // namespace chaosflow
