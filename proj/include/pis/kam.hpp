#pragma once

// Perturbed partially integrable systems on V x W x T^k: frequency map,
// Diophantine tests and measures, and torus-persistence sweeps.

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <limits>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "pis/calculus.hpp"
#include "pis/fields.hpp"
#include "pis/frequency.hpp"
#include "pis/geometry.hpp"
#include "pis/integrate.hpp"

namespace pis {

/// Coordinates (I_1..I_k, z_1..z_nz, phi_1..phi_k); H depends on (I, z),
/// H1 on all coordinates.
struct KamSystem {
  ChartDomain domain;
  ScalarField H;
  ScalarField H1;
  double eps = 0.0;
  /// H1 does not depend on the actions, so H + eps H1 splits into kick and drift.
  bool kick_drift = false;

  std::size_t k() const { return domain.k(); }
  std::size_t nz() const { return domain.dim_base() - domain.k(); }
};

inline KamSystem make_kam_system(const ChartDomain& domain, ScalarField h, ScalarField h1, double eps,
                                 bool h1_action_free, std::size_t probe_points = 16, std::uint64_t seed = 1) {
  if (domain.m() != domain.k() || domain.dim_base() < domain.k())
    throw ConstructionError("make_kam_system: chart must be actions x parameters x T^k");
  if (h.dim() != domain.dim() || h1.dim() != domain.dim())
    throw ConstructionError("make_kam_system: Hamiltonians must be defined on the chart");
  if (!(eps >= 0.0)) throw ConstructionError("make_kam_system: eps must be nonnegative");
  for (const auto& p : sample(domain, probe_points, seed)) {
    Eigen::VectorXd g = h.gradient(p);
    double dphi = g.tail(static_cast<Eigen::Index>(domain.k())).cwiseAbs().maxCoeff();
    if (dphi > 1e-12) throw ConstructionError("make_kam_system: H depends on the angles");
    if (h1_action_free) {
      Eigen::VectorXd g1 = h1.gradient(p);
      if (g1.head(static_cast<Eigen::Index>(domain.k())).cwiseAbs().maxCoeff() > 1e-12)
        throw ConstructionError("make_kam_system: H1 was declared action-free but depends on the actions");
    }
  }
  return KamSystem{domain, std::move(h), std::move(h1), eps, h1_action_free};
}

/// w = sum d/dI_i ^ d/dphi^i, the degenerate structure with Casimirs z.
inline BivectorField kam_poisson(const ChartDomain& domain) {
  const auto n = static_cast<Eigen::Index>(domain.dim());
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t i = 0; i < domain.k(); ++i) {
    auto a = static_cast<Eigen::Index>(i), b = static_cast<Eigen::Index>(domain.angle_offset() + i);
    w(a, b) = 1.0;
    w(b, a) = -1.0;
  }
  return BivectorField::constant(w);
}

/// phi(t) = phi(0) + t dH/dI(I, z); I and z are untouched.
inline Point unperturbed_flow(const KamSystem& sys, const Point& x0, double t) {
  if (!std::isfinite(t)) throw PreconditionError("unperturbed_flow: time must be finite");
  if (t == 0.0) return x0;
  Eigen::VectorXd x = x0.coords();
  Eigen::VectorXd g = sys.H.gradient(x0);
  const std::size_t k = sys.k(), off = sys.domain.angle_offset();
  for (std::size_t i = 0; i < k; ++i) x[static_cast<Eigen::Index>(off + i)] += t * g[static_cast<Eigen::Index>(i)];
  return x0.with_coords(x);
}

/// dI/dt = -dH'/dphi, dz/dt = 0, dphi/dt = dH'/dI with H' = H + eps H1.
inline VectorField perturbed_vf(const KamSystem& sys) {
  const std::size_t k = sys.k(), n = sys.domain.dim(), off = sys.domain.angle_offset();
  const ScalarField h = sys.H, h1 = sys.H1;
  const double eps = sys.eps;
  return VectorField(make_computed(
      n, n,
      [=](const Eigen::VectorXd& x) -> Eigen::VectorXd {
        Eigen::VectorXd g = h.gradient(x);
        if (eps != 0.0) g += eps * h1.gradient(x);
        Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
        for (std::size_t i = 0; i < k; ++i) {
          v[static_cast<Eigen::Index>(i)] = -g[static_cast<Eigen::Index>(off + i)];
          v[static_cast<Eigen::Index>(off + i)] = g[static_cast<Eigen::Index>(i)];
        }
        return v;
      },
      [=](const Eigen::VectorXd& x) -> Eigen::MatrixXd {
        Eigen::MatrixXd hs = h.hessian(x);
        if (eps != 0.0) hs += eps * h1.hessian(x);
        Eigen::MatrixXd j = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
        for (std::size_t i = 0; i < k; ++i) {
          j.row(static_cast<Eigen::Index>(i)) = -hs.row(static_cast<Eigen::Index>(off + i));
          j.row(static_cast<Eigen::Index>(off + i)) = hs.row(static_cast<Eigen::Index>(i));
        }
        return j;
      }));
}

struct FrequencyMap {
  Eigen::VectorXd omega;
  Eigen::MatrixXd jacobian;  ///< d omega / d(I, z), k x (k + nz)
  std::size_t action_rank = 0;
  bool nondegenerate = false;
};

inline FrequencyMap frequency_map(const KamSystem& sys, const Eigen::VectorXd& I, const Eigen::VectorXd& z,
                                  double tol = 1e-9) {
  const auto k = static_cast<Eigen::Index>(sys.k()), nz = static_cast<Eigen::Index>(sys.nz());
  if (I.size() != k || z.size() != nz) throw PreconditionError("frequency_map: wrong action or parameter length");
  Eigen::VectorXd x = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(sys.domain.dim()));
  x.head(k) = I;
  x.segment(k, nz) = z;
  FrequencyMap f;
  f.omega = sys.H.gradient(x).head(k);
  Eigen::MatrixXd hs = sys.H.hessian(x);
  f.jacobian = hs.topLeftCorner(k, k + nz);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(hs.topLeftCorner(k, k));
  const auto& s = svd.singularValues();
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s[i] > tol) ++f.action_rank;
  f.nondegenerate = f.action_rank == static_cast<std::size_t>(k);
  return f;
}

struct DiophantineParams {
  double gamma = 1e-3;
  std::size_t truncation = 30;  ///< scan all a != 0 with sum |a_j| <= truncation
};

struct DiophantineResult {
  bool passes = false;
  std::vector<long> worst_a;
  /// min over scanned a of |omega . a| (sum |a_j|)^(k+1): the largest gamma
  /// the scanned set admits.
  double margin = std::numeric_limits<double>::infinity();
  /// gamma (truncation + 1)^-(k+1): the bound unscanned vectors must exceed.
  double unscanned_bound = 0.0;
};

namespace detail {

/// Integer vectors with 1 <= sum |a| <= L, one of each +-a pair.
inline std::vector<std::vector<long>> lattice_scan(std::size_t k, std::size_t L) {
  std::vector<std::vector<long>> out;
  std::vector<long> a(k, 0);
  auto rec = [&](auto& self, std::size_t i, long budget) -> void {
    if (i == k) {
      long norm = 0;
      std::size_t first = k;
      for (std::size_t j = 0; j < k; ++j) {
        norm += std::labs(a[j]);
        if (first == k && a[j] != 0) first = j;
      }
      if (norm > 0 && a[first] > 0) out.push_back(a);
      return;
    }
    for (long v = -budget; v <= budget; ++v) {
      a[i] = v;
      self(self, i + 1, budget - std::labs(v));
    }
    a[i] = 0;
  };
  rec(rec, 0, static_cast<long>(L));
  return out;
}

inline DiophantineResult diophantine_scan(const Eigen::VectorXd& omega, const std::vector<std::vector<long>>& scan) {
  DiophantineResult r;
  const double power = static_cast<double>(omega.size() + 1);
  for (const auto& a : scan) {
    double dot = 0.0, norm = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) {
      dot += omega[static_cast<Eigen::Index>(j)] * static_cast<double>(a[j]);
      norm += std::abs(static_cast<double>(a[j]));
    }
    double m = std::abs(dot) * std::pow(norm, power);
    if (m < r.margin) {
      r.margin = m;
      r.worst_a = a;
    }
  }
  return r;
}

inline void check_params(const DiophantineParams& p) {
  if (!(p.gamma > 0.0)) throw PreconditionError("diophantine_test: gamma must be positive");
  if (p.truncation < 1) throw PreconditionError("diophantine_test: truncation must be at least 1");
}

}  // namespace detail

inline DiophantineResult diophantine_test(const Eigen::VectorXd& omega, const DiophantineParams& p) {
  detail::check_params(p);
  if (omega.size() == 0) throw PreconditionError("diophantine_test: empty frequency vector");
  DiophantineResult r = detail::diophantine_scan(omega, detail::lattice_scan(static_cast<std::size_t>(omega.size()), p.truncation));
  r.passes = r.margin >= p.gamma;
  r.unscanned_bound = p.gamma * std::pow(static_cast<double>(p.truncation + 1), -static_cast<double>(omega.size() + 1));
  return r;
}

enum class MeasureSampling {
  grid,    ///< cell centers of a regular grid with samples^(1/k) points per axis
  random,  ///< uniform Monte-Carlo draws from the seed
};

/// Fraction of sampled frequency vectors in the box passing the test, for
/// each gamma. The same sample set is used for every gamma.
inline std::vector<double> diophantine_measure(const std::vector<Interval>& box, const std::vector<double>& gammas,
                                               std::size_t truncation, std::size_t samples, std::uint64_t seed,
                                               MeasureSampling mode = MeasureSampling::grid) {
  if (samples < 1) throw PreconditionError("diophantine_measure: needs at least one sample");
  if (box.empty()) throw PreconditionError("diophantine_measure: empty frequency box");
  for (double g : gammas) detail::check_params({g, truncation});
  const std::size_t k = box.size();
  auto scan = detail::lattice_scan(k, truncation);

  std::vector<Eigen::VectorXd> pts;
  if (mode == MeasureSampling::grid) {
    auto per_axis = static_cast<std::size_t>(std::llround(std::pow(static_cast<double>(samples), 1.0 / static_cast<double>(k))));
    std::size_t total = 1;
    for (std::size_t i = 0; i < k; ++i) total *= per_axis;
    if (total != samples)
      throw PreconditionError("diophantine_measure: grid sampling needs a perfect k-th power sample count");
    std::vector<std::size_t> idx(k, 0);
    for (std::size_t c = 0; c < samples; ++c) {
      Eigen::VectorXd w(static_cast<Eigen::Index>(k));
      for (std::size_t i = 0; i < k; ++i)
        w[static_cast<Eigen::Index>(i)] =
            box[i].lower + box[i].width() * (static_cast<double>(idx[i]) + 0.5) / static_cast<double>(per_axis);
      pts.push_back(w);
      for (std::size_t i = 0; i < k && ++idx[i] == per_axis; ++i) idx[i] = 0;
    }
  } else {
    std::mt19937_64 rng(seed);
    for (std::size_t c = 0; c < samples; ++c) {
      Eigen::VectorXd w(static_cast<Eigen::Index>(k));
      for (std::size_t i = 0; i < k; ++i)
        w[static_cast<Eigen::Index>(i)] = box[i].lower + box[i].width() * detail::unit_uniform(rng);
      pts.push_back(w);
    }
  }
  std::vector<std::size_t> pass(gammas.size(), 0);
  for (const auto& w : pts) {
    double margin = detail::diophantine_scan(w, scan).margin;
    for (std::size_t g = 0; g < gammas.size(); ++g)
      if (margin >= gammas[g]) ++pass[g];
  }
  std::vector<double> out;
  for (auto c : pass) out.push_back(static_cast<double>(c) / static_cast<double>(samples));
  return out;
}

inline double diophantine_measure(const std::vector<Interval>& box, double gamma, std::size_t truncation,
                                  std::size_t samples, std::uint64_t seed, MeasureSampling mode = MeasureSampling::grid) {
  return diophantine_measure(box, std::vector<double>{gamma}, truncation, samples, seed, mode).front();
}

struct SweepConfig {
  std::vector<Eigen::VectorXd> cells;  ///< initial (I, z) per cell
  std::vector<double> eps;
  DiophantineParams diophantine;
  double horizon = 1000.0;
  std::size_t samples = 4096;      ///< trajectory samples over the horizon (power of two)
  std::size_t substeps = 5;        ///< integrator steps per sample for the splitting scheme
  double drift_coefficient = 0.5;  ///< drift threshold = coefficient * sqrt(eps) * action box width
  double residual_threshold = 1e-3;
  std::size_t threads = 1;
  IntegratorConfig integrator;     ///< used when the perturbation does not split
};

struct SweepRow {
  std::size_t cell_index = 0;
  Eigen::VectorXd I, z, omega;
  bool diophantine_pass = false;
  double eps = 0.0;
  double drift = 0.0;
  double freq_residual = 0.0;
  double energy_drift = 0.0;
  std::vector<double> frequencies;  ///< dominant frequency of each angle over the whole horizon
  bool survived = false;
  bool failed = false;
  std::string failure;
};

struct SweepResult {
  std::vector<SweepRow> rows;  ///< eps-major, cells in grid order
  std::vector<double> eps;
  std::size_t cells = 0;
  double horizon = 0.0;
  double gamma = 0.0;
  std::size_t truncation = 0;

  double survival_fraction(double e) const {
    std::size_t alive = 0, counted = 0;
    for (const auto& r : rows)
      if (r.eps == e && !r.failed) {
        ++counted;
        if (r.survived) ++alive;
      }
    return counted ? static_cast<double>(alive) / static_cast<double>(counted) : 0.0;
  }
};

/// Worker count: the PIS_THREADS environment variable overrides `requested`.
inline std::size_t resolve_threads(std::size_t requested) {
  if (const char* env = std::getenv("PIS_THREADS")) {
    char* end = nullptr;
    long v = std::strtol(env, &end, 10);
    if (end != env && v > 0) return static_cast<std::size_t>(v);
  }
  return std::max<std::size_t>(1, requested);
}

namespace detail {

/// Trajectory samples x(j T / N), j = 0..N-1.
inline std::vector<Eigen::VectorXd> kam_trajectory(const KamSystem& sys, const Eigen::VectorXd& x0,
                                                   const SweepConfig& cfg) {
  const std::size_t n = cfg.samples;
  const double dt = cfg.horizon / static_cast<double>(n);
  std::vector<Eigen::VectorXd> out;
  out.reserve(n);
  const auto k = static_cast<Eigen::Index>(sys.k());
  const auto off = static_cast<Eigen::Index>(sys.domain.angle_offset());

  if (sys.kick_drift || sys.eps == 0.0) {
    // Fourth-order composition of drift-kick-drift leapfrog steps.
    const double cbrt2 = std::cbrt(2.0);
    const double w1 = 1.0 / (2.0 - cbrt2), w0 = -cbrt2 / (2.0 - cbrt2);
    const double h = dt / static_cast<double>(cfg.substeps);
    Eigen::VectorXd x = x0;
    auto drift = [&](double tau) {
      Eigen::VectorXd g = sys.H.gradient(x);
      for (Eigen::Index i = 0; i < k; ++i) x[off + i] = wrap_angle(x[off + i] + tau * g[i]);
    };
    auto kick = [&](double tau) {
      if (sys.eps == 0.0) return;
      Eigen::VectorXd g = sys.H1.gradient(x);
      for (Eigen::Index i = 0; i < k; ++i) x[i] -= tau * sys.eps * g[off + i];
    };
    auto leapfrog = [&](double tau) {
      drift(0.5 * tau);
      kick(tau);
      drift(0.5 * tau);
    };
    for (std::size_t j = 0; j < n; ++j) {
      out.push_back(x);
      for (std::size_t s = 0; s < cfg.substeps; ++s) {
        leapfrog(w1 * h);
        leapfrog(w0 * h);
        leapfrog(w1 * h);
      }
      if (!x.allFinite()) throw IntegrationError(IntegrationError::Kind::step_underflow, "kam: non-finite state");
    }
    return out;
  }

  VectorField vf = perturbed_vf(sys);
  Rhs rhs = [&vf](const Eigen::VectorXd& x) { return vf(x); };
  Eigen::VectorXd x = x0;
  for (std::size_t j = 0; j < n; ++j) {
    out.push_back(x);
    x = integrate(rhs, x, dt, cfg.integrator);
    for (Eigen::Index i = 0; i < k; ++i) x[off + i] = wrap_angle(x[off + i]);
  }
  return out;
}

inline SweepRow sweep_cell(const KamSystem& base, const SweepConfig& cfg, std::size_t cell, double eps,
                           double box_width) {
  SweepRow row;
  row.cell_index = cell;
  row.eps = eps;
  const auto k = static_cast<Eigen::Index>(base.k()), nz = static_cast<Eigen::Index>(base.nz());
  const Eigen::VectorXd& iz = cfg.cells[cell];
  row.I = iz.head(k);
  row.z = iz.tail(nz);
  KamSystem sys = base;
  sys.eps = eps;
  row.omega = frequency_map(sys, row.I, row.z).omega;
  row.diophantine_pass = diophantine_test(row.omega, cfg.diophantine).passes;
  try {
    Eigen::VectorXd x0 = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(sys.domain.dim()));
    x0.head(k + nz) = iz;
    auto traj = kam_trajectory(sys, x0, cfg);
    const auto off = static_cast<Eigen::Index>(sys.domain.angle_offset());
    auto energy = [&](const Eigen::VectorXd& x) { return sys.H(x) + (eps != 0.0 ? eps * sys.H1(x) : 0.0); };
    const double e0 = energy(x0);
    for (const auto& x : traj) {
      row.drift = std::max(row.drift, (x.head(k) - x0.head(k)).cwiseAbs().maxCoeff());
      row.energy_drift = std::max(row.energy_drift, std::abs(energy(x) - e0));
    }
    const double dt = cfg.horizon / static_cast<double>(cfg.samples);
    const std::size_t half = cfg.samples / 2;
    for (Eigen::Index i = 0; i < k; ++i) {
      std::vector<double> a(traj.size());
      for (std::size_t j = 0; j < traj.size(); ++j) a[j] = traj[j][off + i];
      std::vector<double> first(a.begin(), a.begin() + static_cast<std::ptrdiff_t>(half));
      std::vector<double> second(a.begin() + static_cast<std::ptrdiff_t>(half), a.end());
      double f1 = extract_angle_frequencies(first, dt).front().frequency;
      double f2 = extract_angle_frequencies(second, dt).front().frequency;
      row.frequencies.push_back(extract_angle_frequencies(a, dt).front().frequency);
      row.freq_residual = std::max(row.freq_residual, std::abs(f1 - f2));
    }
    double threshold = cfg.drift_coefficient * std::sqrt(eps) * box_width;
    row.survived = row.drift <= threshold && row.freq_residual < cfg.residual_threshold;
  } catch (const Error& e) {
    row.failed = true;
    row.survived = false;
    row.failure = e.what();
  }
  return row;
}

}  // namespace detail

/// Integrates the perturbed field from (I, z, phi = 0) on every cell for
/// every eps; a torus survives when its action drift stays below the
/// threshold and its dominant frequencies agree between the two halves of
/// the horizon.
inline SweepResult persistence_sweep(const KamSystem& sys, const SweepConfig& cfg) {
  if (cfg.cells.empty()) throw PreconditionError("persistence_sweep: empty grid");
  if (cfg.eps.empty()) throw PreconditionError("persistence_sweep: empty eps list");
  if (!(cfg.horizon > 0.0)) throw PreconditionError("persistence_sweep: horizon must be positive");
  if (cfg.samples < 512 || (cfg.samples & (cfg.samples - 1)) != 0)
    throw PreconditionError("persistence_sweep: samples must be a power of two >= 512");
  if (cfg.substeps < 1) throw PreconditionError("persistence_sweep: substeps must be positive");
  for (double e : cfg.eps)
    if (!(e >= 0.0)) throw PreconditionError("persistence_sweep: eps values must be nonnegative");
  const auto dimiz = static_cast<Eigen::Index>(sys.domain.dim_base());
  for (const auto& c : cfg.cells)
    if (c.size() != dimiz) throw PreconditionError("persistence_sweep: cells must give (I, z)");
  detail::check_params(cfg.diophantine);

  double box_width = 0.0;
  for (std::size_t i = 0; i < sys.k(); ++i) box_width = std::max(box_width, sys.domain.base_bounds()[i].width());

  SweepResult res;
  res.eps = cfg.eps;
  res.cells = cfg.cells.size();
  res.horizon = cfg.horizon;
  res.gamma = cfg.diophantine.gamma;
  res.truncation = cfg.diophantine.truncation;
  const std::size_t total = cfg.eps.size() * cfg.cells.size();
  res.rows.resize(total);

  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t job = next++; job < total; job = next++) {
      std::size_t e = job / cfg.cells.size(), c = job % cfg.cells.size();
      res.rows[job] = detail::sweep_cell(sys, cfg, c, cfg.eps[e], box_width);
    }
  };
  const std::size_t nthreads = std::min(resolve_threads(cfg.threads), total);
  if (nthreads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < nthreads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return res;
}

/// Cells of a regular grid (linspace per axis, endpoints included) over the
/// action bounds, with fixed parameters z.
inline std::vector<Eigen::VectorXd> action_grid(const ChartDomain& domain, const std::vector<std::size_t>& shape,
                                                const Eigen::VectorXd& z) {
  const std::size_t k = domain.k();
  if (shape.size() != k) throw PreconditionError("action_grid: one grid size per action");
  if (static_cast<std::size_t>(z.size()) != domain.dim_base() - k)
    throw PreconditionError("action_grid: parameter vector has wrong length");
  std::size_t total = 1;
  for (auto s : shape) {
    if (s < 1) throw PreconditionError("action_grid: grid sizes must be positive");
    total *= s;
  }
  std::vector<Eigen::VectorXd> cells;
  std::vector<std::size_t> idx(k, 0);
  for (std::size_t c = 0; c < total; ++c) {
    Eigen::VectorXd x(static_cast<Eigen::Index>(domain.dim_base()));
    for (std::size_t i = 0; i < k; ++i) {
      const auto& b = domain.base_bounds()[i];
      double u = shape[i] == 1 ? 0.5 : static_cast<double>(idx[i]) / static_cast<double>(shape[i] - 1);
      x[static_cast<Eigen::Index>(i)] = b.lower + u * b.width();
    }
    x.tail(z.size()) = z;
    cells.push_back(x);
    // Last action varies fastest.
    for (std::size_t i = k; i-- > 0;) {
      if (++idx[i] < shape[i]) break;
      idx[i] = 0;
    }
  }
  return cells;
}

}  // namespace pis
