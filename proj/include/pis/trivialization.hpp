#pragma once

// Composite flows of commuting generators, period lattices, transition
// matrices, straightened generators, action integrals and canonical-form
// checks on toroidal charts.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "pis/fields.hpp"
#include "pis/geometry.hpp"
#include "pis/integrate.hpp"
#include "pis/structures.hpp"

namespace pis {

struct FlowMap {
  ChartDomain domain;
  std::vector<VectorField> generators;
  IntegratorConfig config;
  bool monitor_domain = true;  ///< abort with a domain-exit error when base coordinates leave their bounds

  std::size_t k() const { return generators.size(); }
};

namespace detail {

inline Rhs combined_rhs(const FlowMap& f, const Eigen::VectorXd& s) {
  return [&f, s](const Eigen::VectorXd& x) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(x.size());
    for (std::size_t l = 0; l < f.k(); ++l) {
      double c = s[static_cast<Eigen::Index>(l)];
      if (c != 0.0) v += c * f.generators[l](x);
    }
    return v;
  };
}

inline Monitor domain_monitor(const FlowMap& f) {
  if (!f.monitor_domain) return {};
  return [&f](const Eigen::VectorXd& x) {
    const auto& b = f.domain.base_bounds();
    for (std::size_t i = 0; i < b.size(); ++i) {
      double v = x[static_cast<Eigen::Index>(i)];
      if (!std::isfinite(v) || !b[i].contains(v)) {
        throw IntegrationError(IntegrationError::Kind::domain_exit,
                               "flow: trajectory left the domain through coordinate '" +
                                   f.domain.coordinate_names()[i] + "'");
      }
    }
  };
}

}  // namespace detail

/// Flow without angle reduction (chart coordinates as integrated).
inline Eigen::VectorXd flow_coords(const FlowMap& f, const Eigen::VectorXd& s, const Eigen::VectorXd& x0) {
  if (static_cast<std::size_t>(s.size()) != f.k()) throw PreconditionError("flow: parameter vector must have length k");
  if (s.cwiseAbs().maxCoeff() == 0.0) return x0;
  return integrate(detail::combined_rhs(f, s), x0, 1.0, f.config, detail::domain_monitor(f));
}

/// g(s)(x0): integrates sum_l s^l theta_l for unit time.
inline Point flow(const FlowMap& f, const Eigen::VectorXd& s, const Point& x0) {
  if (s.size() > 0 && s.cwiseAbs().maxCoeff() == 0.0) return x0;
  return x0.with_coords(flow_coords(f, s, x0.coords()));
}

/// The section point over base coordinates r: cylinder and angle coordinates zero.
inline Point section_point(const ChartDomain& domain, const Eigen::VectorXd& r) {
  if (static_cast<std::size_t>(r.size()) != domain.dim_base()) throw PreconditionError("section_point: wrong base length");
  Eigen::VectorXd x = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(domain.dim()));
  x.head(r.size()) = r;
  return Point(domain, x);
}

struct IsotropyOptions {
  std::size_t max_iterations = 40;
  double closure_tol = 1e-10;
  double trivial_norm = 1e-6;       ///< converged vectors shorter than this are the identity element
  double independence_tol = 1e-6;   ///< relative singular-value floor for accepting a new vector
  double divergence_factor = 1e3;   ///< |s| beyond factor * (1 + |guess|) counts as divergence
  bool sort = true;                 ///< sort by norm then lexicographically; off for continuation
};

struct GuessOutcome {
  Eigen::VectorXd guess;
  Eigen::VectorXd solution;
  std::string status;  ///< converged, trivial, collapsed, diverged, domain-exit
  std::size_t iterations = 0;
  double residual = 0.0;
};

struct PeriodLattice {
  Eigen::VectorXd base_point;
  std::vector<Eigen::VectorXd> vectors;
  std::vector<double> residuals;
  std::vector<GuessOutcome> outcomes;  ///< one per initial guess, in input order

  std::size_t m() const { return vectors.size(); }
  double residual() const {
    double r = 0.0;
    for (double v : residuals) r = std::max(r, v);
    return r;
  }
};

namespace detail {

inline double closure_norm(const FlowMap& f, const Eigen::VectorXd& s, const Eigen::VectorXd& x0, Eigen::VectorXd* end,
                           Eigen::VectorXd* g) {
  Eigen::VectorXd x1 = flow_coords(f, s, x0);
  Eigen::VectorXd d = chart_difference(f.domain, x1, x0);
  if (end) *end = x1;
  if (g) *g = d;
  return d.cwiseAbs().maxCoeff();
}

inline GuessOutcome newton_closure(const FlowMap& f, const Eigen::VectorXd& x0, const Eigen::VectorXd& guess,
                                   const IsotropyOptions& opt) {
  GuessOutcome out;
  out.guess = guess;
  Eigen::VectorXd s = guess;
  const double bound = opt.divergence_factor * (1.0 + guess.norm());
  std::size_t stalls = 0;
  double prev = std::numeric_limits<double>::infinity();
  try {
    Eigen::VectorXd x1, g;
    double r = closure_norm(f, s, x0, &x1, &g);
    for (std::size_t it = 1; it <= opt.max_iterations; ++it) {
      out.iterations = it;
      if (r < opt.closure_tol) {
        out.solution = s;
        out.residual = r;
        out.status = s.norm() < opt.trivial_norm ? "trivial" : "converged";
        return out;
      }
      stalls = r > 0.5 * prev ? stalls + 1 : 0;
      prev = r;

      Eigen::MatrixXd jac = generator_matrix(f.generators, x1);
      if (stalls >= 2) {
        // Finite-difference refinement of the endpoint Jacobian.
        for (std::size_t l = 0; l < f.k(); ++l) {
          Eigen::VectorXd sp = s;
          double h = 1e-6 * std::max(1.0, std::abs(s[static_cast<Eigen::Index>(l)]));
          sp[static_cast<Eigen::Index>(l)] += h;
          Eigen::VectorXd gp;
          closure_norm(f, sp, x0, nullptr, &gp);
          jac.col(static_cast<Eigen::Index>(l)) = (gp - g) / h;
        }
      }
      Eigen::VectorXd step = jac.completeOrthogonalDecomposition().solve(-g);

      double t = 1.0;
      Eigen::VectorXd s_new, x_new, g_new;
      double r_new = std::numeric_limits<double>::infinity();
      for (int ls = 0; ls < 8; ++ls, t *= 0.5) {
        s_new = s + t * step;
        r_new = closure_norm(f, s_new, x0, &x_new, &g_new);
        if (r_new < r) break;
      }
      s = s_new;
      x1 = x_new;
      g = g_new;
      r = r_new;
      if (!std::isfinite(r) || s.norm() > bound) break;
    }
    out.solution = s;
    out.residual = r;
    out.status = r < opt.closure_tol ? (s.norm() < opt.trivial_norm ? "trivial" : "converged") : "diverged";
  } catch (const IntegrationError& e) {
    out.solution = s;
    out.residual = std::numeric_limits<double>::infinity();
    out.status = e.kind() == IntegrationError::Kind::domain_exit ? "domain-exit" : "diverged";
  }
  return out;
}

}  // namespace detail

/// Newton iteration on s -> g(s)(sigma) - sigma from each guess. Converged,
/// nontrivial and mutually independent solutions form the lattice basis.
inline PeriodLattice find_isotropy_generators(const FlowMap& f, const Point& section,
                                              const std::vector<Eigen::VectorXd>& guesses,
                                              const IsotropyOptions& opt = {}) {
  if (f.k() == 0) throw PreconditionError("find_isotropy_generators: no generators");
  PeriodLattice lat;
  lat.base_point = section.base();
  const Eigen::VectorXd x0 = section.coords();
  std::vector<std::pair<Eigen::VectorXd, double>> accepted;
  for (const auto& guess : guesses) {
    if (static_cast<std::size_t>(guess.size()) != f.k())
      throw PreconditionError("find_isotropy_generators: guesses must have length k");
    GuessOutcome o = detail::newton_closure(f, x0, guess, opt);
    if (o.status == "converged") {
      Eigen::MatrixXd m(guess.size(), static_cast<Eigen::Index>(accepted.size() + 1));
      for (std::size_t i = 0; i < accepted.size(); ++i) m.col(static_cast<Eigen::Index>(i)) = accepted[i].first.normalized();
      m.col(m.cols() - 1) = o.solution.normalized();
      if (detail::smallest_column_singular_value(m) < opt.independence_tol) {
        o.status = "collapsed";
      } else {
        accepted.emplace_back(o.solution, o.residual);
      }
    }
    lat.outcomes.push_back(std::move(o));
  }
  if (opt.sort) {
    std::stable_sort(accepted.begin(), accepted.end(), [](const auto& a, const auto& b) {
      double na = a.first.norm(), nb = b.first.norm();
      if (std::abs(na - nb) > 1e-9 * std::max(na, nb)) return na < nb;
      for (Eigen::Index i = 0; i < a.first.size(); ++i)
        if (std::abs(a.first[i] - b.first[i]) > 1e-9 * std::max(na, nb)) return a.first[i] < b.first[i];
      return false;
    });
  }
  for (auto& [v, r] : accepted) {
    lat.vectors.push_back(v);
    lat.residuals.push_back(r);
  }
  return lat;
}

/// Lattice at a new section point, seeded with (and ordered like) a known
/// lattice. `continuation_shift` gives the largest vector displacement.
inline PeriodLattice continue_lattice(const FlowMap& f, const PeriodLattice& from, const Point& section,
                                      double* continuation_shift = nullptr, IsotropyOptions opt = {}) {
  opt.sort = false;
  PeriodLattice lat = find_isotropy_generators(f, section, from.vectors, opt);
  if (lat.m() != from.m()) {
    throw PreconditionError("continue_lattice: continuation lost " + std::to_string(from.m() - lat.m()) +
                            " lattice vector(s)");
  }
  if (continuation_shift) {
    *continuation_shift = 0.0;
    for (std::size_t i = 0; i < lat.m(); ++i)
      *continuation_shift = std::max(*continuation_shift, (lat.vectors[i] - from.vectors[i]).norm());
  }
  return lat;
}

struct TransitionMatrix {
  Eigen::MatrixXd A;
  Eigen::MatrixXd B0, C0, Br, Cr;
  double frame_residual = 0.0;  ///< max |A [e_a, v_i(0)] - [e_a, v_i(r)]|
};

/// Splits lattice vectors into the (k - m) cylinder components B and the m
/// angle components C (columns per lattice vector).
inline std::pair<Eigen::MatrixXd, Eigen::MatrixXd> lattice_blocks(const PeriodLattice& l) {
  if (l.m() == 0) return {Eigen::MatrixXd(), Eigen::MatrixXd()};
  const auto k = l.vectors.front().size();
  const auto m = static_cast<Eigen::Index>(l.m());
  if (m > k) throw PreconditionError("lattice_blocks: more lattice vectors than generators");
  Eigen::MatrixXd b(k - m, m), c(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    b.col(i) = l.vectors[static_cast<std::size_t>(i)].head(k - m);
    c.col(i) = l.vectors[static_cast<std::size_t>(i)].tail(m);
  }
  return {b, c};
}

namespace detail {

inline void require_nondegenerate(const Eigen::MatrixXd& c, const std::string& where) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(c, Eigen::ComputeFullV);
  const auto& s = svd.singularValues();
  if (s.size() == 0) return;
  if (s[s.size() - 1] <= 1e-12 * std::max(s[0], 1e-300)) {
    Eigen::VectorXd null = svd.matrixV().col(s.size() - 1);
    std::string dir;
    for (Eigen::Index i = 0; i < null.size(); ++i) dir += (i ? ", " : "") + std::to_string(null[i]);
    throw PreconditionError(where + ": angle block C is singular along lattice combination (" + dir + ")");
  }
}

}  // namespace detail

inline TransitionMatrix transition_matrix(const PeriodLattice& at0, const PeriodLattice& atr) {
  if (at0.m() != atr.m())
    throw PreconditionError("transition_matrix: lattices have different ranks m = " + std::to_string(at0.m()) +
                            " and " + std::to_string(atr.m()));
  if (at0.m() == 0) throw PreconditionError("transition_matrix: empty lattice");
  const auto k = at0.vectors.front().size();
  const auto m = static_cast<Eigen::Index>(at0.m());
  TransitionMatrix t;
  std::tie(t.B0, t.C0) = lattice_blocks(at0);
  std::tie(t.Br, t.Cr) = lattice_blocks(atr);
  detail::require_nondegenerate(t.C0, "transition_matrix");
  detail::require_nondegenerate(t.Cr, "transition_matrix");
  Eigen::MatrixXd c0_inv = t.C0.inverse();
  t.A = Eigen::MatrixXd::Identity(k, k);
  t.A.topRightCorner(k - m, m) = (t.Br - t.B0) * c0_inv;
  t.A.bottomRightCorner(m, m) = t.Cr * c0_inv;

  Eigen::MatrixXd f0 = Eigen::MatrixXd::Identity(k, k), fr = Eigen::MatrixXd::Identity(k, k);
  for (Eigen::Index i = 0; i < m; ++i) {
    f0.col(k - m + i) = at0.vectors[static_cast<std::size_t>(i)];
    fr.col(k - m + i) = atr.vectors[static_cast<std::size_t>(i)];
  }
  t.frame_residual = detail::max_abs(t.A * f0 - fr);
  return t;
}

/// Matrix-valued function of the base coordinates with exact derivatives.
class MatrixField {
 public:
  MatrixField(std::size_t rows, std::size_t cols, FunctionPtr f) : rows_(rows), cols_(cols), f_(std::move(f)) {
    if (f_->out_dim() != rows * cols) throw ConstructionError("MatrixField: output size must be rows * cols");
  }

  static MatrixField constant(std::size_t dim_base, const Eigen::MatrixXd& m) {
    const auto rows = static_cast<std::size_t>(m.rows()), cols = static_cast<std::size_t>(m.cols());
    std::vector<double> entries;
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) entries.push_back(m(i, j));
    return MatrixField(rows, cols, make_function(dim_base, rows * cols, [entries](const auto& x, auto& out) {
                         using T = typename std::decay_t<decltype(x)>::value_type;
                         for (std::size_t i = 0; i < entries.size(); ++i) out[i] = T(entries[i]);
                       }));
  }

  template <typename F>
  static MatrixField from_callable(std::size_t dim_base, std::size_t rows, std::size_t cols, F f) {
    return MatrixField(rows, cols, make_function(dim_base, rows * cols, std::move(f)));
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t dim_base() const { return f_->in_dim(); }

  Eigen::MatrixXd value(const Eigen::VectorXd& r) const { return reshape(f_->value(r)); }
  std::vector<Eigen::MatrixXd> derivatives(const Eigen::VectorXd& r) const {
    Eigen::MatrixXd j = f_->jacobian(r);
    std::vector<Eigen::MatrixXd> d;
    for (Eigen::Index c = 0; c < j.cols(); ++c) d.push_back(reshape(j.col(c)));
    return d;
  }

 private:
  Eigen::MatrixXd reshape(const Eigen::VectorXd& v) const {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows_), static_cast<Eigen::Index>(cols_));
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t j = 0; j < cols_; ++j)
        m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v[static_cast<Eigen::Index>(i * cols_ + j)];
    return m;
  }

  std::size_t rows_, cols_;
  FunctionPtr f_;
};

/// Generators in straightened toroidal coordinates (base r, cylinder t,
/// angles phi): theta_a = d/dt^a, theta_i = -(B C^{-1})^a_i d/dt^a +
/// (C^{-1})^j_i d/dphi^j. B and C are the lattice blocks divided by 2 pi,
/// so that sum_l v_i^l theta_l = 2 pi d/dphi^i.
inline std::vector<VectorField> straighten_generators(const DynamicalAlgebra& a, const ChartDomain& chart,
                                                      const MatrixField& B, const MatrixField& C) {
  const std::size_t k = chart.k(), m = chart.m(), nb = chart.dim_base(), n = chart.dim();
  if (a.k() != k) throw PreconditionError("straighten_generators: algebra and chart disagree on k");
  if (C.rows() != m || C.cols() != m || B.rows() != k - m || B.cols() != m)
    throw PreconditionError("straighten_generators: B must be (k-m) x m and C must be m x m");
  if (B.dim_base() != nb || C.dim_base() != nb)
    throw PreconditionError("straighten_generators: B and C must depend on the base coordinates only");

  std::vector<VectorField> out;
  for (std::size_t l = 0; l < k - m; ++l) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
    e[static_cast<Eigen::Index>(nb + l)] = 1.0;
    out.push_back(VectorField::constant(e));
  }
  const std::size_t t0 = nb, p0 = nb + (k - m);
  for (std::size_t i = 0; i < m; ++i) {
    auto columns = [=](const Eigen::MatrixXd& bci, const Eigen::MatrixXd& ci) {
      Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
      for (std::size_t r = 0; r < k - m; ++r)
        v[static_cast<Eigen::Index>(t0 + r)] = -bci(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(i));
      for (std::size_t r = 0; r < m; ++r)
        v[static_cast<Eigen::Index>(p0 + r)] = ci(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(i));
      return v;
    };
    out.emplace_back(make_computed(
        n, n,
        [=](const Eigen::VectorXd& x) -> Eigen::VectorXd {
          Eigen::VectorXd r = x.head(static_cast<Eigen::Index>(nb));
          Eigen::MatrixXd cv = C.value(r);
          detail::require_nondegenerate(cv, "straighten_generators");
          Eigen::MatrixXd ci = cv.inverse();
          return columns(B.value(r) * ci, ci);
        },
        [=](const Eigen::VectorXd& x) -> Eigen::MatrixXd {
          Eigen::VectorXd r = x.head(static_cast<Eigen::Index>(nb));
          Eigen::MatrixXd ci = C.value(r).inverse(), bv = B.value(r);
          auto db = B.derivatives(r);
          auto dc = C.derivatives(r);
          Eigen::MatrixXd j = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
          for (std::size_t c = 0; c < nb; ++c) {
            Eigen::MatrixXd dci = -ci * dc[c] * ci;
            j.col(static_cast<Eigen::Index>(c)) = columns(db[c] * ci + bv * dci, dci);
          }
          return j;
        }));
  }
  return out;
}

/// Closure of the straightened angle generators at each point: the flow of
/// sum_l 2 pi (B_i, C_i)^l theta_l for unit time returns to the start; B and
/// C are the (normalized) lattice blocks used at that point.
inline double straightened_closure_residual(const std::vector<VectorField>& straightened, const ChartDomain& chart,
                                            const Point& x, const Eigen::MatrixXd& b, const Eigen::MatrixXd& c,
                                            const IntegratorConfig& cfg = {}) {
  FlowMap f{chart, straightened, cfg, false};
  const auto k = static_cast<Eigen::Index>(chart.k()), m = static_cast<Eigen::Index>(chart.m());
  double res = 0.0;
  for (Eigen::Index i = 0; i < m; ++i) {
    Eigen::VectorXd s(k);
    s.head(k - m) = two_pi * b.col(i);
    s.tail(m) = two_pi * c.col(i);
    res = std::max(res, distance(flow(f, s, x), x));
  }
  return res;
}

struct ActionIntegrals {
  std::vector<double> values;
  std::vector<bool> degenerate;
  double quadrature_error = 0.0;  ///< max |I(panels) - I(panels / 2)|
};

namespace detail {

inline const std::array<std::pair<double, double>, 8>& gauss_legendre8() {
  static const std::array<std::pair<double, double>, 8> nodes = {{
      {-0.9602898564975363, 0.1012285362903763},
      {-0.7966664774136267, 0.2223810344533745},
      {-0.5255324099163290, 0.3137066458778873},
      {-0.1834346424956498, 0.3626837833783620},
      {0.1834346424956498, 0.3626837833783620},
      {0.5255324099163290, 0.3137066458778873},
      {0.7966664774136267, 0.2223810344533745},
      {0.9602898564975363, 0.1012285362903763},
  }};
  return nodes;
}

/// (1/2pi) int_0^1 Xi(x(t)) . xdot(t) dt and the path length, composite
/// order-8 Gauss-Legendre on `panels` equal panels.
inline std::pair<double, double> cycle_quadrature(const FlowMap& f, const std::vector<ScalarField>& xi,
                                                  const Eigen::VectorXd& v, const Eigen::VectorXd& x0,
                                                  std::size_t panels) {
  const auto& gl = gauss_legendre8();
  std::vector<double> times;
  std::vector<double> weights;
  const double h = 1.0 / static_cast<double>(panels);
  for (std::size_t p = 0; p < panels; ++p)
    for (const auto& [node, w] : gl) {
      times.push_back(h * (static_cast<double>(p) + 0.5 * (node + 1.0)));
      weights.push_back(0.5 * h * w);
    }
  Rhs rhs = combined_rhs(f, v);
  auto states = integrate_at(rhs, x0, times, f.config, domain_monitor(f));
  double action = 0.0, length = 0.0;
  for (std::size_t q = 0; q < states.size(); ++q) {
    Eigen::VectorXd xd = rhs(states[q]);
    double a = 0.0;
    for (std::size_t c = 0; c < xi.size(); ++c) a += xi[c](states[q]) * xd[static_cast<Eigen::Index>(c)];
    action += weights[q] * a;
    length += weights[q] * xd.norm();
  }
  return {action / two_pi, length};
}

}  // namespace detail

/// I_i = (1/2pi) times the integral of the Liouville form Xi = Xi_a dx^a
/// along the cycle t -> g(t v_i)(x0), t in [0, 1].
inline ActionIntegrals action_integrals(const std::vector<ScalarField>& xi, const PeriodLattice& lattice,
                                        const FlowMap& f, const Point& x0, std::size_t panels = 32) {
  if (lattice.m() == 0) throw PreconditionError("action_integrals: empty lattice, no cycles");
  if (xi.size() != f.domain.dim()) throw PreconditionError("action_integrals: one-form needs dim Z coefficients");
  if (panels < 2) throw PreconditionError("action_integrals: needs at least 2 panels");
  ActionIntegrals out;
  for (const auto& v : lattice.vectors) {
    auto [fine, length] = detail::cycle_quadrature(f, xi, v, x0.coords(), panels);
    if (!(length > 1e-12)) {
      out.values.push_back(0.0);
      out.degenerate.push_back(true);
      continue;
    }
    auto [coarse, unused] = detail::cycle_quadrature(f, xi, v, x0.coords(), panels / 2);
    (void)unused;
    out.values.push_back(fine);
    out.degenerate.push_back(false);
    out.quadrature_error = std::max(out.quadrature_error, std::abs(fine - coarse));
  }
  return out;
}

/// Coordinate change x -> x'(x) into a target chart, with exact Jacobian.
struct CoordinateMap {
  FunctionPtr map;
  ChartDomain target;
  std::vector<std::string> shifts;  ///< human-readable description of the coordinate shifts applied
};

enum class CanonicalPattern {
  bivector,  ///< W = sum d/dI ^ d/dy (actions paired with fiber coordinates)
  darboux,   ///< Omega = sum dI ^ dy + sum dp ^ dq on consecutive transverse pairs
  adapted,   ///< dI ^ dy block identity; I-I, y-y and z-y blocks zero; others free
};

struct ActionAngleReport {
  std::vector<double> actions;
  std::map<std::string, double> block_residuals;
  double residual = 0.0;
  double max_condition = 0.0;
  std::vector<std::size_t> excluded_points;
  std::vector<std::string> shifts;
  bool canonical = false;
};

namespace detail {

enum class Block { action, fiber, transverse };

inline std::vector<Block> block_labels(const ChartDomain& d, const CoordinateSplit& split) {
  std::vector<Block> lab(d.dim(), Block::transverse);
  for (auto i : split.action_indices) lab[i] = Block::action;
  for (std::size_t i = d.fiber_offset(); i < d.dim(); ++i) lab[i] = Block::fiber;
  return lab;
}

inline std::string block_name(Block a, Block b) {
  auto c = [](Block x) { return x == Block::action ? std::string("I") : x == Block::fiber ? "y" : "z"; };
  if (a > b) std::swap(a, b);
  return c(a) + "-" + c(b);
}

inline Eigen::MatrixXd canonical_target(const ChartDomain& d, const CoordinateSplit& split, CanonicalPattern p) {
  const auto n = static_cast<Eigen::Index>(d.dim());
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t l = 0; l < split.action_indices.size(); ++l) {
    auto i = static_cast<Eigen::Index>(split.action_indices[l]);
    auto y = static_cast<Eigen::Index>(d.fiber_offset() + l);
    t(i, y) = 1.0;
    t(y, i) = -1.0;
  }
  if (p == CanonicalPattern::darboux) {
    const auto& z = split.transverse_indices;
    for (std::size_t s = 0; s + 1 < z.size(); s += 2) {
      t(static_cast<Eigen::Index>(z[s]), static_cast<Eigen::Index>(z[s + 1])) = 1.0;
      t(static_cast<Eigen::Index>(z[s + 1]), static_cast<Eigen::Index>(z[s])) = -1.0;
    }
  }
  return t;
}

inline ActionAngleReport compare_to_pattern(const std::vector<Eigen::MatrixXd>& pushed, const std::vector<std::size_t>& kept,
                                            const ChartDomain& d, const CoordinateSplit& split, CanonicalPattern p,
                                            double tol) {
  ActionAngleReport r;
  auto lab = block_labels(d, split);
  Eigen::MatrixXd target = canonical_target(d, split, p);
  for (const auto& m : pushed) {
    for (std::size_t i = 0; i < d.dim(); ++i)
      for (std::size_t j = i + 1; j < d.dim(); ++j) {
        auto name = block_name(lab[i], lab[j]);
        bool free = p == CanonicalPattern::adapted && (name == "I-z" || name == "z-z");
        double dev = free ? 0.0
                          : std::abs(m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) -
                                     target(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
        auto& slot = r.block_residuals[name];
        slot = std::max(slot, dev);
        r.residual = std::max(r.residual, dev);
      }
  }
  (void)kept;
  r.canonical = r.residual <= tol;
  return r;
}

template <typename Push>
ActionAngleReport verify_with(const CoordinateMap& t, const CoordinateSplit& split, CanonicalPattern p,
                              const std::vector<Point>& points, double tol, Push push) {
  if (t.map->in_dim() != t.target.dim() || t.map->out_dim() != t.target.dim())
    throw PreconditionError("verify_canonical_form: transform must map dim Z to dim Z");
  std::vector<Eigen::MatrixXd> pushed;
  std::vector<std::size_t> kept, excluded;
  double max_cond = 0.0;
  for (std::size_t q = 0; q < points.size(); ++q) {
    Eigen::MatrixXd j = t.map->jacobian(points[q].coords());
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(j);
    const auto& s = svd.singularValues();
    double cond = s[s.size() - 1] > 0.0 ? s[0] / s[s.size() - 1] : std::numeric_limits<double>::infinity();
    if (!(cond < 1e12)) {
      excluded.push_back(q);
      continue;
    }
    max_cond = std::max(max_cond, cond);
    pushed.push_back(push(points[q].coords(), j));
    kept.push_back(q);
  }
  ActionAngleReport r = compare_to_pattern(pushed, kept, t.target, split, p, tol);
  r.max_condition = max_cond;
  r.excluded_points = std::move(excluded);
  r.shifts = t.shifts;
  if (kept.empty()) r.canonical = false;
  return r;
}

}  // namespace detail

/// Pushes a bivector through the transform (W' = J W J^T) and compares with
/// the canonical pattern over the target chart.
inline ActionAngleReport verify_canonical_form(const BivectorField& w, const CoordinateMap& t,
                                               const CoordinateSplit& target_split, const std::vector<Point>& points,
                                               double tol = 1e-8) {
  return detail::verify_with(t, target_split, CanonicalPattern::bivector, points, tol,
                             [&](const Eigen::VectorXd& x, const Eigen::MatrixXd& j) -> Eigen::MatrixXd {
                               return j * w.matrix(x) * j.transpose();
                             });
}

/// Pushes a two-form through the transform (Omega' = J^{-T} Omega J^{-1}).
inline ActionAngleReport verify_canonical_form(const TwoForm& omega, const CoordinateMap& t,
                                               const CoordinateSplit& target_split, CanonicalPattern pattern,
                                               const std::vector<Point>& points, double tol = 1e-8) {
  if (pattern == CanonicalPattern::bivector)
    throw PreconditionError("verify_canonical_form: bivector pattern requested for a two-form");
  return detail::verify_with(t, target_split, pattern, points, tol,
                             [&](const Eigen::VectorXd& x, const Eigen::MatrixXd& j) -> Eigen::MatrixXd {
                               Eigen::MatrixXd ji = j.inverse();
                               return ji.transpose() * omega.matrix(x) * ji;
                             });
}

}  // namespace pis
