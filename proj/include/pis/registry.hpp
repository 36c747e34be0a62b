#pragma once

// Built-in benchmark systems with analytic fields, lattice guesses,
// Liouville forms and action-angle maps.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pis/calculus.hpp"
#include "pis/expr.hpp"
#include "pis/fields.hpp"
#include "pis/geometry.hpp"
#include "pis/kam.hpp"
#include "pis/structures.hpp"
#include "pis/trivialization.hpp"

namespace pis {

/// Straightened description of a system with r-dependent lattice blocks.
struct StraightenedModel {
  ChartDomain chart;
  MatrixField B;  ///< lattice cylinder block divided by 2 pi, over the chart's base
  MatrixField C;  ///< lattice angle block divided by 2 pi
  /// Phase-space point with straightened coordinates (r, t = 0, phi).
  std::function<Eigen::VectorXd(const Eigen::VectorXd& r, const Eigen::VectorXd& phi)> embed;
};

struct BuiltSystem {
  std::string name;
  ChartDomain domain;
  bool toroidal = false;  ///< coordinates already adapted (r, t, phi); block-form checks apply
  DynamicalAlgebra algebra;
  BivectorField w;
  std::optional<TwoForm> omega;
  std::vector<ScalarField> hamiltonians;
  CoordinateSplit split;
  std::vector<Eigen::VectorXd> lattice_guesses;
  std::optional<std::vector<ScalarField>> liouville;
  std::optional<CoordinateMap> action_angle;
  std::optional<CoordinateSplit> action_angle_split;
  std::optional<StraightenedModel> straightened;
  Eigen::VectorXd default_point;
  std::optional<KamSystem> kam;  ///< set for systems on V x W x T^k
};

using RegistryParams = std::map<std::string, std::vector<double>>;

namespace detail {

inline double param(const RegistryParams& p, const std::string& key, double fallback) {
  auto it = p.find(key);
  if (it == p.end()) return fallback;
  if (it->second.size() != 1) throw ConstructionError("registry: parameter '" + key + "' must be a single number");
  return it->second.front();
}

inline std::size_t count_param(const RegistryParams& p, const std::string& key, double fallback) {
  double v = param(p, key, fallback);
  if (!(v >= 0.0) || v != std::floor(v)) throw ConstructionError("registry: parameter '" + key + "' must be a nonnegative integer");
  return static_cast<std::size_t>(v);
}

inline std::vector<double> list_param(const RegistryParams& p, const std::string& key, std::vector<double> fallback) {
  auto it = p.find(key);
  return it == p.end() ? fallback : it->second;
}

inline void require_known(const RegistryParams& p, const std::vector<std::string>& known, const std::string& name) {
  for (const auto& [k, v] : p) {
    bool ok = false;
    for (const auto& n : known) ok = ok || n == k;
    if (!ok) throw ConstructionError("registry: system '" + name + "' has no parameter '" + k + "'");
  }
}

inline std::string join_sum(const std::vector<std::string>& terms) {
  std::string s;
  for (const auto& t : terms) s += (s.empty() ? "" : " + ") + t;
  return s.empty() ? "0" : s;
}

/// Symplectic phase space of oscillator and free degrees of freedom with
/// Omega = sum dp ^ dq. Coordinate layout: all (q_j, p_j) pairs in order.
struct PhaseSpace {
  std::size_t ndof;
  Eigen::MatrixXd omega_matrix() const {
    const auto n = static_cast<Eigen::Index>(2 * ndof);
    Eigen::MatrixXd o = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(ndof); ++j) {
      o(2 * j + 1, 2 * j) = 1.0;
      o(2 * j, 2 * j + 1) = -1.0;
    }
    return o;
  }
  Eigen::MatrixXd w_matrix() const { return -omega_matrix().inverse(); }
};

inline std::vector<std::string> phase_names(std::size_t ndof, const std::vector<std::string>& labels) {
  std::vector<std::string> n;
  for (std::size_t j = 0; j < ndof; ++j) {
    n.push_back("q" + labels[j]);
    n.push_back("p" + labels[j]);
  }
  return n;
}

/// E_j / omega_j, the oscillator action in expression form.
inline std::string action_expr(const std::string& q, const std::string& p, double w) {
  return "(" + p + "^2 + " + expr::format_number(w * w) + " * " + q + "^2) / " + expr::format_number(2.0 * w);
}

inline std::vector<ScalarField> parse_all(const std::vector<std::string>& texts, const ChartDomain& d) {
  std::vector<ScalarField> out;
  for (const auto& t : texts) out.push_back(expr::parse_field(t, d));
  return out;
}

inline std::vector<VectorField> hamiltonian_fields(const BivectorField& w, const std::vector<ScalarField>& h) {
  std::vector<VectorField> out;
  for (const auto& f : h) out.push_back(hamiltonian_vf(w, f));
  return out;
}

inline std::vector<ScalarField> pdq_liouville(std::size_t ndof, const ChartDomain& d) {
  std::vector<ScalarField> xi;
  for (std::size_t j = 0; j < ndof; ++j) {
    xi.push_back(ScalarField::coordinate(d.dim(), 2 * j + 1));
    xi.push_back(ScalarField::constant(d.dim(), 0.0));
  }
  return xi;
}

/// (q_j, p_j) -> (I_j, phi_j) for every oscillator, phi = atan2(omega q, p).
inline CoordinateMap oscillator_action_angle(const std::vector<double>& w, const ChartDomain& source,
                                             CoordinateSplit* split) {
  const std::size_t n = w.size();
  std::vector<Interval> bounds;
  std::vector<std::string> names;
  for (std::size_t j = 0; j < n; ++j) {
    bounds.push_back({0.0, 1e6});
    names.push_back("I" + std::to_string(j + 1));
  }
  for (std::size_t j = 0; j < n; ++j) names.push_back("phi" + std::to_string(j + 1));
  ChartDomain target = make_domain(n, n, n, bounds, names);
  *split = leading_split(target);
  auto f = make_function(source.dim(), source.dim(), [w, n](const auto& x, auto& out) {
    using std::atan2;
    for (std::size_t j = 0; j < n; ++j) {
      const auto& q = x[2 * j];
      const auto& p = x[2 * j + 1];
      out[j] = (p * p + (w[j] * w[j]) * q * q) / (2.0 * w[j]);
      out[n + j] = atan2(w[j] * q, p);
    }
  });
  return CoordinateMap{f, target, {"I_j = (p_j^2 + omega_j^2 q_j^2) / (2 omega_j)", "phi_j = atan2(omega_j q_j, p_j)"}};
}

}  // namespace detail

/// n oscillators H_j = (p_j^2 + omega_j^2 q_j^2) / 2 with Omega = sum dp ^ dq;
/// the algebra is generated by the first k Hamiltonian fields. The ring S
/// holds all H_j and the coordinates of the (k+1)-th oscillator when k < n.
inline BuiltSystem oscillator_chain(std::size_t n, std::size_t k, std::vector<double> w) {
  if (n < 1 || k < 1 || k > n) throw ConstructionError("oscillator_chain: needs 1 <= k <= n");
  if (w.size() < n) {
    for (std::size_t j = w.size(); j < n; ++j) w.push_back(static_cast<double>(j + 1));
  }
  w.resize(n);
  for (double x : w)
    if (!(x > 0.0)) throw ConstructionError("oscillator_chain: frequencies must be positive");
  std::vector<std::string> labels;
  for (std::size_t j = 0; j < n; ++j) labels.push_back(std::to_string(j + 1));
  auto names = detail::phase_names(n, labels);
  std::vector<Interval> bounds(2 * n - k, Interval{-10.0, 10.0});
  ChartDomain d = make_domain(2 * n - k, k, 0, bounds, names);
  detail::PhaseSpace ps{n};

  BuiltSystem s;
  s.name = "oscillator_chain";
  s.domain = d;
  s.omega = TwoForm::constant(ps.omega_matrix());
  s.w = BivectorField::constant(ps.w_matrix());
  std::vector<std::string> energies;
  for (std::size_t j = 0; j < n; ++j)
    energies.push_back("(p" + labels[j] + "^2 + " + expr::format_number(w[j] * w[j]) + " * q" + labels[j] + "^2) / 2");
  auto all = detail::parse_all(energies, d);
  s.hamiltonians.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k));
  s.algebra.domain = d;
  s.algebra.generators = detail::hamiltonian_fields(s.w, s.hamiltonians);
  s.algebra.s_generators = all;
  if (k < n) {
    s.algebra.s_generators.push_back(ScalarField::coordinate(d.dim(), 2 * k));
    s.algebra.s_generators.push_back(ScalarField::coordinate(d.dim(), 2 * k + 1));
  }
  s.split = leading_split(d);
  for (std::size_t j = 0; j < k; ++j) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(k));
    v[static_cast<Eigen::Index>(j)] = two_pi / w[j];
    s.lattice_guesses.push_back(v);
  }
  s.liouville = detail::pdq_liouville(n, d);
  CoordinateSplit aa;
  s.action_angle = detail::oscillator_action_angle(w, d, &aa);
  s.action_angle_split = aa;
  // Unit energy in every oscillator, starting at q = 0.
  s.default_point = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(2 * n));
  for (std::size_t j = 0; j < n; ++j) s.default_point[static_cast<Eigen::Index>(2 * j + 1)] = std::sqrt(2.0);
  return s;
}

/// Generators d/dx (H = p_x) and the Hamiltonian fields of G_j = omega_j I_j +
/// shear I_j p_x for oscillators j, recombined as theta = T X. The lattice
/// blocks depend on (p_x, I) when shear != 0. Coordinates: oscillator pairs,
/// then (q_x = x, p_x). Generator order: translation first.
inline BuiltSystem twisted(std::vector<double> w, double shear, std::optional<Eigen::MatrixXd> T = std::nullopt) {
  const std::size_t n = w.size();
  if (n < 1) throw ConstructionError("twisted: needs at least one oscillator");
  for (double x : w)
    if (!(x > 0.0)) throw ConstructionError("twisted: frequencies must be positive");
  const std::size_t k = n + 1, ndof = n + 1;
  Eigen::MatrixXd t = T ? *T : Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
  if (t.rows() != static_cast<Eigen::Index>(k) || t.cols() != static_cast<Eigen::Index>(k))
    throw ConstructionError("twisted: recombination matrix must be k x k with k = oscillators + 1");
  if (std::abs(t.determinant()) < 1e-12) throw ConstructionError("twisted: recombination matrix is singular");

  std::vector<std::string> labels;
  for (std::size_t j = 0; j < n; ++j) labels.push_back(std::to_string(j + 1));
  labels.push_back("x");
  auto names = detail::phase_names(ndof, labels);
  std::vector<Interval> bounds(2 * ndof - k, Interval{-10.0, 10.0});
  ChartDomain d = make_domain(2 * ndof - k, k, 0, bounds, names);
  detail::PhaseSpace ps{ndof};

  BuiltSystem s;
  s.name = "twisted";
  s.domain = d;
  s.omega = TwoForm::constant(ps.omega_matrix());
  s.w = BivectorField::constant(ps.w_matrix());
  std::vector<std::string> base_h = {"px"};
  for (std::size_t j = 0; j < n; ++j) {
    std::string I = detail::action_expr("q" + labels[j], "p" + labels[j], w[j]);
    base_h.push_back(expr::format_number(w[j]) + " * " + I + " + " + expr::format_number(shear) + " * " + I + " * px");
  }
  std::vector<std::string> recombined;
  for (std::size_t l = 0; l < k; ++l) {
    std::vector<std::string> terms;
    for (std::size_t m = 0; m < k; ++m) {
      double c = t(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(m));
      if (c != 0.0) terms.push_back(expr::format_number(c) + " * (" + base_h[m] + ")");
    }
    recombined.push_back(detail::join_sum(terms));
  }
  s.hamiltonians = detail::parse_all(recombined, d);
  s.algebra.domain = d;
  s.algebra.generators = detail::hamiltonian_fields(s.w, s.hamiltonians);
  s.algebra.s_generators = detail::parse_all(base_h, d);
  s.split = leading_split(d);

  // s_j = T^{-T} u_j with u_j / 2pi = (-shear I_j e_0 + e_j) / (omega_j + shear p_x).
  Eigen::MatrixXd tinv_t = t.inverse().transpose();
  auto lattice_at = [tinv_t, w, shear, k, n](double px, const Eigen::VectorXd& I) {
    std::vector<Eigen::VectorXd> v;
    for (std::size_t j = 0; j < n; ++j) {
      Eigen::VectorXd u = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(k));
      double den = w[j] + shear * px;
      u[0] = -shear * I[static_cast<Eigen::Index>(j)] / den;
      u[static_cast<Eigen::Index>(j + 1)] = 1.0 / den;
      v.push_back(two_pi * tinv_t * u);
    }
    return v;
  };
  s.default_point = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(2 * ndof));
  for (std::size_t j = 0; j < n; ++j) s.default_point[static_cast<Eigen::Index>(2 * j + 1)] = std::sqrt(2.0);
  s.default_point[static_cast<Eigen::Index>(2 * n + 1)] = 0.1;  // p_x
  {
    Eigen::VectorXd I(static_cast<Eigen::Index>(n));
    for (std::size_t j = 0; j < n; ++j) I[static_cast<Eigen::Index>(j)] = 1.0 / w[j];
    s.lattice_guesses = lattice_at(0.1, I);
  }

  // Straightened chart: base (p_x, I_1..I_n), cylinder t, angles phi_1..phi_n.
  std::vector<Interval> sb = {{-1.0, 1.0}};
  std::vector<std::string> sn = {"px"};
  for (std::size_t j = 0; j < n; ++j) {
    sb.push_back({0.1, 3.0});
    sn.push_back("I" + labels[j]);
  }
  sn.push_back("t");
  for (std::size_t j = 0; j < n; ++j) sn.push_back("phi" + labels[j]);
  ChartDomain chart = make_domain(n + 1, k, n, sb, sn);
  auto blocks = [tinv_t, w, shear, k, n](const auto& r, auto& out, bool want_c) {
    using T = typename std::decay_t<decltype(r)>::value_type;
    // (T^{-T} u_j): u_j has entries 0 and j+1 only.
    for (std::size_t j = 0; j < n; ++j) {
      T den = T(w[j]) + shear * r[0];
      T u0 = -shear * r[j + 1] / den;
      T uj = T(1.0) / den;
      for (std::size_t row = (want_c ? 1 : 0); row < (want_c ? k : 1); ++row) {
        T v = tinv_t(static_cast<Eigen::Index>(row), 0) * u0 +
              tinv_t(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(j + 1)) * uj;
        std::size_t out_row = want_c ? row - 1 : row;
        out[out_row * n + j] = v;
      }
    }
  };
  MatrixField B = MatrixField::from_callable(n + 1, 1, n, [blocks](const auto& r, auto& out) { blocks(r, out, false); });
  MatrixField C = MatrixField::from_callable(n + 1, n, n, [blocks](const auto& r, auto& out) { blocks(r, out, true); });
  auto embed = [w, n, ndof](const Eigen::VectorXd& r, const Eigen::VectorXd& phi) {
    Eigen::VectorXd x = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(2 * ndof));
    for (std::size_t j = 0; j < n; ++j) {
      double I = r[static_cast<Eigen::Index>(j + 1)], a = phi[static_cast<Eigen::Index>(j)];
      x[static_cast<Eigen::Index>(2 * j)] = std::sqrt(2.0 * I / w[j]) * std::sin(a);
      x[static_cast<Eigen::Index>(2 * j + 1)] = std::sqrt(2.0 * I * w[j]) * std::cos(a);
    }
    x[static_cast<Eigen::Index>(2 * n + 1)] = r[0];
    return x;
  };
  s.straightened = StraightenedModel{chart, B, C, embed};
  return s;
}

/// One translation (H = p_x) and one oscillator: the noncompact R x T^1 case.
inline BuiltSystem cylinder_system(double w) {
  BuiltSystem s = twisted({w}, 0.0);
  s.name = "cylinder_system";
  // Guess along the translation: a bounded guess that cannot close.
  s.lattice_guesses.insert(s.lattice_guesses.begin(), Eigen::Vector2d(1.0, 0.0));
  return s;
}

/// The model w = sum d/dI_l ^ d/dphi^l on (I, z, phi), H_l = I_l.
inline BuiltSystem canonical(std::size_t k, std::size_t dim) {
  if (k < 1) throw ConstructionError("canonical: needs k >= 1");
  if (dim < 2 * k) throw ConstructionError("canonical: needs dim >= 2k");
  const std::size_t nz = dim - 2 * k;
  std::vector<std::string> names;
  std::vector<Interval> bounds;
  for (std::size_t l = 0; l < k; ++l) {
    names.push_back("I" + std::to_string(l + 1));
    bounds.push_back({0.5, 2.0});
  }
  for (std::size_t a = 0; a < nz; ++a) {
    names.push_back("z" + std::to_string(a + 1));
    bounds.push_back({-1.0, 1.0});
  }
  for (std::size_t l = 0; l < k; ++l) names.push_back("phi" + std::to_string(l + 1));
  ChartDomain d = make_domain(dim - k, k, k, bounds, names);

  BuiltSystem s;
  s.name = "canonical";
  s.domain = d;
  s.toroidal = true;
  s.split = leading_split(d);
  s.w = canonical_poisson(d, s.split);
  for (std::size_t l = 0; l < k; ++l) s.hamiltonians.push_back(ScalarField::coordinate(d.dim(), l));
  s.algebra.domain = d;
  s.algebra.generators = detail::hamiltonian_fields(s.w, s.hamiltonians);
  for (std::size_t i = 0; i < d.dim_base(); ++i) s.algebra.s_generators.push_back(ScalarField::coordinate(d.dim(), i));
  for (std::size_t l = 0; l < k; ++l) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(k));
    v[static_cast<Eigen::Index>(l)] = two_pi;
    s.lattice_guesses.push_back(v);
  }
  std::vector<ScalarField> xi(d.dim(), ScalarField::constant(d.dim(), 0.0));
  for (std::size_t l = 0; l < k; ++l) xi[d.angle_offset() + l] = ScalarField::coordinate(d.dim(), l);
  s.liouville = xi;
  s.default_point = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d.dim()));
  for (std::size_t l = 0; l < k; ++l) s.default_point[static_cast<Eigen::Index>(l)] = 1.0;
  return s;
}

/// H = sum I_i^2 / 2 (+ z_A I_1 couplings) on V x W x T^k with the
/// structure w = sum d/dI_i ^ d/dphi^i.
inline BuiltSystem kam_twist(std::size_t k, std::size_t nz = 0, std::optional<std::string> perturbation = std::nullopt) {
  if (k < 1) throw ConstructionError("kam_twist: needs k >= 1");
  std::vector<std::string> names;
  std::vector<Interval> bounds;
  for (std::size_t i = 0; i < k; ++i) {
    names.push_back("I" + std::to_string(i + 1));
    bounds.push_back({1.0, 2.0});
  }
  for (std::size_t a = 0; a < nz; ++a) {
    names.push_back("z" + std::to_string(a + 1));
    bounds.push_back({-0.1, 0.1});
  }
  for (std::size_t i = 0; i < k; ++i) names.push_back("phi" + std::to_string(i + 1));
  ChartDomain d = make_domain(k + nz, k, k, bounds, names);
  std::vector<std::string> terms;
  for (std::size_t i = 0; i < k; ++i) terms.push_back("I" + std::to_string(i + 1) + "^2 / 2");
  for (std::size_t a = 0; a < nz; ++a) terms.push_back("z" + std::to_string(a + 1) + " * I1");
  std::string h1 = perturbation.value_or(k >= 2 ? "cos(phi1) + cos(phi1 - phi2)" : "cos(phi1)");

  BuiltSystem s;
  s.name = "kam_twist";
  s.domain = d;
  s.toroidal = true;
  s.split = leading_split(d);
  s.w = kam_poisson(d);
  for (std::size_t i = 0; i < k; ++i) s.hamiltonians.push_back(ScalarField::coordinate(d.dim(), i));
  s.algebra.domain = d;
  s.algebra.generators = detail::hamiltonian_fields(s.w, s.hamiltonians);
  for (std::size_t i = 0; i < d.dim_base(); ++i) s.algebra.s_generators.push_back(ScalarField::coordinate(d.dim(), i));
  for (std::size_t i = 0; i < k; ++i) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(k));
    v[static_cast<Eigen::Index>(i)] = two_pi;
    s.lattice_guesses.push_back(v);
  }
  std::vector<ScalarField> xi(d.dim(), ScalarField::constant(d.dim(), 0.0));
  for (std::size_t i = 0; i < k; ++i) xi[d.angle_offset() + i] = ScalarField::coordinate(d.dim(), i);
  s.liouville = xi;
  s.default_point = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d.dim()));
  for (std::size_t i = 0; i < k; ++i) s.default_point[static_cast<Eigen::Index>(i)] = 1.5;
  auto h1_ast = expr::parse(h1, d);
  bool action_free = true;
  for (std::size_t i = 0; i < k; ++i) action_free = action_free && !expr::uses_variable(h1_ast.root(), i);
  s.kam = make_kam_system(d, expr::parse_field(detail::join_sum(terms), d), expr::to_field(h1_ast), 0.0, action_free);
  return s;
}

/// Block bivector on (r1, r2, t, phi) with W^{r1 t} = 1, W^{r1 phi} = c r1,
/// W^{r2 phi} = 1 and W^{t phi} = -(b r1 + c t); Poisson for all b, c. Its
/// fiber block depends on the fiber coordinate t exactly when c != 0.
inline BuiltSystem block_poisson(double b, double c) {
  ChartDomain d = make_domain(2, 2, 1, {{0.5, 2.0}, {0.5, 2.0}}, {"r1", "r2", "t", "phi"});
  BuiltSystem s;
  s.name = "block_poisson";
  s.domain = d;
  s.toroidal = true;
  s.split = leading_split(d);
  const std::string cs = expr::format_number(c), bs = expr::format_number(b);
  s.w = expr::parse_antisym<BivectorField>({{"r1", "t", "1"},
                                             {"r1", "phi", cs + " * r1"},
                                             {"r2", "phi", "1"},
                                             {"t", "phi", "-(" + bs + " * r1 + " + cs + " * t)"}},
                                            d);
  s.hamiltonians = {ScalarField::coordinate(4, 0), ScalarField::coordinate(4, 1)};
  s.algebra.domain = d;
  s.algebra.generators = detail::hamiltonian_fields(s.w, s.hamiltonians);
  s.algebra.s_generators = s.hamiltonians;
  s.lattice_guesses = {Eigen::Vector2d(0.0, two_pi)};
  s.default_point = Eigen::Vector4d(1.0, 1.0, 0.0, 0.0);
  return s;
}

inline std::vector<std::string> registry_names() {
  return {"oscillator_chain", "cylinder_system", "twisted", "canonical", "kam_twist", "block_poisson"};
}

/// Builds a registry system from named numeric parameters.
inline BuiltSystem registry(const std::string& name, const RegistryParams& p) {
  using detail::count_param;
  using detail::list_param;
  using detail::param;
  if (name == "oscillator_chain") {
    detail::require_known(p, {"n", "k", "omega"}, name);
    std::size_t n = count_param(p, "n", 2);
    return oscillator_chain(n, count_param(p, "k", static_cast<double>(n)), list_param(p, "omega", {}));
  }
  if (name == "cylinder_system") {
    detail::require_known(p, {"omega"}, name);
    return cylinder_system(param(p, "omega", 1.0));
  }
  if (name == "twisted") {
    detail::require_known(p, {"omega", "shear", "T"}, name);
    auto w = list_param(p, "omega", {1.0});
    std::optional<Eigen::MatrixXd> t;
    if (auto it = p.find("T"); it != p.end()) {
      const auto k = static_cast<Eigen::Index>(w.size() + 1);
      if (it->second.size() != static_cast<std::size_t>(k * k))
        throw ConstructionError("registry: twisted parameter 'T' needs (oscillators + 1)^2 entries, row-major");
      t = Eigen::MatrixXd(k, k);
      for (Eigen::Index i = 0; i < k; ++i)
        for (Eigen::Index j = 0; j < k; ++j) (*t)(i, j) = it->second[static_cast<std::size_t>(i * k + j)];
    }
    return twisted(w, param(p, "shear", 0.0), t);
  }
  if (name == "canonical") {
    detail::require_known(p, {"k", "dim"}, name);
    std::size_t k = count_param(p, "k", 1);
    return canonical(k, count_param(p, "dim", static_cast<double>(2 * k)));
  }
  if (name == "kam_twist") {
    detail::require_known(p, {"k", "nz"}, name);
    return kam_twist(count_param(p, "k", 2), count_param(p, "nz", 0));
  }
  if (name == "block_poisson") {
    detail::require_known(p, {"b", "c"}, name);
    return block_poisson(param(p, "b", 1.0), param(p, "c", 1.0));
  }
  std::string known;
  for (const auto& n : registry_names()) known += (known.empty() ? "" : ", ") + n;
  throw ConstructionError("registry: unknown system '" + name + "' (known: " + known + ")");
}

}  // namespace pis
