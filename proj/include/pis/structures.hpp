#pragma once

// Dynamical algebras, partially integrable system (PIS) validation,
// canonical Poisson structures, bi-Hamiltonian pairs, recursion operators
// and symplectic extension.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pis/calculus.hpp"
#include "pis/fields.hpp"
#include "pis/geometry.hpp"

namespace pis {

/// k mutually commuting generator fields plus a finite generator list of the
/// ring S of their common integrals.
struct DynamicalAlgebra {
  ChartDomain domain;
  std::vector<VectorField> generators;
  std::vector<ScalarField> s_generators;

  std::size_t k() const { return generators.size(); }
};

namespace detail {

inline Eigen::MatrixXd generator_matrix(const std::vector<VectorField>& fields, const Eigen::VectorXd& x) {
  Eigen::MatrixXd g(x.size(), static_cast<Eigen::Index>(fields.size()));
  for (std::size_t i = 0; i < fields.size(); ++i) g.col(static_cast<Eigen::Index>(i)) = fields[i](x);
  return g;
}

/// k-th singular value (k = number of columns) or 0.
inline double smallest_column_singular_value(const Eigen::MatrixXd& m) {
  if (m.cols() == 0) return 0.0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const auto& s = svd.singularValues();
  return s.size() < m.cols() ? 0.0 : s[m.cols() - 1];
}

/// Relative residual of expressing the columns of `target` in the span of `basis`.
inline double span_residual(const Eigen::MatrixXd& basis, const Eigen::MatrixXd& target) {
  double scale = std::max(target.norm(), 1e-300);
  if (basis.cols() == 0) return target.norm() / scale;
  Eigen::MatrixXd coef = basis.completeOrthogonalDecomposition().solve(target);
  return (basis * coef - target).norm() / scale;
}

inline Eigen::MatrixXd orthonormal_range(const Eigen::MatrixXd& m, double rel_tol) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeThinU);
  const auto& s = svd.singularValues();
  Eigen::Index r = 0;
  if (s.size() > 0 && s[0] > 0.0)
    while (r < s.size() && s[r] > rel_tol * s[0]) ++r;
  return svd.matrixU().leftCols(r);
}

/// Sine of the largest principal angle between two column spaces
/// (orthonormal bases), or 1 when dimensions differ.
inline double subspace_gap(const Eigen::MatrixXd& u, const Eigen::MatrixXd& v) {
  if (u.cols() != v.cols()) return 1.0;
  if (u.cols() == 0) return 0.0;
  Eigen::MatrixXd p = v - u * (u.transpose() * v);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(p);
  return svd.singularValues()[0];
}

inline double max_abs(const Eigen::MatrixXd& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

}  // namespace detail

struct AlgebraReport {
  double commutator_residual = 0.0;  ///< max |[theta_i, theta_j]| over pairs and points
  double min_singular_value = 0.0;   ///< min over points of the k-th singular value
  bool commutative = false;
  bool independent = false;
  bool ok() const { return commutative && independent; }
};

inline AlgebraReport verify_algebra(const DynamicalAlgebra& a, const std::vector<Point>& points, double tol = 1e-8) {
  if (a.k() == 0) throw PreconditionError("verify_algebra: the algebra needs at least one generator");
  if (points.empty()) throw PreconditionError("verify_algebra: needs at least one test point");
  AlgebraReport r;
  r.min_singular_value = std::numeric_limits<double>::infinity();
  for (const auto& p : points) {
    for (std::size_t i = 0; i < a.k(); ++i)
      for (std::size_t j = i + 1; j < a.k(); ++j) {
        Eigen::VectorXd c = lie_bracket(a.generators[i], a.generators[j], p);
        r.commutator_residual = std::max(r.commutator_residual, c.cwiseAbs().maxCoeff());
      }
    r.min_singular_value =
        std::min(r.min_singular_value, detail::smallest_column_singular_value(detail::generator_matrix(a.generators, p.coords())));
  }
  r.commutative = r.commutator_residual < tol;
  r.independent = r.min_singular_value > tol;
  return r;
}

/// w = d/dI_lambda ^ d/dy^lambda, pairing each action coordinate with the
/// fiber coordinate of the same rank.
inline BivectorField canonical_poisson(const ChartDomain& domain, const CoordinateSplit& split) {
  if (split.action_indices.size() != domain.k()) {
    throw ConstructionError("canonical_poisson: split must name exactly k = " + std::to_string(domain.k()) +
                            " action coordinates");
  }
  if (domain.dim_base() < domain.k()) throw ConstructionError("canonical_poisson: needs dim_base >= k");
  const auto n = static_cast<Eigen::Index>(domain.dim());
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t l = 0; l < domain.k(); ++l) {
    auto i = static_cast<Eigen::Index>(split.action_indices[l]);
    auto y = static_cast<Eigen::Index>(domain.fiber_offset() + l);
    w(i, y) = 1.0;
    w(y, i) = -1.0;
  }
  return BivectorField::constant(w);
}

struct BlockFormReport {
  double base_block = 0.0;          ///< max |W^{AB}|
  double cross_y_variation = 0.0;   ///< max change of W^{A lambda} under y-shifts
  double cross_y_derivative = 0.0;  ///< max |d_y W^{A lambda}|
  double affine_residual = 0.0;     ///< max |d_y d_y W^{mu nu}|
  double schouten = 0.0;            ///< max |[w, w]|
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
};

/// Checks the block structure W^{AB} = 0, W^{A lambda}(r), W^{mu nu} affine
/// in y, and the Poisson condition. Each test point is complemented by
/// copies shifted only in the fiber coordinates.
inline BlockFormReport check_block_form(const BivectorField& w, const ChartDomain& domain,
                                        const std::vector<Point>& points, double tol = 1e-9) {
  if (points.empty()) throw PreconditionError("check_block_form: needs test points");
  BlockFormReport r;
  const std::size_t nb = domain.dim_base(), n = domain.dim();
  for (const auto& p : points) {
    Eigen::MatrixXd W = w.matrix(p);
    r.base_block = std::max(r.base_block, detail::max_abs(W.topLeftCorner(nb, nb)));
    Eigen::MatrixXd cross = W.topRightCorner(nb, n - nb);

    for (std::size_t shift = 0; shift < 3; ++shift) {
      Eigen::VectorXd y = p.coords();
      for (std::size_t f = nb; f < n; ++f) {
        double delta = domain.is_angle(f) ? 0.7 + 1.3 * static_cast<double>(shift) : 0.3 + 0.25 * static_cast<double>(shift);
        y[static_cast<Eigen::Index>(f)] += delta * (1.0 + 0.1 * static_cast<double>(f - nb));
      }
      Point q = p.with_coords(y);
      r.cross_y_variation = std::max(r.cross_y_variation, detail::max_abs(w.matrix(q).topRightCorner(nb, n - nb) - cross));
    }

    auto dW = w.derivatives(p);
    for (std::size_t f = nb; f < n; ++f) {
      r.cross_y_derivative = std::max(r.cross_y_derivative, detail::max_abs(dW[f].topRightCorner(nb, n - nb)));
    }
    for (std::size_t a = nb; a < n; ++a)
      for (std::size_t b = a + 1; b < n; ++b) {
        Eigen::MatrixXd h = w.entry_hessian(p.coords(), a, b);
        r.affine_residual = std::max(r.affine_residual, detail::max_abs(h.bottomRightCorner(n - nb, n - nb)));
      }
    r.schouten = std::max(r.schouten, schouten_self_bracket(w, p).max_abs());
  }
  if (r.base_block > tol) r.violations.emplace_back("base-base block W^{AB} is nonzero");
  if (r.cross_y_variation > tol || r.cross_y_derivative > tol)
    r.violations.emplace_back("base-fiber block W^{A lambda} depends on the fiber coordinates y");
  if (r.affine_residual > tol) r.violations.emplace_back("fiber block W^{mu nu} is not affine in y");
  if (r.schouten > tol) r.violations.emplace_back("Schouten bracket [w, w] does not vanish");
  return r;
}

struct PisReport {
  struct ConditionA {
    double generation_residual = 0.0;  ///< span mismatch between A and the Hamiltonian fields of H
    double independence = 0.0;         ///< min k-th singular value of the dH matrix
    double involution = 0.0;           ///< max |{H_l, H_m}|
    bool ok = false;
  } condition_a;
  struct ConditionB {
    double max_bracket = 0.0;  ///< max |{f, g}| over S-generator pairs
    std::size_t worst_i = 0;
    std::size_t worst_j = 0;
    bool ok = false;
  } condition_b;
  std::size_t rank_observed = 0;  ///< minimum rank of w over the points
  bool rank_ok = false;
  bool pis() const { return condition_a.ok && condition_b.ok && rank_ok; }
};

inline PisReport validate_pis(const BivectorField& w, const DynamicalAlgebra& a, const std::vector<ScalarField>& h,
                              const std::vector<Point>& points, double tol = 1e-9) {
  if (a.k() == 0) throw PreconditionError("validate_pis: the algebra needs at least one generator");
  if (h.size() != a.k()) {
    throw PreconditionError("validate_pis: expected " + std::to_string(a.k()) + " Hamiltonians, got " +
                            std::to_string(h.size()));
  }
  if (points.empty()) throw PreconditionError("validate_pis: needs test points");
  const std::size_t k = a.k();
  std::vector<VectorField> ham;
  for (const auto& f : h) ham.push_back(hamiltonian_vf(w, f));

  PisReport r;
  r.condition_a.independence = std::numeric_limits<double>::infinity();
  r.rank_observed = std::numeric_limits<std::size_t>::max();
  for (const auto& p : points) {
    Eigen::MatrixXd g = detail::generator_matrix(a.generators, p.coords());
    Eigen::MatrixXd hv = detail::generator_matrix(ham, p.coords());
    double res = std::max(detail::span_residual(hv, g), detail::span_residual(g, hv));
    r.condition_a.generation_residual = std::max(r.condition_a.generation_residual, res);

    Eigen::MatrixXd dh(static_cast<Eigen::Index>(k), p.coords().size());
    for (std::size_t i = 0; i < k; ++i) dh.row(static_cast<Eigen::Index>(i)) = h[i].gradient(p).transpose();
    r.condition_a.independence =
        std::min(r.condition_a.independence, detail::smallest_column_singular_value(dh.transpose()));

    Eigen::MatrixXd W = w.matrix(p);
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = i + 1; j < k; ++j)
        r.condition_a.involution = std::max(r.condition_a.involution, std::abs(poisson_bracket(w, h[i], h[j], p)));

    const auto& s = a.s_generators;
    std::vector<Eigen::VectorXd> grads;
    for (const auto& f : s) grads.push_back(f.gradient(p));
    for (std::size_t i = 0; i < s.size(); ++i)
      for (std::size_t j = i + 1; j < s.size(); ++j) {
        double b = std::abs(grads[i].dot(W * grads[j]));
        if (b > r.condition_b.max_bracket) {
          r.condition_b.max_bracket = b;
          r.condition_b.worst_i = i;
          r.condition_b.worst_j = j;
        }
      }
    r.rank_observed = std::min(r.rank_observed, antisymmetric_rank(W, 1e-9));
  }
  r.condition_a.ok = r.condition_a.generation_residual <= tol && r.condition_a.independence > tol &&
                     r.condition_a.involution <= tol;
  r.condition_b.ok = r.condition_b.max_bracket <= tol;
  r.rank_ok = r.rank_observed >= 2 * k;
  return r;
}

struct CharacteristicBasis {
  Eigen::MatrixXd basis;  ///< orthonormal columns
  std::size_t dimension = 0;
  bool degenerate = false;
};

/// Span of v^A = W^{A mu} d_mu and v^lambda = W^{A lambda} d_A.
inline CharacteristicBasis characteristic_distribution(const BivectorField& w, const ChartDomain& domain,
                                                       const Point& x, double tol = 1e-9) {
  const std::size_t nb = domain.dim_base(), n = domain.dim(), k = domain.k();
  Eigen::MatrixXd W = w.matrix(x);
  Eigen::MatrixXd cols = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(nb + k));
  for (std::size_t A = 0; A < nb; ++A) {
    for (std::size_t mu = nb; mu < n; ++mu)
      cols(static_cast<Eigen::Index>(mu), static_cast<Eigen::Index>(A)) =
          W(static_cast<Eigen::Index>(A), static_cast<Eigen::Index>(mu));
  }
  for (std::size_t l = 0; l < k; ++l) {
    for (std::size_t A = 0; A < nb; ++A)
      cols(static_cast<Eigen::Index>(A), static_cast<Eigen::Index>(nb + l)) =
          W(static_cast<Eigen::Index>(A), static_cast<Eigen::Index>(nb + l));
  }
  CharacteristicBasis c;
  c.basis = detail::orthonormal_range(cols, tol);
  c.dimension = static_cast<std::size_t>(c.basis.cols());
  c.degenerate = c.dimension < 2 * k;
  return c;
}

struct PoissonPair {
  BivectorField w;
  BivectorField w_prime;
};

struct PairCheck {
  double schouten_w = 0.0;
  double schouten_w_prime = 0.0;
  bool equal_rank = true;
  bool both_poisson(double tol) const { return schouten_w <= tol && schouten_w_prime <= tol; }
};

inline PairCheck check_pair(const PoissonPair& pair, const std::vector<Point>& points) {
  PairCheck c;
  for (const auto& p : points) {
    c.schouten_w = std::max(c.schouten_w, schouten_self_bracket(pair.w, p).max_abs());
    c.schouten_w_prime = std::max(c.schouten_w_prime, schouten_self_bracket(pair.w_prime, p).max_abs());
    if (rank_at(pair.w, p, 1e-9) != rank_at(pair.w_prime, p, 1e-9)) c.equal_rank = false;
  }
  return c;
}

struct BihamiltonianReport {
  bool passes = false;
  double residual = 0.0;                  ///< max |w|df - w'|df|
  double base_fiber_difference = 0.0;     ///< max |W^{A lambda} - W'^{A lambda}|
  bool block_form_w = false;              ///< W^{AB} = 0 and W^{A lambda}(r) for w
  bool block_form_w_prime = false;
};

inline BihamiltonianReport bihamiltonian_check(const PoissonPair& pair, const ChartDomain& domain,
                                               const std::vector<ScalarField>& s_generators,
                                               const std::vector<Point>& points, double tol = 1e-9) {
  if (points.empty()) throw PreconditionError("bihamiltonian_check: needs test points");
  BihamiltonianReport r;
  auto structural = [&](const BivectorField& b) {
    auto rep = check_block_form(b, domain, points, tol);
    return rep.base_block <= tol && rep.cross_y_variation <= tol && rep.cross_y_derivative <= tol;
  };
  r.block_form_w = structural(pair.w);
  r.block_form_w_prime = structural(pair.w_prime);
  const std::size_t nb = domain.dim_base(), n = domain.dim();
  for (const auto& p : points) {
    Eigen::MatrixXd d = pair.w.matrix(p) - pair.w_prime.matrix(p);
    r.base_fiber_difference = std::max(r.base_fiber_difference, detail::max_abs(d.topRightCorner(nb, n - nb)));
    for (const auto& f : s_generators) r.residual = std::max(r.residual, (d * f.gradient(p)).cwiseAbs().maxCoeff());
  }
  r.passes = r.residual <= tol;
  return r;
}

struct RecursionResult {
  Eigen::MatrixXd R;
  double p0_residual = 0.0;       ///< |W' - R W|
  double dual_residual = 0.0;     ///< |W' - W R^T|
  double subspace_gap = 0.0;      ///< sine of the largest angle between the characteristic spans
  std::size_t rank = 0;
};

/// R = w'# (w#)^+ on the common characteristic subspace, identity on its
/// Euclidean-orthogonal complement.
inline RecursionResult build_recursion(const PoissonPair& pair, const Point& x, double tol = 1e-9) {
  Eigen::MatrixXd W = pair.w.matrix(x), Wp = pair.w_prime.matrix(x);
  std::size_t r1 = antisymmetric_rank(W, tol), r2 = antisymmetric_rank(Wp, tol);
  if (r1 != r2) {
    throw PreconditionError("build_recursion: ranks differ (" + std::to_string(r1) + " vs " + std::to_string(r2) +
                            "); a recursion operator needs Poisson structures of equal rank");
  }
  Eigen::MatrixXd u = detail::orthonormal_range(W, tol), v = detail::orthonormal_range(Wp, tol);
  RecursionResult res;
  res.rank = r1;
  res.subspace_gap = detail::subspace_gap(u, v);
  if (res.subspace_gap > 1e-8) {
    throw PreconditionError(
        "build_recursion: characteristic distributions do not coincide (gap " + std::to_string(res.subspace_gap) +
        "); a recursion operator exists only between equal-rank structures sharing their characteristic distribution");
  }
  Eigen::MatrixXd pinv = W.completeOrthogonalDecomposition().pseudoInverse();
  const auto n = W.rows();
  res.R = Wp * pinv + Eigen::MatrixXd::Identity(n, n) - u * u.transpose();
  res.p0_residual = detail::max_abs(Wp - res.R * W);
  res.dual_residual = detail::max_abs(Wp - W * res.R.transpose());
  return res;
}

namespace detail {

/// Left inverse (P^T P)^{-1} P^T of a full-column-rank matrix and its
/// directional derivative.
inline std::pair<Eigen::MatrixXd, Eigen::MatrixXd> left_inverse_with_derivative(const Eigen::MatrixXd& p,
                                                                                const Eigen::MatrixXd& dp) {
  Eigen::MatrixXd g_inv = (p.transpose() * p).inverse();
  Eigen::MatrixXd dg = dp.transpose() * p + p.transpose() * dp;
  Eigen::MatrixXd pinv = g_inv * p.transpose();
  Eigen::MatrixXd dpinv = -g_inv * dg * g_inv * p.transpose() + g_inv * dp.transpose();
  return {pinv, dpinv};
}

}  // namespace detail

/// The recursion operator between a block bivector w and w0 = w with its
/// fiber-fiber block removed: R^A_B = delta, R^mu_nu = delta, R^A_lambda = 0,
/// and R^lambda_B solving W^{mu lambda} = R^lambda_B W^{B mu}. Derivatives are
/// exact, propagated from those of w.
inline RecursionField block_recursion_field(const BivectorField& w, const ChartDomain& domain) {
  const std::size_t nb = domain.dim_base(), k = domain.k(), n = domain.dim();
  auto blocks = [nb, k](const Eigen::MatrixXd& m) {
    return std::pair<Eigen::MatrixXd, Eigen::MatrixXd>{m.topRightCorner(nb, k), m.bottomRightCorner(k, k)};
  };
  auto assemble = [nb, n](const Eigen::MatrixXd& s, bool derivative) {
    Eigen::MatrixXd r = Eigen::MatrixXd::Zero(n, n);
    if (!derivative) r.setIdentity();
    r.bottomLeftCorner(n - nb, nb) = s;
    return r;
  };
  return RecursionField(make_computed(
      n, n * n,
      [=](const Eigen::VectorXd& x) -> Eigen::VectorXd {
        auto [p, q] = blocks(w.matrix(x));
        Eigen::MatrixXd pinv = (p.transpose() * p).inverse() * p.transpose();
        return RecursionField::pack(assemble(-q * pinv, false));
      },
      [=](const Eigen::VectorXd& x) -> Eigen::MatrixXd {
        auto [p, q] = blocks(w.matrix(x));
        auto dW = w.derivatives(x);
        Eigen::MatrixXd j(static_cast<Eigen::Index>(n * n), static_cast<Eigen::Index>(n));
        for (std::size_t c = 0; c < n; ++c) {
          auto [dp, dq] = blocks(dW[c]);
          auto [pinv, dpinv] = detail::left_inverse_with_derivative(p, dp);
          j.col(static_cast<Eigen::Index>(c)) = RecursionField::pack(assemble(-dq * pinv - q * dpinv, true));
        }
        return j;
      }));
}

/// w0: the bivector w with its fiber-fiber block removed.
inline BivectorField drop_fiber_block(const BivectorField& w, const ChartDomain& domain) {
  const std::size_t nb = domain.dim_base(), n = domain.dim();
  auto mask = [nb, n](Eigen::MatrixXd m) {
    m.bottomRightCorner(n - nb, n - nb).setZero();
    return m;
  };
  return BivectorField(make_computed(
      n, upper_size(n), [=](const Eigen::VectorXd& x) -> Eigen::VectorXd { return pack_antisym(mask(w.matrix(x))); },
      [=](const Eigen::VectorXd& x) -> Eigen::MatrixXd {
        auto d = w.derivatives(x);
        Eigen::MatrixXd j(static_cast<Eigen::Index>(upper_size(n)), static_cast<Eigen::Index>(n));
        for (std::size_t c = 0; c < n; ++c) j.col(static_cast<Eigen::Index>(c)) = pack_antisym(mask(d[c]));
        return j;
      }));
}

/// Extends a rank-2k bivector in adapted form (no components along the
/// transverse z coordinates) to a symplectic form: the leafwise inverse on
/// the (J, y) coordinates plus a constant block on z. `omega_z` defaults to
/// pairing consecutive transverse coordinates.
inline TwoForm extend_to_symplectic(const BivectorField& w, const ChartDomain& domain, const CoordinateSplit& split,
                                    const std::vector<Point>& probe_points,
                                    std::optional<Eigen::MatrixXd> omega_z = std::nullopt) {
  const std::size_t n = domain.dim(), k = domain.k();
  if (n % 2 != 0) throw PreconditionError("extend_to_symplectic: dim Z = " + std::to_string(n) + " is odd");
  if (split.action_indices.size() != k) throw PreconditionError("extend_to_symplectic: split must name k actions");
  const std::size_t nz = split.transverse_indices.size();
  if (nz % 2 != 0) throw PreconditionError("extend_to_symplectic: transverse block has odd dimension");

  std::vector<std::size_t> leaf = split.action_indices;
  for (std::size_t l = 0; l < k; ++l) leaf.push_back(domain.fiber_offset() + l);
  const auto& zs = split.transverse_indices;

  Eigen::MatrixXd oz = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(nz), static_cast<Eigen::Index>(nz));
  if (omega_z) {
    if (omega_z->rows() != static_cast<Eigen::Index>(nz) || omega_z->cols() != static_cast<Eigen::Index>(nz))
      throw PreconditionError("extend_to_symplectic: omega_z has wrong size");
    oz = 0.5 * (*omega_z - omega_z->transpose());
  } else {
    for (std::size_t s = 0; s + 1 < nz; s += 2) {
      oz(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(s + 1)) = 1.0;
      oz(static_cast<Eigen::Index>(s + 1), static_cast<Eigen::Index>(s)) = -1.0;
    }
  }
  if (nz > 0 && detail::smallest_column_singular_value(oz) < 1e-12)
    throw PreconditionError("extend_to_symplectic: omega_z is degenerate");

  auto restrict_leaf = [leaf](const Eigen::MatrixXd& m) {
    const auto d = static_cast<Eigen::Index>(leaf.size());
    Eigen::MatrixXd r(d, d);
    for (Eigen::Index i = 0; i < d; ++i)
      for (Eigen::Index j = 0; j < d; ++j)
        r(i, j) = m(static_cast<Eigen::Index>(leaf[static_cast<std::size_t>(i)]),
                    static_cast<Eigen::Index>(leaf[static_cast<std::size_t>(j)]));
    return r;
  };
  auto embed = [leaf, zs, n](const Eigen::MatrixXd& leaf_block, const Eigen::MatrixXd* z_block) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < leaf.size(); ++i)
      for (std::size_t j = 0; j < leaf.size(); ++j)
        m(static_cast<Eigen::Index>(leaf[i]), static_cast<Eigen::Index>(leaf[j])) =
            leaf_block(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    if (z_block)
      for (std::size_t i = 0; i < zs.size(); ++i)
        for (std::size_t j = 0; j < zs.size(); ++j)
          m(static_cast<Eigen::Index>(zs[i]), static_cast<Eigen::Index>(zs[j])) =
              (*z_block)(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    return m;
  };

  for (const auto& p : probe_points) {
    Eigen::MatrixXd W = w.matrix(p);
    if (antisymmetric_rank(W, 1e-9) != 2 * k)
      throw PreconditionError("extend_to_symplectic: w does not have rank 2k at a probe point");
    double off = 0.0;
    for (auto z : zs) off = std::max(off, W.row(static_cast<Eigen::Index>(z)).cwiseAbs().maxCoeff());
    if (off > 1e-9)
      throw PreconditionError("extend_to_symplectic: w has components along the transverse coordinates");
  }

  return TwoForm(make_computed(
      n, upper_size(n),
      [=](const Eigen::VectorXd& x) -> Eigen::VectorXd {
        Eigen::MatrixXd leaf_omega = -restrict_leaf(w.matrix(x)).inverse();
        return pack_antisym(embed(leaf_omega, &oz));
      },
      [=](const Eigen::VectorXd& x) -> Eigen::MatrixXd {
        Eigen::MatrixXd inv = restrict_leaf(w.matrix(x)).inverse();
        auto dW = w.derivatives(x);
        Eigen::MatrixXd j(static_cast<Eigen::Index>(upper_size(n)), static_cast<Eigen::Index>(n));
        for (std::size_t c = 0; c < n; ++c)
          j.col(static_cast<Eigen::Index>(c)) = pack_antisym(embed(inv * restrict_leaf(dW[c]) * inv, nullptr));
        return j;
      }));
}

}  // namespace pis
