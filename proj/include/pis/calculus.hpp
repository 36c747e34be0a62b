#pragma once

// Brackets and differential operators on chart fields, all evaluated from
// exact first derivatives.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "pis/fields.hpp"

namespace pis {

/// Totally antisymmetric 3-index object, stored for a < b < c.
class Trivector {
 public:
  explicit Trivector(std::size_t n) : n_(n), v_(n * (n - 1) * (n - 2) / 6 + (n < 3 ? 1 : 0), 0.0) {}

  std::size_t dim() const { return n_; }

  double& at(std::size_t a, std::size_t b, std::size_t c) { return v_[index(a, b, c)]; }

  /// Any index order; the sign follows the permutation parity.
  double get(std::size_t a, std::size_t b, std::size_t c) const {
    if (a == b || b == c || a == c) return 0.0;
    int sign = 1;
    std::size_t i[3] = {a, b, c};
    for (int p = 0; p < 2; ++p)
      for (int q = 0; q < 2 - p; ++q)
        if (i[q] > i[q + 1]) {
          std::swap(i[q], i[q + 1]);
          sign = -sign;
        }
    return sign * v_[index(i[0], i[1], i[2])];
  }

  double max_abs() const {
    double m = 0.0;
    if (n_ < 3) return m;
    for (double x : v_) m = std::max(m, std::abs(x));
    return m;
  }

 private:
  std::size_t index(std::size_t a, std::size_t b, std::size_t c) const {
    // Lexicographic rank of (a, b, c) among increasing triples.
    std::size_t idx = 0;
    for (std::size_t i = 0; i < a; ++i) idx += (n_ - i - 1) * (n_ - i - 2) / 2;
    for (std::size_t j = a + 1; j < b; ++j) idx += n_ - j - 1;
    return idx + (c - b - 1);
  }

  std::size_t n_;
  std::vector<double> v_;
};

/// [X, Y](x) = (dY) X - (dX) Y.
inline Eigen::VectorXd lie_bracket(const VectorField& X, const VectorField& Y, const Eigen::VectorXd& x) {
  return Y.jacobian(x) * X(x) - X.jacobian(x) * Y(x);
}
inline Eigen::VectorXd lie_bracket(const VectorField& X, const VectorField& Y, const Point& p) {
  return lie_bracket(X, Y, p.coords());
}

/// [w, w]^{abc} = 2 * cyclic sum over (a, b, c) of W^{da} d_d W^{bc}.
/// Vanishes exactly when w is Poisson.
inline Trivector schouten_self_bracket(const BivectorField& w, const Eigen::VectorXd& x) {
  const std::size_t n = w.dim();
  Trivector out(n);
  if (n < 3) return out;
  Eigen::MatrixXd W = w.matrix(x);
  auto dW = w.derivatives(x);
  auto term = [&](std::size_t a, std::size_t b, std::size_t c) {
    double s = 0.0;
    for (std::size_t d = 0; d < n; ++d) {
      s += W(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(a)) *
           dW[d](static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(c));
    }
    return s;
  };
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a + 1; b < n; ++b)
      for (std::size_t c = b + 1; c < n; ++c) out.at(a, b, c) = 2.0 * (term(a, b, c) + term(b, c, a) + term(c, a, b));
  return out;
}
inline Trivector schouten_self_bracket(const BivectorField& w, const Point& p) {
  return schouten_self_bracket(w, p.coords());
}

/// theta_f = -w | df, components theta^a = -W^{ab} d_b f.
inline VectorField hamiltonian_vf(const BivectorField& w, const ScalarField& f) {
  if (w.dim() != f.dim()) throw PreconditionError("hamiltonian_vf: dimension mismatch");
  const std::size_t n = w.dim();
  return VectorField(make_computed(
      n, n, [w, f](const Eigen::VectorXd& x) -> Eigen::VectorXd { return -(w.matrix(x) * f.gradient(x)); },
      [w, f, n](const Eigen::VectorXd& x) -> Eigen::MatrixXd {
        Eigen::MatrixXd W = w.matrix(x);
        auto dW = w.derivatives(x);
        Eigen::VectorXd g = f.gradient(x);
        Eigen::MatrixXd J = -(W * f.hessian(x));
        for (std::size_t c = 0; c < n; ++c) J.col(static_cast<Eigen::Index>(c)) -= dW[c] * g;
        return J;
      }));
}

/// {f, g} = W^{ab} d_a f d_b g.
inline double poisson_bracket(const BivectorField& w, const ScalarField& f, const ScalarField& g,
                              const Eigen::VectorXd& x) {
  return f.gradient(x).dot(w.matrix(x) * g.gradient(x));
}
inline double poisson_bracket(const BivectorField& w, const ScalarField& f, const ScalarField& g, const Point& p) {
  return poisson_bracket(w, f, g, p.coords());
}

/// N_R(X, Y) = [RX, RY] - R[RX, Y] - R[X, RY] + R^2[X, Y].
inline Eigen::VectorXd nijenhuis_torsion(const RecursionField& R, const VectorField& X, const VectorField& Y,
                                         const Eigen::VectorXd& x) {
  const std::size_t n = R.dim();
  Eigen::MatrixXd Rm = R.matrix(x);
  auto dR = R.derivatives(x);
  Eigen::VectorXd xv = X(x), yv = Y(x);
  Eigen::MatrixXd jx = X.jacobian(x), jy = Y.jacobian(x);

  // Jacobian of the field R V: d_c (R^a_b V^b).
  auto jac_of_R = [&](const Eigen::VectorXd& v, const Eigen::MatrixXd& jv) {
    Eigen::MatrixXd j = Rm * jv;
    for (std::size_t c = 0; c < n; ++c) j.col(static_cast<Eigen::Index>(c)) += dR[c] * v;
    return j;
  };
  Eigen::VectorXd rx = Rm * xv, ry = Rm * yv;
  Eigen::MatrixXd jrx = jac_of_R(xv, jx), jry = jac_of_R(yv, jy);

  auto bracket = [](const Eigen::VectorXd& u, const Eigen::MatrixXd& ju, const Eigen::VectorXd& v,
                    const Eigen::MatrixXd& jv) -> Eigen::VectorXd { return jv * u - ju * v; };

  Eigen::VectorXd t = bracket(rx, jrx, ry, jry);
  t -= Rm * bracket(rx, jrx, yv, jy);
  t -= Rm * bracket(xv, jx, ry, jry);
  t += Rm * (Rm * bracket(xv, jx, yv, jy));
  return t;
}
inline Eigen::VectorXd nijenhuis_torsion(const RecursionField& R, const VectorField& X, const VectorField& Y,
                                         const Point& p) {
  return nijenhuis_torsion(R, X, Y, p.coords());
}

/// (dOmega)_{abc} = d_a Omega_{bc} + d_b Omega_{ca} + d_c Omega_{ab}.
inline Trivector exterior_derivative_3form_components(const TwoForm& omega, const Eigen::VectorXd& x) {
  const std::size_t n = omega.dim();
  Trivector out(n);
  if (n < 3) return out;
  auto d = omega.derivatives(x);
  auto e = [&](std::size_t c, std::size_t a, std::size_t b) {
    return d[c](static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
  };
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a + 1; b < n; ++b)
      for (std::size_t c = b + 1; c < n; ++c) out.at(a, b, c) = e(a, b, c) + e(b, c, a) + e(c, a, b);
  return out;
}
inline Trivector exterior_derivative_3form_components(const TwoForm& omega, const Point& p) {
  return exterior_derivative_3form_components(omega, p.coords());
}

/// Numerical rank of an antisymmetric matrix: singular values above
/// tol * largest. An odd count is rounded down and `odd_rounded` is set.
inline std::size_t antisymmetric_rank(const Eigen::MatrixXd& m, double tol, bool* odd_rounded = nullptr) {
  if (!(tol > 0.0)) throw PreconditionError("rank_at: tolerance must be positive");
  if (odd_rounded) *odd_rounded = false;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  const auto& s = svd.singularValues();
  if (s.size() == 0 || s[0] == 0.0) return 0;
  std::size_t r = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s[i] > tol * s[0]) ++r;
  if (r % 2 == 1) {
    if (odd_rounded) *odd_rounded = true;
    --r;
  }
  return r;
}

inline std::size_t rank_at(const BivectorField& w, const Point& p, double tol, bool* odd_rounded = nullptr) {
  return antisymmetric_rank(w.matrix(p), tol, odd_rounded);
}
inline std::size_t rank_at(const TwoForm& omega, const Point& p, double tol, bool* odd_rounded = nullptr) {
  return antisymmetric_rank(omega.matrix(p), tol, odd_rounded);
}

/// Bivector associated with a nondegenerate two-form, W = -Omega^{-1}; so that
/// dI ^ dy corresponds to d/dI ^ d/dy and Hamiltonian fields agree.
inline BivectorField bivector_from_twoform(const TwoForm& omega) {
  const std::size_t n = omega.dim();
  return BivectorField(make_computed(
      n, upper_size(n),
      [omega](const Eigen::VectorXd& x) -> Eigen::VectorXd {
        return pack_antisym(-omega.matrix(x).inverse());
      },
      [omega, n](const Eigen::VectorXd& x) -> Eigen::MatrixXd {
        Eigen::MatrixXd inv = omega.matrix(x).inverse();
        auto d = omega.derivatives(x);
        Eigen::MatrixXd j(static_cast<Eigen::Index>(upper_size(n)), static_cast<Eigen::Index>(n));
        // d(-A^{-1}) = A^{-1} dA A^{-1}
        for (std::size_t c = 0; c < n; ++c) j.col(static_cast<Eigen::Index>(c)) = pack_antisym(inv * d[c] * inv);
        return j;
      }));
}

}  // namespace pis
