#pragma once

// Evaluable tensor fields on a chart. Components are in the chart basis.
// Bivectors use w = 1/2 W^{ab} d_a ^ d_b, two-forms 1/2 Omega_{ab} dx^a ^ dx^b;
// both store only the strict upper triangle, so antisymmetry is structural.

#include <Eigen/Dense>

#include <cstddef>
#include <memory>
#include <utility>
#include <vector>

#include "pis/function.hpp"
#include "pis/geometry.hpp"

namespace pis {

/// Position of entry (i, j), i < j, in packed strict-upper-triangle storage.
inline std::size_t upper_index(std::size_t n, std::size_t i, std::size_t j) {
  return i * n - i * (i + 1) / 2 + (j - i - 1);
}

inline std::size_t upper_size(std::size_t n) { return n * (n - 1) / 2; }

/// Write access to a packed antisymmetric matrix.
template <typename T>
class AntisymRef {
 public:
  AntisymRef(std::vector<T>& storage, std::size_t n) : s_(storage), n_(n) {}

  std::size_t size() const { return n_; }

  /// Sets W(i, j) = v and W(j, i) = -v. Diagonal entries are rejected.
  void set(std::size_t i, std::size_t j, const T& v) {
    if (i == j) throw PreconditionError("AntisymRef: diagonal of an antisymmetric matrix is zero");
    if (i < j) s_[upper_index(n_, i, j)] = v;
    else s_[upper_index(n_, j, i)] = -v;
  }

  T get(std::size_t i, std::size_t j) const {
    if (i == j) return T(0.0);
    return i < j ? s_[upper_index(n_, i, j)] : -s_[upper_index(n_, j, i)];
  }

 private:
  std::vector<T>& s_;
  std::size_t n_;
};

inline Eigen::MatrixXd unpack_antisym(const Eigen::VectorXd& packed, std::size_t n) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double v = packed[static_cast<Eigen::Index>(upper_index(n, i, j))];
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = v;
      m(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = -v;
    }
  }
  return m;
}

inline Eigen::VectorXd pack_antisym(const Eigen::MatrixXd& m) {
  const auto n = static_cast<std::size_t>(m.rows());
  Eigen::VectorXd packed(static_cast<Eigen::Index>(upper_size(n)));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      packed[static_cast<Eigen::Index>(upper_index(n, i, j))] =
          0.5 * (m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) -
                 m(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)));
    }
  }
  return packed;
}

class ScalarField {
 public:
  ScalarField() = default;
  explicit ScalarField(FunctionPtr f) : f_(std::move(f)) {
    if (!f_ || f_->out_dim() != 1) throw ConstructionError("ScalarField: function must have one output");
  }

  /// `f(const std::vector<T>& x) -> T`, generic in T.
  template <typename F>
  static ScalarField from_callable(std::size_t dim, F f) {
    return ScalarField(make_function(dim, 1, [f = std::move(f)](const auto& x, auto& out) { out[0] = f(x); }));
  }

  static ScalarField constant(std::size_t dim, double c) {
    return from_callable(dim, [c](const auto& x) {
      using T = typename std::decay_t<decltype(x)>::value_type;
      return T(c);
    });
  }

  /// The coordinate function x^index.
  static ScalarField coordinate(std::size_t dim, std::size_t index) {
    return from_callable(dim, [index](const auto& x) { return x[index]; });
  }

  std::size_t dim() const { return f_->in_dim(); }
  const FunctionPtr& function() const { return f_; }

  double operator()(const Eigen::VectorXd& x) const { return f_->value(x)[0]; }
  double operator()(const Point& p) const { return (*this)(p.coords()); }

  Eigen::VectorXd gradient(const Eigen::VectorXd& x) const { return f_->jacobian(x).row(0).transpose(); }
  Eigen::VectorXd gradient(const Point& p) const { return gradient(p.coords()); }

  double partial(const Eigen::VectorXd& x, std::size_t i) const { return f_->directional(x, i)[0]; }

  Eigen::MatrixXd hessian(const Eigen::VectorXd& x) const { return f_->hessians(x)[0]; }
  Eigen::MatrixXd hessian(const Point& p) const { return hessian(p.coords()); }

 private:
  FunctionPtr f_;
};

class VectorField {
 public:
  VectorField() = default;
  explicit VectorField(FunctionPtr f) : f_(std::move(f)) {
    if (!f_ || f_->out_dim() != f_->in_dim()) throw ConstructionError("VectorField: needs dim outputs");
  }

  /// `f(const std::vector<T>& x, std::vector<T>& out)`, generic in T.
  template <typename F>
  static VectorField from_callable(std::size_t dim, F f) {
    return VectorField(make_function(dim, dim, std::move(f)));
  }

  static VectorField constant(const Eigen::VectorXd& c) {
    std::vector<double> cs(c.data(), c.data() + c.size());
    return from_callable(static_cast<std::size_t>(c.size()), [cs](const auto& x, auto& out) {
      using T = typename std::decay_t<decltype(x)>::value_type;
      for (std::size_t i = 0; i < cs.size(); ++i) out[i] = T(cs[i]);
    });
  }

  /// The coordinate field d/dx^index.
  static VectorField coordinate(std::size_t dim, std::size_t index) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
    e[static_cast<Eigen::Index>(index)] = 1.0;
    return constant(e);
  }

  std::size_t dim() const { return f_->in_dim(); }
  const FunctionPtr& function() const { return f_; }

  Eigen::VectorXd operator()(const Eigen::VectorXd& x) const { return f_->value(x); }
  Eigen::VectorXd operator()(const Point& p) const { return (*this)(p.coords()); }

  /// J(a, c) = d X^a / d x^c.
  Eigen::MatrixXd jacobian(const Eigen::VectorXd& x) const { return f_->jacobian(x); }
  Eigen::MatrixXd jacobian(const Point& p) const { return jacobian(p.coords()); }

 private:
  FunctionPtr f_;
};

namespace detail {

template <typename Derived>
class AntisymField {
 public:
  AntisymField() = default;
  explicit AntisymField(FunctionPtr f) : f_(std::move(f)) {
    if (!f_) throw ConstructionError("antisymmetric field: null function");
    n_ = f_->in_dim();
    if (f_->out_dim() != upper_size(n_)) throw ConstructionError("antisymmetric field: wrong packed size");
  }

  /// `f(const std::vector<T>& x, AntisymRef<T>& W)`, generic in T. Entries not
  /// set are zero.
  template <typename F>
  static Derived from_callable(std::size_t dim, F f) {
    return Derived(make_function(dim, upper_size(dim), [f = std::move(f), dim](const auto& x, auto& out) {
      using T = typename std::decay_t<decltype(x)>::value_type;
      AntisymRef<T> w(out, dim);
      f(x, w);
    }));
  }

  static Derived constant(const Eigen::MatrixXd& m) {
    const auto n = static_cast<std::size_t>(m.rows());
    Eigen::VectorXd packed = pack_antisym(m);
    std::vector<double> p(packed.data(), packed.data() + packed.size());
    return Derived(make_function(n, p.size(), [p](const auto& x, auto& out) {
      using T = typename std::decay_t<decltype(x)>::value_type;
      for (std::size_t i = 0; i < p.size(); ++i) out[i] = T(p[i]);
    }));
  }

  std::size_t dim() const { return n_; }
  const FunctionPtr& function() const { return f_; }

  Eigen::MatrixXd matrix(const Eigen::VectorXd& x) const { return unpack_antisym(f_->value(x), n_); }
  Eigen::MatrixXd matrix(const Point& p) const { return matrix(p.coords()); }

  /// d[c] = matrix of d_c W^{ab}.
  std::vector<Eigen::MatrixXd> derivatives(const Eigen::VectorXd& x) const {
    Eigen::MatrixXd j = f_->jacobian(x);
    std::vector<Eigen::MatrixXd> d;
    d.reserve(n_);
    for (std::size_t c = 0; c < n_; ++c) d.push_back(unpack_antisym(j.col(static_cast<Eigen::Index>(c)), n_));
    return d;
  }
  std::vector<Eigen::MatrixXd> derivatives(const Point& p) const { return derivatives(p.coords()); }

  /// Second derivatives d_c d_e W^{ab} of entry (a, b).
  Eigen::MatrixXd entry_hessian(const Eigen::VectorXd& x, std::size_t a, std::size_t b) const {
    if (a == b) return Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n_), static_cast<Eigen::Index>(n_));
    auto h = f_->hessians(x);
    return a < b ? h[upper_index(n_, a, b)] : Eigen::MatrixXd(-h[upper_index(n_, b, a)]);
  }

 private:
  FunctionPtr f_;
  std::size_t n_ = 0;
};

}  // namespace detail

class BivectorField : public detail::AntisymField<BivectorField> {
 public:
  using AntisymField::AntisymField;
};

class TwoForm : public detail::AntisymField<TwoForm> {
 public:
  using AntisymField::AntisymField;
};

/// A tangent-valued one-form: R(x) acts on vectors as a dim x dim matrix.
class RecursionField {
 public:
  RecursionField() = default;
  explicit RecursionField(FunctionPtr f) : f_(std::move(f)) {
    if (!f_) throw ConstructionError("RecursionField: null function");
    n_ = f_->in_dim();
    if (f_->out_dim() != n_ * n_) throw ConstructionError("RecursionField: needs dim^2 outputs");
  }

  /// `f(const std::vector<T>& x, std::vector<T>& out)` with out row-major.
  template <typename F>
  static RecursionField from_callable(std::size_t dim, F f) {
    return RecursionField(make_function(dim, dim * dim, std::move(f)));
  }

  static RecursionField constant(const Eigen::MatrixXd& m) {
    const auto n = static_cast<std::size_t>(m.rows());
    std::vector<double> e(n * n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) e[i * n + j] = m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    return from_callable(n, [e](const auto& x, auto& out) {
      using T = typename std::decay_t<decltype(x)>::value_type;
      for (std::size_t i = 0; i < e.size(); ++i) out[i] = T(e[i]);
    });
  }

  std::size_t dim() const { return n_; }
  const FunctionPtr& function() const { return f_; }

  Eigen::MatrixXd matrix(const Eigen::VectorXd& x) const { return unpack(f_->value(x)); }
  Eigen::MatrixXd matrix(const Point& p) const { return matrix(p.coords()); }

  std::vector<Eigen::MatrixXd> derivatives(const Eigen::VectorXd& x) const {
    Eigen::MatrixXd j = f_->jacobian(x);
    std::vector<Eigen::MatrixXd> d;
    for (std::size_t c = 0; c < n_; ++c) d.push_back(unpack(j.col(static_cast<Eigen::Index>(c))));
    return d;
  }

  static Eigen::VectorXd pack(const Eigen::MatrixXd& m) {
    const auto n = m.rows();
    Eigen::VectorXd out(n * n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) out[i * n + j] = m(i, j);
    return out;
  }

 private:
  Eigen::MatrixXd unpack(const Eigen::VectorXd& v) const {
    const auto n = static_cast<Eigen::Index>(n_);
    Eigen::MatrixXd m(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) m(i, j) = v[i * n + j];
    return m;
  }

  FunctionPtr f_;
  std::size_t n_ = 0;
};

}  // namespace pis
