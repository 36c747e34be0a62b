#pragma once

// Type-erased smooth maps R^n -> R^m with exact first derivatives. Every
// tensor field of the library is a Function whose outputs are the field's
// chart components.

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "pis/dual.hpp"
#include "pis/error.hpp"

namespace pis {

class Function {
 public:
  virtual ~Function() = default;

  virtual std::size_t in_dim() const = 0;
  virtual std::size_t out_dim() const = 0;

  virtual Eigen::VectorXd value(const Eigen::VectorXd& x) const = 0;

  /// out_dim x in_dim matrix of first partials.
  virtual Eigen::MatrixXd jacobian(const Eigen::VectorXd& x) const = 0;

  /// d out / d x_dir for every output.
  virtual Eigen::VectorXd directional(const Eigen::VectorXd& x, std::size_t dir) const {
    return jacobian(x).col(static_cast<Eigen::Index>(dir));
  }

  /// Second partials of every output (in_dim x in_dim each). The default
  /// differentiates the exact Jacobian by central differences.
  virtual std::vector<Eigen::MatrixXd> hessians(const Eigen::VectorXd& x) const {
    const auto n = static_cast<Eigen::Index>(in_dim());
    std::vector<Eigen::MatrixXd> h(out_dim(), Eigen::MatrixXd::Zero(n, n));
    constexpr double step = 1e-5;
    for (Eigen::Index c = 0; c < n; ++c) {
      Eigen::VectorXd xp = x, xm = x;
      xp[c] += step;
      xm[c] -= step;
      Eigen::MatrixXd dj = (jacobian(xp) - jacobian(xm)) / (2.0 * step);
      for (std::size_t o = 0; o < out_dim(); ++o) h[o].col(c) = dj.row(static_cast<Eigen::Index>(o)).transpose();
    }
    for (auto& m : h) m = 0.5 * (m + m.transpose()).eval();
    return h;
  }
};

using FunctionPtr = std::shared_ptr<const Function>;

/// Wraps a generic callable `f(const std::vector<T>& x, std::vector<T>& out)`
/// that is instantiable for T = double, Dual<double>, Dual<Dual<double>>.
/// Derivatives come from forward-mode passes.
template <typename F>
class GenericFunction final : public Function {
 public:
  GenericFunction(std::size_t in, std::size_t out, F f) : in_(in), out_(out), f_(std::move(f)) {}

  std::size_t in_dim() const override { return in_; }
  std::size_t out_dim() const override { return out_; }

  Eigen::VectorXd value(const Eigen::VectorXd& x) const override {
    check(x);
    std::vector<double> xs(x.data(), x.data() + x.size());
    std::vector<double> out(out_, 0.0);
    f_(xs, out);
    return Eigen::Map<const Eigen::VectorXd>(out.data(), static_cast<Eigen::Index>(out_));
  }

  Eigen::VectorXd directional(const Eigen::VectorXd& x, std::size_t dir) const override {
    check(x);
    using D = Dual<double>;
    std::vector<D> xs(in_);
    for (std::size_t i = 0; i < in_; ++i) xs[i] = D(x[static_cast<Eigen::Index>(i)], i == dir ? 1.0 : 0.0);
    std::vector<D> out(out_, D(0.0));
    f_(xs, out);
    Eigen::VectorXd col(static_cast<Eigen::Index>(out_));
    for (std::size_t o = 0; o < out_; ++o) col[static_cast<Eigen::Index>(o)] = out[o].d;
    return col;
  }

  Eigen::MatrixXd jacobian(const Eigen::VectorXd& x) const override {
    Eigen::MatrixXd j(static_cast<Eigen::Index>(out_), static_cast<Eigen::Index>(in_));
    for (std::size_t c = 0; c < in_; ++c) j.col(static_cast<Eigen::Index>(c)) = directional(x, c);
    return j;
  }

  std::vector<Eigen::MatrixXd> hessians(const Eigen::VectorXd& x) const override {
    check(x);
    using D = Dual<double>;
    using DD = Dual<D>;
    const auto n = static_cast<Eigen::Index>(in_);
    std::vector<Eigen::MatrixXd> h(out_, Eigen::MatrixXd::Zero(n, n));
    std::vector<DD> xs(in_);
    std::vector<DD> out(out_);
    for (std::size_t a = 0; a < in_; ++a) {
      for (std::size_t b = a; b < in_; ++b) {
        for (std::size_t i = 0; i < in_; ++i) {
          xs[i] = DD(D(x[static_cast<Eigen::Index>(i)], i == a ? 1.0 : 0.0), D(i == b ? 1.0 : 0.0, 0.0));
        }
        std::fill(out.begin(), out.end(), DD(0.0));
        f_(xs, out);
        for (std::size_t o = 0; o < out_; ++o) {
          auto ia = static_cast<Eigen::Index>(a), ib = static_cast<Eigen::Index>(b);
          h[o](ia, ib) = out[o].d.d;
          h[o](ib, ia) = out[o].d.d;
        }
      }
    }
    return h;
  }

 private:
  void check(const Eigen::VectorXd& x) const {
    if (static_cast<std::size_t>(x.size()) != in_) throw PreconditionError("Function: argument has wrong dimension");
  }

  std::size_t in_;
  std::size_t out_;
  F f_;
};

template <typename F>
FunctionPtr make_function(std::size_t in, std::size_t out, F f) {
  return std::make_shared<GenericFunction<F>>(in, out, std::move(f));
}

/// A function assembled from explicit value/Jacobian closures, used for
/// fields derived from other fields (Hamiltonian vector fields, inverses).
class ComputedFunction final : public Function {
 public:
  using ValueFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;
  using JacobianFn = std::function<Eigen::MatrixXd(const Eigen::VectorXd&)>;

  ComputedFunction(std::size_t in, std::size_t out, ValueFn value, JacobianFn jacobian)
      : in_(in), out_(out), value_(std::move(value)), jacobian_(std::move(jacobian)) {}

  std::size_t in_dim() const override { return in_; }
  std::size_t out_dim() const override { return out_; }
  Eigen::VectorXd value(const Eigen::VectorXd& x) const override { return value_(x); }
  Eigen::MatrixXd jacobian(const Eigen::VectorXd& x) const override { return jacobian_(x); }

 private:
  std::size_t in_;
  std::size_t out_;
  ValueFn value_;
  JacobianFn jacobian_;
};

inline FunctionPtr make_computed(std::size_t in, std::size_t out, ComputedFunction::ValueFn value,
                                 ComputedFunction::JacobianFn jacobian) {
  return std::make_shared<ComputedFunction>(in, out, std::move(value), std::move(jacobian));
}

}  // namespace pis
