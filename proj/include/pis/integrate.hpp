#pragma once

#include <Eigen/Dense>
#include <boost/numeric/odeint.hpp>

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "pis/error.hpp"

namespace pis {

struct IntegratorConfig {
  double abs_tol = 1e-13;
  double rel_tol = 1e-13;
  double initial_step = 1e-2;
  std::size_t max_steps = 2'000'000;
};

using Rhs = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;
/// Called on every accepted state; throws to abort (domain monitoring).
using Monitor = std::function<void(const Eigen::VectorXd&)>;

namespace detail {

using State = std::vector<double>;

inline auto make_stepper(const IntegratorConfig& cfg) {
  namespace ode = boost::numeric::odeint;
  return ode::make_controlled(cfg.abs_tol, cfg.rel_tol, ode::runge_kutta_fehlberg78<State>());
}

inline auto make_system(const Rhs& rhs) {
  return [&rhs](const State& x, State& dxdt, double /*t*/) {
    Eigen::Map<const Eigen::VectorXd> xv(x.data(), static_cast<Eigen::Index>(x.size()));
    Eigen::VectorXd f = rhs(xv);
    dxdt.assign(f.data(), f.data() + f.size());
  };
}

}  // namespace detail

/// Integrates dx/dt = rhs(x) from t = 0 to `duration` with an adaptive
/// embedded Runge-Kutta-Fehlberg 7(8) scheme.
inline Eigen::VectorXd integrate(const Rhs& rhs, const Eigen::VectorXd& x0, double duration,
                                 const IntegratorConfig& cfg, const Monitor& monitor = {}) {
  if (duration == 0.0) return x0;
  namespace ode = boost::numeric::odeint;
  detail::State x(x0.data(), x0.data() + x0.size());
  std::size_t steps = 0;
  auto observer = [&](const detail::State& s, double) {
    if (++steps > cfg.max_steps) {
      throw IntegrationError(IntegrationError::Kind::step_limit,
                             "integrate: step limit of " + std::to_string(cfg.max_steps) + " exhausted");
    }
    if (monitor) monitor(Eigen::Map<const Eigen::VectorXd>(s.data(), static_cast<Eigen::Index>(s.size())));
  };
  double dt = std::copysign(std::min(cfg.initial_step, std::abs(duration)), duration);
  ode::integrate_adaptive(detail::make_stepper(cfg), detail::make_system(rhs), x, 0.0, duration, dt, observer);
  return Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
}

/// States at each requested time (ascending, starting at or after 0).
inline std::vector<Eigen::VectorXd> integrate_at(const Rhs& rhs, const Eigen::VectorXd& x0,
                                                 const std::vector<double>& times, const IntegratorConfig& cfg,
                                                 const Monitor& monitor = {}) {
  std::vector<Eigen::VectorXd> out;
  out.reserve(times.size());
  Eigen::VectorXd x = x0;
  double t = 0.0;
  for (double ti : times) {
    x = integrate(rhs, x, ti - t, cfg, monitor);
    t = ti;
    out.push_back(x);
  }
  return out;
}

}  // namespace pis
