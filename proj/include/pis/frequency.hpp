#pragma once

// Frequency analysis of quasi-periodic time series: Hann-windowed FFT peak
// search, parabolic interpolation, refinement of the windowed projection,
// and iterative subtraction of the fitted components.

#include <Eigen/Dense>
#include <boost/math/tools/roots.hpp>
#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <string>
#include <vector>

#include "pis/error.hpp"
#include "pis/geometry.hpp"

namespace pis {

struct FrequencyComponent {
  double frequency = 0.0;  ///< angular frequency, radians per unit time
  std::complex<double> amplitude;
};

namespace detail {

using cplx = std::complex<double>;

struct WindowedSeries {
  std::vector<cplx> values;
  std::vector<double> window;  ///< Hann weights, normalized to unit mean
  double dt = 1.0;
};

inline cplx projection(const WindowedSeries& s, const std::vector<cplx>& r, double nu, cplx* derivative = nullptr) {
  cplx acc = 0.0, dacc = 0.0;
  const cplx step = std::polar(1.0, -nu * s.dt);
  cplx rot = 1.0;
  for (std::size_t j = 0; j < r.size(); ++j) {
    if ((j & 255u) == 0) rot = std::polar(1.0, -nu * s.dt * static_cast<double>(j));
    cplx term = s.window[j] * r[j] * rot;
    acc += term;
    if (derivative) dacc += term * cplx(0.0, -s.dt * static_cast<double>(j));
    rot *= step;
  }
  if (derivative) *derivative = dacc;
  return acc;
}

/// d|P(nu)|^2 / d nu.
inline double power_slope(const WindowedSeries& s, const std::vector<cplx>& r, double nu) {
  cplx d;
  cplx p = projection(s, r, nu, &d);
  return 2.0 * (std::conj(p) * d).real();
}

/// Maximizes |P(nu)|^2 near nu0 by bracketed root finding on its slope
/// within one bin.
inline double refine_peak(const WindowedSeries& s, const std::vector<cplx>& r, double nu0, double bin) {
  double lo = nu0 - bin, hi = nu0 + bin;
  auto slope = [&](double nu) { return power_slope(s, r, nu); };
  double flo = slope(lo), fhi = slope(hi);
  if (!(flo > 0.0 && fhi < 0.0)) return nu0;
  boost::uintmax_t iters = 100;
  auto [a, b] = boost::math::tools::toms748_solve(slope, lo, hi, flo, fhi, boost::math::tools::eps_tolerance<double>(50),
                                                  iters);
  return 0.5 * (a + b);
}

inline double fft_peak(const WindowedSeries& s, const std::vector<cplx>& r) {
  const std::size_t n = r.size();
  std::vector<cplx> in(n), out;
  for (std::size_t j = 0; j < n; ++j) in[j] = s.window[j] * r[j];
  Eigen::FFT<double> fft;
  fft.fwd(out, in);
  std::size_t best = 0;
  for (std::size_t j = 1; j < n; ++j)
    if (std::abs(out[j]) > std::abs(out[best])) best = j;
  double a = std::abs(out[(best + n - 1) % n]), b = std::abs(out[best]), c = std::abs(out[(best + 1) % n]);
  double denom = a - 2.0 * b + c;
  double delta = denom != 0.0 ? 0.5 * (a - c) / denom : 0.0;
  double signed_bin = static_cast<double>(best) + delta;
  if (signed_bin > static_cast<double>(n) / 2.0) signed_bin -= static_cast<double>(n);
  return two_pi * signed_bin / (static_cast<double>(n) * s.dt);
}

/// Amplitudes minimizing the windowed squared residual for fixed frequencies.
inline std::vector<cplx> fit_amplitudes(const WindowedSeries& s, const std::vector<double>& nus) {
  const auto n = static_cast<Eigen::Index>(s.values.size());
  const auto m = static_cast<Eigen::Index>(nus.size());
  Eigen::MatrixXcd basis(n, m);
  Eigen::VectorXcd rhs(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double sw = std::sqrt(s.window[static_cast<std::size_t>(j)]);
    double t = s.dt * static_cast<double>(j);
    for (Eigen::Index c = 0; c < m; ++c) basis(j, c) = sw * std::polar(1.0, nus[static_cast<std::size_t>(c)] * t);
    rhs[j] = sw * s.values[static_cast<std::size_t>(j)];
  }
  Eigen::VectorXcd a = basis.colPivHouseholderQr().solve(rhs);
  return std::vector<cplx>(a.data(), a.data() + a.size());
}

inline std::vector<cplx> subtract(const WindowedSeries& s, const std::vector<double>& nus, const std::vector<cplx>& amps,
                                  std::size_t skip = static_cast<std::size_t>(-1)) {
  std::vector<cplx> r = s.values;
  for (std::size_t c = 0; c < nus.size(); ++c) {
    if (c == skip) continue;
    for (std::size_t j = 0; j < r.size(); ++j) r[j] -= amps[c] * std::polar(1.0, nus[c] * s.dt * static_cast<double>(j));
  }
  return r;
}

}  // namespace detail

/// Extracts `n_freq` components of a complex series sampled at spacing dt.
inline std::vector<FrequencyComponent> extract_frequencies(const std::vector<std::complex<double>>& signal, double dt,
                                                           std::size_t n_freq = 1) {
  const std::size_t n = signal.size();
  if (n < 256 || (n & (n - 1)) != 0)
    throw PreconditionError("extract_frequencies: series length " + std::to_string(n) +
                            " must be a power of two >= 256");
  if (!(dt > 0.0) || !std::isfinite(dt)) throw PreconditionError("extract_frequencies: sample spacing must be positive");
  if (n_freq == 0) return {};

  detail::WindowedSeries s;
  s.values = signal;
  s.dt = dt;
  s.window.resize(n);
  for (std::size_t j = 0; j < n; ++j) s.window[j] = 1.0 - std::cos(two_pi * static_cast<double>(j) / static_cast<double>(n));
  const double bin = two_pi / (static_cast<double>(n) * dt);

  std::vector<double> nus;
  std::vector<detail::cplx> amps;
  std::vector<detail::cplx> residual = s.values;
  for (std::size_t c = 0; c < n_freq; ++c) {
    double nu = detail::refine_peak(s, residual, detail::fft_peak(s, residual), bin);
    nus.push_back(nu);
    amps = detail::fit_amplitudes(s, nus);
    residual = detail::subtract(s, nus, amps);
  }
  // One more pass: each frequency refined against the others removed.
  for (std::size_t c = 0; c < nus.size(); ++c) {
    auto others_removed = detail::subtract(s, nus, amps, c);
    nus[c] = detail::refine_peak(s, others_removed, nus[c], bin);
    amps = detail::fit_amplitudes(s, nus);
  }

  std::vector<FrequencyComponent> out;
  for (std::size_t c = 0; c < nus.size(); ++c) out.push_back({nus[c], amps[c]});
  return out;
}

/// Angle series: analyzes exp(i phi(t)).
inline std::vector<FrequencyComponent> extract_angle_frequencies(const std::vector<double>& angles, double dt,
                                                                 std::size_t n_freq = 1) {
  std::vector<std::complex<double>> z(angles.size());
  for (std::size_t j = 0; j < angles.size(); ++j) z[j] = std::polar(1.0, angles[j]);
  return extract_frequencies(z, dt, n_freq);
}

}  // namespace pis
