// One PASS/FAIL line per acceptance criterion; exits nonzero when any
// criterion fails.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "pis/pis.hpp"

using namespace pis;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

int failures = 0;

void criterion(int n, double limit_s, const std::function<Verdict()>& body) {
  auto t0 = std::chrono::steady_clock::now();
  Verdict v;
  try {
    v = body();
  } catch (const std::exception& e) {
    v = {false, std::string("exception: ") + e.what()};
  }
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  bool in_time = secs < limit_s;
  bool ok = v.pass && in_time;
  if (!ok) ++failures;
  std::printf("criterion %d: %s  %s  [%.2f s, limit %.0f s%s]\n", n, ok ? "PASS" : "FAIL", v.detail.c_str(), secs, limit_s,
              in_time ? "" : ", too slow");
  std::fflush(stdout);
}

double max_abs(const Eigen::MatrixXd& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

Verdict poisson_validity() {
  double worst = 0.0;
  for (const auto& d : {canonical(1, 2).domain, canonical(2, 6).domain, canonical(3, 7).domain}) {
    auto w = canonical_poisson(d, leading_split(d));
    for (const auto& p : sample(d, 100, 101)) worst = std::max(worst, schouten_self_bracket(w, p).max_abs());
  }
  std::vector<BuiltSystem> systems;
  for (const auto& name : registry_names()) systems.push_back(registry(name, {}));
  systems.push_back(oscillator_chain(3, 2, {1, 2, 3}));
  systems.push_back(twisted({1.0, 1.7}, 0.3));
  systems.push_back(block_poisson(0.3, 2.0));
  for (const auto& s : systems)
    for (const auto& p : sample(s.domain, 100, 102)) worst = std::max(worst, schouten_self_bracket(s.w, p).max_abs());

  auto plain = make_domain(3, 1, 1, {{-1, 1}, {-1, 1}, {-1, 1}}, {"x1", "x2", "x3", "x4"});
  auto bad = expr::parse_antisym<BivectorField>({{"x1", "x2", "x3"}, {"x3", "x4", "1"}}, plain);
  double detected = 1e300;
  for (const auto& p : sample(plain, 100, 103)) detected = std::min(detected, schouten_self_bracket(bad, p).max_abs());
  return {worst < 1e-9 && detected > 0.1,
          "max |[w,w]| over canonical and registry structures " + fmt("%.3g", worst) +
              ", counterexample min component " + fmt("%.3g", detected)};
}

Verdict pis_dichotomy() {
  auto c = canonical(2, 6);
  auto good = validate_pis(c.w, c.algebra, c.hamiltonians, sample(c.domain, 100, 201));
  auto o = oscillator_chain(3, 2, {1, 2});
  auto bad = validate_pis(o.w, o.algebra, o.hamiltonians, sample(o.domain, 100, 202));
  return {good.pis() && bad.condition_a.ok && !bad.condition_b.ok,
          std::string("canonical(2,6) pis=") + (good.pis() ? "true" : "false") +
              ", oscillator_chain(3,2) condition_b max bracket " + fmt("%.3g", bad.condition_b.max_bracket)};
}

double torsion_scan(const BuiltSystem& s, const std::vector<Point>& pts) {
  auto R = block_recursion_field(s.w, s.domain);
  const std::size_t n = s.domain.dim();
  double worst = 0.0;
  for (const auto& p : pts)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        worst = std::max(worst, nijenhuis_torsion(R, VectorField::coordinate(n, i), VectorField::coordinate(n, j), p)
                                    .cwiseAbs()
                                    .maxCoeff());
  return worst;
}

Verdict recursion_operator() {
  auto s = block_poisson(1.0, 1.0);
  auto pts = sample(s.domain, 50, 301);
  PoissonPair pair{s.w, drop_fiber_block(s.w, s.domain)};
  const Eigen::Index nb = static_cast<Eigen::Index>(s.domain.dim_base()), nf = static_cast<Eigen::Index>(s.domain.k());
  double p0 = 0.0, pattern = 0.0;
  for (const auto& p : pts) {
    auto r = build_recursion(pair, p);
    p0 = std::max(p0, r.p0_residual);
    pattern = std::max({pattern, max_abs(r.R.topLeftCorner(nb, nb) - Eigen::MatrixXd::Identity(nb, nb)),
                        max_abs(r.R.bottomRightCorner(nf, nf) - Eigen::MatrixXd::Identity(nf, nf)),
                        max_abs(r.R.topRightCorner(nb, nf))});
  }
  double bent = torsion_scan(s, pts), flat = torsion_scan(block_poisson(1.0, 0.0), pts);
  return {p0 < 1e-9 && pattern < 1e-9 && bent > 1e-3 && flat < 1e-9,
          "|w'# - R w#| " + fmt("%.3g", p0) + ", pattern " + fmt("%.3g", pattern) + ", torsion y-dependent " +
              fmt("%.3g", bent) + ", y-independent " + fmt("%.3g", flat)};
}

Verdict trivialization() {
  auto s = oscillator_chain(2, 2, {1.0, 2.0});
  FlowMap f{s.domain, s.algebra.generators, {}};
  std::vector<Eigen::VectorXd> guesses;
  for (const auto& g : s.lattice_guesses) guesses.push_back(1.01 * g);
  auto lat = find_isotropy_generators(f, Point(s.domain, s.default_point), guesses);
  std::vector<Eigen::VectorXd> expected = {Eigen::Vector2d(two_pi, 0.0), Eigen::Vector2d(0.0, std::numbers::pi)};
  double lattice_err = lat.m() == 2 ? 0.0 : 1e300;
  for (const auto& e : expected) {
    double best = 1e300;
    for (const auto& v : lat.vectors) best = std::min(best, max_abs(v - e));
    lattice_err = std::max(lattice_err, best);
  }
  auto self = transition_matrix(lat, lat);
  double id_err = max_abs(self.A - Eigen::MatrixXd::Identity(self.A.rows(), self.A.cols()));

  Eigen::Matrix3d T;
  T << 1, 0, 0, 0.5, 1, 0, 0.2, 0.3, 1;
  auto tw = twisted({1.0, 1.7}, 0.3, T);
  const auto& sm = *tw.straightened;
  auto fields = straighten_generators(tw.algebra, sm.chart, sm.B, sm.C);
  double closure = 0.0;
  for (const auto& p : sample(sm.chart, 10, 401))
    closure = std::max(closure, straightened_closure_residual(fields, sm.chart, p, sm.B.value(p.base()), sm.C.value(p.base())));
  return {lattice_err < 1e-7 && id_err == 0.0 && closure < 1e-7,
          "lattice error " + fmt("%.3g", lattice_err) + ", |A(L0,L0) - I| " + fmt("%.3g", id_err) +
              ", twisted straightened closure " + fmt("%.3g", closure)};
}

Verdict actions_and_canonical_form() {
  auto s = oscillator_chain(1, 1, {2.0});
  FlowMap f{s.domain, s.algebra.generators, {}};
  Point x0(s.domain, Eigen::Vector2d(0.0, std::sqrt(2.0)));  // E = 1
  auto lat = find_isotropy_generators(f, x0, s.lattice_guesses);
  auto ai = action_integrals(*s.liouville, lat, f, x0);
  double action = ai.values.empty() ? 1e300 : ai.values.front();
  std::vector<Point> pts;
  for (const auto& p : sample(s.domain, 200, 501))
    if (p.coords().norm() > 0.5 && pts.size() < 100) pts.push_back(p);
  auto rep = verify_canonical_form(*s.omega, *s.action_angle, *s.action_angle_split, CanonicalPattern::darboux, pts);
  return {std::abs(action - 0.5) <= 1e-6 && rep.residual < 1e-8,
          "action " + fmt("%.17g", action) + ", canonical-form residual " + fmt("%.3g", rep.residual)};
}

Verdict symplectic_extension() {
  auto s = canonical(1, 4);
  auto pts = sample(s.domain, 100, 601);
  TwoForm omega = extend_to_symplectic(s.w, s.domain, s.split, pts);
  auto wo = bivector_from_twoform(omega);
  double d_omega = 0.0, coincidence = 0.0;
  std::size_t min_rank = s.domain.dim();
  for (const auto& p : pts) {
    d_omega = std::max(d_omega, exterior_derivative_3form_components(omega, p).max_abs());
    min_rank = std::min(min_rank, rank_at(omega, p, 1e-9));
    for (const auto& h : s.hamiltonians)
      coincidence = std::max(coincidence, (hamiltonian_vf(s.w, h)(p) - hamiltonian_vf(wo, h)(p)).cwiseAbs().maxCoeff());
  }
  return {d_omega < 1e-9 && min_rank == s.domain.dim() && coincidence < 1e-9,
          "max |dOmega| " + fmt("%.3g", d_omega) + ", min rank " + std::to_string(min_rank) +
              ", Hamiltonian field mismatch " + fmt("%.3g", coincidence)};
}

Verdict diophantine_trend() {
  const std::vector<double> gammas = {1e-4, 1e-3, 1e-2, 1e-1};
  auto f = diophantine_measure({{1.0, 2.0}, {1.0, 2.0}}, gammas, 20, 10000, 7, MeasureSampling::grid);
  bool monotone = std::is_sorted(f.rbegin(), f.rend());
  std::string d = "fractions";
  for (double x : f) d += " " + fmt("%.4f", x);
  return {monotone && f.front() >= 0.9, d};
}

Verdict kam_trend() {
  auto s = kam_twist(2);
  SweepConfig cfg;
  cfg.cells = action_grid(s.domain, {20, 20}, Eigen::VectorXd());
  cfg.eps = {0.0, 1e-4, 1e-3, 1e-2};
  cfg.diophantine = {1e-3, 30};
  cfg.threads = 1;
  auto res = persistence_sweep(*s.kam, cfg);
  std::vector<double> frac;
  for (double e : cfg.eps) frac.push_back(res.survival_fraction(e));
  bool resonant_destroyed = false;
  for (const auto& r : res.rows)
    if (r.eps == 1e-2 && r.I.isApprox(Eigen::Vector2d(1.0, 1.0))) resonant_destroyed = !r.survived;
  bool monotone = std::is_sorted(frac.rbegin(), frac.rend());
  std::string d = "survival";
  for (std::size_t i = 0; i < frac.size(); ++i) d += " eps=" + fmt("%g", cfg.eps[i]) + ":" + fmt("%.4f", frac[i]);
  d += std::string(", resonant cell destroyed=") + (resonant_destroyed ? "true" : "false");
  return {frac[0] == 1.0 && monotone && resonant_destroyed, d};
}

Verdict frequency_extraction() {
  const std::size_t n = 4096;
  const double dt = 0.05, nu1 = 1.2345678, nu2 = -0.4321;
  std::vector<std::complex<double>> sig(n);
  for (std::size_t j = 0; j < n; ++j) {
    double t = dt * static_cast<double>(j);
    sig[j] = std::polar(1.0, nu1 * t) + 0.4 * std::polar(1.0, nu2 * t + 0.7);
  }
  auto c = extract_frequencies(sig, dt, 2);
  std::vector<double> got = {c.at(0).frequency, c.at(1).frequency};
  std::sort(got.begin(), got.end());
  double synth = std::max(std::abs(got[0] - nu2) / std::abs(nu2), std::abs(got[1] - nu1) / std::abs(nu1));

  auto s = kam_twist(2, 1);
  double traj = 0.0;
  for (const auto& cell : {Eigen::Vector3d(1.3, 1.7, 0.05), Eigen::Vector3d(1.9, 1.1, -0.08)}) {
    auto fm = frequency_map(*s.kam, cell.head(2), cell.tail(1));
    Eigen::VectorXd x = Eigen::VectorXd::Zero(5);
    x.head(3) = cell;
    Point x0(s.domain, x);
    const double step = 1000.0 / static_cast<double>(n);
    for (std::size_t a = 0; a < 2; ++a) {
      std::vector<double> phi(n);
      for (std::size_t j = 0; j < n; ++j) phi[j] = unperturbed_flow(*s.kam, x0, step * static_cast<double>(j))[3 + a];
      double nu = extract_angle_frequencies(phi, step).front().frequency;
      traj = std::max(traj, std::abs(nu - fm.omega[static_cast<Eigen::Index>(a)]) / fm.omega[static_cast<Eigen::Index>(a)]);
    }
  }
  return {synth < 1e-6 && traj < 1e-6,
          "synthetic relative error " + fmt("%.3g", synth) + ", trajectory vs frequency map " + fmt("%.3g", traj)};
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Verdict determinism() {
  const std::string src = PIS_SOURCE_DIR, cli = PIS_CLI_PATH;
  const std::vector<std::pair<std::string, std::string>> runs = {
      {"validate", "validate_canonical.json"},          {"trivialize", "trivialize_twisted.json"},
      {"recursion", "recursion_block_poisson.json"},    {"actions", "actions_oscillator.json"},
      {"extend", "extend_canonical.json"},              {"measure", "measure_unit_square.json"},
      {"kam-sweep", "kam_sweep_small.json"},
  };
  auto dir = std::filesystem::temp_directory_path() / ("pis_acceptance_" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  std::string differing;
  for (const auto& [cmd, cfg] : runs) {
    std::string out[2];
    for (int i = 0; i < 2; ++i) {
      auto file = dir / (cmd + std::to_string(i) + ".out");
      std::string line = "'" + cli + "' " + cmd + " --config '" + src + "/configs/" + cfg + "' --out '" + file.string() + "'";
      int status = std::system(line.c_str());
      if (!WIFEXITED(status) || WEXITSTATUS(status) > 1) differing += " " + cmd + "(exit)";
      out[i] = slurp(file.string());
    }
    if (out[0].empty() || out[0] != out[1]) differing += " " + cmd;
  }
  std::filesystem::remove_all(dir);
  return {differing.empty(), differing.empty() ? "7 subcommands byte-identical across two runs" : "differs:" + differing};
}

}  // namespace

int main() {
  criterion(1, 1, poisson_validity);
  criterion(2, 5, pis_dichotomy);
  criterion(3, 10, recursion_operator);
  criterion(4, 30, trivialization);
  criterion(5, 10, actions_and_canonical_form);
  criterion(6, 5, symplectic_extension);
  criterion(7, 60, diophantine_trend);
  criterion(8, 600, kam_trend);
  criterion(9, 5, frequency_extraction);
  criterion(10, 600, determinism);
  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
