#pragma once

// Command-line front end. Every subcommand reads one JSON config, runs one
// analysis and writes one JSON report or CSV table with a provenance block.
// Exit codes: 0 checks passed, 1 checks ran and a property failed, 2 usage,
// config or runtime error.

#include <CLI11.hpp>
#include <json.hpp>

#include <Eigen/Dense>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "pis/calculus.hpp"
#include "pis/config.hpp"
#include "pis/kam.hpp"
#include "pis/registry.hpp"
#include "pis/structures.hpp"
#include "pis/trivialization.hpp"

namespace pis {

inline constexpr const char* tool_version = "0.1.0";

namespace cli {

struct Outcome {
  bool passed = true;
  std::string text;  ///< complete output document
};

inline json provenance(const std::string& command, const json& cfg) {
  return json{{"tool", "pis"},
              {"version", tool_version},
              {"command", command},
              {"config_hash", config_hash(cfg)},
              {"seed", cfg["seed"]},
              {"tolerance", cfg["tolerance"]},
              {"config", cfg}};
}

inline std::string num(double v) { return expr::format_number(v); }

// Adding 0.0 turns -0.0 into 0.0.
inline json vec(const Eigen::VectorXd& v) {
  std::vector<double> out;
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i] + 0.0);
  return out;
}

inline json mat(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(vec(m.row(i).transpose()));
  return rows;
}

inline IntegratorConfig integrator(const json& cfg) {
  const auto& j = cfg["integrator"];
  IntegratorConfig c;
  c.abs_tol = j.at("abs_tol").get<double>();
  c.rel_tol = j.at("rel_tol").get<double>();
  c.initial_step = j.at("initial_step").get<double>();
  c.max_steps = j.at("max_steps").get<std::size_t>();
  return c;
}

inline std::uint64_t seed(const json& cfg) { return cfg["seed"].get<std::uint64_t>(); }
inline double tolerance(const json& cfg) { return cfg["tolerance"].get<double>(); }

/// Base point for lattice work: the section over the default point's base
/// coordinates on toroidal charts, the default point itself otherwise.
inline Point anchor(const BuiltSystem& s) {
  if (s.toroidal) return section_point(s.domain, s.default_point.head(static_cast<Eigen::Index>(s.domain.dim_base())));
  return Point(s.domain, s.default_point);
}

/// Seeded test points. Toroidal charts are sampled uniformly; phase-space
/// charts are sampled in a box of half-width `spread` around the default
/// point, where orbits stay well inside the chart.
inline std::vector<Point> test_points(const BuiltSystem& s, std::size_t count, std::uint64_t sd, double spread = 0.25) {
  if (s.toroidal) return sample(s.domain, count, sd);
  std::mt19937_64 rng(sd);
  std::vector<Point> out;
  for (std::size_t c = 0; c < count; ++c) {
    Eigen::VectorXd x = s.default_point;
    for (Eigen::Index i = 0; i < x.size(); ++i) x[i] += spread * (2.0 * detail::unit_uniform(rng) - 1.0);
    out.emplace_back(s.domain, x);
  }
  return out;
}

inline json lattice_json(const PeriodLattice& l) {
  json vs = json::array();
  for (const auto& v : l.vectors) vs.push_back(vec(v));
  json outcomes = json::array();
  for (const auto& o : l.outcomes)
    outcomes.push_back({{"guess", vec(o.guess)},
                        {"status", o.status},
                        {"iterations", o.iterations},
                        {"residual", o.residual},
                        {"solution", o.solution.size() ? vec(o.solution) : json(nullptr)}});
  return {{"base_point", vec(l.base_point)}, {"rank", l.m()}, {"vectors", vs}, {"residual", l.residual()},
          {"guesses", outcomes}};
}

inline IsotropyOptions isotropy(const json& cfg) {
  IsotropyOptions o;
  o.closure_tol = cfg["trivialize"]["closure_tol"].get<double>();
  o.max_iterations = cfg["trivialize"]["max_iterations"].get<std::size_t>();
  return o;
}

inline Outcome validate(const BuiltSystem& s, const json& cfg) {
  const double tol = tolerance(cfg);
  auto pts = sample(s.domain, cfg["validate"]["points"].get<std::size_t>(), seed(cfg));
  json r;
  r["provenance"] = provenance("validate", cfg);
  r["system"] = s.name;

  auto alg = verify_algebra(s.algebra, pts, std::max(tol, 1e-8));
  r["algebra"] = {{"commutator_residual", alg.commutator_residual},
                  {"min_singular_value", alg.min_singular_value},
                  {"commutative", alg.commutative},
                  {"independent", alg.independent}};
  bool ok = alg.ok();

  if (s.toroidal) {
    auto bf = check_block_form(s.w, s.domain, pts, tol);
    r["block_form"] = {{"base_block", bf.base_block},
                       {"cross_y_variation", bf.cross_y_variation},
                       {"cross_y_derivative", bf.cross_y_derivative},
                       {"affine_residual", bf.affine_residual},
                       {"schouten", bf.schouten},
                       {"violations", bf.violations},
                       {"ok", bf.ok()}};
    ok = ok && bf.ok();
  } else {
    double sch = 0.0;
    for (const auto& p : pts) sch = std::max(sch, schouten_self_bracket(s.w, p).max_abs());
    r["block_form"] = nullptr;
    r["schouten"] = sch;
    ok = ok && sch <= tol;
  }

  auto p = validate_pis(s.w, s.algebra, s.hamiltonians, pts, tol);
  r["condition_a"] = {{"generation_residual", p.condition_a.generation_residual},
                      {"independence", p.condition_a.independence},
                      {"involution", p.condition_a.involution},
                      {"ok", p.condition_a.ok}};
  r["condition_b"] = {{"max_bracket", p.condition_b.max_bracket},
                      {"worst_pair", {p.condition_b.worst_i, p.condition_b.worst_j}},
                      {"ok", p.condition_b.ok}};
  r["rank_observed"] = p.rank_observed;
  r["rank_ok"] = p.rank_ok;
  r["pis"] = p.pis();
  ok = ok && p.pis();
  r["passed"] = ok;
  return {ok, r.dump(2) + "\n"};
}

inline Outcome trivialize(const BuiltSystem& s, const json& cfg) {
  const auto& t = cfg["trivialize"];
  const double lat_tol = t["lattice_tol"].get<double>(), closure_tol = t["closure_check_tol"].get<double>();
  FlowMap f{s.domain, s.algebra.generators, integrator(cfg)};
  if (s.lattice_guesses.empty()) throw ConfigError("trivialize: the system supplies no lattice guesses");
  auto opt = isotropy(cfg);
  json r;
  r["provenance"] = provenance("trivialize", cfg);
  r["system"] = s.name;

  PeriodLattice l0 = find_isotropy_generators(f, anchor(s), s.lattice_guesses, opt);
  r["lattice"] = lattice_json(l0);
  bool ok = l0.m() > 0 && l0.residual() <= lat_tol;

  const std::size_t np = t["straighten_points"].get<std::size_t>();
  json transitions = json::array();
  if (l0.m() > 0) {
    auto self = transition_matrix(l0, l0);
    double id_err = detail::max_abs(self.A - Eigen::MatrixXd::Identity(self.A.rows(), self.A.cols()));
    r["self_transition_identity_error"] = id_err;
    ok = ok && id_err <= lat_tol;
    for (const auto& p : test_points(s, np, seed(cfg))) {
      Point sec = s.toroidal ? section_point(s.domain, p.base()) : p;
      json e;
      e["point"] = vec(sec.coords());
      try {
        double shift = 0.0;
        auto lr = continue_lattice(f, l0, sec, &shift, opt);
        auto tm = transition_matrix(l0, lr);
        e["A"] = mat(tm.A);
        e["frame_residual"] = tm.frame_residual;
        e["continuation_shift"] = shift;
        e["lattice_residual"] = lr.residual();
        ok = ok && tm.frame_residual <= lat_tol && lr.residual() <= lat_tol;
      } catch (const PreconditionError& err) {
        e["error"] = err.what();
        ok = false;
      }
      transitions.push_back(e);
    }
  }
  r["transitions"] = transitions;

  // Straightened generators: B and C from the analytic model when there is
  // one, otherwise the constant blocks measured at the anchor.
  json st;
  if (s.straightened) {
    const auto& sm = *s.straightened;
    auto fields = straighten_generators(s.algebra, sm.chart, sm.B, sm.C);
    double model_err = 0.0, closure = 0.0;
    for (const auto& p : sample(sm.chart, np, seed(cfg))) {
      Eigen::VectorXd r0 = p.base();
      Eigen::VectorXd phi = p.angles();
      auto lat = find_isotropy_generators(f, Point(s.domain, sm.embed(r0, phi)), s.lattice_guesses, opt);
      if (lat.m() != sm.chart.m()) {
        model_err = std::numeric_limits<double>::infinity();
        continue;
      }
      // Compare the lattice as a set: each model column against its nearest
      // numeric vector.
      Eigen::MatrixXd bm = sm.B.value(r0), cm = sm.C.value(r0);
      for (Eigen::Index i = 0; i < cm.cols(); ++i) {
        Eigen::VectorXd model(bm.rows() + cm.rows());
        model << bm.col(i), cm.col(i);
        double best = std::numeric_limits<double>::infinity();
        for (const auto& v : lat.vectors) best = std::min(best, (v / two_pi - model).cwiseAbs().maxCoeff());
        model_err = std::max(model_err, best);
      }
      Eigen::VectorXd x = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(sm.chart.dim()));
      x.head(r0.size()) = r0;
      x.tail(phi.size()) = phi;
      closure = std::max(closure, straightened_closure_residual(fields, sm.chart, Point(sm.chart, x), bm, cm, f.config));
    }
    st = {{"model", "analytic"}, {"lattice_model_error", model_err}, {"closure_residual", closure}};
    ok = ok && model_err <= lat_tol && closure <= closure_tol;
  } else if (s.toroidal && l0.m() == s.domain.m() && l0.m() > 0) {
    auto [b, c] = lattice_blocks(l0);
    Eigen::MatrixXd bn = b / two_pi, cn = c / two_pi;
    auto fields = straighten_generators(s.algebra, s.domain, MatrixField::constant(s.domain.dim_base(), bn),
                                        MatrixField::constant(s.domain.dim_base(), cn));
    double closure = 0.0;
    for (const auto& p : sample(s.domain, np, seed(cfg)))
      closure = std::max(closure, straightened_closure_residual(fields, s.domain, p, bn, cn, f.config));
    st = {{"model", "constant"}, {"closure_residual", closure}};
    ok = ok && closure <= closure_tol;
  } else {
    st = nullptr;
  }
  r["straightening"] = st;
  r["passed"] = ok;
  return {ok, r.dump(2) + "\n"};
}

/// Recursion field for an arbitrary pair: pointwise build_recursion with
/// central-difference derivatives.
inline RecursionField numeric_recursion_field(const PoissonPair& pair, const ChartDomain& d, double tol) {
  const std::size_t n = d.dim();
  auto value = [pair, d, tol](const Eigen::VectorXd& x) -> Eigen::VectorXd {
    return RecursionField::pack(build_recursion(pair, Point(d, x), tol).R);
  };
  return RecursionField(make_computed(n, n * n, value, [value, n](const Eigen::VectorXd& x) -> Eigen::MatrixXd {
    Eigen::MatrixXd j(static_cast<Eigen::Index>(n * n), static_cast<Eigen::Index>(n));
    for (std::size_t c = 0; c < n; ++c) {
      Eigen::VectorXd xp = x, xm = x;
      const double h = 1e-5 * std::max(1.0, std::abs(x[static_cast<Eigen::Index>(c)]));
      xp[static_cast<Eigen::Index>(c)] += h;
      xm[static_cast<Eigen::Index>(c)] -= h;
      j.col(static_cast<Eigen::Index>(c)) = (value(xp) - value(xm)) / (2.0 * h);
    }
    return j;
  }));
}

inline Outcome recursion(const BuiltSystem& s, const json& cfg) {
  if (!s.toroidal) throw ConfigError("recursion: needs a system in toroidal coordinates (r, t, phi)");
  const double tol = tolerance(cfg);
  const auto& rc = cfg["recursion"];
  json r;
  r["provenance"] = provenance("recursion", cfg);
  r["system"] = s.name;

  bool dropped = rc["w_prime"].is_string();
  if (dropped && rc["w_prime"].get<std::string>() != "drop_fiber_block")
    throw ConfigError("recursion: w_prime must be \"drop_fiber_block\" or a list of [row, column, expression]");
  PoissonPair pair{s.w, dropped ? drop_fiber_block(s.w, s.domain)
                                : expr::parse_antisym<BivectorField>(detail::antisym_entries(rc["w_prime"], "w_prime"),
                                                                     s.domain)};
  r["w_prime"] = dropped ? json("drop_fiber_block") : json("custom");
  auto pts = sample(s.domain, rc["points"].get<std::size_t>(), seed(cfg));
  auto pc = check_pair(pair, pts);
  r["schouten_w"] = pc.schouten_w;
  r["schouten_w_prime"] = pc.schouten_w_prime;
  r["equal_rank"] = pc.equal_rank;

  const std::size_t nb = s.domain.dim_base(), n = s.domain.dim();
  double p0 = 0.0, dual = 0.0, gap = 0.0, pattern = 0.0, block_match = 0.0;
  std::optional<RecursionField> exact;
  if (dropped) exact = block_recursion_field(s.w, s.domain);
  try {
    for (const auto& p : pts) {
      auto res = build_recursion(pair, p, tol);
      p0 = std::max(p0, res.p0_residual);
      dual = std::max(dual, res.dual_residual);
      gap = std::max(gap, res.subspace_gap);
      const auto b = static_cast<Eigen::Index>(nb), f = static_cast<Eigen::Index>(n - nb);
      double pat = std::max({detail::max_abs(res.R.topLeftCorner(b, b) - Eigen::MatrixXd::Identity(b, b)),
                             detail::max_abs(res.R.bottomRightCorner(f, f) - Eigen::MatrixXd::Identity(f, f)),
                             detail::max_abs(res.R.topRightCorner(b, f))});
      pattern = std::max(pattern, pat);
      if (exact) block_match = std::max(block_match, detail::max_abs(res.R - exact->matrix(p)));
    }
  } catch (const PreconditionError& e) {
    r["error"] = e.what();
    r["passed"] = false;
    return {false, r.dump(2) + "\n"};
  }
  r["p0_residual"] = p0;
  r["dual_residual"] = dual;
  r["subspace_gap"] = gap;
  r["pattern_residual"] = pattern;
  r["block_field_match"] = exact ? json(block_match) : json(nullptr);

  RecursionField field = exact ? *exact : numeric_recursion_field(pair, s.domain, tol);
  std::vector<VectorField> basis;
  for (std::size_t i = 0; i < n; ++i) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
    e[static_cast<Eigen::Index>(i)] = 1.0;
    basis.push_back(VectorField::constant(e));
  }
  double torsion = 0.0;
  std::size_t wi = 0, wj = 1;
  for (const auto& p : pts)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        double v = nijenhuis_torsion(field, basis[i], basis[j], p).cwiseAbs().maxCoeff();
        if (v > torsion) {
          torsion = v;
          wi = i;
          wj = j;
        }
      }
  const auto& names = s.domain.coordinate_names();
  r["torsion"] = {{"max", torsion},
                  {"worst_pair", {names[wi], names[wj]}},
                  {"vanishes", torsion < rc["torsion_threshold"].get<double>()},
                  {"derivatives", exact ? "exact" : "central-difference"}};
  bool ok = p0 <= tol && pattern <= tol && (!exact || block_match <= tol);
  r["passed"] = ok;
  return {ok, r.dump(2) + "\n"};
}

inline CoordinateMap identity_map(const ChartDomain& d) {
  auto f = make_function(d.dim(), d.dim(), [n = d.dim()](const auto& x, auto& out) {
    for (std::size_t i = 0; i < n; ++i) out[i] = x[i];
  });
  return CoordinateMap{f, d, {}};
}

inline Outcome actions(const BuiltSystem& s, const json& cfg) {
  const auto& a = cfg["actions"];
  if (!s.liouville) throw ConfigError("actions: the system supplies no Liouville form");
  if (s.lattice_guesses.empty()) throw ConfigError("actions: the system supplies no lattice guesses");
  FlowMap f{s.domain, s.algebra.generators, integrator(cfg)};
  json r;
  r["provenance"] = provenance("actions", cfg);
  r["system"] = s.name;

  Point x0 = anchor(s);
  auto lat = find_isotropy_generators(f, x0, s.lattice_guesses, isotropy(cfg));
  r["lattice"] = lattice_json(lat);
  bool ok = lat.m() > 0;
  if (lat.m() > 0) {
    auto ai = action_integrals(*s.liouville, lat, f, x0, a["panels"].get<std::size_t>());
    r["actions"] = ai.values;
    r["degenerate"] = ai.degenerate;
    r["quadrature_error"] = ai.quadrature_error;
    ok = ok && ai.quadrature_error <= a["quadrature_tol"].get<double>();
  }

  const double ctol = a["canonical_tol"].get<double>();
  const std::size_t np = a["points"].get<std::size_t>();
  std::optional<ActionAngleReport> rep;
  if (s.action_angle) {
    auto pts = test_points(s, np, seed(cfg));
    r["map_actions"] = vec(s.action_angle->map->value(x0.coords()).head(static_cast<Eigen::Index>(s.action_angle->target.k())));
    if (s.omega)
      rep = verify_canonical_form(*s.omega, *s.action_angle, *s.action_angle_split, CanonicalPattern::darboux, pts, ctol);
    else
      rep = verify_canonical_form(s.w, *s.action_angle, *s.action_angle_split, pts, ctol);
    r["canonical_map"] = "analytic action-angle";
  } else if (s.toroidal) {
    rep = verify_canonical_form(s.w, identity_map(s.domain), s.split, sample(s.domain, np, seed(cfg)), ctol);
    r["canonical_map"] = "identity";
  }
  if (rep) {
    r["canonical_form"] = {{"residual", rep->residual},
                           {"block_residuals", rep->block_residuals},
                           {"max_condition", rep->max_condition},
                           {"excluded_points", rep->excluded_points},
                           {"shifts", rep->shifts},
                           {"canonical", rep->canonical}};
    ok = ok && rep->canonical;
  } else {
    r["canonical_form"] = nullptr;
  }
  r["passed"] = ok;
  return {ok, r.dump(2) + "\n"};
}

inline Outcome extend(const BuiltSystem& s, const json& cfg) {
  if (!s.toroidal) throw ConfigError("extend: needs a system in adapted coordinates (J, z, y)");
  const double tol = tolerance(cfg);
  auto pts = sample(s.domain, cfg["extend"]["points"].get<std::size_t>(), seed(cfg));
  json r;
  r["provenance"] = provenance("extend", cfg);
  r["system"] = s.name;

  TwoForm omega = extend_to_symplectic(s.w, s.domain, s.split, pts);
  BivectorField w_omega = bivector_from_twoform(omega);
  double d_omega = 0.0, coincidence = 0.0;
  std::size_t min_rank = s.domain.dim();
  for (const auto& p : pts) {
    d_omega = std::max(d_omega, exterior_derivative_3form_components(omega, p).max_abs());
    min_rank = std::min(min_rank, rank_at(omega, p, 1e-9));
    for (const auto& h : s.hamiltonians) {
      Eigen::VectorXd a = hamiltonian_vf(s.w, h)(p.coords()), b = hamiltonian_vf(w_omega, h)(p.coords());
      coincidence = std::max(coincidence, (a - b).cwiseAbs().maxCoeff());
    }
  }
  r["d_omega"] = d_omega;
  r["min_rank"] = min_rank;
  r["full_rank"] = min_rank == s.domain.dim();
  r["hamiltonian_coincidence"] = coincidence;
  r["omega_at_anchor"] = mat(omega.matrix(anchor(s)));
  bool ok = d_omega <= tol && min_rank == s.domain.dim() && coincidence <= tol;
  r["passed"] = ok;
  return {ok, r.dump(2) + "\n"};
}

inline std::string csv_provenance(const std::string& command, const json& cfg) {
  json p = provenance(command, cfg);
  std::string out;
  out += "# tool=pis version=" + std::string(tool_version) + " command=" + command + "\n";
  out += "# config_hash=" + p["config_hash"].get<std::string>() + "\n";
  out += "# seed=" + p["seed"].dump() + " tolerance=" + p["tolerance"].dump() + "\n";
  out += "# config=" + cfg.dump() + "\n";
  return out;
}

inline Outcome measure(const json& cfg) {
  const auto& m = cfg["measure"];
  std::vector<Interval> box;
  for (const auto& b : m["box"]) {
    auto v = detail::to_vector(b, "measure.box");
    if (v.size() != 2) throw ConfigError("measure: box entries must be [lower, upper]");
    box.push_back({v[0], v[1]});
  }
  auto gammas = m["gammas"].get<std::vector<double>>();
  std::string mode = m["sampling"].get<std::string>();
  if (mode != "grid" && mode != "random") throw ConfigError("measure: sampling must be \"grid\" or \"random\"");
  auto frac = diophantine_measure(box, gammas, m["truncation"].get<std::size_t>(), m["samples"].get<std::size_t>(),
                                  seed(cfg), mode == "grid" ? MeasureSampling::grid : MeasureSampling::random);
  std::string out = csv_provenance("measure", cfg);
  out += "gamma,fraction\n";
  for (std::size_t i = 0; i < gammas.size(); ++i) out += num(gammas[i]) + "," + num(frac[i]) + "\n";
  return {true, out};
}

inline Outcome kam_sweep(const BuiltSystem& s, const json& cfg, std::size_t threads) {
  if (!s.kam) throw ConfigError("kam-sweep: the system is not of the form V x W x T^k with H and H1");
  const auto& k = cfg["kam_sweep"];
  const KamSystem& sys = *s.kam;
  Eigen::VectorXd z = detail::to_vector(k["z"], "kam_sweep.z");
  if (static_cast<std::size_t>(z.size()) != sys.nz()) {
    if (z.size() == 0)
      z = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(sys.nz()));
    else
      throw ConfigError("kam-sweep: z needs one value per transverse parameter");
  }
  SweepConfig sc;
  sc.cells = action_grid(s.domain, k["grid"].get<std::vector<std::size_t>>(), z);
  sc.eps = k["eps"].get<std::vector<double>>();
  sc.diophantine = {k["gamma"].get<double>(), k["truncation"].get<std::size_t>()};
  sc.horizon = k["horizon"].get<double>();
  sc.samples = k["samples"].get<std::size_t>();
  sc.substeps = k["substeps"].get<std::size_t>();
  sc.drift_coefficient = k["drift_coefficient"].get<double>();
  sc.residual_threshold = k["residual_threshold"].get<double>();
  sc.threads = threads;
  sc.integrator = integrator(cfg);
  SweepResult res = persistence_sweep(sys, sc);

  const auto& names = s.domain.coordinate_names();
  std::string out = csv_provenance("kam-sweep", cfg);
  out += "cell_index";
  for (std::size_t i = 0; i < s.domain.dim_base(); ++i) out += "," + names[i];
  for (std::size_t i = 0; i < sys.k(); ++i) out += ",omega" + std::to_string(i + 1);
  out += ",diophantine_pass,eps,drift,freq_residual,survived,failed\n";
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  for (const auto& row : res.rows) {
    out += std::to_string(row.cell_index);
    for (Eigen::Index i = 0; i < row.I.size(); ++i) out += "," + num(row.I[i]);
    for (Eigen::Index i = 0; i < row.z.size(); ++i) out += "," + num(row.z[i]);
    for (Eigen::Index i = 0; i < row.omega.size(); ++i) out += "," + num(row.omega[i]);
    out += "," + b(row.diophantine_pass) + "," + num(row.eps) + "," + num(row.drift) + "," + num(row.freq_residual) +
           "," + b(row.survived) + "," + b(row.failed) + "\n";
  }
  out += "# survival_fraction";
  for (double e : res.eps) out += " eps=" + num(e) + ":" + num(res.survival_fraction(e));
  out += "\n";
  return {true, out};
}

inline void write_output(const std::string& text, const std::string& path) {
  if (path.empty() || path == "-") {
    std::cout << text;
    std::cout.flush();
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write output file '" + path + "'");
  f << text;
}

}  // namespace cli

/// Parses argv, runs the chosen subcommand and returns its exit code.
inline int run_cli(int argc, const char* const* argv, std::ostream& err = std::cerr) {
  CLI::App app{"Partially integrable systems: validation, trivialization and torus persistence", "pis"};
  app.require_subcommand(1);
  app.set_version_flag("--version", tool_version);

  std::string config_path, out_path;
  std::optional<std::uint64_t> seed;
  std::optional<double> tol;
  std::size_t threads = 1;

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"validate", "check the algebra, the block form of w and the PIS conditions"},
      {"trivialize", "period lattice, transition matrices and straightened generators"},
      {"recursion", "recursion operator of (w, w') and its Nijenhuis torsion"},
      {"actions", "action integrals and the canonical form under the action-angle map"},
      {"extend", "extension of w to a symplectic form"},
      {"measure", "fraction of Diophantine frequency vectors (CSV)"},
      {"kam-sweep", "torus persistence sweep of the perturbed system (CSV)"},
      {"defaults", "print the default configuration"},
      {"schema", "print the configuration schema"},
  };
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    if (name == "defaults" || name == "schema") continue;
    sub->add_option("--config", config_path, "JSON run configuration")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out_path, "output file (default stdout)");
    sub->add_option("--seed", seed, "override the configured seed");
    sub->add_option("--tol", tol, "override the configured tolerance");
    sub->add_option("--threads", threads, "worker threads for kam-sweep (PIS_THREADS overrides)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    std::ostringstream o, e2;
    int code = app.exit(e, o, e2);
    std::cout << o.str();
    err << e2.str();
    return code == 0 ? 0 : 2;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    if (command == "defaults") {
      cli::write_output(default_config().dump(2) + "\n", "");
      return 0;
    }
    if (command == "schema") {
      cli::write_output(config_schema().dump(2) + "\n", "");
      return 0;
    }
    json user = load_config_file(config_path);
    if (seed) user["seed"] = *seed;
    if (tol) user["tolerance"] = *tol;
    json cfg = effective_config(user);

    cli::Outcome o;
    if (command == "measure") {
      o = cli::measure(cfg);
    } else {
      BuiltSystem s = build_system(cfg["system"]);
      if (command == "validate") o = cli::validate(s, cfg);
      else if (command == "trivialize") o = cli::trivialize(s, cfg);
      else if (command == "recursion") o = cli::recursion(s, cfg);
      else if (command == "actions") o = cli::actions(s, cfg);
      else if (command == "extend") o = cli::extend(s, cfg);
      else o = cli::kam_sweep(s, cfg, threads);
    }
    cli::write_output(o.text, out_path);
    return o.passed ? 0 : 1;
  } catch (const json::exception& e) {
    err << "pis " << command << ": config: " << e.what() << "\n";
  } catch (const std::exception& e) {
    err << "pis " << command << ": " << e.what() << "\n";
  }
  return 2;
}

}  // namespace pis
