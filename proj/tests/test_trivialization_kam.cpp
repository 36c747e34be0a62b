#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

#include "pis/expr.hpp"
#include "pis/frequency.hpp"
#include "pis/kam.hpp"
#include "pis/registry.hpp"
#include "pis/trivialization.hpp"

using namespace pis;

namespace {

CoordinateMap identity_on(const ChartDomain& d) {
  auto f = make_function(d.dim(), d.dim(), [n = d.dim()](const auto& x, auto& out) {
    for (std::size_t i = 0; i < n; ++i) out[i] = x[i];
  });
  return CoordinateMap{f, d, {}};
}

PeriodLattice lattice_of(std::vector<Eigen::VectorXd> v) {
  PeriodLattice l;
  l.vectors = std::move(v);
  l.residuals.assign(l.vectors.size(), 0.0);
  return l;
}

SweepConfig small_sweep(const BuiltSystem& s, std::vector<double> eps) {
  SweepConfig c;
  c.cells = action_grid(s.domain, {3, 3}, Eigen::VectorXd());
  c.eps = std::move(eps);
  c.horizon = 200.0;
  c.samples = 1024;
  return c;
}

}  // namespace

TEST(Flow, GroupLawForCommutingGenerators) {
  auto s = oscillator_chain(2, 2, {1.0, std::sqrt(2.0)});
  FlowMap f{s.domain, s.algebra.generators, {}};
  Point x0(s.domain, s.default_point);
  Eigen::Vector2d a(0.3, -1.1), b(2.2, 0.4);
  Point composed = flow(f, a, flow(f, b, x0));
  EXPECT_LT(distance(composed, flow(f, a + b, x0)), 1e-10);
  EXPECT_LT(distance(flow(f, Eigen::Vector2d::Zero(), x0), x0), 1e-15);
}

TEST(Flow, DomainExitIsReported) {
  // Amplitude p / omega = 19.8 carries q out of [-10, 10].
  auto s = oscillator_chain(1, 1, {0.5});
  FlowMap f{s.domain, s.algebra.generators, {}};
  try {
    flow(f, Eigen::VectorXd::Constant(1, 2.0), Point(s.domain, Eigen::Vector2d(0.0, 9.9)));
    FAIL() << "expected a domain exit";
  } catch (const IntegrationError& e) {
    EXPECT_EQ(e.kind(), IntegrationError::Kind::domain_exit);
  }
}

TEST(Isotropy, OscillatorPeriodFromPerturbedGuess) {
  auto s = oscillator_chain(1, 1, {2.0});
  FlowMap f{s.domain, s.algebra.generators, {}};
  Eigen::VectorXd guess = 1.01 * s.lattice_guesses.front();
  auto lat = find_isotropy_generators(f, Point(s.domain, s.default_point), {guess});
  ASSERT_EQ(lat.m(), 1u);
  EXPECT_NEAR(lat.vectors.front()[0], std::numbers::pi, 1e-9);
  EXPECT_EQ(lat.outcomes.front().status, "converged");
  EXPECT_LT(lat.residual(), 1e-10);
}

TEST(Isotropy, NoncompactDirectionYieldsNoPeriod) {
  auto s = cylinder_system(1.5);
  FlowMap f{s.domain, s.algebra.generators, {}};
  auto lat = find_isotropy_generators(f, Point(s.domain, s.default_point),
                                      {Eigen::Vector2d(0.0, 0.0), Eigen::Vector2d(1.0, 0.0), s.lattice_guesses.back()});
  EXPECT_EQ(lat.outcomes[0].status, "trivial");
  EXPECT_NE(lat.outcomes[1].status, "converged");
  ASSERT_EQ(lat.m(), 1u);
  EXPECT_LT((lat.vectors.front() - Eigen::Vector2d(0.0, two_pi / 1.5)).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Isotropy, TwoFrequencyLatticeIsSortedByNorm) {
  auto s = oscillator_chain(2, 2, {1.0, std::sqrt(2.0)});
  FlowMap f{s.domain, s.algebra.generators, {}};
  auto lat = find_isotropy_generators(f, Point(s.domain, s.default_point), s.lattice_guesses);
  ASSERT_EQ(lat.m(), 2u);
  EXPECT_LE(lat.vectors[0].norm(), lat.vectors[1].norm());
  EXPECT_NEAR(lat.vectors[0][1], two_pi / std::sqrt(2.0), 1e-9);
  EXPECT_NEAR(lat.vectors[1][0], two_pi, 1e-9);
}

TEST(Transition, ShearOfTheCylinderBlock) {
  Eigen::VectorXd v0(2), vr(2);
  v0 << 0.0, two_pi;
  vr << 1.0, two_pi;
  auto t = transition_matrix(lattice_of({v0}), lattice_of({vr}));
  Eigen::Matrix2d expected;
  expected << 1.0, 1.0 / two_pi, 0.0, 1.0;
  EXPECT_LT((t.A - expected).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT(t.frame_residual, 1e-14);
  auto self = transition_matrix(lattice_of({vr}), lattice_of({vr}));
  EXPECT_EQ(self.A, Eigen::Matrix2d::Identity());
}

TEST(Transition, RankChangeRejected) {
  Eigen::VectorXd v(2);
  v << 0.0, two_pi;
  EXPECT_THROW(transition_matrix(lattice_of({v}), lattice_of({})), PreconditionError);
}

TEST(Transition, TwistedContinuationFollowsTheModel) {
  Eigen::Matrix3d T;
  T << 1, 0, 0, 0.5, 1, 0, 0.2, 0.3, 1;
  auto s = twisted({1.0, 1.7}, 0.3, T);
  const auto& sm = *s.straightened;
  FlowMap f{s.domain, s.algebra.generators, {}};
  auto l0 = find_isotropy_generators(f, Point(s.domain, s.default_point), s.lattice_guesses);
  ASSERT_EQ(l0.m(), 2u);
  for (const auto& p : sample(sm.chart, 3, 21)) {
    Eigen::VectorXd r = p.base();
    auto lr = continue_lattice(f, l0, Point(s.domain, sm.embed(r, p.angles())));
    ASSERT_EQ(lr.m(), 2u);
    Eigen::MatrixXd b = sm.B.value(r), c = sm.C.value(r);
    for (Eigen::Index i = 0; i < 2; ++i) {
      Eigen::VectorXd model(3);
      model << b.col(i), c.col(i);
      double best = 1e300;
      for (const auto& v : lr.vectors) best = std::min(best, (v / two_pi - model).cwiseAbs().maxCoeff());
      EXPECT_LT(best, 1e-8);
    }
    auto tm = transition_matrix(l0, lr);
    EXPECT_LT(tm.frame_residual, 1e-8);
  }
}

TEST(Straighten, VanishingCylinderBlock) {
  auto chart = make_domain(1, 2, 1, {{0.5, 2.0}}, {"r", "t", "phi"});
  DynamicalAlgebra a{chart, {VectorField::coordinate(3, 1), VectorField::coordinate(3, 2)}, {}};
  MatrixField B = MatrixField::constant(1, Eigen::MatrixXd::Zero(1, 1));
  MatrixField C = MatrixField::from_callable(1, 1, 1, [](const auto& r, auto& out) { out[0] = 1.0 + r[0] * r[0]; });
  auto fields = straighten_generators(a, chart, B, C);
  for (const auto& p : sample(chart, 5, 22)) {
    Eigen::VectorXd v = fields[1](p);
    EXPECT_NEAR(v[2], 1.0 / (1.0 + p[0] * p[0]), 1e-15);
    EXPECT_EQ(v[1], 0.0);
    EXPECT_LT(straightened_closure_residual(fields, chart, p, B.value(p.base()), C.value(p.base())), 1e-10);
  }
  EXPECT_TRUE(verify_algebra({chart, fields, {}}, sample(chart, 5, 23)).ok());
}

TEST(Straighten, GeneralBlocksCloseAndCommute) {
  auto chart = make_domain(1, 2, 1, {{0.5, 2.0}}, {"r", "t", "phi"});
  DynamicalAlgebra a{chart, {VectorField::coordinate(3, 1), VectorField::coordinate(3, 2)}, {}};
  MatrixField B = MatrixField::from_callable(1, 1, 1, [](const auto& r, auto& out) { out[0] = sin(r[0]); });
  MatrixField C = MatrixField::from_callable(1, 1, 1, [](const auto& r, auto& out) { out[0] = 2.0 + r[0]; });
  auto fields = straighten_generators(a, chart, B, C);
  for (const auto& p : sample(chart, 5, 24)) {
    double b = std::sin(p[0]), c = 2.0 + p[0];
    Eigen::VectorXd v = fields[1](p);
    EXPECT_NEAR(v[1], -b / c, 1e-15);
    EXPECT_NEAR(v[2], 1.0 / c, 1e-15);
    EXPECT_LT(straightened_closure_residual(fields, chart, p, B.value(p.base()), C.value(p.base())), 1e-10);
  }
  EXPECT_TRUE(verify_algebra({chart, fields, {}}, sample(chart, 5, 25)).ok());
}

TEST(Straighten, SingularAngleBlockRejected) {
  auto chart = make_domain(1, 2, 1, {{0.5, 2.0}}, {"r", "t", "phi"});
  DynamicalAlgebra a{chart, {VectorField::coordinate(3, 1), VectorField::coordinate(3, 2)}, {}};
  auto fields = straighten_generators(a, chart, MatrixField::constant(1, Eigen::MatrixXd::Zero(1, 1)),
                                      MatrixField::constant(1, Eigen::MatrixXd::Zero(1, 1)));
  EXPECT_THROW(fields[1](sample(chart, 1, 1).front()), PreconditionError);
}

TEST(Actions, TwoOscillatorsMatchEnergyOverFrequency) {
  const double w2 = std::sqrt(2.0);
  auto s = oscillator_chain(2, 2, {1.0, w2});
  FlowMap f{s.domain, s.algebra.generators, {}};
  Point x0(s.domain, s.default_point);  // unit energy in each oscillator
  auto lat = find_isotropy_generators(f, x0, s.lattice_guesses);
  auto ai = action_integrals(*s.liouville, lat, f, x0);
  ASSERT_EQ(ai.values.size(), 2u);
  std::vector<double> got = ai.values;
  std::sort(got.begin(), got.end());
  EXPECT_NEAR(got[0], 1.0 / w2, 1e-9);
  EXPECT_NEAR(got[1], 1.0, 1e-9);
  EXPECT_LT(ai.quadrature_error, 1e-7);
  Eigen::VectorXd mapped = s.action_angle->map->value(x0.coords()).head(2);
  EXPECT_NEAR(mapped.minCoeff(), got[0], 1e-12);
  EXPECT_NEAR(mapped.maxCoeff(), got[1], 1e-12);
}

TEST(Actions, OscillatorActionAngleMapIsDarboux) {
  auto s = oscillator_chain(2, 2, {1.0, std::sqrt(2.0)});
  std::vector<Point> pts;
  for (const auto& p : sample(s.domain, 40, 26))
    if (p.coords().norm() > 0.5) pts.push_back(p);
  auto rep = verify_canonical_form(*s.omega, *s.action_angle, *s.action_angle_split, CanonicalPattern::darboux, pts);
  EXPECT_TRUE(rep.canonical);
  EXPECT_LT(rep.residual, 1e-8);
}

TEST(Actions, TransverseFiberCouplingIsLocalized) {
  auto s = canonical(1, 4);
  auto w = expr::parse_antisym<BivectorField>({{"I1", "phi1", "1"}, {"z1", "phi1", "0.2"}}, s.domain);
  auto rep = verify_canonical_form(w, identity_on(s.domain), s.split, sample(s.domain, 10, 27));
  EXPECT_FALSE(rep.canonical);
  EXPECT_NEAR(rep.residual, 0.2, 1e-15);
  for (const auto& [name, value] : rep.block_residuals) {
    if (name == "y-z")
      EXPECT_NEAR(value, 0.2, 1e-15);
    else
      EXPECT_EQ(value, 0.0) << name;
  }
  auto clean = verify_canonical_form(s.w, identity_on(s.domain), s.split, sample(s.domain, 10, 27));
  EXPECT_TRUE(clean.canonical);
}

TEST(Kam, UnperturbedFlowIsLinearInTheAngles) {
  auto s = kam_twist(2);
  Eigen::VectorXd x(4);
  x << 1.0, std::sqrt(2.0), 0.0, 0.0;
  Point x0(s.domain, x);
  Point xt = unperturbed_flow(*s.kam, x0, two_pi);
  EXPECT_EQ(xt[0], 1.0);
  EXPECT_EQ(xt[1], std::sqrt(2.0));
  EXPECT_NEAR(angle_difference(xt[2], 0.0), 0.0, 1e-12);
  EXPECT_NEAR(angle_difference(xt[3], two_pi * std::sqrt(2.0)), 0.0, 1e-12);

  KamSystem unperturbed = *s.kam;
  VectorField vf = perturbed_vf(unperturbed);
  Eigen::VectorXd y = integrate([&vf](const Eigen::VectorXd& z) { return vf(z); }, x, two_pi, {});
  EXPECT_LT(distance(Point(s.domain, y), xt), 1e-10);
}

TEST(Kam, ParametersAreFrozenAndEnergyConserved) {
  auto s = kam_twist(2, 1);
  KamSystem sys = *s.kam;
  sys.eps = 0.01;
  VectorField vf = perturbed_vf(sys);
  for (const auto& p : sample(s.domain, 20, 28)) EXPECT_EQ(vf(p)[2], 0.0);
  Eigen::VectorXd x(5);
  x << 1.3, 1.7, 0.05, 0.4, 1.0;
  Eigen::VectorXd y = integrate([&vf](const Eigen::VectorXd& z) { return vf(z); }, x, 100.0, {});
  auto energy = [&](const Eigen::VectorXd& v) { return sys.H(v) + sys.eps * sys.H1(v); };
  EXPECT_LT(std::abs(energy(y) - energy(x)), 1e-9);
  EXPECT_EQ(y[2], 0.05);
}

TEST(Kam, FrequencyMapOfTheTwist) {
  auto s = kam_twist(2, 1);
  Eigen::Vector2d I(1.2, 1.9);
  Eigen::VectorXd z(1);
  z << 0.05;
  auto fm = frequency_map(*s.kam, I, z);
  EXPECT_NEAR(fm.omega[0], 1.2 + 0.05, 1e-14);
  EXPECT_NEAR(fm.omega[1], 1.9, 1e-14);
  EXPECT_EQ(fm.action_rank, 2u);
  EXPECT_TRUE(fm.nondegenerate);
  EXPECT_NEAR(fm.jacobian(0, 2), 1.0, 1e-12);  // d omega_1 / d z
}

TEST(Kam, LinearHamiltonianIsDegenerate) {
  auto d = make_domain(2, 2, 2, {{1, 2}, {1, 2}}, {"I1", "I2", "phi1", "phi2"});
  auto sys = make_kam_system(d, expr::parse_field("I1 + 2 * I2", d), expr::parse_field("cos(phi1)", d), 0.0, true);
  auto fm = frequency_map(sys, Eigen::Vector2d(1.5, 1.5), Eigen::VectorXd());
  EXPECT_EQ(fm.action_rank, 0u);
  EXPECT_FALSE(fm.nondegenerate);
  EXPECT_THROW(make_kam_system(d, expr::parse_field("I1 + sin(phi1)", d), expr::parse_field("0", d), 0.0, true),
               ConstructionError);
}

TEST(Diophantine, ResonantAndGoldenVectors) {
  auto res = diophantine_test(Eigen::Vector2d(1.0, 1.0), {1e-3, 30});
  EXPECT_FALSE(res.passes);
  EXPECT_EQ(res.margin, 0.0);
  ASSERT_EQ(res.worst_a.size(), 2u);
  EXPECT_EQ(res.worst_a[0] + res.worst_a[1], 0);

  const double golden = (1.0 + std::sqrt(5.0)) / 2.0;
  auto g = diophantine_test(Eigen::Vector2d(1.0, golden), {0.01, 50});
  EXPECT_TRUE(g.passes);
  EXPECT_GT(g.margin, 0.01);
  EXPECT_NEAR(g.unscanned_bound, 0.01 * std::pow(51.0, -3.0), 1e-18);
}

TEST(Diophantine, MarginScalesWithOmega) {
  Eigen::Vector2d w(1.0, std::sqrt(3.0));
  auto a = diophantine_test(w, {1e-3, 20});
  auto b = diophantine_test(3.0 * w, {1e-3, 20});
  EXPECT_NEAR(b.margin, 3.0 * a.margin, 1e-12 * b.margin);
  EXPECT_THROW(diophantine_test(w, {0.0, 20}), PreconditionError);
  EXPECT_THROW(diophantine_test(w, {1e-3, 0}), PreconditionError);
}

TEST(Diophantine, MeasureIsMonotoneAndVanishesForLargeGamma) {
  std::vector<Interval> box = {{1.0, 2.0}, {1.0, 2.0}};
  auto f = diophantine_measure(box, {1e-4, 1e-3, 1e-2, 1e-1, 10.0}, 20, 2500, 7);
  for (std::size_t i = 1; i < f.size(); ++i) EXPECT_LE(f[i], f[i - 1]);
  EXPECT_EQ(f.back(), 0.0);
  EXPECT_GT(f.front(), 0.9);
  auto r = diophantine_measure(box, {1e-2}, 20, 2000, 7, MeasureSampling::random);
  EXPECT_EQ(r, diophantine_measure(box, {1e-2}, 20, 2000, 7, MeasureSampling::random));
}

TEST(Frequency, TwoToneSignal) {
  const double dt = 0.1;
  std::vector<std::complex<double>> sig(2048);
  for (std::size_t j = 0; j < sig.size(); ++j) {
    double t = dt * static_cast<double>(j);
    sig[j] = std::polar(1.0, 1.234 * t) + 0.5 * std::polar(1.0, -0.7 * t + 0.3);
  }
  auto c = extract_frequencies(sig, dt, 2);
  ASSERT_EQ(c.size(), 2u);
  std::vector<double> nus = {c[0].frequency, c[1].frequency};
  std::sort(nus.begin(), nus.end());
  EXPECT_NEAR(nus[0], -0.7, 1e-8);
  EXPECT_NEAR(nus[1], 1.234, 1e-8);
}

TEST(Frequency, AngleSeries) {
  std::vector<double> phi(4096);
  for (std::size_t j = 0; j < phi.size(); ++j) phi[j] = wrap_angle(std::sqrt(2.0) * 0.25 * static_cast<double>(j));
  auto c = extract_angle_frequencies(phi, 0.25);
  EXPECT_NEAR(c.front().frequency, std::sqrt(2.0), 1e-9);
}

TEST(Sweep, UnperturbedToriAllSurvive) {
  auto s = kam_twist(2);
  auto res = persistence_sweep(*s.kam, small_sweep(s, {0.0}));
  ASSERT_EQ(res.rows.size(), 9u);
  for (const auto& row : res.rows) {
    EXPECT_TRUE(row.survived) << row.cell_index;
    EXPECT_FALSE(row.failed);
    EXPECT_EQ(row.drift, 0.0);
  }
  EXPECT_EQ(res.survival_fraction(0), 1.0);
}

TEST(Sweep, ThreadCountDoesNotChangeRows) {
  auto s = kam_twist(2);
  auto cfg = small_sweep(s, {1e-3});
  auto one = persistence_sweep(*s.kam, cfg);
  cfg.threads = 3;
  auto three = persistence_sweep(*s.kam, cfg);
  ASSERT_EQ(one.rows.size(), three.rows.size());
  for (std::size_t i = 0; i < one.rows.size(); ++i) {
    EXPECT_EQ(one.rows[i].drift, three.rows[i].drift);
    EXPECT_EQ(one.rows[i].freq_residual, three.rows[i].freq_residual);
    EXPECT_EQ(one.rows[i].survived, three.rows[i].survived);
  }
}

TEST(Sweep, RejectsBadSampling) {
  auto s = kam_twist(2);
  auto cfg = small_sweep(s, {0.0});
  cfg.samples = 1000;
  EXPECT_THROW(persistence_sweep(*s.kam, cfg), PreconditionError);
}
