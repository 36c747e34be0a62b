#include <gtest/gtest.h>

#include <cmath>

#include "pis/calculus.hpp"
#include "pis/expr.hpp"
#include "pis/registry.hpp"
#include "pis/structures.hpp"

using namespace pis;

namespace {

ChartDomain twist_chart() { return make_domain(2, 2, 2, {{0.5, 2}, {0.5, 2}}, {"I1", "I2", "phi1", "phi2"}); }

BivectorField canonical_on(const ChartDomain& d) { return canonical_poisson(d, leading_split(d)); }

double max_abs(const Eigen::MatrixXd& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace

TEST(Algebra, CoordinateFieldsCommute) {
  auto d = twist_chart();
  DynamicalAlgebra a{d, {VectorField::coordinate(4, 2), VectorField::coordinate(4, 3)}, {}};
  auto r = verify_algebra(a, sample(d, 10, 1));
  EXPECT_EQ(r.commutator_residual, 0.0);
  EXPECT_DOUBLE_EQ(r.min_singular_value, 1.0);
  EXPECT_TRUE(r.ok());
}

TEST(Algebra, OscillatorFieldsCommute) {
  auto s = oscillator_chain(3, 3, {1, 2, 3});
  auto r = verify_algebra(s.algebra, sample(s.domain, 50, 2));
  EXPECT_LT(r.commutator_residual, 1e-10);
  EXPECT_TRUE(r.ok());
}

TEST(Algebra, NoncommutingPairFails) {
  auto d = twist_chart();
  // [d1, x1 d1] = d1.
  auto x_d1 = expr::parse_vector_field({"I1", "0", "0", "0"}, d);
  DynamicalAlgebra a{d, {VectorField::coordinate(4, 0), x_d1}, {}};
  auto r = verify_algebra(a, sample(d, 10, 1));
  EXPECT_NEAR(r.commutator_residual, 1.0, 1e-14);
  EXPECT_FALSE(r.commutative);
}

TEST(CanonicalPoisson, PlaneAndRankFour) {
  auto plane = make_domain(1, 1, 1, {{0.5, 2}});
  Eigen::Matrix2d std_plane;
  std_plane << 0, 1, -1, 0;
  EXPECT_EQ(canonical_on(plane).matrix(Eigen::Vector2d(1, 0)), std_plane);

  auto s = canonical(2, 6);
  for (const auto& p : sample(s.domain, 10, 3)) {
    EXPECT_EQ(rank_at(s.w, p, 1e-9), 4u);
    EXPECT_EQ(s.w.matrix(p).row(2).cwiseAbs().sum(), 0.0);  // z-row
    EXPECT_EQ(schouten_self_bracket(s.w, p).max_abs(), 0.0);
  }
  EXPECT_THROW(canonical_poisson(s.domain, make_split(s.domain, {0})), ConstructionError);
}

TEST(BlockForm, CanonicalIsClean) {
  auto s = canonical(2, 6);
  auto r = check_block_form(s.w, s.domain, sample(s.domain, 20, 4));
  EXPECT_TRUE(r.ok());
  EXPECT_EQ(r.base_block, 0.0);
  EXPECT_EQ(r.affine_residual, 0.0);
}

TEST(BlockForm, BaseBlockViolation) {
  auto d = twist_chart();
  auto w = expr::parse_antisym<BivectorField>({{"I1", "phi1", "1"}, {"I2", "phi2", "1"}, {"I1", "I2", "1"}}, d);
  auto r = check_block_form(w, d, sample(d, 20, 4));
  EXPECT_GE(r.base_block, 1.0);
  ASSERT_FALSE(r.ok());
  EXPECT_NE(r.violations.front().find("W^{AB}"), std::string::npos);
}

TEST(BlockForm, NonAffineFiberBlock) {
  auto d = twist_chart();
  auto w = expr::parse_antisym<BivectorField>({{"I1", "phi1", "1"}, {"I2", "phi2", "1"}, {"phi1", "phi2", "sin(phi1)"}}, d);
  auto r = check_block_form(w, d, sample(d, 20, 4));
  EXPECT_GT(r.affine_residual, 0.1);
  EXPECT_FALSE(r.ok());
}

TEST(Pis, CanonicalPasses) {
  auto s = canonical(2, 6);
  auto r = validate_pis(s.w, s.algebra, s.hamiltonians, sample(s.domain, 50, 5));
  EXPECT_TRUE(r.condition_a.ok);
  EXPECT_TRUE(r.condition_b.ok);
  EXPECT_TRUE(r.pis());
}

TEST(Pis, TransverseConjugatePairBreaksConditionB) {
  auto s = oscillator_chain(3, 2, {1, 2, 3});
  auto r = validate_pis(s.w, s.algebra, s.hamiltonians, sample(s.domain, 50, 5));
  EXPECT_TRUE(r.condition_a.ok);
  EXPECT_FALSE(r.condition_b.ok);
  // The offending pair is the third oscillator's q and p, {q3, p3} = 1... scaled
  // by nothing: brackets of coordinates are constants.
  EXPECT_GE(r.condition_b.max_bracket, 1.0);
  EXPECT_FALSE(r.pis());
}

TEST(Pis, RejectsEmptyAlgebra) {
  auto s = canonical(1, 2);
  DynamicalAlgebra empty{s.domain, {}, {}};
  EXPECT_THROW(validate_pis(s.w, empty, {}, sample(s.domain, 5, 1)), PreconditionError);
}

TEST(Characteristic, CanonicalSpanMatchesActionAndFiberDirections) {
  auto s = canonical(2, 6);
  Point p = sample(s.domain, 1, 6).front();
  auto c = characteristic_distribution(s.w, s.domain, p);
  EXPECT_EQ(c.dimension, 4u);
  EXPECT_FALSE(c.degenerate);
  Eigen::MatrixXd expected = Eigen::MatrixXd::Zero(6, 4);
  expected(0, 0) = expected(1, 1) = expected(4, 2) = expected(5, 3) = 1.0;
  EXPECT_LT(detail::subspace_gap(c.basis, expected), 1e-12);
}

TEST(Characteristic, BlockSpanMatchesHandAssemblyAndRank) {
  auto s = block_poisson(1, 1);
  for (const auto& p : sample(s.domain, 20, 7)) {
    auto c = characteristic_distribution(s.w, s.domain, p);
    Eigen::MatrixXd W = s.w.matrix(p);
    Eigen::MatrixXd cols = Eigen::MatrixXd::Zero(4, 4);
    // v^A = W^{A mu} d_mu (fiber rows), v^lambda = W^{A lambda} d_A (base rows).
    cols.block(2, 0, 2, 2) = W.block(0, 2, 2, 2).transpose();
    cols.block(0, 2, 2, 2) = W.block(0, 2, 2, 2);
    EXPECT_LT(detail::subspace_gap(c.basis, detail::orthonormal_range(cols, 1e-9)), 1e-12);
    EXPECT_EQ(c.dimension, rank_at(s.w, p, 1e-9));
  }
}

TEST(Bihamiltonian, FiberBlockChangeIsInvisibleToS) {
  auto s = block_poisson(1, 1);
  auto pts = sample(s.domain, 20, 8);
  auto r = bihamiltonian_check({s.w, drop_fiber_block(s.w, s.domain)}, s.domain, s.algebra.s_generators, pts);
  EXPECT_TRUE(r.passes);
  EXPECT_LT(r.residual, 1e-12);
  auto same = bihamiltonian_check({s.w, s.w}, s.domain, s.algebra.s_generators, pts);
  EXPECT_EQ(same.residual, 0.0);
}

TEST(Bihamiltonian, CrossBlockPerturbationShowsUpLinearly) {
  auto s = block_poisson(1, 1);
  const double delta = 0.01;
  auto wp = expr::parse_antisym<BivectorField>(
      {{"r1", "t", "1"}, {"r1", "phi", "r1"}, {"r2", "phi", "1"}, {"r2", "t", "0.01"}, {"t", "phi", "-(r1 + t)"}}, s.domain);
  auto r = bihamiltonian_check({s.w, wp}, s.domain, s.algebra.s_generators, sample(s.domain, 20, 8));
  EXPECT_FALSE(r.passes);
  EXPECT_NEAR(r.residual, delta, 1e-15);
  EXPECT_NEAR(r.base_fiber_difference, delta, 1e-15);
}

TEST(Recursion, EqualStructuresGiveIdentity) {
  auto s = block_poisson(1, 1);
  Point p = sample(s.domain, 1, 9).front();
  auto r = build_recursion({s.w, s.w}, p);
  EXPECT_LT(max_abs(r.R - Eigen::Matrix4d::Identity()), 1e-12);
}

TEST(Recursion, BlockPairPatternAndEntryIdentity) {
  for (double c : {0.0, 1.0}) {
    auto s = block_poisson(1, c);
    PoissonPair pair{s.w, drop_fiber_block(s.w, s.domain)};
    auto exact = block_recursion_field(s.w, s.domain);
    for (const auto& p : sample(s.domain, 50, 10)) {
      auto r = build_recursion(pair, p);
      EXPECT_LT(r.p0_residual, 1e-9);
      // R^A_B = delta, R^mu_nu = delta, R^A_lambda = 0.
      EXPECT_LT(max_abs(r.R.topLeftCorner(2, 2) - Eigen::Matrix2d::Identity()), 1e-9);
      EXPECT_LT(max_abs(r.R.bottomRightCorner(2, 2) - Eigen::Matrix2d::Identity()), 1e-9);
      EXPECT_LT(max_abs(r.R.topRightCorner(2, 2)), 1e-9);
      // W^{mu lambda} = R^lambda_B W^{B mu}.
      Eigen::MatrixXd W = s.w.matrix(p);
      Eigen::MatrixXd lhs = W.bottomRightCorner(2, 2);
      Eigen::MatrixXd rhs = (r.R.bottomLeftCorner(2, 2) * W.topRightCorner(2, 2)).transpose();
      EXPECT_LT(max_abs(lhs - rhs), 1e-9);
      EXPECT_LT(max_abs(r.R - exact.matrix(p)), 1e-9);
    }
  }
}

TEST(Recursion, RandomFiberBlockShareDistribution) {
  auto s = block_poisson(0.7, 0.0);
  auto wp = expr::parse_antisym<BivectorField>(
      {{"r1", "t", "1"}, {"r2", "phi", "1"}, {"t", "phi", "2 + sin(3 * r1) * r2 + t^2"}}, s.domain);
  for (const auto& p : sample(s.domain, 30, 11)) {
    auto r = build_recursion({s.w, wp}, p);
    EXPECT_LT(r.p0_residual, 1e-9);
    EXPECT_LT(r.subspace_gap, 1e-9);
  }
}

TEST(Recursion, RankMismatchIsRejected) {
  auto s = block_poisson(1, 1);
  auto half = expr::parse_antisym<BivectorField>({{"r1", "t", "1"}}, s.domain);
  EXPECT_THROW(build_recursion({s.w, half}, sample(s.domain, 1, 1).front()), PreconditionError);
}

TEST(Recursion, ExactDerivativesMatchFiniteDifferences) {
  auto s = block_poisson(1, 1);
  auto R = block_recursion_field(s.w, s.domain);
  for (const auto& p : sample(s.domain, 10, 12)) {
    auto d = R.derivatives(p.coords());
    for (int c = 0; c < 4; ++c) {
      Eigen::VectorXd xp = p.coords(), xm = p.coords();
      xp[c] += 1e-6;
      xm[c] -= 1e-6;
      EXPECT_LT(max_abs(d[static_cast<std::size_t>(c)] - (R.matrix(xp) - R.matrix(xm)) / 2e-6), 1e-7);
    }
  }
}

TEST(Recursion, TorsionDependsOnFiberDependenceOfFiberBlock) {
  auto scan = [](double c) {
    auto s = block_poisson(1, c);
    auto R = block_recursion_field(s.w, s.domain);
    double worst = 0.0;
    for (const auto& p : sample(s.domain, 30, 13))
      for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = i + 1; j < 4; ++j)
          worst = std::max(worst, nijenhuis_torsion(R, VectorField::coordinate(4, i), VectorField::coordinate(4, j), p)
                                      .cwiseAbs()
                                      .maxCoeff());
    return worst;
  };
  EXPECT_GT(scan(1.0), 1e-3);
  EXPECT_LT(scan(0.0), 1e-9);
}

TEST(Extension, NoTransverseBlockGivesPointwiseInverse) {
  auto s = block_poisson(1, 1);
  auto pts = sample(s.domain, 10, 14);
  TwoForm omega = extend_to_symplectic(s.w, s.domain, s.split, pts);
  for (const auto& p : pts) EXPECT_LT(max_abs(bivector_from_twoform(omega).matrix(p) - s.w.matrix(p)), 1e-12);
}

TEST(Extension, CanonicalOneFourIsDarbouxAndClosed) {
  auto s = canonical(1, 4);
  auto pts = sample(s.domain, 100, 15);
  TwoForm omega = extend_to_symplectic(s.w, s.domain, s.split, pts);
  Eigen::Matrix4d expected = Eigen::Matrix4d::Zero();
  expected(0, 3) = 1;  // dI ^ dy
  expected(3, 0) = -1;
  expected(1, 2) = 1;  // dz1 ^ dz2
  expected(2, 1) = -1;
  for (const auto& p : pts) {
    EXPECT_LT(max_abs(omega.matrix(p) - expected), 1e-14);
    EXPECT_LT(exterior_derivative_3form_components(omega, p).max_abs(), 1e-9);
    EXPECT_EQ(rank_at(omega, p, 1e-9), 4u);
    auto wo = bivector_from_twoform(omega);
    for (const auto& h : s.hamiltonians)
      EXPECT_LT((hamiltonian_vf(s.w, h)(p) - hamiltonian_vf(wo, h)(p)).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Extension, OddDimensionRejected) {
  auto s = canonical(1, 3);
  EXPECT_THROW(extend_to_symplectic(s.w, s.domain, s.split, sample(s.domain, 2, 1)), PreconditionError);
}

TEST(Registry, EveryBivectorIsPoisson) {
  for (const auto& name : registry_names()) {
    auto s = registry(name, {});
    double worst = 0.0;
    for (const auto& p : sample(s.domain, 100, 16)) worst = std::max(worst, schouten_self_bracket(s.w, p).max_abs());
    EXPECT_LT(worst, 1e-9) << name;
  }
  auto bp = block_poisson(0.3, 2.0);
  for (const auto& p : sample(bp.domain, 100, 17)) {
    EXPECT_LT(schouten_self_bracket(bp.w, p).max_abs(), 1e-9);
    EXPECT_EQ(rank_at(bp.w, p, 1e-9), 4u);
  }
}
