#include "carnot/cones.hpp"
#include "carnot/errors.hpp"
#include "fixtures.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace carnot;
using namespace carnot::testing;

namespace {

// phi(a) = c a_3 X_1 over the vertical plane of H^1: linear in coordinates,
// but of order ||a||^2, so its blow-ups at 0 flatten onto the plane.
std::vector<GroupPoint> quadratic_graph(const Heis& h, double c, const std::vector<GroupPoint>& base) {
  std::vector<GroupPoint> out;
  for (const auto& a : base) out.push_back(h.g->product(a, pt({c * a[2], 0, 0})));
  return out;
}

std::vector<double> halving(double r0, int n) {
  std::vector<double> r;
  for (int i = 0; i < n; ++i) r.push_back(r0 * std::pow(0.5, i));
  return r;
}

std::size_t index_of(const IntrinsicGraph& g, const GroupPoint& p) {
  std::size_t i = 0;
  while (i < g.size() && (g.point(i) - p).norm() > 1e-9) ++i;
  EXPECT_LT(i, g.size());
  return i;
}

}  // namespace

TEST(InCone, Examples) {
  Heis h;
  auto sp = h.split();
  ConeSpec cone(h.vertical, 0.1, sp);
  EXPECT_EQ(in_cone(pt({0, 2, -3}), cone, h.nrm), ConeMembership::In);
  EXPECT_EQ(in_cone(pt({0, 2, -3}), ConeSpec(h.vertical, 0.0), h.nrm), ConeMembership::In);
  EXPECT_EQ(in_cone(pt({0, 0, 0}), cone, h.nrm), ConeMembership::In);
  EXPECT_EQ(in_cone(pt({1, 0, 0}), cone, h.nrm), ConeMembership::Out);
  EXPECT_THROW(ConeSpec(h.vertical, -0.1), DomainError);
}

TEST(InCone, UnknownWithoutSplitting) {
  // Without a complement there is no lower bound, so "out" is never certified.
  Heis h;
  EXPECT_EQ(in_cone(pt({1, 0, 0}), ConeSpec(h.vertical, 0.1), h.nrm), ConeMembership::Unknown);
}

TEST(InCone, DilationInvariant) {
  Heis h;
  Engel e;
  auto hs = h.split();
  auto es = std::make_shared<SplittingPair>(e.N(0, 1), e.M(1, 0));
  estimate_c_split(*es, e.nrm, 300, 2);
  std::mt19937_64 rng(31);
  for (double alpha : {0.05, 0.3, 0.7}) {
    ConeSpec hc(h.vertical, alpha, hs), ec(e.N(0, 1), alpha, es);
    for (int s = 0; s < 60; ++s) {
      GroupPoint w = sample_in_ball(h.nrm, 2.0, rng);
      GroupPoint x = sample_in_ball(e.nrm, 2.0, rng);
      auto mw = in_cone(w, hc, h.nrm);
      auto mx = in_cone(x, ec, e.nrm);
      for (double lam : {0.1, 3.0, 17.0}) {
        EXPECT_EQ(in_cone(h.g->dilate(lam, w), hc, h.nrm), mw);
        EXPECT_EQ(in_cone(e.g->dilate(lam, x), ec, e.nrm), mx);
      }
    }
  }
}

TEST(ConeSet, Examples) {
  Heis h;
  auto sp = h.split();
  ConeSpec cone(h.vertical, 1e-3, sp);

  GroupPoint x = pt({0.7, -0.2, 1.5});
  std::vector<GroupPoint> coset;
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-2, 2);
  for (int i = 0; i < 30; ++i) coset.push_back(h.g->product(x, pt({0, u(rng), u(rng)})));
  for (double alpha : {0.0, 1e-3, 0.4}) EXPECT_TRUE(is_cone_set(coset, ConeSpec(h.vertical, alpha, sp), h.nrm).pass);

  std::vector<GroupPoint> single{x};
  auto one = is_cone_set(single, cone, h.nrm);
  EXPECT_TRUE(one.pass);
  EXPECT_EQ(one.pairs, 0u);

  std::vector<GroupPoint> two{x, h.g->product(x, pt({1, 0, 0}))};
  auto rep = is_cone_set(two, cone, h.nrm);
  EXPECT_FALSE(rep.pass);
  EXPECT_EQ(rep.out, 2u);
  ASSERT_TRUE(rep.worst_pair.has_value());
  EXPECT_NEAR(rep.worst_ratio, 1.0, 1e-9);
}

TEST(ConeSet, ModeDecidesUnknown) {
  // No splitting: the pair is only ever "unknown".
  Engel e;
  std::vector<GroupPoint> two{pt({0, 0, 0, 0}), pt({1, 0, 0, 0})};
  ConeSpec cone(e.K(), 0.5);
  auto cert = is_cone_set(two, cone, e.nrm, ConeCheckMode::Certify);
  auto expl = is_cone_set(two, cone, e.nrm, ConeCheckMode::Exploratory);
  EXPECT_EQ(cert.unknown, 2u);
  EXPECT_FALSE(cert.pass);
  EXPECT_TRUE(expl.pass);
}

TEST(ConeInclusion, Examples) {
  Heis h;
  auto same = cone_inclusion_check(h.line(0.3), h.line(0.3), 0.2, 0.4, 32, h.nrm, 40);
  EXPECT_TRUE(same.pass);
  EXPECT_EQ(same.violations, 0u);

  // Horizontal lines at angle t are about sqrt(t/2) apart, so "nearby" is t = 1e-4.
  auto near = cone_inclusion_check(h.line(0.0), h.line(1e-4), 0.1, 0.2, 64, h.nrm, 60);
  EXPECT_LT(near.grassmannian.hi, 0.05);
  EXPECT_TRUE(near.pass);
  EXPECT_EQ(near.tested, 180u);

  auto flat = cone_inclusion_check(h.line(0.0), h.line(1e-4), 0.0, 0.2, 64, h.nrm, 40);
  EXPECT_TRUE(flat.pass);

  EXPECT_THROW(cone_inclusion_check(h.line(0.0), h.line(std::numbers::pi / 2), 0.1, 0.1, 16, h.nrm),
               PreconditionError);
}

TEST(Frak, Formulas) {
  EXPECT_DOUBLE_EQ(frak_c(0.25, 1.0), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(frak_D(0.25, 1.0), 0.5);
  EXPECT_DOUBLE_EQ(frak_c(0.0, 0.8), 0.0);
  EXPECT_THROW(frak_c(0.8, 0.8), DomainError);
  EXPECT_THROW(frak_c(-0.1, 0.8), DomainError);
}

TEST(ProjectionInclusion, HeisenbergAndEngel) {
  Heis h;
  auto hs = h.split();
  for (double alpha : {0.1, 0.45}) {
    auto rep = projection_inclusion_check(*hs, alpha, h.nrm, 400, 9);
    EXPECT_TRUE(rep.pass()) << alpha;
    EXPECT_EQ(rep.tested_inner + rep.tested_outer, 400u);
  }
  Engel e;
  SplittingPair es(e.K(), e.H(1, 0.5));
  estimate_c_split(es, e.nrm, 500, 4);
  for (double alpha : {0.1, 0.4 * *es.c_split}) {
    auto rep = projection_inclusion_check(es, alpha, e.nrm, 200, 10);
    EXPECT_TRUE(rep.pass()) << alpha;
  }
}

TEST(ProjectionInclusion, NeedsCSplit) {
  Heis h;
  SplittingPair sp(h.vertical, h.horizontal);
  EXPECT_THROW(projection_inclusion_check(sp, 0.1, h.nrm, 10, 1), PreconditionError);
}

TEST(Separation, ComplementMissesCone) {
  Heis h;
  Engel e;
  SplittingPair es(e.K(), e.H(1, 0.5));
  estimate_c_split(es, e.nrm, 500, 4);
  auto hs = h.split();
  std::mt19937_64 rng(77);
  std::normal_distribution<double> n(0, 1);
  for (const SplittingPair* sp : std::vector<const SplittingPair*>{hs.get(), &es}) {
    const BoxNorm& nrm = sp == &es ? e.nrm : h.nrm;
    DistOptions opt;
    opt.complement = sp;
    for (int s = 0; s < 40; ++s) {
      Eigen::VectorXd c(sp->L().top_dim());
      for (auto& x : c) x = n(rng);
      GroupPoint l = sp->L().embed(c);
      auto d = dist_to_subgroup(l, sp->V(), nrm, opt);
      EXPECT_GT(d.lo, *sp->eps1 * nrm.norm(l) - 1e-12);
      EXPECT_GT(d.hi, *sp->eps1 * nrm.norm(l));
    }
  }
}

TEST(ExtractGraph, VerticalCosetIsConstant) {
  Heis h;
  auto sp = h.split();
  GroupPoint x = pt({0.8, 0.3, -1.1});
  std::vector<GroupPoint> gamma;
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(-3, 3);
  for (int i = 0; i < 100; ++i) gamma.push_back(h.g->product(x, pt({0, u(rng), u(rng)})));
  auto graph = extract_graph(gamma, sp, 0.1, h.nrm);
  ASSERT_EQ(graph.size(), 100u);
  // x v = (x1, x2 + v2, ...) splits as (0, *, *) . (x1, 0, 0).
  for (std::size_t i = 0; i < graph.size(); ++i) {
    EXPECT_LT((graph.values[i] - pt({0.8, 0, 0})).norm(), 1e-9);
    EXPECT_LT((graph.point(i) - gamma[i]).norm(), 1e-9);
    EXPECT_TRUE(h.vertical.contains(graph.base[i]));
  }
}

TEST(ExtractGraph, EngelCosetIsConstant) {
  // V = span{X2, X3, X4} is normal, so x v = P_V(x) (x_L v x_L^{-1}) x_L has L-part x_L.
  Engel e;
  auto sp = std::make_shared<SplittingPair>(e.N(0, 1), e.M(1, 0));
  estimate_c_split(*sp, e.nrm, 500, 4);
  GroupPoint x = pt({0.4, -0.3, 0.2, 0.9});
  auto [xv, xl] = sp->project(x);
  std::vector<GroupPoint> gamma;
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int i = 0; i < 40; ++i) gamma.push_back(e.g->product(x, pt({0, u(rng), u(rng), u(rng)})));
  auto graph = extract_graph(gamma, sp, 0.05, e.nrm);
  for (std::size_t i = 0; i < graph.size(); ++i) EXPECT_LT((graph.values[i] - xl).norm(), 1e-9);
}

TEST(ExtractGraph, SingletonAndErrors) {
  Heis h;
  auto sp = h.split();
  std::vector<GroupPoint> one{pt({1, 2, 3})};
  auto g = extract_graph(one, sp, 0.2, h.nrm);
  ASSERT_EQ(g.size(), 1u);
  EXPECT_LT((g.point(0) - one[0]).norm(), 1e-12);

  EXPECT_THROW(extract_graph(one, sp, 0.6, h.nrm), PreconditionError);
  auto raw = std::make_shared<SplittingPair>(h.vertical, h.horizontal);
  EXPECT_THROW(extract_graph(one, raw, 0.1, h.nrm), PreconditionError);
  std::vector<GroupPoint> two{pt({0, 0, 0}), pt({1, 0, 0})};
  EXPECT_THROW(extract_graph(two, sp, 0.2, h.nrm), PreconditionError);
}

TEST(ExtractGraph, RoundTripOnCurvedGraph) {
  Heis h;
  auto sp = h.split();
  auto base = multiscale_base_points(h.vertical, h.nrm, {1.0, 0.5}, 1.0, 6);
  auto gamma = quadratic_graph(h, 0.1, base);
  auto graph = extract_graph(gamma, sp, 0.3, h.nrm);
  ASSERT_EQ(graph.size(), gamma.size());
  for (std::size_t i = 0; i < gamma.size(); ++i) {
    EXPECT_LT((graph.point(i) - gamma[i]).norm(), 1e-9);
    EXPECT_LT((graph.base[i] - base[i]).norm(), 1e-9);
  }
}

TEST(Translate, IdentityAndOrigin) {
  Heis h;
  auto sp = h.split();
  auto base = multiscale_base_points(h.vertical, h.nrm, {1.0, 0.5}, 1.0, 6);
  auto graph = extract_graph(quadratic_graph(h, 0.2, base), sp, 0.4, h.nrm);

  auto same = translate_function(graph, pt({0, 0, 0}));
  EXPECT_EQ(same.dropped, 0u);
  ASSERT_EQ(same.graph.size(), graph.size());
  for (std::size_t i = 0; i < graph.size(); ++i) {
    EXPECT_LT((same.graph.base[i] - graph.base[i]).norm(), 1e-12);
    EXPECT_LT((same.graph.values[i] - graph.values[i]).norm(), 1e-12);
  }

  // Pick a base point off the origin with phi != 0.
  std::size_t k = 0;
  while (graph.values[k].norm() < 1e-3) ++k;
  GroupPoint q = h.g->inverse(graph.point(k));
  auto moved = translate_function(graph, q);
  auto o = moved.graph.find_base(pt({0, 0, 0}));
  ASSERT_TRUE(o.has_value());
  EXPECT_LT(moved.graph.values[*o].norm(), 1e-9);
}

TEST(Translate, GraphIsLeftTranslate) {
  Heis h;
  auto sp = h.split();
  auto base = multiscale_base_points(h.vertical, h.nrm, {1.0, 0.5}, 1.0, 6);
  auto graph = extract_graph(quadratic_graph(h, 0.2, base), sp, 0.4, h.nrm);
  for (auto q : {pt({0.3, -0.2, 0.5}), pt({-1, 0.4, 0}), pt({0, 0, 2})}) {
    auto t = translate_function(graph, q);
    EXPECT_EQ(t.dropped, 0u);
    ASSERT_EQ(t.graph.size(), graph.size());
    // Targets are listed in the order of the source points.
    for (std::size_t i = 0; i < graph.size(); ++i)
      EXPECT_LT((t.graph.point(i) - h.g->product(q, graph.point(i))).norm(), 1e-9);
  }
}

TEST(Translate, DroppedAndEmpty) {
  Heis h;
  auto sp = h.split();
  std::vector<GroupPoint> gamma{pt({0, 0, 0}), pt({0.1, 1, 0}), pt({0, 0, 1})};
  auto graph = extract_graph(gamma, sp, 0.2, h.nrm);
  std::vector<GroupPoint> targets{pt({0, 0, 0}), pt({0, 5, 5})};
  auto t = translate_function(graph, pt({0, 0, 0}), targets);
  EXPECT_EQ(t.dropped, 1u);
  EXPECT_EQ(t.graph.size(), 1u);
  std::vector<GroupPoint> miss{pt({0, 5, 5})};
  EXPECT_THROW(translate_function(graph, pt({0, 0, 0}), miss), EmptyTranslationError);
  std::vector<GroupPoint> off{pt({1, 0, 0})};
  EXPECT_THROW(translate_function(graph, pt({0, 0, 0}), off), DomainError);
}

TEST(Flatness, FlatCosetSitsAtFloor) {
  Heis h;
  auto sp = h.split();
  auto radii = halving(1.0, 4);
  auto base = multiscale_base_points(h.vertical, h.nrm, radii, 1.0, 9);
  GroupPoint x = pt({0.5, -0.4, 0.3});
  std::vector<GroupPoint> gamma;
  for (const auto& b : base) gamma.push_back(h.g->product(x, b));
  auto graph = extract_graph(gamma, sp, 0.1, h.nrm);
  FlatnessOptions opt;
  opt.resolution = 9;
  auto prof = flatness_profile(graph, graph.base[index_of(graph, x)], h.vertical, radii, 1.0, h.nrm, opt);
  EXPECT_GT(prof.floor, 0.0);
  for (std::size_t i = 0; i < radii.size(); ++i) {
    EXPECT_FALSE(prof.insufficient[i]);
    EXPECT_LE(prof.values[i], prof.floor + 1e-9) << i;
  }
}

TEST(Flatness, WrongCandidateStaysAway) {
  Heis h;
  auto sp = h.split();
  // W = span{(sin t, cos t), X3}: its unit horizontal vector sits at distance
  // >= c_split tan(t) = tan(t) from the vertical plane, at every scale.
  const double t = 0.25;
  auto w = h.plane(std::numbers::pi / 2 - t);
  auto radii = halving(1.0, 4);
  auto base = multiscale_base_points(w, h.nrm, radii, 1.0, 9);
  GroupPoint x = pt({0.2, 0.1, -0.3});
  std::vector<GroupPoint> gamma;
  for (const auto& b : base) gamma.push_back(h.g->product(x, b));
  auto graph = extract_graph(gamma, sp, 0.4, h.nrm);
  FlatnessOptions opt;
  opt.resolution = 9;
  auto prof = flatness_profile(graph, graph.base[index_of(graph, x)], h.vertical, radii, 1.0, h.nrm, opt);
  for (double v : prof.values) EXPECT_GT(v, std::tan(t) - 1e-6);
}

TEST(Flatness, QuadraticGraphFlattens) {
  Heis h;
  auto sp = h.split();
  auto radii = halving(1.0, 6);
  auto base = multiscale_base_points(h.vertical, h.nrm, radii, 1.0, 9);
  auto graph = extract_graph(quadratic_graph(h, 0.2, base), sp, 0.45, h.nrm);
  FlatnessOptions opt;
  opt.resolution = 9;
  auto prof = flatness_profile(graph, pt({0, 0, 0}), h.vertical, radii, 1.0, h.nrm, opt);
  EXPECT_LT(prof.spearman, -0.9);
  // The graph side is sup ||P_L a|| = 0.2 r |b3| over the window, attained at
  // |b3| = 1; the plane side stays below it.
  for (std::size_t i = 0; i < radii.size(); ++i) EXPECT_NEAR(prof.values[i], 0.2 * radii[i], 1e-6) << i;
  EXPECT_LT(prof.values.back(), prof.values.front());
}

TEST(Flatness, ErrorsAndInsufficientWindows) {
  Heis h;
  auto sp = h.split();
  std::vector<GroupPoint> gamma{pt({0, 0, 0}), pt({0, 1, 0}), pt({0, 0, 1})};
  auto graph = extract_graph(gamma, sp, 0.1, h.nrm);
  auto prof = flatness_profile(graph, pt({0, 0, 0}), h.vertical, {1.0, 0.5}, 1.0, h.nrm);
  EXPECT_TRUE(prof.insufficient[0]);
  EXPECT_TRUE(std::isnan(prof.values[1]));
  EXPECT_THROW(flatness_profile(graph, pt({0, 3, 0}), h.vertical, {1.0}, 1.0, h.nrm), PreconditionError);
  EXPECT_THROW(flatness_profile(graph, pt({0, 0, 0}), h.vertical, {0.5, 1.0}, 1.0, h.nrm), DomainError);
  EXPECT_THROW(flatness_profile(graph, pt({0, 0, 0}), h.vertical, {1.0}, 0.0, h.nrm), DomainError);
}

TEST(Spearman, Basics) {
  EXPECT_DOUBLE_EQ(spearman_rho({0, 1, 2, 3}, {1, 4, 9, 16}), 1.0);
  EXPECT_DOUBLE_EQ(spearman_rho({0, 1, 2, 3}, {5, 3, 2, -1}), -1.0);
  EXPECT_NEAR(spearman_rho({0, 1, 2}, {1, 1, 2}), std::sqrt(3.0) / 2.0, 1e-12);
  EXPECT_THROW(spearman_rho({0, 1}, {1}), StructuralError);
}
