#include "carnot/covering.hpp"
#include "carnot/errors.hpp"
#include "fixtures.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace carnot;
using namespace carnot::testing;

namespace {

BallFamily random_family(const BoxNorm& nrm, std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> rad(0.05, 1.0);
  BallFamily fam;
  for (std::size_t i = 0; i < n; ++i) fam.add(sample_in_ball(nrm, 5.0, rng), rad(rng));
  return fam;
}

// q . embed(c) over the 5^d grid c_i in {-1/2, -1/4, 0, 1/4, 1/2}.
std::vector<GroupPoint> coset_patch(const HomogeneousSubgroup& v, const GroupPoint& q) {
  const int d = v.top_dim();
  std::vector<GroupPoint> out;
  std::vector<int> idx(d, -2);
  for (;;) {
    Eigen::VectorXd c(d);
    for (int i = 0; i < d; ++i) c[i] = idx[i] / 4.0;
    out.push_back(v.group().product(q, v.embed(c)));
    int i = 0;
    while (i < d && ++idx[i] > 2) idx[i++] = -2;
    if (i == d) break;
  }
  return out;
}

}  // namespace

TEST(Vitali, SingleAndNested) {
  Heis h;
  BallFamily one;
  one.add(pt({1, 2, 3}), 0.5);
  auto r = vitali_select(one, 0, h.nrm);
  EXPECT_EQ(r.selected, std::vector<std::size_t>{0});
  EXPECT_EQ(r.coverage_violations, 0u);

  BallFamily nested;
  nested.add(pt({0, 0, 0}), 1.0);
  nested.add(pt({0, 0, 0}), 2.0);
  r = vitali_select(nested, 0, h.nrm);
  EXPECT_EQ(r.selected, std::vector<std::size_t>{1});
  EXPECT_EQ(r.coverage_violations, 0u);
  EXPECT_GT(r.points_checked, 2u);

  EXPECT_THROW(nested.add(pt({0, 0, 0}), 0.0), DomainError);
  EXPECT_THROW(vitali_select(nested, -1, h.nrm), DomainError);
}

TEST(Vitali, RandomFamiliesSatisfyBothProperties) {
  Heis h;
  std::mt19937_64 rng(61);
  for (int rep = 0; rep < 3; ++rep) {
    auto fam = random_family(h.nrm, 200, rng);
    for (int N = 0; N <= 2; ++N) {
      auto r = vitali_select(fam, N, h.nrm);
      const double s = std::pow(5.0, N);
      const auto& b = fam.balls;
      // (i) recomputed pairwise.
      for (std::size_t a = 0; a < r.selected.size(); ++a)
        for (std::size_t c = a + 1; c < r.selected.size(); ++c) {
          const auto& p = b[r.selected[a]];
          const auto& q = b[r.selected[c]];
          EXPECT_GT(h.nrm.distance(p.center, q.center), s * (p.radius + q.radius));
        }
      // (ii) on fresh interior and boundary samples.
      std::mt19937_64 probe(1000 + N);
      std::size_t uncovered = 0;
      for (const auto& ball : b) {
        for (int t = 0; t < 10; ++t) {
          GroupPoint p = h.g->product(ball.center, t % 2 ? sample_in_ball(h.nrm, ball.radius, probe)
                                                         : sample_on_sphere(h.nrm, ball.radius, probe));
          bool in = false;
          for (std::size_t j : r.selected)
            in = in || h.nrm.distance(p, b[j].center) <= 5.0 * s * b[j].radius;
          uncovered += !in;
        }
      }
      EXPECT_EQ(uncovered, 0u) << "N=" << N;
      // Greedy maximality: every rejected ball meets a selected ball at least as large.
      for (std::size_t i = 0; i < b.size(); ++i) {
        if (std::find(r.selected.begin(), r.selected.end(), i) != r.selected.end()) continue;
        bool blocked = false;
        for (std::size_t j : r.selected)
          blocked = blocked || (b[j].radius >= b[i].radius &&
                                h.nrm.distance(b[i].center, b[j].center) <= s * (b[i].radius + b[j].radius));
        EXPECT_TRUE(blocked) << i;
      }
    }
  }
}

TEST(Vitali, Deterministic) {
  Engel e;
  std::mt19937_64 rng(5);
  auto fam = random_family(e.nrm, 60, rng);
  auto a = vitali_select(fam, 1, e.nrm);
  auto b = vitali_select(fam, 1, e.nrm);
  EXPECT_EQ(a.selected, b.selected);
  EXPECT_EQ(a.points_checked, b.points_checked);
}

TEST(Tube, RadiusFormula) {
  EXPECT_DOUBLE_EQ(tube_radius(2, 1, 1, 0.5, 2.0), 1.0 / 64.0);
  EXPECT_DOUBLE_EQ(tube_radius(2, 1, 1, 0.25, 2.0), 1.0 / 256.0);
  EXPECT_DOUBLE_EQ(tube_radius(3, 2, 1, 0.5, 1.0), 1.0 / 512.0);
  EXPECT_THROW(tube_radius(2, 1, 1, 1.0, 2.0), DomainError);
  EXPECT_THROW(tube_radius(2, 0, 1, 0.5, 2.0), DomainError);
}

TEST(Tube, ConjugateEstimateBoundsFreshSamples) {
  Heis h;
  auto est = estimate_conjugate_constant(h.nrm, 1, 5000, 3);
  EXPECT_DOUBLE_EQ(est.radius, 14.0);
  EXPECT_DOUBLE_EQ(est.value, 1.5 * est.raw);
  EXPECT_GE(est.raw, 1.0);  // y = 0 already gives ||x||^{1 - 1/2}, up to 14^{1/2}
  std::mt19937_64 rng(99);
  for (int i = 0; i < 2000; ++i) {
    GroupPoint x = sample_in_ball(h.nrm, 14.0, rng);
    GroupPoint y = sample_in_ball(h.nrm, 14.0, rng);
    double v = h.nrm.norm(h.g->product(h.g->inverse(y), h.g->product(x, y)));
    EXPECT_LE(v, est.value * std::sqrt(h.nrm.norm(x)));
  }
}

TEST(Tube, SingleCosetIsOnePiece) {
  Heis h;
  auto e = coset_patch(h.vertical, pt({0.5, 0, 0}));
  auto tc = tubular_cover(e, h.vertical, 1, 2, 0.5, 2.0, h.nrm);
  ASSERT_EQ(tc.pieces.size(), 1u);
  EXPECT_EQ(tc.pieces[0].members.size(), e.size());
  EXPECT_TRUE(tc.pieces[0].cone_ok);
  EXPECT_DOUBLE_EQ(tc.radius, 1.0 / 64.0);
}

TEST(Tube, TwoPatchesTwoPieces) {
  Heis h;
  auto a = coset_patch(h.vertical, pt({0, 0, 0}));
  auto b = coset_patch(h.vertical, pt({2, 0, 0}));
  std::vector<GroupPoint> e = a;
  e.insert(e.end(), b.begin(), b.end());
  auto tc = tubular_cover(e, h.vertical, 1, 3, 0.25, 2.0, h.nrm, {h.split()});
  ASSERT_EQ(tc.pieces.size(), 2u);
  for (const auto& p : tc.pieces) {
    EXPECT_EQ(p.members.size(), a.size());
    EXPECT_TRUE(p.cone_ok);
  }
  // Partition, and the labels follow the patches.
  for (std::size_t i = 0; i < e.size(); ++i) EXPECT_EQ(tc.piece_of[i], i < a.size() ? 0u : 1u);

  TubularOptions tight;
  tight.max_net = 1;
  EXPECT_THROW(tubular_cover(e, h.vertical, 1, 3, 0.25, 2.0, h.nrm, tight), NetDensityError);
  EXPECT_THROW(tubular_cover(e, h.vertical, 1, 1, 0.25, 2.0, h.nrm), DomainError);
}

TEST(Tube, CurvedSetSplitsIntoConePieces) {
  Heis h;
  // A horizontal parabola family crosses many tubes; every piece must still
  // be a C_V(3 beta)-set.
  std::vector<GroupPoint> e;
  for (int i = -6; i <= 6; ++i)
    for (int j = -3; j <= 3; ++j) e.push_back(h.g->product(pt({0.3 * (i / 6.0) * (i / 6.0), 0, 0}),
                                                           pt({0, i / 6.0, j / 6.0})));
  auto tc = tubular_cover(e, h.vertical, 1, 2, 0.3, 1.0, h.nrm, {h.split()});
  EXPECT_GT(tc.pieces.size(), 1u);
  std::size_t total = 0;
  for (const auto& p : tc.pieces) {
    total += p.members.size();
    EXPECT_TRUE(p.cone_ok);
  }
  EXPECT_EQ(total, e.size());
}

TEST(ConeDecompose, Examples) {
  Heis h;
  auto v2 = h.plane(0.0);  // span{X1, X3}
  auto a = coset_patch(h.vertical, pt({0, 0, 0}));
  auto b = coset_patch(v2, pt({0, 4, 0}));
  std::vector<GroupPoint> e = a;
  e.insert(e.end(), b.begin(), b.end());

  std::vector<ConeSpec> family{ConeSpec(h.vertical, 0.1), ConeSpec(v2, 0.1)};
  auto asg = cone_decompose(e, family, 0.8, h.nrm);
  EXPECT_TRUE(asg.unassigned.empty());
  for (std::size_t i = 0; i < e.size(); ++i) {
    ASSERT_TRUE(asg.label[i].has_value()) << i;
    EXPECT_EQ(*asg.label[i], i < a.size() ? 0u : 1u) << i;
  }
  EXPECT_EQ(asg.classes[0].size(), a.size());

  // Only the first patch's direction: the second stays unassigned.
  auto part = cone_decompose(e, {family[0]}, 0.8, h.nrm);
  EXPECT_EQ(part.unassigned.size(), b.size());

  auto empty = cone_decompose(e, {}, 0.8, h.nrm);
  EXPECT_EQ(empty.unassigned.size(), e.size());
  EXPECT_THROW(cone_decompose(e, family, 0.0, h.nrm), DomainError);
}
