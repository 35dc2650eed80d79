#include "carnot/errors.hpp"
#include "carnot/metrics.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace carnot;

namespace {

GroupPoint pt(std::initializer_list<double> v) {
  GroupPoint p(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) p[i++] = x;
  return p;
}

}  // namespace

TEST(BoxNorm, Examples) {
  auto h = preset_group("heisenberg1");
  BoxNorm unit(h, {1.0, 1.0});
  EXPECT_EQ(unit.norm(pt({3, 0, 0})), 3.0);
  BoxNorm half(h, {1.0, 0.5});
  EXPECT_EQ(half.norm(pt({0, 0, 4})), 1.0);
  EXPECT_EQ(unit.distance(pt({0, 0, 0}), pt({3, 0, 0})), 3.0);
  GroupPoint p = pt({0.3, -0.7, 2.0});
  EXPECT_EQ(unit.distance(p, p), 0.0);
}

TEST(BoxNorm, RejectsBadEpsilons) {
  auto h = preset_group("heisenberg1");
  EXPECT_THROW(BoxNorm(h, {1.0}), StructuralError);
  EXPECT_THROW(BoxNorm(h, {0.5, 1.0}), DomainError);
  EXPECT_THROW(BoxNorm(h, {1.0, -1.0}), DomainError);
}

TEST(BoxNorm, HomogeneityAndLeftInvariance) {
  auto e = preset_group("engel");
  BoxNorm nrm(e, {1.0, 0.5, 0.25});
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-3, 3), lam(0.05, 8);
  for (int s = 0; s < 1000; ++s) {
    GroupPoint p(4), q(4), z(4);
    for (int i = 0; i < 4; ++i) {
      p[i] = u(rng);
      q[i] = u(rng);
      z[i] = u(rng);
    }
    double l = lam(rng);
    EXPECT_NEAR(nrm.norm(e->dilate(l, p)), l * nrm.norm(p), 1e-12 * l * nrm.norm(p) + 1e-15);
    EXPECT_NEAR(nrm.distance(e->product(z, p), e->product(z, q)), nrm.distance(p, q), 1e-9);
    EXPECT_NEAR(nrm.distance(p, q), nrm.distance(q, p), 1e-12 * (1 + nrm.distance(p, q)));
  }
}

TEST(Calibration, AbelianIsEuclidean) {
  auto a = preset_group("abelian2");
  BoxNorm nrm = calibrate_epsilons(a, {.samples = 20000});
  ASSERT_EQ(nrm.epsilons().size(), 1u);
  EXPECT_EQ(nrm.epsilon(1), 1.0);
  ASSERT_TRUE(nrm.certificate.has_value());
}

TEST(Calibration, HeisenbergHalfEpsilonPassesSampledPairs) {
  auto h = preset_group("heisenberg1");
  auto scan = scan_triangle_inequality(BoxNorm(h, {1.0, 0.5}), 100000, 10.0, 99);
  EXPECT_EQ(scan.violations, 0u);
  EXPECT_LE(scan.worst_ratio, 1.0);
}

TEST(Calibration, HeisenbergAndEngelCertificates) {
  for (const char* name : {"heisenberg1", "engel"}) {
    auto g = preset_group(name);
    BoxNorm nrm = calibrate_epsilons(g);
    ASSERT_TRUE(nrm.certificate.has_value()) << name;
    EXPECT_EQ(nrm.certificate->samples, 100000u);
    EXPECT_EQ(nrm.epsilon(1), 1.0);
    // Independent re-scan with a fresh seed.
    auto scan = scan_triangle_inequality(nrm, 100000, 10.0, 2024);
    EXPECT_EQ(scan.violations, 0u) << name << " worst " << scan.worst_ratio;
  }
}

TEST(Calibration, StepFourRejected) {
  StratifiedAlgebra alg({2, 1, 1, 1}, {{0, 1, 2, 1.0}, {0, 2, 3, 1.0}, {0, 3, 4, 1.0}});
  auto g = std::make_shared<const Group>(alg);
  EXPECT_THROW(calibrate_epsilons(g), UnsupportedStepError);
}

TEST(Sampling, BallAndSphereRadii) {
  auto h = preset_group("heisenberg1");
  BoxNorm nrm(h, {1.0, 1.0});
  std::mt19937_64 rng(3);
  for (int s = 0; s < 1000; ++s) {
    EXPECT_LE(nrm.norm(sample_in_ball(nrm, 2.0, rng)), 2.0 + 1e-12);
    EXPECT_NEAR(nrm.norm(sample_on_sphere(nrm, 0.7, rng)), 0.7, 1e-12);
  }
}

TEST(Hausdorff, Examples) {
  auto h = preset_group("heisenberg1");
  BoxNorm nrm(h, {1.0, 1.0});
  std::vector<GroupPoint> a = {pt({0, 0, 0})}, b = {pt({3, 0, 0})};
  EXPECT_EQ(hausdorff_distance(a, a, nrm), 0.0);
  EXPECT_EQ(hausdorff_distance(a, b, nrm), 3.0);
  std::vector<GroupPoint> none;
  EXPECT_THROW(hausdorff_distance(a, none, nrm), DomainError);
  EXPECT_THROW(hausdorff_distance(none, a, nrm), DomainError);
}

TEST(Hausdorff, SymmetricAndTriangle) {
  auto h = preset_group("heisenberg1");
  BoxNorm nrm(h, {1.0, 1.0});
  std::mt19937_64 rng(8);
  auto cloud = [&](int n) {
    std::vector<GroupPoint> out;
    for (int i = 0; i < n; ++i) out.push_back(sample_in_ball(nrm, 2.0, rng));
    return out;
  };
  for (int s = 0; s < 50; ++s) {
    auto a = cloud(7), b = cloud(5), c = cloud(9);
    EXPECT_EQ(hausdorff_distance(a, b, nrm), hausdorff_distance(b, a, nrm));
    EXPECT_LE(hausdorff_distance(a, c, nrm),
              hausdorff_distance(a, b, nrm) + hausdorff_distance(b, c, nrm) + 1e-12);
  }
}
