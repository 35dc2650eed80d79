#pragma once

#include "carnot/lie.hpp"

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <vector>

namespace carnot {

// Provenance of a sampled triangle-inequality calibration.
struct NormCertificate {
  std::uint64_t seed = 0;
  std::size_t samples = 0;   // pairs per full scan
  double box_radius = 0.0;   // points drawn from B(0, box_radius)
  int rounds = 0;            // rescans until a clean pass
  double worst_ratio = 0.0;  // max ||xy|| / (||x|| + ||y||) seen on the final pass
};

/// Smooth-box homogeneous norm max_i eps_i |p_i|^{1/i}, |.| the Euclidean
/// norm of layer i, with eps_1 = 1.
class BoxNorm {
 public:
  BoxNorm(GroupPtr group, std::vector<double> epsilons);

  double norm(const GroupPoint& p) const;
  // Per-layer terms eps_i |p_i|^{1/i}; the norm is their maximum.
  std::vector<double> layer_terms(const GroupPoint& p) const;
  double distance(const GroupPoint& p, const GroupPoint& q) const;

  const Group& group() const { return *group_; }
  const GroupPtr& group_ptr() const { return group_; }
  const std::vector<double>& epsilons() const { return eps_; }
  double epsilon(int layer) const { return eps_[layer - 1]; }

  std::optional<NormCertificate> certificate;

 private:
  GroupPtr group_;
  std::vector<double> eps_;
};

struct CalibrationOptions {
  std::size_t samples = 100000;
  double box_radius = 10.0;
  std::uint64_t seed = 0x5eed;
  int max_rounds = 40;
  // Hill-climbing restarts from the worst sampled pairs after a clean scan.
  int refine_starts = 16;
};

BoxNorm calibrate_epsilons(GroupPtr group, const CalibrationOptions& opts = {});

// Random point with ||p|| uniform in (0, radius]: a uniform box direction
// dilated to the drawn norm.
GroupPoint sample_in_ball(const BoxNorm& nrm, double radius, std::mt19937_64& rng);
// Random point with ||p|| == radius.
GroupPoint sample_on_sphere(const BoxNorm& nrm, double radius, std::mt19937_64& rng);

struct TriangleScan {
  std::size_t pairs = 0;
  std::size_t violations = 0;
  double worst_ratio = 0.0;
};

TriangleScan scan_triangle_inequality(const BoxNorm& nrm, std::size_t pairs, double radius,
                                      std::uint64_t seed);

double hausdorff_distance(std::span<const GroupPoint> a, std::span<const GroupPoint> b,
                          const BoxNorm& nrm);

// dist(x, A) = min over a in A of d(x, a); A must be nonempty.
double point_set_distance(const GroupPoint& x, std::span<const GroupPoint> a, const BoxNorm& nrm);

}  // namespace carnot
