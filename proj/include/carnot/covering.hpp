#pragma once

#include "carnot/cones.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace carnot {

struct Ball {
  GroupPoint center;
  double radius = 0.0;
};

/// Finite family of closed balls.
struct BallFamily {
  std::vector<Ball> balls;

  void add(const GroupPoint& c, double r);
  std::size_t size() const { return balls.size(); }
  double max_radius() const;
};

struct VitaliResult {
  std::vector<std::size_t> selected;  // input indices, in acceptance order
  int N = 0;
  // (i): pairwise separation d(c, c') > 5^N (r + r') of the selected balls.
  std::size_t pairs_checked = 0;
  std::size_t disjoint_violations = 0;
  // (ii): centres and sphere samples of every ball inside some 5^{N+1}-enlargement.
  std::size_t points_checked = 0;
  std::size_t coverage_violations = 0;
};

// Greedy by radius (descending, ties by index): a ball is accepted iff its
// 5^N-enlargement is separated from every accepted one. Both properties are
// then re-verified; a failure throws AlgorithmInvariantError.
VitaliResult vitali_select(const BallFamily& fam, int N, const BoxNorm& nrm, std::size_t sphere_samples = 12,
                           std::uint64_t seed = 0x5a);

// 2^-kappa j^-kappa C^-kappa beta^kappa.
double tube_radius(int kappa, int j, int k, double beta, double conj_const);

struct ConjugateEstimate {
  double value = 0.0;    // 1.5 x raw
  double raw = 0.0;      // max ||y^-1 x y|| / ||x||^{1/kappa} seen
  std::size_t samples = 0;
  double radius = 0.0;   // 14 k
};

// Sampled constant C with ||y^-1 x y|| <= C ||x||^{1/kappa} on B(0, 14k).
ConjugateEstimate estimate_conjugate_constant(const BoxNorm& nrm, int k, std::size_t samples = 20000,
                                              std::uint64_t seed = 0xc0);

struct TubePiece {
  GroupPoint net_point;
  std::vector<std::size_t> members;
  bool cone_ok = false;       // members form a C_V(3 beta)-set
  ConeSetReport cone;
};

struct TubularCover {
  double radius = 0.0;        // tube radius
  double conj_const = 0.0;
  double beta = 0.0;
  std::vector<TubePiece> pieces;
  std::vector<std::size_t> piece_of;  // piece index of every point
};

struct TubularOptions {
  std::shared_ptr<const SplittingPair> split;  // decides "out" in the cone checks
  std::size_t max_net = 0;                     // 0: unbounded
  ConeCheckMode mode = ConeCheckMode::Certify;
};

// Farthest-point net {q_l} in E; each point goes to the first tube
// B(q_l V, tube_radius) holding it. Requires E inside B(0, k).
TubularCover tubular_cover(std::span<const GroupPoint> e, const HomogeneousSubgroup& v, int j, int k, double beta,
                           double conj_const, const BoxNorm& nrm, const TubularOptions& opts = {});

struct ConeAssignment {
  std::vector<std::optional<std::size_t>> label;  // family index per point
  std::vector<std::size_t> unassigned;
  std::vector<std::vector<std::size_t>> classes;  // points per family member
};

// First family member whose cone traps E cap B(x, r) around each x;
// anything short of certified membership fails.
ConeAssignment cone_decompose(std::span<const GroupPoint> e, const std::vector<ConeSpec>& family, double r,
                              const BoxNorm& nrm);

}  // namespace carnot
