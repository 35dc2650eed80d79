#pragma once

#include "carnot/metrics.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

namespace carnot {

/// Graded subspace W = W_1 + ... + W_k closed under brackets. Each W_i is
/// stored as an orthonormal basis in the coordinates of layer V_i.
class HomogeneousSubgroup {
 public:
  // layer_bases[i] has n_{i+1} rows; its columns span W_{i+1} (any spanning
  // set is accepted and orthonormalised). Throws StructuralError when the
  // span is not bracket-closed.
  HomogeneousSubgroup(GroupPtr group, std::vector<Eigen::MatrixXd> layer_bases);

  // Spanning vectors in full coordinates; each must be supported in one layer.
  static HomogeneousSubgroup from_vectors(GroupPtr group, const std::vector<GroupPoint>& vectors);

  const Group& group() const { return *group_; }
  const GroupPtr& group_ptr() const { return group_; }

  std::vector<int> strat_vector() const;
  int hom_dim() const;
  int top_dim() const { return top_dim_; }
  const Eigen::MatrixXd& basis(int layer) const { return bases_[layer - 1]; }

  // Intrinsic coordinates (layer by layer, length top_dim) <-> group points.
  GroupPoint embed(const Eigen::VectorXd& coords) const;
  Eigen::VectorXd coordinates(const GroupPoint& p) const;
  // Layerwise orthogonal projection onto W.
  GroupPoint orthogonal_projection(const GroupPoint& p) const;
  bool contains(const GroupPoint& p, double tol = 1e-9) const;
  // Radius of W cap B(0,1) in each layer's coordinates: eps_i^{-i}.
  static std::vector<double> unit_ball_layer_radii(const BoxNorm& nrm);
  // Layer index (1-based) of each intrinsic coordinate.
  int coord_layer(int c) const { return coord_layer_[c]; }

 private:
  GroupPtr group_;
  std::vector<Eigen::MatrixXd> bases_;
  std::vector<int> coord_layer_;
  int top_dim_ = 0;
};

struct SubgroupCheck {
  bool closed = false;
  double residual = 0.0;  // max |[u,v] - proj_W [u,v]| over basis pairs
};

SubgroupCheck is_subgroup(const Group& group, const std::vector<Eigen::MatrixXd>& layer_bases);

struct ComplementReport {
  std::vector<bool> layer_direct_sum;  // dim W_i + dim L_i == n_i with full rank
  bool trivial_intersection = false;
  bool pass = false;
};

ComplementReport verify_complement(const HomogeneousSubgroup& v, const HomogeneousSubgroup& l);

struct SplitCertificate {
  std::uint64_t seed = 0;
  std::size_t samples = 0;
  std::size_t used = 0;  // samples with P_L g != 0
};

/// Complementary pair G = V L, V cap L = {0}, with the splitting projections.
class SplittingPair {
 public:
  SplittingPair(HomogeneousSubgroup v, HomogeneousSubgroup l);

  const HomogeneousSubgroup& V() const { return v_; }
  const HomogeneousSubgroup& L() const { return l_; }
  const Group& group() const { return v_.group(); }

  // (P_V g, P_L g) with g = P_V(g) . P_L(g).
  std::pair<GroupPoint, GroupPoint> project(const GroupPoint& g) const;

  // Unset until estimate_c_split has run.
  std::optional<double> c_split;
  std::optional<double> eps1;
  std::optional<SplitCertificate> certificate;

  double c_split_or_throw() const;

 private:
  HomogeneousSubgroup v_;
  HomogeneousSubgroup l_;
  std::vector<Eigen::PartialPivLU<Eigen::MatrixXd>> lu_;
};

std::pair<GroupPoint, GroupPoint> project_split(const SplittingPair& sp, const GroupPoint& g);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

struct DistOptions {
  int starts = 8;
  std::uint64_t seed = 0xd157;
  // Complement used for the lower sandwich bound and the P_V(g) witness;
  // needs c_split set to contribute a lower bound.
  const SplittingPair* complement = nullptr;
};

Interval dist_to_subgroup(const GroupPoint& g, const HomogeneousSubgroup& w, const BoxNorm& nrm,
                          const DistOptions& opts = {});

double estimate_c_split(SplittingPair& sp, const BoxNorm& nrm, std::size_t samples = 2000,
                        std::uint64_t seed = 0xc5);

// Hausdorff distance of lattice discretisations of W1, W2 cap B(0,1), widened
// by the covering radius of each lattice.
Interval grassmannian_distance(const HomogeneousSubgroup& w1, const HomogeneousSubgroup& w2,
                               const BoxNorm& nrm, int resolution);

// Lattice used by grassmannian_distance: a per-coordinate grid on the
// bounding box of W cap B(0,1), with outside points pulled radially into the
// ball in each layer. covering_radius bounds dist(y, lattice) for y in W cap B(0,1).
struct BallLattice {
  std::vector<GroupPoint> points;
  double covering_radius = 0.0;
};

BallLattice unit_ball_lattice(const HomogeneousSubgroup& w, const BoxNorm& nrm, int resolution);

// Upper bound on ||a^{-1} (a + d)|| for a, d in W with layer norms
// |a_i| <= a_bound[i], |d_i| <= d_bound[i]; turns coordinate meshes into
// metric radii.
double perturbation_modulus(const HomogeneousSubgroup& w, const BoxNorm& nrm,
                            const std::vector<double>& a_bound, const std::vector<double>& d_bound);

}  // namespace carnot
