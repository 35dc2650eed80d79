#pragma once

#include "carnot/subgroups.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <vector>

namespace carnot {

enum class ConeMembership { In, Out, Unknown };

const char* to_string(ConeMembership m);

/// C_V(alpha) = { w : dist(w, V) <= alpha ||w|| }. The optional splitting
/// (with V as its first factor and c_split estimated) supplies the lower
/// bound that makes "out" decidable.
struct ConeSpec {
  HomogeneousSubgroup V;
  double alpha = 0.0;
  std::shared_ptr<const SplittingPair> split;

  ConeSpec(HomogeneousSubgroup v, double a, std::shared_ptr<const SplittingPair> sp = nullptr);
};

ConeMembership in_cone(const GroupPoint& w, const ConeSpec& cone, const BoxNorm& nrm);

enum class ConeCheckMode { Certify, Exploratory };

struct ConeSetReport {
  bool pass = true;
  std::size_t pairs = 0;
  std::size_t out = 0;
  std::size_t unknown = 0;
  // Ordered pair (p, q) maximising dist_hi(p^{-1}q, V) / ||p^{-1}q||.
  std::optional<std::pair<std::size_t, std::size_t>> worst_pair;
  double worst_ratio = 0.0;
};

ConeSetReport is_cone_set(std::span<const GroupPoint> e, const ConeSpec& cone, const BoxNorm& nrm,
                          ConeCheckMode mode = ConeCheckMode::Certify);

struct ConeInclusionReport {
  bool pass = false;
  Interval grassmannian;
  std::size_t tested = 0;
  std::size_t violations = 0;  // certified outside C_{W2}(alpha + eps)
  std::size_t unknown = 0;     // membership in C_{W2}(alpha + eps) not certified
};

// Samples C_{W1}(alpha) on the spheres of radii 1/2, 1, 2 and checks
// membership in C_{W2}(alpha + eps); requires grassmannian hi < eps / 4.
ConeInclusionReport cone_inclusion_check(const HomogeneousSubgroup& w1, const HomogeneousSubgroup& w2,
                                         double alpha, double eps, int resolution, const BoxNorm& nrm,
                                         std::size_t samples_per_radius = 100, std::uint64_t seed = 0x1c);

// c(alpha) = alpha / (c_split - alpha) and D(alpha) = (1 - c) / (1 + c).
double frak_c(double alpha, double c_split);
double frak_D(double alpha, double c_split);

struct InclusionReport {
  double frak_c = 0.0;
  std::size_t tested_inner = 0;
  std::size_t tested_outer = 0;
  std::size_t inner_violations = 0;  // B(0,1) cap V not inside P_V(B(0,1) cap C_V(alpha))
  std::size_t outer_violations = 0;  // P_V(B(0,1) cap C_V(alpha)) not inside B(0, 1/(1-c))
  bool pass() const { return inner_violations == 0 && outer_violations == 0; }
};

InclusionReport projection_inclusion_check(const SplittingPair& sp, double alpha, const BoxNorm& nrm,
                                           std::size_t samples, std::uint64_t seed);

/// Sampled intrinsic graph over V: base points a in V with values phi(a) in L.
struct IntrinsicGraph {
  std::shared_ptr<const SplittingPair> sp;
  std::vector<GroupPoint> base;
  std::vector<GroupPoint> values;
  double alpha = 0.0;

  std::size_t size() const { return base.size(); }
  GroupPoint point(std::size_t i) const;
  std::vector<GroupPoint> points() const;
  // Index of the base point nearest (Euclidean) to a, if within tol.
  std::optional<std::size_t> find_base(const GroupPoint& a, double tol = 1e-6) const;
};

IntrinsicGraph extract_graph(std::span<const GroupPoint> gamma, std::shared_ptr<const SplittingPair> sp,
                             double alpha, const BoxNorm& nrm);

struct TranslatedGraph {
  IntrinsicGraph graph;
  std::size_t dropped = 0;
};

// phi_q(a) = (P_L(q^{-1} a))^{-1} . phi(P_V(q^{-1} a)) on U_q. Without
// explicit targets the new base points are P_V(q . b . phi(b)).
TranslatedGraph translate_function(const IntrinsicGraph& graph, const GroupPoint& q);
TranslatedGraph translate_function(const IntrinsicGraph& graph, const GroupPoint& q,
                                   std::span<const GroupPoint> targets);

struct FlatnessProfile {
  std::vector<double> radii;
  std::vector<double> values;        // NaN where the window held too few samples
  std::vector<bool> insufficient;
  std::vector<std::size_t> window_counts;
  double spearman = 0.0;             // rank correlation of value against step index
  double floor = 0.0;                // d_H of the candidate lattice against its mesh-halved refinement
};

struct FlatnessOptions {
  int resolution = 16;               // candidate lattice points per coordinate
  std::size_t min_window_points = 8;
};

// Windowed Hausdorff distance between A_r = delta_{1/r}(p0^{-1} Gamma) and the
// candidate on B(0,k) along the given radii, p0 = a0 . phi(a0):
//   max( sup_{a in A_r cap B(0,k)} dist(a, candidate),
//        sup_{b in lattice(candidate cap B(0,k))} dist(b, A_r) ).
// Odd resolutions put the lattice on the dyadic multiscale base points.
FlatnessProfile flatness_profile(const IntrinsicGraph& graph, const GroupPoint& a0,
                                 const HomogeneousSubgroup& candidate, const std::vector<double>& radii,
                                 double k, const BoxNorm& nrm, const FlatnessOptions& opts = {});

// The origin plus, for each r, delta_r of the unit-ball lattice of V dilated
// to radius k: blow-ups at 0 by any listed scale contain the flatness lattice
// of the same resolution.
std::vector<GroupPoint> multiscale_base_points(const HomogeneousSubgroup& v, const BoxNorm& nrm,
                                               const std::vector<double>& radii, double k, int resolution);

double spearman_rho(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace carnot
