#pragma once

#include "carnot/subgroups.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace carnot {

/// Finite sum of weighted Dirac masses.
struct DiscreteMeasure {
  std::vector<GroupPoint> points;
  std::vector<double> masses;

  void add(const GroupPoint& p, double m);
  std::size_t size() const { return points.size(); }
  double total() const;
  // Mass of the closed ball B(x, r).
  double ball_mass(const GroupPoint& x, double r, const BoxNorm& nrm) const;
  // Atoms inside the closed ball B(x, r), as a new measure.
  DiscreteMeasure restrict(const GroupPoint& x, double r, const BoxNorm& nrm) const;
};

/// Cell-centred lattice on W cap B(0,R), weighted so that W cap B(0,1) has
/// mass 1 (the centred normalisation C^h(W cap B(0,1)) = 1).
struct HaarSample {
  std::optional<HomogeneousSubgroup> W;
  std::vector<GroupPoint> lattice;
  double cell_mass = 0.0;
  double beta = 0.0;  // 1 / Lebesgue(W cap B(0,1)) in intrinsic coordinates
  double radius = 0.0;
  int mesh = 0;

  int h() const { return W->hom_dim(); }
  // x . delta_r(lattice) with masses r^h cell_mass: the same Haar measure
  // sampled around x at scale r.
  DiscreteMeasure measure(const GroupPoint& x = {}, double r = 1.0, double theta = 1.0) const;
};

// mesh = cells across the diameter of W cap B(0,1) in every coordinate.
// Throws ResolutionError when B(0,1) holds fewer than 100 lattice points.
HaarSample haar_on_subgroup(const HomogeneousSubgroup& w, const BoxNorm& nrm, double radius, int mesh);

// Haar measure on W around a in dyadic rings: level j samples
// a . delta_{R 2^-j}(lattice) and keeps the ring 2^-(j+1) R < ||a^-1 p|| <= 2^-j R
// (the last level keeps its whole ball). Resolves balls down to R 2^-levels.
DiscreteMeasure graded_haar(const HomogeneousSubgroup& w, const BoxNorm& nrm, const GroupPoint& a, double radius,
                            int levels, int mesh);

// Normalised blow-up r^{-h} T_{x,r} phi: atoms p -> delta_{1/r}(x^{-1} p), masses times r^{-h}.
DiscreteMeasure blowup(const DiscreteMeasure& phi, const GroupPoint& x, double r, double h, const BoxNorm& nrm);

// phi(B(x, r)) / r^h along strictly decreasing radii.
std::vector<double> density_profile(const DiscreteMeasure& phi, const GroupPoint& x, double h,
                                    const std::vector<double>& radii, const BoxNorm& nrm);

struct ThetaGammaClass {
  int theta = 1;
  int gamma = 1;
  std::vector<std::size_t> members;
};

// Atoms x with theta^-1 r^h <= phi(B(x,r)) <= theta r^h at every grid radius
// (grid inside (0, 1/gamma)).
ThetaGammaClass classify_E(const DiscreteMeasure& phi, int theta, int gamma, double h,
                           const std::vector<double>& grid, const BoxNorm& nrm);
bool in_E(const DiscreteMeasure& phi, const GroupPoint& x, int theta, int gamma, double h,
          const std::vector<double>& grid, const BoxNorm& nrm);

/// Optimal test function of the F_K program and its certificate.
struct FKSolution {
  double value = 0.0;
  double lower = 0.0;  // objective of the certified dual-feasible f
  double upper = 0.0;  // transport cost
  std::vector<GroupPoint> nodes;
  std::vector<double> f;
  std::size_t augmentations = 0;
};

// sup { |int f dphi - int f dpsi| : f >= 0, 1-Lipschitz, f = 0 off B(x,r) }.
// Throws ToleranceError when the optimum cannot be certified to 1e-6.
FKSolution F_K_solve(const DiscreteMeasure& phi, const DiscreteMeasure& psi, const GroupPoint& x, double r,
                     const BoxNorm& nrm);
double F_K(const DiscreteMeasure& phi, const DiscreteMeasure& psi, const GroupPoint& x, double r,
           const BoxNorm& nrm);

struct DFlatResult {
  double value = 0.0;  // min over candidates and Theta of F_{x,r} / r^{h+1}
  std::size_t best = 0;
  double theta = 0.0;
  std::vector<double> per_candidate;
  std::vector<std::string> warnings;
};

struct DFlatOptions {
  int mesh = 16;
  int iterations = 48;           // golden-section steps
  std::optional<double> theta;   // fix Theta instead of minimising
};

DFlatResult d_flat(const DiscreteMeasure& phi, const GroupPoint& x, double r, double h,
                   const std::vector<HomogeneousSubgroup>& candidates, const BoxNorm& nrm,
                   const DFlatOptions& opts = {});

// F_{x,r}(phi, theta Haar(x W)) / r^{h+1} for a prepared Haar sample.
double flat_defect(const DiscreteMeasure& phi, const GroupPoint& x, double r, const HaarSample& haar,
                   double theta, const BoxNorm& nrm);

// delta_G = theta^-1 2^-(4h+5).
double delta_G(double theta, double h);
// C_1 = 2^{1 + 1/(h+1)} theta^{1/(h+1)}.
double C1(double theta, double h);
double eta(double h);
// C_4 = (eta (1 - eta)^h / (32 theta))^{h+2}.
double C4(double theta, double h);

struct TrapParams {
  int theta = 2;
  int gamma = 1;
  double h = 0;
  double delta = 0;
  double r = 0;
  std::vector<double> grid;      // radii for E(theta, gamma) membership
  std::optional<double> Theta;   // flat-measure constant; minimised when unset
  int mesh = 16;
};

struct TrapReport {
  bool premises = false;
  std::vector<std::string> failed_premises;
  double F = 0.0;
  double Theta = 0.0;
  double bound = 0.0;             // C_1 delta^{1/(h+1)} r, or the hit radius
  std::size_t checked = 0;
  std::size_t violations = 0;
  double worst = 0.0;             // largest dist(x^{-1} w, V) seen, or smallest hit mass
  bool pass() const { return premises && violations == 0; }
};

// Every member w of E(theta,gamma) in B(x, r/4) has dist(x^{-1} w, V) <= C_1 delta^{1/(h+1)} r,
// given x in E(theta,gamma), r < 1/gamma, delta < delta_G and F_{x,r}(phi, Theta Haar(xV)) <= 2 delta r^{h+1}.
TrapReport cone_trap_check(const DiscreteMeasure& phi, const GroupPoint& x, const HomogeneousSubgroup& v,
                           const TrapParams& p, const BoxNorm& nrm);

// Under delta < C_4 and F(phi|K) + F(phi) <= 2 delta r^{h+1} against Theta Haar(xV),
// every Haar lattice point w of xV in B(x, r/2) has phi|K(B(w, delta^{1/(h+2)} r)) > 0.
TrapReport ball_hit_check(const DiscreteMeasure& phi, const DiscreteMeasure& phi_k, const GroupPoint& x,
                          const HomogeneousSubgroup& v, const TrapParams& p, const BoxNorm& nrm);

}  // namespace carnot
