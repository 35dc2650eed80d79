#include "carnot/covering.hpp"

#include "carnot/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace carnot {

void BallFamily::add(const GroupPoint& c, double r) {
  if (!(r > 0.0) || !std::isfinite(r)) throw DomainError("ball radius must be positive and finite");
  balls.push_back({c, r});
}

double BallFamily::max_radius() const {
  double m = 0.0;
  for (const auto& b : balls) m = std::max(m, b.radius);
  return m;
}

namespace {

// Points of the sphere of radius r about c: random samples plus the
// extremal points along every coordinate axis.
std::vector<GroupPoint> sphere_points(const Ball& b, const BoxNorm& nrm, std::size_t samples, std::mt19937_64& rng) {
  const Group& g = nrm.group();
  std::vector<GroupPoint> out;
  for (std::size_t s = 0; s < samples; ++s) out.push_back(g.product(b.center, sample_on_sphere(nrm, b.radius, rng)));
  for (int i = 0; i < g.dim(); ++i) {
    for (double sign : {-1.0, 1.0}) {
      GroupPoint e = GroupPoint::Zero(g.dim());
      e[i] = sign;
      e = g.dilate(b.radius / nrm.norm(e), e);
      out.push_back(g.product(b.center, e));
    }
  }
  return out;
}

}  // namespace

VitaliResult vitali_select(const BallFamily& fam, int N, const BoxNorm& nrm, std::size_t sphere_samples,
                           std::uint64_t seed) {
  if (N < 0) throw DomainError("N must be nonnegative");
  VitaliResult res;
  res.N = N;
  const double s = std::pow(5.0, N);
  const auto& balls = fam.balls;

  std::vector<std::size_t> order(balls.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return balls[a].radius > balls[b].radius; });

  // Separation of centres beyond the summed radii is what "disjoint" means here:
  // it is the condition the covering argument below actually uses.
  for (std::size_t i : order) {
    bool ok = true;
    for (std::size_t j : res.selected) {
      if (nrm.distance(balls[i].center, balls[j].center) <= s * (balls[i].radius + balls[j].radius)) {
        ok = false;
        break;
      }
    }
    if (ok) res.selected.push_back(i);
  }

  for (std::size_t a = 0; a < res.selected.size(); ++a) {
    for (std::size_t b = a + 1; b < res.selected.size(); ++b) {
      const Ball& p = balls[res.selected[a]];
      const Ball& q = balls[res.selected[b]];
      ++res.pairs_checked;
      if (!(nrm.distance(p.center, q.center) > s * (p.radius + q.radius))) ++res.disjoint_violations;
    }
  }

  // A rejected ball B meets some accepted B' with r' >= r, so
  // B sits in (1 + 2 5^N) B' within 5^{N+1} B'.
  std::mt19937_64 rng(seed);
  const double big = 5.0 * s;
  for (const auto& b : balls) {
    auto pts = sphere_points(b, nrm, sphere_samples, rng);
    pts.push_back(b.center);
    for (const auto& p : pts) {
      ++res.points_checked;
      bool covered = false;
      for (std::size_t j : res.selected) {
        if (nrm.distance(p, balls[j].center) <= big * balls[j].radius * (1.0 + 1e-12)) {
          covered = true;
          break;
        }
      }
      if (!covered) ++res.coverage_violations;
    }
  }
  if (res.disjoint_violations > 0 || res.coverage_violations > 0) {
    std::ostringstream msg;
    msg << "vitali selection failed verification: " << res.disjoint_violations << " overlapping pairs, "
        << res.coverage_violations << " uncovered points (is the norm a metric?)";
    throw AlgorithmInvariantError(msg.str());
  }
  return res;
}

double tube_radius(int kappa, int j, int k, double beta, double conj_const) {
  if (kappa < 1 || j < 1 || k < 1) throw DomainError("kappa, j and k must be positive integers");
  if (!(beta > 0.0) || !(beta < 1.0)) throw DomainError("beta must lie in (0, 1)");
  if (!(conj_const > 0.0)) throw DomainError("conjugate constant must be positive");
  return std::pow(2.0 * j * conj_const / beta, -kappa);
}

ConjugateEstimate estimate_conjugate_constant(const BoxNorm& nrm, int k, std::size_t samples, std::uint64_t seed) {
  if (k < 1) throw DomainError("k must be a positive integer");
  const Group& g = nrm.group();
  const double kappa = g.step();
  ConjugateEstimate est;
  est.radius = 14.0 * k;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> scale(0, 4);
  for (std::size_t s = 0; s < samples; ++s) {
    GroupPoint y = sample_in_ball(nrm, est.radius, rng);
    GroupPoint x = sample_in_ball(nrm, est.radius, rng);
    // Small x is where the 1/kappa power bites.
    x = g.dilate(std::pow(10.0, -scale(rng)), x);
    double nx = nrm.norm(x);
    if (!(nx > 0.0)) continue;
    double v = nrm.norm(g.product(g.inverse(y), g.product(x, y))) / std::pow(nx, 1.0 / kappa);
    est.raw = std::max(est.raw, v);
    ++est.samples;
  }
  est.value = 1.5 * est.raw;
  return est;
}

TubularCover tubular_cover(std::span<const GroupPoint> e, const HomogeneousSubgroup& v, int j, int k, double beta,
                           double conj_const, const BoxNorm& nrm, const TubularOptions& opts) {
  const Group& g = nrm.group();
  TubularCover tc;
  tc.beta = beta;
  tc.conj_const = conj_const;
  tc.radius = tube_radius(g.step(), j, k, beta, conj_const);
  for (const auto& p : e)
    if (nrm.norm(p) > k * (1.0 + 1e-12)) throw DomainError("tubular_cover needs E inside B(0, k)");

  const std::size_t n = e.size();
  constexpr std::size_t none = std::numeric_limits<std::size_t>::max();
  tc.piece_of.assign(n, none);
  std::vector<double> gap(n, std::numeric_limits<double>::infinity());  // distance to the net
  std::size_t left = n;
  std::size_t next = 0;
  while (left > 0) {
    if (opts.max_net > 0 && tc.pieces.size() == opts.max_net) {
      std::ostringstream msg;
      msg << left << " points lie in none of the " << opts.max_net << " tubes; use a denser net";
      throw NetDensityError(msg.str());
    }
    TubePiece piece;
    piece.net_point = e[next];
    GroupPoint qinv = g.inverse(piece.net_point);
    const std::size_t id = tc.pieces.size();
    for (std::size_t i = 0; i < n; ++i) {
      gap[i] = std::min(gap[i], nrm.distance(piece.net_point, e[i]));
      if (tc.piece_of[i] != none) continue;
      // Certified membership only: the upper bound must fit in the tube.
      if (i == next || dist_to_subgroup(g.product(qinv, e[i]), v, nrm).hi <= tc.radius) {
        tc.piece_of[i] = id;
        piece.members.push_back(i);
        --left;
      }
    }
    tc.pieces.push_back(std::move(piece));
    // Farthest uncovered point from the net.
    double far = -1.0;
    for (std::size_t i = 0; i < n; ++i)
      if (tc.piece_of[i] == none && gap[i] > far) far = gap[i], next = i;
  }

  ConeSpec cone(v, 3.0 * beta, opts.split);
  for (auto& piece : tc.pieces) {
    std::vector<GroupPoint> pts;
    for (std::size_t i : piece.members) pts.push_back(e[i]);
    piece.cone = is_cone_set(pts, cone, nrm, opts.mode);
    piece.cone_ok = piece.cone.pass;
  }
  return tc;
}

ConeAssignment cone_decompose(std::span<const GroupPoint> e, const std::vector<ConeSpec>& family, double r,
                              const BoxNorm& nrm) {
  if (!(r > 0.0)) throw DomainError("locality radius must be positive");
  const Group& g = nrm.group();
  ConeAssignment out;
  out.label.assign(e.size(), std::nullopt);
  out.classes.resize(family.size());
  for (std::size_t i = 0; i < e.size(); ++i) {
    GroupPoint xinv = g.inverse(e[i]);
    std::vector<GroupPoint> local;
    for (std::size_t j = 0; j < e.size(); ++j)
      if (j != i && nrm.distance(e[i], e[j]) <= r) local.push_back(g.product(xinv, e[j]));
    for (std::size_t f = 0; f < family.size() && !out.label[i]; ++f) {
      bool trapped = std::all_of(local.begin(), local.end(), [&](const GroupPoint& w) {
        return in_cone(w, family[f], nrm) == ConeMembership::In;
      });
      if (trapped) {
        out.label[i] = f;
        out.classes[f].push_back(i);
      }
    }
    if (!out.label[i]) out.unassigned.push_back(i);
  }
  return out;
}

}  // namespace carnot
