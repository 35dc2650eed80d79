#pragma once

// Exhaustive vertex enumeration for
//   max sum b_i f_i  s.t.  f_i - f_j <= d_ij,  0 <= f_i <= cap_i.
// Every vertex has n independent tight constraints; the tight difference
// constraints form a forest whose roots sit on a bound. Each node therefore
// picks an anchor: 0, cap_i, or f_j +- d_ij for some j. All anchor choices
// are resolved, cycles discarded, feasible points scored.

#include "carnot/measures.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <random>
#include <vector>

namespace carnot::testing {

inline double brute_force_lp(const std::vector<double>& b, const std::vector<double>& cap, const Eigen::MatrixXd& d) {
  const int n = static_cast<int>(b.size());
  if (n == 0) return 0.0;
  const int choices = 2 + 2 * (n - 1);
  std::vector<int> pick(n, 0);
  std::vector<double> f(n);
  std::vector<char> known(n);
  double best = -std::numeric_limits<double>::infinity();
  for (;;) {
    std::fill(known.begin(), known.end(), 0);
    int resolved = 0;
    for (int i = 0; i < n; ++i) {
      if (pick[i] == 0) f[i] = 0.0, known[i] = 1, ++resolved;
      if (pick[i] == 1) f[i] = cap[i], known[i] = 1, ++resolved;
    }
    for (bool progress = true; progress && resolved < n;) {
      progress = false;
      for (int i = 0; i < n; ++i) {
        if (known[i]) continue;
        int c = pick[i] - 2;
        int j = c / 2;
        if (j >= i) ++j;  // skip self
        if (!known[j]) continue;
        f[i] = (c % 2 == 0) ? f[j] + d(i, j) : f[j] - d(i, j);
        known[i] = 1;
        ++resolved;
        progress = true;
      }
    }
    if (resolved == n) {
      bool ok = true;
      for (int i = 0; i < n && ok; ++i) {
        if (f[i] < -1e-12 || f[i] > cap[i] + 1e-12) ok = false;
        for (int j = 0; j < n && ok; ++j)
          if (f[i] - f[j] > d(i, j) + 1e-12) ok = false;
      }
      if (ok) {
        double v = 0.0;
        for (int i = 0; i < n; ++i) v += b[i] * f[i];
        best = std::max(best, v);
      }
    }
    int k = 0;
    while (k < n && ++pick[k] == choices) pick[k++] = 0;
    if (k == n) break;
  }
  return best;
}

inline DiscreteMeasure random_measure(const BoxNorm& nrm, int atoms, double radius, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.1, 1.0);
  DiscreteMeasure mu;
  for (int i = 0; i < atoms; ++i) mu.add(sample_in_ball(nrm, radius, rng), u(rng));
  return mu;
}

// Oracle value of F_{x,r}: both signs of the objective over the union of atoms.
inline double oracle_fk(const DiscreteMeasure& phi, const DiscreteMeasure& psi, const GroupPoint& x, double r,
                        const BoxNorm& nrm) {
  std::vector<GroupPoint> pts;
  std::vector<double> b, cap;
  auto add = [&](const DiscreteMeasure& mu, double s) {
    for (std::size_t i = 0; i < mu.size(); ++i) {
      pts.push_back(mu.points[i]);
      b.push_back(s * mu.masses[i]);
      cap.push_back(std::max(0.0, r - nrm.distance(x, mu.points[i])));
    }
  };
  add(phi, 1.0);
  add(psi, -1.0);
  const int n = static_cast<int>(pts.size());
  Eigen::MatrixXd d(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) d(i, j) = nrm.distance(pts[i], pts[j]);
  std::vector<double> nb(b);
  for (double& v : nb) v = -v;
  return std::max(brute_force_lp(b, cap, d), brute_force_lp(nb, cap, d));
}

}  // namespace carnot::testing
