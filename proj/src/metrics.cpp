#include "carnot/metrics.hpp"

#include "carnot/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace carnot {

BoxNorm::BoxNorm(GroupPtr group, std::vector<double> epsilons)
    : group_(std::move(group)), eps_(std::move(epsilons)) {
  if (!group_) throw StructuralError("BoxNorm needs a group");
  if (static_cast<int>(eps_.size()) != group_->step())
    throw StructuralError("BoxNorm: one epsilon per layer required");
  if (eps_[0] != 1.0) throw DomainError("BoxNorm: epsilon_1 must equal 1");
  for (double e : eps_)
    if (!(e > 0.0)) throw DomainError("BoxNorm: epsilons must be positive");
}

std::vector<double> BoxNorm::layer_terms(const GroupPoint& p) const {
  const auto& alg = group_->algebra();
  if (p.size() != alg.total_dim()) throw StructuralError("norm: dimension mismatch");
  std::vector<double> t(eps_.size());
  for (int l = 1; l <= alg.step(); ++l) {
    double len = p.segment(alg.layer_offset(l), alg.layer_size(l)).norm();
    t[l - 1] = eps_[l - 1] * (l == 1 ? len : std::pow(len, 1.0 / l));
  }
  return t;
}

double BoxNorm::norm(const GroupPoint& p) const {
  const auto& alg = group_->algebra();
  if (p.size() != alg.total_dim()) throw StructuralError("norm: dimension mismatch");
  double best = 0.0;
  for (int l = 1; l <= alg.step(); ++l) {
    double len = p.segment(alg.layer_offset(l), alg.layer_size(l)).norm();
    double term;
    switch (l) {
      case 1: term = len; break;
      case 2: term = std::sqrt(len); break;
      case 3: term = std::cbrt(len); break;
      default: term = std::pow(len, 1.0 / l);
    }
    best = std::max(best, eps_[l - 1] * term);
  }
  return best;
}

double BoxNorm::distance(const GroupPoint& p, const GroupPoint& q) const {
  return norm(group_->left_quotient(p, q));
}

GroupPoint sample_on_sphere(const BoxNorm& nrm, double radius, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const int n = nrm.group().dim();
  for (;;) {
    GroupPoint p(n);
    for (int i = 0; i < n; ++i) p[i] = u(rng);
    double r = nrm.norm(p);
    if (r > 1e-6) return nrm.group().dilate(radius / r, p);
  }
}

GroupPoint sample_in_ball(const BoxNorm& nrm, double radius, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double target = radius * (1.0 - u(rng));
  return sample_on_sphere(nrm, target, rng);
}

namespace {

// ||xy|| / (||x|| + ||y||) and the layer responsible for ||xy||.
std::pair<double, int> triangle_ratio(const BoxNorm& nrm, const GroupPoint& x, const GroupPoint& y) {
  auto terms = nrm.layer_terms(nrm.group().product(x, y));
  auto it = std::max_element(terms.begin(), terms.end());
  double denom = nrm.norm(x) + nrm.norm(y);
  if (denom <= 0.0) return {0.0, 1};
  return {*it / denom, static_cast<int>(it - terms.begin()) + 1};
}

constexpr double kRatioSlack = 1e-12;

struct ScanResult {
  std::size_t violations = 0;
  double worst = 0.0;
  int offending_layer = 0;
  std::vector<std::pair<double, std::pair<GroupPoint, GroupPoint>>> worst_pairs;
};

ScanResult scan(const BoxNorm& nrm, std::size_t pairs, double radius, std::uint64_t seed,
                bool stop_at_first, std::size_t keep_worst) {
  std::mt19937_64 rng(seed);
  ScanResult res;
  for (std::size_t s = 0; s < pairs; ++s) {
    GroupPoint x = sample_in_ball(nrm, radius, rng);
    GroupPoint y = sample_in_ball(nrm, radius, rng);
    auto [ratio, layer] = triangle_ratio(nrm, x, y);
    if (ratio > res.worst) res.worst = ratio;
    if (keep_worst > 0) {
      res.worst_pairs.push_back({ratio, {x, y}});
      if (res.worst_pairs.size() > 4 * keep_worst) {
        std::nth_element(res.worst_pairs.begin(), res.worst_pairs.begin() + keep_worst,
                         res.worst_pairs.end(),
                         [](const auto& a, const auto& b) { return a.first > b.first; });
        res.worst_pairs.resize(keep_worst);
      }
    }
    if (ratio > 1.0 + kRatioSlack) {
      ++res.violations;
      if (res.offending_layer == 0) res.offending_layer = layer;
      if (stop_at_first) return res;
    }
  }
  std::sort(res.worst_pairs.begin(), res.worst_pairs.end(),
            [](const auto& a, const auto& b) { return a.first > b.first; });
  if (res.worst_pairs.size() > keep_worst) res.worst_pairs.resize(keep_worst);
  return res;
}

// Local ascent on the triangle ratio from a seed pair.
std::pair<double, int> climb(const BoxNorm& nrm, GroupPoint x, GroupPoint y, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  const int n = nrm.group().dim();
  auto [best, layer] = triangle_ratio(nrm, x, y);
  double step = 0.1 * std::max(nrm.norm(x), nrm.norm(y));
  for (int it = 0; it < 3000 && step > 1e-9; ++it) {
    GroupPoint dx(n), dy(n);
    for (int i = 0; i < n; ++i) {
      dx[i] = g(rng);
      dy[i] = g(rng);
    }
    GroupPoint x2 = x + nrm.group().dilate(step, dx);
    GroupPoint y2 = y + nrm.group().dilate(step, dy);
    auto [r, l] = triangle_ratio(nrm, x2, y2);
    if (r > best) {
      best = r;
      layer = l;
      x = x2;
      y = y2;
    } else if (it % 50 == 49) {
      step *= 0.5;
    }
  }
  return {best, layer};
}

}  // namespace

TriangleScan scan_triangle_inequality(const BoxNorm& nrm, std::size_t pairs, double radius,
                                      std::uint64_t seed) {
  auto r = scan(nrm, pairs, radius, seed, false, 0);
  return {pairs, r.violations, r.worst};
}

BoxNorm calibrate_epsilons(GroupPtr group, const CalibrationOptions& opts) {
  if (group->step() > 3) throw UnsupportedStepError("calibration supports step <= 3");
  std::vector<double> eps(group->step(), 1.0);
  double last_worst = 0.0;
  for (int round = 1; round <= opts.max_rounds; ++round) {
    BoxNorm nrm(group, eps);
    auto res = scan(nrm, opts.samples, opts.box_radius, opts.seed, true, 0);
    last_worst = res.worst;
    int offending = res.offending_layer;
    if (res.violations == 0) {
      // Clean sampled pass; push harder from the worst pairs before accepting.
      auto full = scan(nrm, std::min<std::size_t>(opts.samples, 20000), opts.box_radius,
                       opts.seed ^ 0x9e3779b97f4a7c15ULL, false,
                       static_cast<std::size_t>(opts.refine_starts));
      for (std::size_t s = 0; s < full.worst_pairs.size() && offending == 0; ++s) {
        auto [r, layer] = climb(nrm, full.worst_pairs[s].second.first,
                                full.worst_pairs[s].second.second, opts.seed + s);
        last_worst = std::max(last_worst, r);
        if (r > 1.0 + kRatioSlack) offending = layer;
      }
      if (offending == 0) {
        nrm.certificate = NormCertificate{opts.seed, opts.samples, opts.box_radius, round,
                                          std::max(res.worst, full.worst)};
        return nrm;
      }
    }
    if (offending <= 1) {
      // The first layer cannot be rescaled; halve the top layer instead.
      offending = group->step();
      if (offending == 1) break;
    }
    eps[offending - 1] *= 0.5;
  }
  std::ostringstream msg;
  msg << "epsilon calibration did not converge; worst ratio " << last_worst;
  throw CalibrationError(msg.str());
}

double point_set_distance(const GroupPoint& x, std::span<const GroupPoint> a, const BoxNorm& nrm) {
  if (a.empty()) throw DomainError("distance to an empty set");
  double best = std::numeric_limits<double>::infinity();
  GroupPoint xinv = nrm.group().inverse(x);
  for (const auto& p : a) best = std::min(best, nrm.norm(nrm.group().product(xinv, p)));
  return best;
}

double hausdorff_distance(std::span<const GroupPoint> a, std::span<const GroupPoint> b,
                          const BoxNorm& nrm) {
  if (a.empty() || b.empty()) throw DomainError("Hausdorff distance of an empty set");
  double h = 0.0;
  for (const auto& x : a) h = std::max(h, point_set_distance(x, b, nrm));
  for (const auto& y : b) h = std::max(h, point_set_distance(y, a, nrm));
  return h;
}

}  // namespace carnot
