#include "carnot/cones.hpp"

#include "carnot/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace carnot {

const char* to_string(ConeMembership m) {
  switch (m) {
    case ConeMembership::In: return "in";
    case ConeMembership::Out: return "out";
    default: return "unknown";
  }
}

ConeSpec::ConeSpec(HomogeneousSubgroup v, double a, std::shared_ptr<const SplittingPair> sp)
    : V(std::move(v)), alpha(a), split(std::move(sp)) {
  if (!(alpha >= 0.0)) throw DomainError("cone opening must be nonnegative");
}

namespace {

struct ConeEval {
  ConeMembership m = ConeMembership::Unknown;
  double ratio_hi = 0.0;  // best known upper bound on dist(w, V) / ||w||
  bool exact = false;     // ratio_hi came from the full minimisation
};

// Cheap witnesses first (w itself when it lies in V, P_V(w), the layerwise
// orthogonal projection), then the sandwich lower bound, and only then the
// multi-start minimisation.
ConeEval evaluate(const GroupPoint& w, const ConeSpec& cone, const BoxNorm& nrm, bool force_full) {
  ConeEval ev;
  const double n = nrm.norm(w);
  if (n == 0.0 || cone.V.contains(w, 1e-12)) {
    ev.m = ConeMembership::In;
    ev.exact = true;
    return ev;
  }
  const double bound = cone.alpha * n;
  double hi = nrm.distance(w, cone.V.orthogonal_projection(w));
  double lo = 0.0;
  if (cone.split) {
    double pl = nrm.norm(cone.split->project(w).second);
    hi = std::min(hi, pl);
    if (cone.split->c_split) lo = *cone.split->c_split * pl;
  }
  ev.ratio_hi = hi / n;
  if (!force_full) {
    if (hi <= bound) {
      ev.m = ConeMembership::In;
      return ev;
    }
    if (lo > bound) {
      ev.m = ConeMembership::Out;
      return ev;
    }
  }
  DistOptions opt;
  opt.complement = cone.split.get();
  Interval d = dist_to_subgroup(w, cone.V, nrm, opt);
  hi = std::min(hi, d.hi);
  lo = std::min(std::max(lo, d.lo), hi);
  ev.ratio_hi = hi / n;
  ev.exact = true;
  if (hi <= bound)
    ev.m = ConeMembership::In;
  else if (lo > bound)
    ev.m = ConeMembership::Out;
  else
    ev.m = ConeMembership::Unknown;
  return ev;
}

}  // namespace

ConeMembership in_cone(const GroupPoint& w, const ConeSpec& cone, const BoxNorm& nrm) {
  return evaluate(w, cone, nrm, false).m;
}

ConeSetReport is_cone_set(std::span<const GroupPoint> e, const ConeSpec& cone, const BoxNorm& nrm,
                          ConeCheckMode mode) {
  ConeSetReport rep;
  const Group& g = cone.V.group();
  struct Cand {
    double ratio;
    std::size_t i, j;
  };
  std::vector<Cand> top;
  for (std::size_t i = 0; i < e.size(); ++i) {
    GroupPoint pinv = g.inverse(e[i]);
    for (std::size_t j = 0; j < e.size(); ++j) {
      if (i == j) continue;
      ++rep.pairs;
      auto ev = evaluate(g.product(pinv, e[j]), cone, nrm, false);
      if (ev.m == ConeMembership::Out) ++rep.out;
      if (ev.m == ConeMembership::Unknown) ++rep.unknown;
      top.push_back({ev.ratio_hi, i, j});
      if (top.size() > 64) {
        std::nth_element(top.begin(), top.begin() + 8, top.end(),
                         [](const Cand& a, const Cand& b) { return a.ratio > b.ratio; });
        top.resize(8);
      }
    }
  }
  // Sharpen the ratio on the leading candidates with the full minimisation.
  std::sort(top.begin(), top.end(), [](const Cand& a, const Cand& b) { return a.ratio > b.ratio; });
  if (top.size() > 8) top.resize(8);
  for (auto& c : top) {
    auto ev = evaluate(g.product(g.inverse(e[c.i]), e[c.j]), cone, nrm, true);
    c.ratio = std::min(c.ratio, ev.ratio_hi);
  }
  if (!top.empty()) {
    auto it = std::max_element(top.begin(), top.end(), [](const Cand& a, const Cand& b) { return a.ratio < b.ratio; });
    rep.worst_pair = std::make_pair(it->i, it->j);
    rep.worst_ratio = it->ratio;
  }
  rep.pass = rep.out == 0 && (mode == ConeCheckMode::Exploratory || rep.unknown == 0);
  return rep;
}

double frak_c(double alpha, double c_split) {
  if (!(alpha >= 0.0) || !(alpha < c_split)) throw DomainError("c(alpha) needs 0 <= alpha < c_split");
  return alpha / (c_split - alpha);
}

double frak_D(double alpha, double c_split) {
  double c = frak_c(alpha, c_split);
  return (1.0 - c) / (1.0 + c);
}

namespace {

Eigen::VectorXd random_coords(const HomogeneousSubgroup& w, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::VectorXd c(w.top_dim());
  for (int i = 0; i < w.top_dim(); ++i) c[i] = u(rng);
  return c;
}

// Point of W with norm exactly r (W nontrivial).
GroupPoint on_subgroup_sphere(const HomogeneousSubgroup& w, const BoxNorm& nrm, double r, std::mt19937_64& rng) {
  for (;;) {
    GroupPoint p = w.embed(random_coords(w, rng));
    double n = nrm.norm(p);
    if (n > 1e-6) return w.group().dilate(r / n, p);
  }
}

}  // namespace

ConeInclusionReport cone_inclusion_check(const HomogeneousSubgroup& w1, const HomogeneousSubgroup& w2,
                                         double alpha, double eps, int resolution, const BoxNorm& nrm,
                                         std::size_t samples_per_radius, std::uint64_t seed) {
  if (w1.top_dim() == 0) throw DomainError("cone_inclusion_check needs a nontrivial W1");
  ConeInclusionReport rep;
  rep.grassmannian = grassmannian_distance(w1, w2, nrm, resolution);
  if (!(rep.grassmannian.hi < eps / 4.0)) {
    std::ostringstream msg;
    msg << "grassmannian distance upper bound " << rep.grassmannian.hi << " is not below eps/4 = " << eps / 4.0;
    throw PreconditionError(msg.str());
  }
  const Group& g = w1.group();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ConeSpec source(w1, alpha);
  ConeSpec target(w2, alpha + eps);
  for (double radius : {0.5, 1.0, 2.0}) {
    for (std::size_t s = 0; s < samples_per_radius; ++s) {
      // v . e with ||e|| <= alpha/(1+alpha) ||v|| is in C_{W1}(alpha), witnessed by v.
      GroupPoint v = on_subgroup_sphere(w1, nrm, 1.0, rng);
      GroupPoint w = v;
      if (alpha > 0.0) {
        GroupPoint e = sample_on_sphere(nrm, u(rng) * alpha / (1.0 + alpha), rng);
        w = g.product(v, e);
        if (in_cone(w, source, nrm) != ConeMembership::In) continue;
      }
      w = g.dilate(radius / nrm.norm(w), w);
      ++rep.tested;
      auto m = in_cone(w, target, nrm);
      if (m == ConeMembership::Out) ++rep.violations;
      if (m == ConeMembership::Unknown) ++rep.unknown;
    }
  }
  rep.pass = rep.violations == 0 && rep.unknown == 0 && rep.tested > 0;
  return rep;
}

InclusionReport projection_inclusion_check(const SplittingPair& sp, double alpha, const BoxNorm& nrm,
                                           std::size_t samples, std::uint64_t seed) {
  const double c = sp.c_split_or_throw();
  InclusionReport rep;
  rep.frak_c = frak_c(alpha, c);
  const double outer = 1.0 / (1.0 - rep.frak_c);
  const Group& g = sp.group();
  auto split = std::make_shared<const SplittingPair>(sp);
  ConeSpec cone(sp.V(), alpha, split);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);

  const std::size_t inner_n = samples / 2;
  for (std::size_t s = 0; s < inner_n; ++s) {
    // Each v in B(0,1) cap V is its own preimage: v in C_V(alpha), P_V(v) = v.
    GroupPoint v = on_subgroup_sphere(sp.V(), nrm, 1.0 - u(rng), rng);
    ++rep.tested_inner;
    bool ok = nrm.norm(v) <= 1.0 + 1e-12 && in_cone(v, cone, nrm) == ConeMembership::In &&
              (sp.project(v).first - v).norm() <= 1e-9 * std::max(1.0, v.norm());
    if (!ok) ++rep.inner_violations;
  }
  const bool has_l = sp.L().top_dim() > 0;
  while (rep.tested_outer < samples - inner_n) {
    // v . l with ||l|| near the cone boundary, pushed to the sphere half the time.
    GroupPoint v = on_subgroup_sphere(sp.V(), nrm, 1.0, rng);
    GroupPoint w = v;
    if (has_l) {
      GroupPoint l = on_subgroup_sphere(sp.L(), nrm, u(rng) * 2.0 * alpha / c, rng);
      w = g.product(v, l);
    }
    double r = (rep.tested_outer % 2 == 0) ? 1.0 : 1.0 - u(rng);
    w = g.dilate(r / nrm.norm(w), w);
    if (in_cone(w, cone, nrm) != ConeMembership::In) continue;
    ++rep.tested_outer;
    if (nrm.norm(sp.project(w).first) > outer + 1e-12) ++rep.outer_violations;
  }
  return rep;
}

GroupPoint IntrinsicGraph::point(std::size_t i) const { return sp->group().product(base[i], values[i]); }

std::vector<GroupPoint> IntrinsicGraph::points() const {
  std::vector<GroupPoint> out;
  out.reserve(base.size());
  for (std::size_t i = 0; i < base.size(); ++i) out.push_back(point(i));
  return out;
}

std::optional<std::size_t> IntrinsicGraph::find_base(const GroupPoint& a, double tol) const {
  std::optional<std::size_t> best;
  double best_d = tol;
  for (std::size_t i = 0; i < base.size(); ++i) {
    double d = (base[i] - a).norm();
    if (d <= best_d) {
      best_d = d;
      best = i;
    }
  }
  return best;
}

IntrinsicGraph extract_graph(std::span<const GroupPoint> gamma, std::shared_ptr<const SplittingPair> sp,
                             double alpha, const BoxNorm& nrm) {
  if (!sp) throw PreconditionError("extract_graph needs a splitting");
  if (!sp->eps1) throw PreconditionError("extract_graph needs c_split / eps1 to be estimated");
  if (alpha > *sp->eps1) {
    std::ostringstream msg;
    msg << "alpha = " << alpha << " exceeds eps1 = " << *sp->eps1;
    throw PreconditionError(msg.str());
  }
  ConeSpec cone(sp->V(), alpha, sp);
  auto rep = is_cone_set(gamma, cone, nrm, ConeCheckMode::Certify);
  if (!rep.pass) {
    std::ostringstream msg;
    msg << "point set is not a certified C_V(" << alpha << ")-set: " << rep.out << " out, " << rep.unknown
        << " unknown of " << rep.pairs << " pairs";
    throw PreconditionError(msg.str());
  }
  IntrinsicGraph graph;
  graph.sp = sp;
  graph.alpha = alpha;
  for (const auto& p : gamma) {
    auto [v, l] = sp->project(p);
    graph.base.push_back(v);
    graph.values.push_back(l);
  }
  for (std::size_t i = 0; i < graph.base.size(); ++i)
    for (std::size_t j = i + 1; j < graph.base.size(); ++j)
      if ((graph.base[i] - graph.base[j]).norm() <= 1e-9) {
        std::ostringstream msg;
        msg << "points " << i << " and " << j
            << " share a base point; the c_split estimate is too large for this set";
        throw InjectivityError(msg.str());
      }
  return graph;
}

TranslatedGraph translate_function(const IntrinsicGraph& graph, const GroupPoint& q,
                                   std::span<const GroupPoint> targets) {
  const Group& g = graph.sp->group();
  TranslatedGraph out;
  out.graph.sp = graph.sp;
  out.graph.alpha = graph.alpha;
  GroupPoint qinv = g.inverse(q);
  for (const auto& a : targets) {
    if (!graph.sp->V().contains(a, 1e-9)) throw DomainError("translation target is not a point of V");
    auto [yv, yl] = graph.sp->project(g.product(qinv, a));
    auto hit = graph.find_base(yv, 1e-6);
    if (!hit) {
      ++out.dropped;
      continue;
    }
    out.graph.base.push_back(a);
    out.graph.values.push_back(g.product(g.inverse(yl), graph.values[*hit]));
  }
  if (out.graph.base.empty()) throw EmptyTranslationError("no translated sample matched a base point");
  return out;
}

TranslatedGraph translate_function(const IntrinsicGraph& graph, const GroupPoint& q) {
  const Group& g = graph.sp->group();
  std::vector<GroupPoint> targets;
  targets.reserve(graph.size());
  for (std::size_t i = 0; i < graph.size(); ++i)
    targets.push_back(graph.sp->V().orthogonal_projection(graph.sp->project(g.product(q, graph.point(i))).first));
  return translate_function(graph, q, targets);
}

std::vector<GroupPoint> multiscale_base_points(const HomogeneousSubgroup& v, const BoxNorm& nrm,
                                               const std::vector<double>& radii, double k, int resolution) {
  auto lat = unit_ball_lattice(v, nrm, resolution);
  // The origin first (even resolutions miss it); dyadic scales of an odd
  // lattice repeat points, which are kept once.
  std::vector<GroupPoint> out{GroupPoint::Zero(v.group().dim())};
  for (double r : radii)
    for (const auto& p : lat.points) {
      GroupPoint q = v.group().dilate(r * k, p);
      bool seen = std::any_of(out.begin(), out.end(), [&](const GroupPoint& o) {
        return (o - q).norm() <= 1e-12 * std::max(1.0, q.norm());
      });
      if (!seen) out.push_back(q);
    }
  return out;
}

double spearman_rho(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw StructuralError("spearman: length mismatch");
  const std::size_t n = x.size();
  if (n < 2) return 0.0;
  auto ranks = [n](const std::vector<double>& v) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(n);
    for (std::size_t i = 0; i < n;) {
      std::size_t j = i;
      while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
      double avg = 0.5 * static_cast<double>(i + j) + 1.0;
      for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  auto rx = ranks(x), ry = ranks(y);
  double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

FlatnessProfile flatness_profile(const IntrinsicGraph& graph, const GroupPoint& a0,
                                 const HomogeneousSubgroup& candidate, const std::vector<double>& radii,
                                 double k, const BoxNorm& nrm, const FlatnessOptions& opts) {
  if (!(k > 0.0)) throw DomainError("window radius must be positive");
  for (std::size_t i = 0; i < radii.size(); ++i) {
    if (!(radii[i] > 0.0)) throw DomainError("radii must be positive");
    if (i > 0 && !(radii[i] < radii[i - 1])) throw DomainError("radii must be strictly decreasing");
  }
  auto idx = graph.find_base(a0, 1e-6);
  if (!idx) throw PreconditionError("a0 is not among the base points");
  const Group& g = candidate.group();
  GroupPoint p0inv = g.inverse(graph.point(*idx));
  std::vector<GroupPoint> rel;
  std::vector<double> rel_norm;
  for (std::size_t i = 0; i < graph.size(); ++i) {
    rel.push_back(g.product(p0inv, graph.point(i)));
    rel_norm.push_back(nrm.norm(rel.back()));
  }

  auto scaled_lattice = [&](int res) {
    auto lat = unit_ball_lattice(candidate, nrm, res);
    for (auto& p : lat.points) p = g.dilate(k, p);
    return lat.points;
  };
  auto lattice = scaled_lattice(opts.resolution);
  auto fine = scaled_lattice(2 * opts.resolution - 1);

  FlatnessProfile prof;
  prof.radii = radii;
  prof.floor = hausdorff_distance(lattice, fine, nrm);
  std::vector<double> steps, vals;
  std::vector<GroupPoint> blown(rel.size());
  for (std::size_t s = 0; s < radii.size(); ++s) {
    const double r = radii[s];
    // Windowed Hausdorff distance: points of either set inside B(0,k) are
    // measured against the whole other set, so samples pushed just past the
    // sphere do not open spurious gaps at the boundary.
    std::size_t count = 0;
    double side_graph = 0.0;
    for (std::size_t i = 0; i < rel.size(); ++i) {
      blown[i] = g.dilate(1.0 / r, rel[i]);
      if (rel_norm[i] > r * k * (1.0 + 1e-12)) continue;
      ++count;
      double d = nrm.distance(blown[i], candidate.orthogonal_projection(blown[i]));
      if (d > side_graph) d = dist_to_subgroup(blown[i], candidate, nrm).hi;
      side_graph = std::max(side_graph, d);
    }
    prof.window_counts.push_back(count);
    if (count < opts.min_window_points) {
      prof.values.push_back(std::numeric_limits<double>::quiet_NaN());
      prof.insufficient.push_back(true);
      continue;
    }
    double side_plane = 0.0;
    for (const auto& b : lattice) side_plane = std::max(side_plane, point_set_distance(b, blown, nrm));
    double v = std::max(side_graph, side_plane);
    prof.values.push_back(v);
    prof.insufficient.push_back(false);
    steps.push_back(static_cast<double>(s));
    vals.push_back(v);
  }
  prof.spearman = spearman_rho(steps, vals);
  return prof;
}

}  // namespace carnot
