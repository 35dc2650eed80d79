#include "carnot/measures.hpp"

#include "carnot/errors.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <sstream>

namespace carnot {

void DiscreteMeasure::add(const GroupPoint& p, double m) {
  if (!(m >= 0.0)) throw DomainError("atom masses must be nonnegative");
  points.push_back(p);
  masses.push_back(m);
}

double DiscreteMeasure::total() const {
  double t = 0.0;
  for (double m : masses) t += m;
  return t;
}

double DiscreteMeasure::ball_mass(const GroupPoint& x, double r, const BoxNorm& nrm) const {
  double t = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i)
    if (nrm.distance(x, points[i]) <= r) t += masses[i];
  return t;
}

DiscreteMeasure DiscreteMeasure::restrict(const GroupPoint& x, double r, const BoxNorm& nrm) const {
  DiscreteMeasure out;
  for (std::size_t i = 0; i < points.size(); ++i)
    if (nrm.distance(x, points[i]) <= r) out.add(points[i], masses[i]);
  return out;
}

DiscreteMeasure HaarSample::measure(const GroupPoint& x, double r, double theta) const {
  const Group& g = W->group();
  const bool at_origin = x.size() == 0;
  const double m = theta * std::pow(r, h()) * cell_mass;
  DiscreteMeasure out;
  out.points.reserve(lattice.size());
  out.masses.assign(lattice.size(), m);
  for (const auto& p : lattice) {
    GroupPoint q = g.dilate(r, p);
    out.points.push_back(at_origin ? q : g.product(x, q));
  }
  return out;
}

HaarSample haar_on_subgroup(const HomogeneousSubgroup& w, const BoxNorm& nrm, double radius, int mesh) {
  if (!(radius > 0.0)) throw DomainError("haar sample radius must be positive");
  if (mesh < 1) throw ResolutionError("mesh must be positive");
  if (w.top_dim() == 0) throw DomainError("haar sample of the trivial subgroup");
  const Group& g = w.group();
  const int n = w.top_dim();
  HaarSample hs;
  hs.W = w;
  hs.radius = radius;
  hs.mesh = mesh;

  // W cap B(0,1) is the product over layers of Euclidean balls of radius eps_i^{-i}.
  double vol = 1.0;
  double cell = 1.0;
  std::vector<double> step(n), extent(n);
  for (int c = 0; c < n; ++c) {
    int layer = w.coord_layer(c);
    double rho = std::pow(1.0 / nrm.epsilon(layer), layer);
    step[c] = 2.0 * rho / mesh;
    // Enumerate at least the unit ball so the resolution test sees all of it.
    extent[c] = std::pow(std::max(radius, 1.0) / nrm.epsilon(layer), layer);
    cell *= step[c];
  }
  for (int layer = 1; layer <= g.step(); ++layer) {
    int d = w.strat_vector()[layer - 1];
    if (d == 0) continue;
    double rho = std::pow(1.0 / nrm.epsilon(layer), layer);
    double omega = std::pow(std::numbers::pi, d / 2.0) / std::tgamma(d / 2.0 + 1.0);
    vol *= omega * std::pow(rho, d);
  }
  hs.beta = 1.0 / vol;
  hs.cell_mass = hs.beta * cell;

  // Cell centres (j + 1/2) step in every intrinsic coordinate.
  std::vector<long> lo(n), hi(n), idx(n);
  for (int c = 0; c < n; ++c) {
    hi[c] = static_cast<long>(std::floor(extent[c] / step[c] - 0.5));
    lo[c] = -hi[c] - 1;
    idx[c] = lo[c];
    if (hi[c] < 0) throw ResolutionError("mesh too coarse for the requested radius");
  }
  Eigen::VectorXd coords(n);
  std::size_t in_unit = 0;
  for (;;) {
    for (int c = 0; c < n; ++c) coords[c] = (static_cast<double>(idx[c]) + 0.5) * step[c];
    GroupPoint p = w.embed(coords);
    double q = nrm.norm(p);
    if (q <= radius) hs.lattice.push_back(p);
    if (q <= 1.0) ++in_unit;
    int c = 0;
    while (c < n && ++idx[c] > hi[c]) {
      idx[c] = lo[c];
      ++c;
    }
    if (c == n) break;
  }
  if (in_unit < 100) {
    std::ostringstream msg;
    msg << "mesh " << mesh << " puts only " << in_unit << " lattice points in the unit ball (need 100)";
    throw ResolutionError(msg.str());
  }
  return hs;
}

DiscreteMeasure graded_haar(const HomogeneousSubgroup& w, const BoxNorm& nrm, const GroupPoint& a, double radius,
                            int levels, int mesh) {
  if (levels < 1) throw DomainError("graded_haar needs at least one level");
  auto unit = haar_on_subgroup(w, nrm, 1.0, mesh);
  const Group& g = w.group();
  const int h = w.hom_dim();
  DiscreteMeasure out;
  for (int j = 0; j < levels; ++j) {
    double rho = radius * std::ldexp(1.0, -j);
    double m = std::pow(rho, h) * unit.cell_mass;
    for (const auto& p : unit.lattice) {
      if (j + 1 < levels && nrm.norm(p) <= 0.5) continue;
      out.add(g.product(a, g.dilate(rho, p)), m);
    }
  }
  return out;
}

DiscreteMeasure blowup(const DiscreteMeasure& phi, const GroupPoint& x, double r, double h, const BoxNorm& nrm) {
  if (!(r > 0.0)) throw DomainError("blow-up radius must be positive");
  const Group& g = nrm.group();
  GroupPoint xinv = g.inverse(x);
  const double scale = std::pow(r, -h);
  DiscreteMeasure out;
  out.points.reserve(phi.size());
  for (std::size_t i = 0; i < phi.size(); ++i) {
    out.points.push_back(g.dilate(1.0 / r, g.product(xinv, phi.points[i])));
    out.masses.push_back(phi.masses[i] * scale);
  }
  return out;
}

namespace {

void check_decreasing(const std::vector<double>& radii) {
  for (std::size_t i = 0; i < radii.size(); ++i) {
    if (!(radii[i] > 0.0)) throw DomainError("radii must be positive");
    if (i > 0 && !(radii[i] < radii[i - 1])) throw DomainError("radii must be strictly decreasing");
  }
}

}  // namespace

std::vector<double> density_profile(const DiscreteMeasure& phi, const GroupPoint& x, double h,
                                    const std::vector<double>& radii, const BoxNorm& nrm) {
  check_decreasing(radii);
  std::vector<double> d(phi.size());
  for (std::size_t i = 0; i < phi.size(); ++i) d[i] = nrm.distance(x, phi.points[i]);
  std::vector<double> out;
  for (double r : radii) {
    double m = 0.0;
    for (std::size_t i = 0; i < d.size(); ++i)
      if (d[i] <= r) m += phi.masses[i];
    out.push_back(m / std::pow(r, h));
  }
  return out;
}

bool in_E(const DiscreteMeasure& phi, const GroupPoint& x, int theta, int gamma, double h,
          const std::vector<double>& grid, const BoxNorm& nrm) {
  if (theta < 1 || gamma < 1) throw DomainError("theta and gamma must be positive integers");
  for (double r : grid)
    if (!(r > 0.0) || !(r < 1.0 / gamma)) throw DomainError("E(theta, gamma) radii must lie in (0, 1/gamma)");
  for (double r : grid) {
    double m = phi.ball_mass(x, r, nrm);
    double rh = std::pow(r, h);
    if (m < rh / theta || m > theta * rh) return false;
  }
  return true;
}

ThetaGammaClass classify_E(const DiscreteMeasure& phi, int theta, int gamma, double h,
                           const std::vector<double>& grid, const BoxNorm& nrm) {
  ThetaGammaClass cls;
  cls.theta = theta;
  cls.gamma = gamma;
  for (std::size_t i = 0; i < phi.size(); ++i)
    if (in_E(phi, phi.points[i], theta, gamma, h, grid, nrm)) cls.members.push_back(i);
  return cls;
}

namespace {

// Transportation problem (supply >= demand) solved by successive shortest paths
// (Dijkstra on reduced costs, dense). Potentials satisfy
// pt[j] - ps[i] <= cost(i, j), with equality wherever flow is positive.
struct Transport {
  Eigen::MatrixXd cost;
  std::vector<double> supply, demand;

  Eigen::MatrixXd flow;
  std::vector<double> ps, pt;
  std::size_t augmentations = 0;
  double total_cost = 0.0;

  void solve() {
    const std::size_t m = supply.size(), n = demand.size();
    flow = Eigen::MatrixXd::Zero(m, n);
    ps.assign(m, 0.0);
    pt.assign(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) pt[j] = cost.col(j).minCoeff();
    std::vector<double> rem_s = supply, rem_t = demand;
    double scale = 0.0;
    for (double s : supply) scale += s;
    const double tiny = 1e-15 * std::max(scale, 1e-300);
    const double inf = std::numeric_limits<double>::infinity();
    const std::size_t cap = 50 * (m + n) + 1000;

    std::vector<double> ds(m), dt(n);
    std::vector<char> done_s(m), done_t(n), start(m);
    std::vector<long> pred_s(m), pred_t(n);
    for (;;) {
      bool open = false;
      for (std::size_t j = 0; j < n; ++j) open |= rem_t[j] > tiny;
      if (!open) break;
      if (++augmentations > cap) throw ToleranceError("transport: augmentation cap reached", 0.0, inf);

      std::fill(ds.begin(), ds.end(), inf);
      std::fill(dt.begin(), dt.end(), inf);
      std::fill(done_s.begin(), done_s.end(), 0);
      std::fill(done_t.begin(), done_t.end(), 0);
      std::fill(pred_s.begin(), pred_s.end(), -1);
      std::fill(pred_t.begin(), pred_t.end(), -1);
      for (std::size_t i = 0; i < m; ++i) {
        start[i] = rem_s[i] > tiny;
        if (start[i]) ds[i] = 0.0;
      }
      long target = -1;
      double dist_target = 0.0;
      for (;;) {
        double best = inf;
        long bi = -1;
        bool is_sink = false;
        for (std::size_t i = 0; i < m; ++i)
          if (!done_s[i] && ds[i] < best) best = ds[i], bi = static_cast<long>(i), is_sink = false;
        for (std::size_t j = 0; j < n; ++j)
          if (!done_t[j] && dt[j] < best) best = dt[j], bi = static_cast<long>(j), is_sink = true;
        if (bi < 0) throw ToleranceError("transport: no augmenting path", 0.0, inf);
        if (is_sink) {
          std::size_t j = static_cast<std::size_t>(bi);
          done_t[j] = 1;
          if (rem_t[j] > tiny) {
            target = bi;
            dist_target = best;
            break;
          }
          for (std::size_t i = 0; i < m; ++i) {
            if (done_s[i] || flow(i, j) <= tiny) continue;
            double rc = std::max(0.0, -(cost(i, j) + ps[i] - pt[j]));
            if (best + rc < ds[i]) ds[i] = best + rc, pred_s[i] = bi;
          }
        } else {
          std::size_t i = static_cast<std::size_t>(bi);
          done_s[i] = 1;
          for (std::size_t j = 0; j < n; ++j) {
            if (done_t[j]) continue;
            double rc = std::max(0.0, cost(i, j) + ps[i] - pt[j]);
            if (best + rc < dt[j]) dt[j] = best + rc, pred_t[j] = bi;
          }
        }
      }
      for (std::size_t i = 0; i < m; ++i) ps[i] += done_s[i] ? ds[i] : dist_target;
      for (std::size_t j = 0; j < n; ++j) pt[j] += done_t[j] ? dt[j] : dist_target;

      // Walk back to a start source and find the bottleneck.
      double push = rem_t[target];
      long j = target, i = pred_t[j];
      for (;;) {
        if (start[i] && pred_s[i] < 0) {
          push = std::min(push, rem_s[i]);
          break;
        }
        long jj = pred_s[i];
        push = std::min(push, flow(i, jj));
        i = pred_t[jj];
      }
      j = target;
      i = pred_t[j];
      for (;;) {
        flow(i, j) += push;
        if (start[i] && pred_s[i] < 0) {
          rem_s[i] -= push;
          break;
        }
        long jj = pred_s[i];
        flow(i, jj) -= push;
        if (flow(i, jj) <= tiny) flow(i, jj) = 0.0;
        j = jj;
        i = pred_t[j];
      }
      rem_t[target] -= push;
    }
    total_cost = (cost.array() * flow.array()).sum();
  }
};

struct FKProblem {
  std::vector<GroupPoint> nodes;
  std::vector<double> b;    // phi - psi
  std::vector<double> cap;  // r - d(x, p)
  Eigen::MatrixXd d;
};

FKProblem build_fk(const DiscreteMeasure& phi, const DiscreteMeasure& psi, const GroupPoint& x, double r,
                   const BoxNorm& nrm) {
  // Atoms at bit-identical positions are merged; atoms outside the open
  // ball carry f = 0 and drop out.
  auto less = [](const GroupPoint& a, const GroupPoint& b) {
    return std::lexicographical_compare(a.data(), a.data() + a.size(), b.data(), b.data() + b.size());
  };
  std::map<GroupPoint, std::pair<double, double>, decltype(less)> merged(less);
  auto collect = [&](const DiscreteMeasure& mu, double sign) {
    for (std::size_t i = 0; i < mu.size(); ++i) {
      double c = r - nrm.distance(x, mu.points[i]);
      if (c <= 0.0 || mu.masses[i] == 0.0) continue;
      auto& e = merged.try_emplace(mu.points[i], 0.0, c).first->second;
      e.first += sign * mu.masses[i];
    }
  };
  collect(phi, 1.0);
  collect(psi, -1.0);
  FKProblem pb;
  for (auto& [p, e] : merged) {
    if (e.first == 0.0) continue;
    pb.nodes.push_back(p);
    pb.b.push_back(e.first);
    pb.cap.push_back(e.second);
  }
  const std::size_t n = pb.nodes.size();
  pb.d.resize(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    pb.d(i, i) = 0.0;
    for (std::size_t j = i + 1; j < n; ++j) pb.d(i, j) = pb.d(j, i) = nrm.distance(pb.nodes[i], pb.nodes[j]);
  }
  return pb;
}

struct SignedSolve {
  double upper = 0.0, lower = 0.0;
  std::vector<double> f;
  std::size_t augmentations = 0;
};

// max sum b_i f_i over 0 <= f <= cap, f 1-Lipschitz, through its transport dual:
// sinks (b > 0) are fed from sources (b < 0) at cost d or from the zero
// level at cost cap; sources may drain to the zero level for free.
SignedSolve solve_signed(const FKProblem& pb, double sign) {
  const std::size_t n = pb.nodes.size();
  std::vector<std::size_t> src, snk;
  for (std::size_t i = 0; i < n; ++i) (sign * pb.b[i] > 0.0 ? snk : src).push_back(i);
  SignedSolve out;
  out.f.assign(n, 0.0);
  if (snk.empty()) return out;

  Transport t;
  const std::size_t m = src.size() + 1, k = snk.size() + 1;
  t.cost.resize(m, k);
  double sa = 0.0, sb = 0.0;
  for (std::size_t a = 0; a < src.size(); ++a) {
    t.supply.push_back(-sign * pb.b[src[a]]);
    sa += t.supply.back();
    for (std::size_t c = 0; c < snk.size(); ++c) t.cost(a, c) = pb.d(src[a], snk[c]);
    t.cost(a, k - 1) = 0.0;
  }
  for (std::size_t c = 0; c < snk.size(); ++c) {
    t.demand.push_back(sign * pb.b[snk[c]]);
    sb += t.demand.back();
    t.cost(m - 1, c) = pb.cap[snk[c]];
  }
  t.cost(m - 1, k - 1) = 0.0;
  // The zero level's own arc keeps positive flow, which pins its two
  // potentials together; its surplus supply absorbs rounding in the balance.
  const double slack = sa + sb;
  t.supply.push_back(sb + 2.0 * slack);
  t.demand.push_back(sa + slack);
  t.solve();
  out.upper = t.total_cost;
  out.augmentations = t.augmentations;

  const double zero = t.ps[m - 1];
  for (std::size_t a = 0; a < src.size(); ++a) out.f[src[a]] = t.ps[a] - zero;
  for (std::size_t c = 0; c < snk.size(); ++c) out.f[snk[c]] = t.pt[c] - zero;
  // Project onto the feasible set: the inf-convolution with d is 1-Lipschitz,
  // then cap and floor.
  std::vector<double> g(n);
  for (std::size_t i = 0; i < n; ++i) {
    double v = out.f[i];
    for (std::size_t j = 0; j < n; ++j) v = std::min(v, out.f[j] + pb.d(i, j));
    g[i] = std::max(0.0, std::min(v, pb.cap[i]));
  }
  out.f = g;
  for (std::size_t i = 0; i < n; ++i) out.lower += sign * pb.b[i] * g[i];
  return out;
}

}  // namespace

FKSolution F_K_solve(const DiscreteMeasure& phi, const DiscreteMeasure& psi, const GroupPoint& x, double r,
                     const BoxNorm& nrm) {
  if (!(r > 0.0)) throw DomainError("F_K needs a positive radius");
  auto pb = build_fk(phi, psi, x, r, nrm);
  FKSolution sol;
  sol.nodes = pb.nodes;
  if (pb.nodes.empty()) return sol;
  auto plus = solve_signed(pb, 1.0);
  auto minus = solve_signed(pb, -1.0);
  const auto& best = plus.lower >= minus.lower ? plus : minus;
  sol.augmentations = plus.augmentations + minus.augmentations;
  sol.lower = std::max(plus.lower, minus.lower);
  sol.upper = std::max(plus.upper, minus.upper);
  sol.f = best.f;
  sol.value = sol.lower;
  double mass = 0.0;
  for (double b : pb.b) mass += std::abs(b);
  const double tol = 1e-6 + 1e-9 * mass * r;
  if (plus.upper - plus.lower > tol || minus.upper - minus.lower > tol) {
    std::ostringstream msg;
    msg << "F_K duality gap not closed: [" << sol.lower << ", " << sol.upper << "]";
    throw ToleranceError(msg.str(), sol.lower, sol.upper);
  }
  return sol;
}

double F_K(const DiscreteMeasure& phi, const DiscreteMeasure& psi, const GroupPoint& x, double r,
           const BoxNorm& nrm) {
  return F_K_solve(phi, psi, x, r, nrm).value;
}

double flat_defect(const DiscreteMeasure& phi, const GroupPoint& x, double r, const HaarSample& haar,
                   double theta, const BoxNorm& nrm) {
  return F_K(phi, haar.measure(x, r, theta), x, r, nrm) / std::pow(r, haar.h() + 1);
}

namespace {

struct Minimum {
  double arg = 0.0;
  double value = 0.0;
};

// Golden-section search for a convex function on [lo, hi], endpoints and
// the hint included.
Minimum golden(const std::function<double(double)>& f, double lo, double hi, int iterations,
               std::optional<double> hint = std::nullopt) {
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  Minimum best{lo, f(lo)};
  auto consider = [&](double t, double v) {
    if (v < best.value) best = {t, v};
  };
  consider(hi, f(hi));
  if (hint && *hint > 0.0) consider(*hint, f(*hint));
  double a = lo, b = hi;
  double c = b - phi * (b - a), d = a + phi * (b - a);
  double fc = f(c), fd = f(d);
  consider(c, fc);
  consider(d, fd);
  for (int it = 0; it < iterations; ++it) {
    if (fc <= fd) {
      b = d, d = c, fd = fc;
      c = b - phi * (b - a);
      fc = f(c);
      consider(c, fc);
    } else {
      a = c, c = d, fc = fd;
      d = a + phi * (b - a);
      fd = f(d);
      consider(d, fd);
    }
  }
  return best;
}

// Theta bracket from the density profile at r 2^-j, j = 0..3.
std::pair<double, double> theta_bracket(const DiscreteMeasure& phi, const GroupPoint& x, double r, double h,
                                        const BoxNorm& nrm, std::vector<std::string>& warnings) {
  auto dens = density_profile(phi, x, h, {r, r / 2, r / 4, r / 8}, nrm);
  double lo = *std::min_element(dens.begin(), dens.end());
  double hi = *std::max_element(dens.begin(), dens.end());
  if (!(lo > 0.0)) {
    warnings.push_back("empty density bracket; Theta searched on [1e-6, 1e3]");
    return {1e-6, 1e3};
  }
  return {0.5 * lo, 2.0 * hi};
}

// Theta matching the mass of phi to the candidate's inside the open ball;
// exact for a flat measure sampled on the candidate's own lattice.
std::optional<double> mass_ratio(const DiscreteMeasure& local, const GroupPoint& x, double r, const HaarSample& haar,
                                 const BoxNorm& nrm) {
  auto cand = haar.measure(x, r);
  double a = 0.0, b = 0.0;
  for (std::size_t i = 0; i < local.size(); ++i)
    if (nrm.distance(x, local.points[i]) < r) a += local.masses[i];
  for (std::size_t i = 0; i < cand.size(); ++i)
    if (nrm.distance(x, cand.points[i]) < r) b += cand.masses[i];
  if (!(a > 0.0) || !(b > 0.0)) return std::nullopt;
  return a / b;
}

}  // namespace

DFlatResult d_flat(const DiscreteMeasure& phi, const GroupPoint& x, double r, double h,
                   const std::vector<HomogeneousSubgroup>& candidates, const BoxNorm& nrm,
                   const DFlatOptions& opts) {
  if (candidates.empty()) throw DomainError("d_flat needs at least one candidate subgroup");
  if (!(r > 0.0)) throw DomainError("d_flat needs a positive radius");
  for (const auto& w : candidates)
    if (w.hom_dim() != static_cast<int>(std::lround(h)))
      throw DomainError("candidate homogeneous dimension differs from h");
  DFlatResult res;
  res.value = std::numeric_limits<double>::infinity();
  std::pair<double, double> bracket{1.0, 1.0};
  if (!opts.theta) bracket = theta_bracket(phi, x, r, h, nrm, res.warnings);
  auto local = phi.restrict(x, r, nrm);
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    auto haar = haar_on_subgroup(candidates[c], nrm, 1.0, opts.mesh);
    auto f = [&](double theta) { return flat_defect(local, x, r, haar, theta, nrm); };
    Minimum m = opts.theta ? Minimum{*opts.theta, f(*opts.theta)}
                           : golden(f, bracket.first, bracket.second, opts.iterations,
                                    mass_ratio(local, x, r, haar, nrm));
    res.per_candidate.push_back(m.value);
    if (m.value < res.value) {
      res.value = m.value;
      res.best = c;
      res.theta = m.arg;
    }
  }
  return res;
}

double delta_G(double theta, double h) { return std::pow(2.0, -(4.0 * h + 5.0)) / theta; }

double C1(double theta, double h) { return std::pow(2.0, 1.0 + 1.0 / (h + 1.0)) * std::pow(theta, 1.0 / (h + 1.0)); }

double eta(double h) { return 1.0 / (h + 1.0); }

double C4(double theta, double h) {
  const double e = eta(h);
  return std::pow(e * std::pow(1.0 - e, h) / (32.0 * theta), h + 2.0);
}

namespace {

void common_premises(const DiscreteMeasure& phi, const GroupPoint& x, const HomogeneousSubgroup& v,
                     const TrapParams& p, const BoxNorm& nrm, TrapReport& rep) {
  if (v.hom_dim() != static_cast<int>(std::lround(p.h)))
    rep.failed_premises.push_back("h differs from the homogeneous dimension of V");
  if (!(p.r > 0.0) || !(p.r < 1.0 / p.gamma)) rep.failed_premises.push_back("r < 1/gamma fails");
  if (p.grid.empty()) rep.failed_premises.push_back("empty radius grid for E(theta, gamma)");
  else if (!in_E(phi, x, p.theta, p.gamma, p.h, p.grid, nrm))
    rep.failed_premises.push_back("x is not in E(theta, gamma) on the radius grid");
}

}  // namespace

TrapReport cone_trap_check(const DiscreteMeasure& phi, const GroupPoint& x, const HomogeneousSubgroup& v,
                           const TrapParams& p, const BoxNorm& nrm) {
  TrapReport rep;
  common_premises(phi, x, v, p, nrm, rep);
  if (!(p.delta > 0.0) || !(p.delta < delta_G(p.theta, p.h)))
    rep.failed_premises.push_back("delta < delta_G fails");
  rep.bound = C1(p.theta, p.h) * std::pow(p.delta, 1.0 / (p.h + 1.0)) * p.r;

  if (p.r > 0.0 && v.hom_dim() == static_cast<int>(std::lround(p.h))) {
    DFlatOptions opt;
    opt.mesh = p.mesh;
    opt.theta = p.Theta;
    auto df = d_flat(phi, x, p.r, p.h, {v}, nrm, opt);
    rep.Theta = df.theta;
    rep.F = df.value * std::pow(p.r, p.h + 1.0);
    if (!(rep.F <= 2.0 * p.delta * std::pow(p.r, p.h + 1.0)))
      rep.failed_premises.push_back("F_{x,r}(phi, Theta Haar(xV)) <= 2 delta r^{h+1} fails");
  }
  rep.premises = rep.failed_premises.empty();
  if (!rep.premises) return rep;

  const Group& g = v.group();
  GroupPoint xinv = g.inverse(x);
  for (std::size_t i = 0; i < phi.size(); ++i) {
    const GroupPoint& w = phi.points[i];
    if (nrm.distance(x, w) > p.r / 4.0) continue;
    if (!in_E(phi, w, p.theta, p.gamma, p.h, p.grid, nrm)) continue;
    ++rep.checked;
    double d = dist_to_subgroup(g.product(xinv, w), v, nrm).hi;
    rep.worst = std::max(rep.worst, d);
    if (d > rep.bound) ++rep.violations;
  }
  return rep;
}

TrapReport ball_hit_check(const DiscreteMeasure& phi, const DiscreteMeasure& phi_k, const GroupPoint& x,
                          const HomogeneousSubgroup& v, const TrapParams& p, const BoxNorm& nrm) {
  TrapReport rep;
  common_premises(phi, x, v, p, nrm, rep);
  if (!(p.delta > 0.0) || !(p.delta < C4(p.theta, p.h))) rep.failed_premises.push_back("delta < C_4 fails");
  rep.bound = std::pow(p.delta, 1.0 / (p.h + 2.0)) * p.r;
  if (!(p.r > 0.0) || v.hom_dim() != static_cast<int>(std::lround(p.h))) {
    rep.premises = false;
    return rep;
  }

  auto haar = haar_on_subgroup(v, nrm, 1.0, p.mesh);
  auto local = phi.restrict(x, p.r, nrm);
  auto local_k = phi_k.restrict(x, p.r, nrm);
  auto both = [&](double theta) {
    return flat_defect(local_k, x, p.r, haar, theta, nrm) + flat_defect(local, x, p.r, haar, theta, nrm);
  };
  Minimum m;
  if (p.Theta) {
    m = {*p.Theta, both(*p.Theta)};
  } else {
    std::vector<std::string> warnings;
    auto br = theta_bracket(phi, x, p.r, p.h, nrm, warnings);
    m = golden(both, br.first, br.second, 48, mass_ratio(local, x, p.r, haar, nrm));
  }
  rep.Theta = m.arg;
  rep.F = m.value * std::pow(p.r, p.h + 1.0);
  if (!(rep.F <= 2.0 * p.delta * std::pow(p.r, p.h + 1.0)))
    rep.failed_premises.push_back("F(phi|K) + F(phi) <= 2 delta r^{h+1} fails");
  rep.premises = rep.failed_premises.empty();
  if (!rep.premises) return rep;

  const Group& g = v.group();
  rep.worst = std::numeric_limits<double>::infinity();
  for (const auto& q : haar.lattice) {
    if (nrm.norm(q) > 0.5) continue;
    GroupPoint w = g.product(x, g.dilate(p.r, q));
    ++rep.checked;
    double mass = phi_k.ball_mass(w, rep.bound, nrm);
    rep.worst = std::min(rep.worst, mass);
    if (!(mass > 0.0)) ++rep.violations;
  }
  return rep;
}

}  // namespace carnot
