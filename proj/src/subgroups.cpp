#include "carnot/subgroups.hpp"

#include "carnot/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

namespace carnot {

namespace {

constexpr double kRankTol = 1e-10;
constexpr double kClosureTol = 1e-10;

Eigen::MatrixXd orthonormalize(const Eigen::MatrixXd& m) {
  if (m.cols() == 0) return Eigen::MatrixXd(m.rows(), 0);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeThinU);
  const auto& s = svd.singularValues();
  double cut = kRankTol * std::max(1.0, s.size() ? s[0] : 0.0);
  Eigen::Index rank = 0;
  while (rank < s.size() && s[rank] > cut) ++rank;
  return svd.matrixU().leftCols(rank);
}

GroupPoint project_onto(const Group& g, const std::vector<Eigen::MatrixXd>& bases, const GroupPoint& p) {
  const auto& alg = g.algebra();
  GroupPoint out = GroupPoint::Zero(p.size());
  for (int l = 1; l <= alg.step(); ++l) {
    const auto& b = bases[l - 1];
    if (b.cols() == 0) continue;
    auto seg = p.segment(alg.layer_offset(l), alg.layer_size(l));
    out.segment(alg.layer_offset(l), alg.layer_size(l)) = b * (b.transpose() * seg);
  }
  return out;
}

std::vector<Eigen::MatrixXd> normalize_bases(const Group& g, std::vector<Eigen::MatrixXd> bases) {
  const auto& alg = g.algebra();
  if (static_cast<int>(bases.size()) > alg.step())
    throw StructuralError("subgroup has more layers than the group");
  bases.resize(alg.step());
  for (int l = 1; l <= alg.step(); ++l) {
    auto& b = bases[l - 1];
    if (b.size() == 0) b = Eigen::MatrixXd(alg.layer_size(l), 0);
    if (b.rows() != alg.layer_size(l)) {
      std::ostringstream msg;
      msg << "layer " << l << " basis has " << b.rows() << " rows, expected " << alg.layer_size(l);
      throw StructuralError(msg.str());
    }
    b = orthonormalize(b);
  }
  return bases;
}

double closure_residual(const Group& g, const std::vector<Eigen::MatrixXd>& bases) {
  const auto& alg = g.algebra();
  std::vector<GroupPoint> vecs;
  for (int l = 1; l <= alg.step(); ++l)
    for (Eigen::Index c = 0; c < bases[l - 1].cols(); ++c) {
      GroupPoint v = GroupPoint::Zero(alg.total_dim());
      v.segment(alg.layer_offset(l), alg.layer_size(l)) = bases[l - 1].col(c);
      vecs.push_back(v);
    }
  double res = 0.0;
  for (std::size_t a = 0; a < vecs.size(); ++a)
    for (std::size_t b = a + 1; b < vecs.size(); ++b) {
      AlgebraElement br = alg.bracket(vecs[a], vecs[b]);
      res = std::max(res, (br - project_onto(g, bases, br)).norm());
    }
  return res;
}

}  // namespace

HomogeneousSubgroup::HomogeneousSubgroup(GroupPtr group, std::vector<Eigen::MatrixXd> layer_bases)
    : group_(std::move(group)) {
  if (!group_) throw StructuralError("subgroup needs a group");
  bases_ = normalize_bases(*group_, std::move(layer_bases));
  double res = closure_residual(*group_, bases_);
  if (res >= kClosureTol) {
    std::ostringstream msg;
    msg << "span is not bracket-closed (residual " << res << ")";
    throw StructuralError(msg.str());
  }
  for (int l = 1; l <= group_->step(); ++l) {
    for (Eigen::Index c = 0; c < bases_[l - 1].cols(); ++c) coord_layer_.push_back(l);
    top_dim_ += static_cast<int>(bases_[l - 1].cols());
  }
}

HomogeneousSubgroup HomogeneousSubgroup::from_vectors(GroupPtr group,
                                                      const std::vector<GroupPoint>& vectors) {
  const auto& alg = group->algebra();
  std::vector<std::vector<Eigen::VectorXd>> per_layer(alg.step());
  for (const auto& v : vectors) {
    if (v.size() != alg.total_dim()) throw StructuralError("spanning vector has wrong length");
    int home = 0;
    for (int l = 1; l <= alg.step(); ++l) {
      if (v.segment(alg.layer_offset(l), alg.layer_size(l)).cwiseAbs().maxCoeff() == 0.0) continue;
      if (home != 0) throw StructuralError("spanning vector mixes layers");
      home = l;
    }
    if (home == 0) continue;
    per_layer[home - 1].push_back(v.segment(alg.layer_offset(home), alg.layer_size(home)));
  }
  std::vector<Eigen::MatrixXd> bases(alg.step());
  for (int l = 1; l <= alg.step(); ++l) {
    const auto& vs = per_layer[l - 1];
    Eigen::MatrixXd m(alg.layer_size(l), static_cast<Eigen::Index>(vs.size()));
    for (std::size_t c = 0; c < vs.size(); ++c) m.col(static_cast<Eigen::Index>(c)) = vs[c];
    bases[l - 1] = m;
  }
  return HomogeneousSubgroup(std::move(group), std::move(bases));
}

std::vector<int> HomogeneousSubgroup::strat_vector() const {
  std::vector<int> s;
  for (const auto& b : bases_) s.push_back(static_cast<int>(b.cols()));
  return s;
}

int HomogeneousSubgroup::hom_dim() const {
  int h = 0;
  for (std::size_t l = 0; l < bases_.size(); ++l) h += static_cast<int>(l + 1) * static_cast<int>(bases_[l].cols());
  return h;
}

GroupPoint HomogeneousSubgroup::embed(const Eigen::VectorXd& coords) const {
  if (coords.size() != top_dim_) throw StructuralError("subgroup coordinates have wrong length");
  const auto& alg = group_->algebra();
  GroupPoint p = GroupPoint::Zero(alg.total_dim());
  Eigen::Index off = 0;
  for (int l = 1; l <= alg.step(); ++l) {
    const auto& b = bases_[l - 1];
    if (b.cols() > 0) p.segment(alg.layer_offset(l), alg.layer_size(l)) = b * coords.segment(off, b.cols());
    off += b.cols();
  }
  return p;
}

Eigen::VectorXd HomogeneousSubgroup::coordinates(const GroupPoint& p) const {
  const auto& alg = group_->algebra();
  Eigen::VectorXd c(top_dim_);
  Eigen::Index off = 0;
  for (int l = 1; l <= alg.step(); ++l) {
    const auto& b = bases_[l - 1];
    if (b.cols() > 0)
      c.segment(off, b.cols()) = b.transpose() * p.segment(alg.layer_offset(l), alg.layer_size(l));
    off += b.cols();
  }
  return c;
}

GroupPoint HomogeneousSubgroup::orthogonal_projection(const GroupPoint& p) const {
  return project_onto(*group_, bases_, p);
}

bool HomogeneousSubgroup::contains(const GroupPoint& p, double tol) const {
  return (p - orthogonal_projection(p)).norm() <= tol * std::max(1.0, p.norm());
}

std::vector<double> HomogeneousSubgroup::unit_ball_layer_radii(const BoxNorm& nrm) {
  std::vector<double> r;
  for (int l = 1; l <= nrm.group().step(); ++l) r.push_back(std::pow(nrm.epsilon(l), -l));
  return r;
}

SubgroupCheck is_subgroup(const Group& group, const std::vector<Eigen::MatrixXd>& layer_bases) {
  auto bases = normalize_bases(group, layer_bases);
  double res = closure_residual(group, bases);
  return {res < kClosureTol, res};
}

ComplementReport verify_complement(const HomogeneousSubgroup& v, const HomogeneousSubgroup& l) {
  ComplementReport rep;
  const auto& alg = v.group().algebra();
  if (v.group().dim() != l.group().dim()) throw StructuralError("subgroups of different groups");
  bool all = true;
  bool meet_trivial = true;
  for (int k = 1; k <= alg.step(); ++k) {
    const auto& bv = v.basis(k);
    const auto& bl = l.basis(k);
    Eigen::MatrixXd m(alg.layer_size(k), bv.cols() + bl.cols());
    m << bv, bl;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(m);
    lu.setThreshold(kRankTol);
    bool sum_full = lu.rank() == alg.layer_size(k);
    // Independent columns <=> the layer pieces meet only in 0.
    bool meet = lu.rank() == m.cols();
    rep.layer_direct_sum.push_back(sum_full && meet);
    all = all && sum_full && meet;
    meet_trivial = meet_trivial && meet;
  }
  rep.trivial_intersection = meet_trivial;
  rep.pass = all;
  return rep;
}

SplittingPair::SplittingPair(HomogeneousSubgroup v, HomogeneousSubgroup l)
    : v_(std::move(v)), l_(std::move(l)) {
  auto rep = verify_complement(v_, l_);
  if (!rep.pass) throw SplittingError("subgroups are not complementary");
  const auto& alg = group().algebra();
  for (int k = 1; k <= alg.step(); ++k) {
    Eigen::MatrixXd m(alg.layer_size(k), alg.layer_size(k));
    m << v_.basis(k), l_.basis(k);
    lu_.emplace_back(m);
  }
}

double SplittingPair::c_split_or_throw() const {
  if (!c_split) throw PreconditionError("c_split has not been estimated for this splitting");
  return *c_split;
}

std::pair<GroupPoint, GroupPoint> SplittingPair::project(const GroupPoint& g) const {
  const Group& grp = group();
  const auto& alg = grp.algebra();
  if (g.size() != alg.total_dim()) throw StructuralError("project: dimension mismatch");
  GroupPoint v = GroupPoint::Zero(alg.total_dim());
  GroupPoint l = v;
  for (int k = 1; k <= alg.step(); ++k) {
    const int off = alg.layer_offset(k), n = alg.layer_size(k);
    // Layer k of v.l is v_k + l_k + Q_k(lower layers), and the lower layers are final.
    Eigen::VectorXd rhs = g.segment(off, n);
    if (k > 1) rhs -= (grp.product(v, l) - v - l).segment(off, n);
    Eigen::VectorXd x = lu_[k - 1].solve(rhs);
    if (!x.allFinite()) throw SplittingError("singular layer system in split projection");
    const auto& bv = v_.basis(k);
    const auto& bl = l_.basis(k);
    if (bv.cols() > 0) v.segment(off, n) = bv * x.head(bv.cols());
    if (bl.cols() > 0) l.segment(off, n) = bl * x.tail(bl.cols());
  }
  return {v, l};
}

std::pair<GroupPoint, GroupPoint> project_split(const SplittingPair& sp, const GroupPoint& g) {
  return sp.project(g);
}

namespace {

// Derivative-free minimisation of c -> ||g^{-1} . embed(c)|| by a compass
// search over the intrinsic coordinates with homogeneous step sizes, random
// directions and Hooke-Jeeves pattern moves to get along the kinks of the
// max-norm. Coordinates of W in the top layer of G enter g^{-1}w additively,
// so they are eliminated exactly by an orthogonal projection.
class DistSearch {
 public:
  DistSearch(const GroupPoint& g, const HomogeneousSubgroup& w, const BoxNorm& nrm)
      : w_(w), nrm_(nrm), ginv_(w.group().inverse(g)), scale_(nrm.norm(g)) {
    const int top = w.group().step();
    for (int i = 0; i < w.top_dim(); ++i) {
      if (w.coord_layer(i) == top) {
        if (top_begin_ < 0) top_begin_ = i;
      } else {
        free_.push_back(i);
      }
    }
  }

  // Evaluates at c after overwriting its top-layer coordinates with their optimum.
  double eval(Eigen::VectorXd& c) const {
    const Group& grp = w_.group();
    const auto& alg = grp.algebra();
    const int top = grp.step();
    if (top_begin_ >= 0) c.tail(w_.top_dim() - top_begin_).setZero();
    GroupPoint x = grp.product(ginv_, w_.embed(c));
    if (top_begin_ >= 0) {
      const auto& b = w_.basis(top);
      auto seg = x.segment(alg.layer_offset(top), alg.layer_size(top));
      Eigen::VectorXd shift = -(b.transpose() * seg);
      c.tail(w_.top_dim() - top_begin_) = shift;
      seg += b * shift;
    }
    return nrm_.norm(x);
  }

  double minimize(Eigen::VectorXd& c, double s_start, double s_stop, std::mt19937_64& rng) const {
    double best = eval(c);
    if (free_.empty() || scale_ == 0.0) return best;
    std::normal_distribution<double> gauss(0.0, 1.0);
    const int nf = static_cast<int>(free_.size());
    double s = s_start;
    Eigen::VectorXd trial;
    std::vector<double> layer_step(w_.group().step() + 1);
    auto try_point = [&](Eigen::VectorXd& t) {
      double f = eval(t);
      if (f < best) {
        best = f;
        c = t;
        return true;
      }
      return false;
    };
    while (s > s_stop && best > 0.0) {
      for (int l = 1; l <= w_.group().step(); ++l) layer_step[l] = std::pow(s * scale_, l);
      const Eigen::VectorXd start = c;
      bool improved = false;
      for (int i : free_)
        for (double sign : {1.0, -1.0}) {
          trial = c;
          trial[i] += sign * layer_step[w_.coord_layer(i)];
          improved |= try_point(trial);
        }
      for (int r = 0; r < 2 * nf + 2; ++r) {
        trial = c;
        for (int i : free_) trial[i] += gauss(rng) * layer_step[w_.coord_layer(i)];
        improved |= try_point(trial);
      }
      if (improved) {
        Eigen::VectorXd dir = c - start;
        for (int k = 0; k < 30; ++k) {
          trial = c + dir;
          if (!try_point(trial)) break;
          dir *= 2.0;
        }
      } else {
        s *= 0.5;
      }
    }
    return best;
  }

  double scale() const { return scale_; }

 private:
  const HomogeneousSubgroup& w_;
  const BoxNorm& nrm_;
  GroupPoint ginv_;
  double scale_;
  std::vector<int> free_;
  int top_begin_ = -1;
};

bool same_subgroup(const HomogeneousSubgroup& a, const HomogeneousSubgroup& b) {
  if (a.strat_vector() != b.strat_vector()) return false;
  for (int l = 1; l <= a.group().step(); ++l)
    for (Eigen::Index c = 0; c < a.basis(l).cols(); ++c) {
      Eigen::VectorXd u = a.basis(l).col(c);
      if ((u - b.basis(l) * (b.basis(l).transpose() * u)).norm() > 1e-9) return false;
    }
  return true;
}

}  // namespace

Interval dist_to_subgroup(const GroupPoint& g, const HomogeneousSubgroup& w, const BoxNorm& nrm,
                          const DistOptions& opts) {
  if (opts.complement && !same_subgroup(opts.complement->V(), w))
    throw StructuralError("complement supplied for a different subgroup");
  DistSearch search(g, w, nrm);
  if (search.scale() == 0.0) return {0.0, 0.0};

  std::mt19937_64 rng(opts.seed);
  std::vector<Eigen::VectorXd> starts;
  starts.push_back(Eigen::VectorXd::Zero(w.top_dim()));
  starts.push_back(w.coordinates(w.orthogonal_projection(g)));
  double pl_norm = -1.0;
  if (opts.complement) {
    auto [gv, gl] = opts.complement->project(g);
    starts.push_back(w.coordinates(gv));
    pl_norm = nrm.norm(gl);
  }
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  while (static_cast<int>(starts.size()) < std::max(opts.starts, 1)) {
    Eigen::VectorXd c = starts[1];
    for (int i = 0; i < w.top_dim(); ++i) c[i] += u(rng) * std::pow(search.scale(), w.coord_layer(i));
    starts.push_back(c);
  }

  // Coarse pass from every start, then polish the best.
  double best = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_c;
  for (auto& c : starts) {
    double f = search.minimize(c, 0.5, 1e-3, rng);
    if (f < best) {
      best = f;
      best_c = c;
    }
  }
  best = search.minimize(best_c, 4e-3, 1e-10, rng);

  Interval out{0.0, best};
  if (opts.complement && opts.complement->c_split) out.lo = std::min(*opts.complement->c_split * pl_norm, best);
  return out;
}

double estimate_c_split(SplittingPair& sp, const BoxNorm& nrm, std::size_t samples, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  DistOptions dopt;
  dopt.complement = &sp;
  // The lower bound must not feed back into its own estimate.
  std::optional<double> keep = sp.c_split;
  sp.c_split.reset();

  auto ratio = [&](const GroupPoint& g) {
    double pl = nrm.norm(sp.project(g).second);
    if (pl < 1e-9) return std::numeric_limits<double>::infinity();
    dopt.seed = rng();
    return dist_to_subgroup(g, sp.V(), nrm, dopt).hi / pl;
  };

  std::vector<std::pair<double, GroupPoint>> ranked;
  std::size_t used = 0;
  for (std::size_t s = 0; s < samples; ++s) {
    GroupPoint g = sample_on_sphere(nrm, 1.0, rng);
    double r = ratio(g);
    if (!std::isfinite(r)) continue;
    ++used;
    ranked.push_back({r, g});
  }
  if (used == 0) {
    sp.c_split = keep;
    throw SamplingError("every sample landed in V; cannot estimate c_split");
  }
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  ranked.resize(std::min<std::size_t>(ranked.size(), 4));

  // Local descent on the (0-homogeneous) ratio from the best samples.
  std::normal_distribution<double> gauss(0.0, 1.0);
  double best = ranked.front().first;
  for (auto& [r0, g0] : ranked) {
    GroupPoint g = g0;
    double cur = r0;
    double step = 0.2;
    for (int it = 0; it < 120 && step > 1e-4; ++it) {
      GroupPoint t(g.size());
      for (int i = 0; i < t.size(); ++i) t[i] = gauss(rng);
      GroupPoint trial = g + sp.group().dilate(step, t);
      double n = nrm.norm(trial);
      if (n < 1e-12) continue;
      trial = sp.group().dilate(1.0 / n, trial);
      double r = ratio(trial);
      if (r < cur) {
        cur = r;
        g = trial;
      } else if (it % 10 == 9) {
        step *= 0.5;
      }
    }
    best = std::min(best, cur);
  }
  best = std::min(best, 1.0);
  sp.c_split = best;
  sp.eps1 = best / 2.0;
  sp.certificate = SplitCertificate{seed, samples, used};
  return best;
}

double perturbation_modulus(const HomogeneousSubgroup& w, const BoxNorm& nrm,
                            const std::vector<double>& a_bound, const std::vector<double>& d_bound) {
  const auto& grp = w.group();
  const auto& alg = grp.algebra();
  const int k = alg.step();
  // a and a + d both lie in W, so only brackets of W enter; the Frobenius
  // norm of the bracket on W_i x W_j bounds its operator norm.
  std::vector<std::vector<double>> m(k + 1, std::vector<double>(k + 1, 0.0));
  auto unit = [&](int layer, Eigen::Index c) {
    GroupPoint v = GroupPoint::Zero(grp.dim());
    v.segment(alg.layer_offset(layer), alg.layer_size(layer)) = w.basis(layer).col(c);
    return v;
  };
  for (int i = 1; i <= k; ++i)
    for (int j = 1; i + j <= k; ++j) {
      double sq = 0.0;
      for (Eigen::Index a = 0; a < w.basis(i).cols(); ++a)
        for (Eigen::Index b = 0; b < w.basis(j).cols(); ++b)
          sq += alg.bracket(unit(i, a), unit(j, b)).squaredNorm();
      m[i][j] = std::sqrt(sq);
    }
  auto bb = [&](const std::vector<double>& u, const std::vector<double>& v) {
    std::vector<double> out(k, 0.0);
    for (int i = 1; i <= k; ++i)
      for (int j = 1; i + j <= k; ++j) out[i + j - 1] += m[i][j] * u[i - 1] * v[j - 1];
    return out;
  };
  auto ad = bb(a_bound, d_bound);
  auto aad = bb(a_bound, ad);
  auto dad = bb(d_bound, ad);
  double rho = 0.0;
  for (int l = 1; l <= k; ++l) {
    double e = d_bound[l - 1] + 0.5 * ad[l - 1] + (2.0 * aad[l - 1] + dad[l - 1]) / 12.0;
    rho = std::max(rho, nrm.epsilon(l) * std::pow(e, 1.0 / l));
  }
  return rho;
}

BallLattice unit_ball_lattice(const HomogeneousSubgroup& w, const BoxNorm& nrm, int resolution) {
  if (resolution < 2) throw DomainError("lattice resolution must be at least 2");
  const int d = w.top_dim();
  const auto& alg = w.group().algebra();
  auto radii = HomogeneousSubgroup::unit_ball_layer_radii(nrm);
  double count = std::pow(static_cast<double>(resolution), d);
  if (count > 4e6) throw DomainError("unit-ball lattice too large; lower the resolution");

  BallLattice out;
  std::vector<int> idx(d, 0);
  Eigen::VectorXd c(d);
  for (bool done = (d == 0); ; ) {
    for (int i = 0; i < d; ++i) {
      double r = radii[w.coord_layer(i) - 1];
      c[i] = -r + 2.0 * r * idx[i] / (resolution - 1);
    }
    // Pull each layer block radially into its ball.
    for (int i = 0; i < d;) {
      int l = w.coord_layer(i), j = i;
      while (j < d && w.coord_layer(j) == l) ++j;
      double len = c.segment(i, j - i).norm(), r = radii[l - 1];
      if (len > r) c.segment(i, j - i) *= r / len;
      i = j;
    }
    out.points.push_back(w.embed(c));
    if (done) break;
    int pos = 0;
    while (pos < d && ++idx[pos] == resolution) idx[pos++] = 0;
    if (pos == d) break;
  }

  std::vector<double> a(alg.step()), delta(alg.step(), 0.0);
  for (int l = 1; l <= alg.step(); ++l) {
    a[l - 1] = radii[l - 1];
    int dl = static_cast<int>(w.basis(l).cols());
    delta[l - 1] = std::sqrt(static_cast<double>(dl)) * radii[l - 1] / (resolution - 1);
  }
  out.covering_radius = perturbation_modulus(w, nrm, a, delta);
  return out;
}

Interval grassmannian_distance(const HomogeneousSubgroup& w1, const HomogeneousSubgroup& w2,
                               const BoxNorm& nrm, int resolution) {
  if (resolution < 2) throw DomainError("grassmannian_distance: resolution must be at least 2");
  if (w1.group().dim() != w2.group().dim() || w1.group().step() != w2.group().step())
    throw StructuralError("grassmannian_distance: subgroups of different groups");
  auto a = unit_ball_lattice(w1, nrm, resolution);
  auto b = unit_ball_lattice(w2, nrm, resolution);
  double dh = hausdorff_distance(a.points, b.points, nrm);
  double widen = a.covering_radius + b.covering_radius;
  return {std::max(0.0, dh - widen), dh + widen};
}

}  // namespace carnot
