#include "carnot/scenarios.hpp"

#include "carnot/errors.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <istream>
#include <limits>
#include <mutex>
#include <numbers>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>
#include <thread>

namespace carnot {

namespace {

constexpr const char* kVersion = "0.1.0";

GroupPoint point_from(const Json& j, int dim, const char* what) {
  if (!j.is_array() || static_cast<int>(j.size()) != dim)
    throw ConfigError(std::string(what) + " must be an array of " + std::to_string(dim) + " numbers");
  GroupPoint p(dim);
  for (int i = 0; i < dim; ++i) p[i] = j[i].get<double>();
  return p;
}

template <class T>
T param(const Json& p, const char* key, T def) {
  if (!p.is_object() || !p.contains(key)) return def;
  try {
    return p.at(key).get<T>();
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("parameter '") + key + "': " + e.what());
  }
}

std::uint64_t mix_seed(std::uint64_t seed, const std::string& name) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : name) h = (h ^ c) * 1099511628211ULL;
  std::uint64_t z = seed ^ h;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

// ---- I/O -------------------------------------------------------------------

GroupPtr group_from_json(const Json& j) {
  if (j.is_string()) return preset_group(j.get<std::string>());
  if (!j.is_object()) throw ConfigError("group must be a preset name or an object");
  if (j.contains("preset")) return preset_group(j.at("preset").get<std::string>());
  if (!j.contains("layers")) throw ConfigError("group object needs \"layers\"");
  try {
    auto layers = j.at("layers").get<std::vector<int>>();
    int n = std::accumulate(layers.begin(), layers.end(), 0);
    std::vector<StratifiedAlgebra::BracketEntry> entries;
    for (const auto& b : j.value("brackets", Json::array())) {
      int i = b.at("i").get<int>() - 1;
      int jj = b.at("j").get<int>() - 1;
      for (const auto& [k, c] : b.at("coeffs").items()) {
        int kk = std::stoi(k) - 1;
        if (i < 0 || jj < 0 || kk < 0 || i >= n || jj >= n || kk >= n)
          throw ConfigError("bracket index out of range (indices are 1-based)");
        entries.push_back({i, jj, kk, c.get<double>()});
      }
    }
    return std::make_shared<Group>(StratifiedAlgebra(layers, entries), j.value("name", std::string("custom")));
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("malformed group: ") + e.what());
  }
}

Json group_to_json(const Group& g) {
  Json j;
  j["name"] = g.name();
  j["layers"] = g.algebra().layer_dims();
  Json br = Json::array();
  for (const auto& e : g.algebra().nonzero_entries()) {
    if (e.i >= e.j) continue;
    br.push_back({{"i", e.i + 1}, {"j", e.j + 1}, {"coeffs", {{std::to_string(e.k + 1), e.coeff}}}});
  }
  j["brackets"] = br;
  return j;
}

BoxNorm norm_from_json(GroupPtr g, const Json& spec) {
  if (spec.is_object() && spec.contains("epsilons")) {
    auto eps = spec.at("epsilons").get<std::vector<double>>();
    if (static_cast<int>(eps.size()) != g->step()) throw ConfigError("one epsilon per layer expected");
    return BoxNorm(g, eps);
  }
  return calibrate_epsilons(g);
}

HomogeneousSubgroup subgroup_from_json(GroupPtr g, const Json& j) {
  if (!j.is_object() || !j.contains("layers")) throw ConfigError("subgroup spec needs \"layers\"");
  const auto& layers = j.at("layers");
  if (static_cast<int>(layers.size()) != g->step()) throw ConfigError("subgroup spec needs one entry per layer");
  std::vector<Eigen::MatrixXd> bases;
  for (int l = 0; l < g->step(); ++l) {
    int n = g->algebra().layer_size(l + 1);
    const auto& vecs = layers[l];
    Eigen::MatrixXd m(n, static_cast<Eigen::Index>(vecs.size()));
    for (std::size_t c = 0; c < vecs.size(); ++c) {
      auto v = vecs[c].get<std::vector<double>>();
      if (static_cast<int>(v.size()) != n) throw ConfigError("subgroup basis vector has the wrong length");
      for (int r = 0; r < n; ++r) m(r, static_cast<Eigen::Index>(c)) = v[r];
    }
    bases.push_back(m);
  }
  return HomogeneousSubgroup(g, bases);
}

Json subgroup_to_json(const HomogeneousSubgroup& w) {
  Json layers = Json::array();
  for (int l = 1; l <= w.group().step(); ++l) {
    Json vecs = Json::array();
    const auto& b = w.basis(l);
    for (Eigen::Index c = 0; c < b.cols(); ++c) {
      Json v = Json::array();
      for (Eigen::Index r = 0; r < b.rows(); ++r) v.push_back(b(r, c));
      vecs.push_back(v);
    }
    layers.push_back(vecs);
  }
  return {{"layers", layers}};
}

DiscreteMeasure read_measure_csv(std::istream& in, int dim) {
  DiscreteMeasure mu;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line[0] == '#') continue;
    std::vector<double> vals;
    std::stringstream ss(line);
    std::string cell;
    bool numeric = true;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        vals.push_back(std::stod(cell, &used));
      } catch (const std::exception&) {
        numeric = false;
        break;
      }
    }
    if (!numeric) {
      if (row == 1) continue;  // header
      throw ConfigError("non-numeric measure row " + std::to_string(row));
    }
    if (static_cast<int>(vals.size()) != dim + 1)
      throw ConfigError("measure row " + std::to_string(row) + " needs " + std::to_string(dim + 1) + " columns");
    GroupPoint p(dim);
    for (int i = 0; i < dim; ++i) p[i] = vals[i];
    mu.add(p, vals[dim]);
  }
  return mu;
}

void write_measure_csv(std::ostream& out, const DiscreteMeasure& mu) {
  out.precision(17);
  for (std::size_t i = 0; i < mu.size(); ++i) {
    for (Eigen::Index c = 0; c < mu.points[i].size(); ++c) out << mu.points[i][c] << ',';
    out << mu.masses[i] << '\n';
  }
}

// ---- synthetic objects -----------------------------------------------------

GroupPoint LipschitzProfile::operator()(const GroupPoint& a) const {
  double t = axis.dot(a);
  double s = 0.0;
  for (std::size_t k = 0; k < c.size(); ++k) s += c[k] * std::sin(w[k] * t + psi[k]);
  return amplitude * s * direction;
}

double LipschitzProfile::lipschitz() const {
  double l = 0.0;
  for (std::size_t k = 0; k < c.size(); ++k) l += std::abs(c[k]) * w[k];
  return amplitude * l;
}

LipschitzProfile random_lipschitz_profile(const SplittingPair& sp, double alpha, std::mt19937_64& rng) {
  if (!(alpha > 0.0)) throw ConfigError("alpha must be positive");
  const Group& g = sp.group();
  const int n1 = g.algebra().layer_size(1);
  if (sp.V().basis(1).cols() == 0 || sp.L().basis(1).cols() == 0)
    throw ConfigError("graph profiles need horizontal directions in both V and L");
  LipschitzProfile p;
  p.axis = GroupPoint::Zero(g.dim());
  p.direction = GroupPoint::Zero(g.dim());
  p.axis.head(n1) = sp.V().basis(1).col(0);
  p.direction.head(n1) = sp.L().basis(1).col(0);
  std::uniform_real_distribution<double> u(-1.0, 1.0), freq(0.5, 4.0), phase(0.0, 2.0 * std::numbers::pi),
      amp(0.0, 2.0 * alpha);
  for (int tries = 0;; ++tries) {
    if (tries == 10000) throw SamplingError("no profile within the Lipschitz budget");
    p.c.assign(3, 0.0);
    p.w.assign(3, 0.0);
    p.psi.assign(3, 0.0);
    for (int k = 0; k < 3; ++k) p.c[k] = u(rng), p.w[k] = freq(rng), p.psi[k] = phase(rng);
    p.amplitude = amp(rng);
    if (p.lipschitz() <= alpha && p.lipschitz() >= 0.25 * alpha) return p;
  }
}

DiscreteMeasure graph_pushforward(const DiscreteMeasure& base, const std::function<GroupPoint(const GroupPoint&)>& phi,
                                  const Group& g) {
  DiscreteMeasure out;
  out.points.reserve(base.size());
  out.masses = base.masses;
  for (const auto& a : base.points) out.points.push_back(g.product(a, phi(a)));
  return out;
}

std::map<std::string, HomogeneousSubgroup> default_subgroups(GroupPtr g) {
  const int n = g->dim();
  const int n1 = g->algebra().layer_size(1);
  auto drop = [&](int skip) {
    std::vector<GroupPoint> vecs;
    for (int i = 0; i < n; ++i) {
      if (i == skip) continue;
      GroupPoint e = GroupPoint::Zero(n);
      e[i] = 1.0;
      vecs.push_back(e);
    }
    return HomogeneousSubgroup::from_vectors(g, vecs);
  };
  std::map<std::string, HomogeneousSubgroup> out;
  GroupPoint e1 = GroupPoint::Zero(n);
  e1[0] = 1.0;
  out.emplace("V", drop(0));
  out.emplace("L", HomogeneousSubgroup::from_vectors(g, {e1}));
  if (n1 >= 2) {
    GroupPoint e2 = GroupPoint::Zero(n);
    e2[1] = 1.0;
    out.emplace("W", drop(1));
    out.emplace("M", HomogeneousSubgroup::from_vectors(g, {e2}));
  }
  return out;
}

namespace {

const HomogeneousSubgroup& lookup(const std::map<std::string, HomogeneousSubgroup>& subs, const std::string& name) {
  auto it = subs.find(name);
  if (it == subs.end()) throw ConfigError("unknown subgroup '" + name + "'");
  return it->second;
}

std::shared_ptr<SplittingPair> make_split(const std::map<std::string, HomogeneousSubgroup>& subs,
                                          const std::string& v, const std::string& l, const BoxNorm& nrm) {
  auto sp = std::make_shared<SplittingPair>(lookup(subs, v), lookup(subs, l));
  estimate_c_split(*sp, nrm, 400, 0xc5);
  return sp;
}

}  // namespace

DiscreteMeasure generate_synthetic(const std::string& kind, const Json& params, const BoxNorm& nrm,
                                   const std::map<std::string, HomogeneousSubgroup>& subgroups, std::uint64_t seed) {
  const Group& g = nrm.group();
  const auto& v = lookup(subgroups, param<std::string>(params, "subgroup", "V"));
  GroupPoint x = params.is_object() && params.contains("x") ? point_from(params["x"], g.dim(), "x") : g.identity();
  const int mesh = param(params, "mesh", 16);
  const double radius = param(params, "radius", 2.0);
  const double scale = param(params, "scale", 1.0);
  const double theta = param(params, "theta", 1.0);
  if (!(scale > 0.0) || !(theta > 0.0)) throw ConfigError("scale and theta must be positive");
  std::mt19937_64 rng(seed);

  if (kind == "haar_coset") return haar_on_subgroup(v, nrm, radius, mesh).measure(x, scale, theta);

  const auto& l = lookup(subgroups, param<std::string>(params, "complement", "L"));
  if (kind == "perturbed_flat") {
    // Each atom moved by xi u l, u uniform in [-1, 1], inside the unit-scale picture.
    const double xi = param(params, "amplitude", 1e-3);
    const double noise = param(params, "mass_noise", 0.0);
    if (l.basis(1).cols() == 0) throw ConfigError("perturbed_flat needs a horizontal complement");
    GroupPoint dir = GroupPoint::Zero(g.dim());
    dir.head(g.algebra().layer_size(1)) = l.basis(1).col(0);
    auto hs = haar_on_subgroup(v, nrm, radius, mesh);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    DiscreteMeasure out;
    for (const auto& p : hs.lattice) {
      GroupPoint q = g.product(x, g.dilate(scale, g.product(p, xi * u(rng) * dir)));
      out.add(q, theta * std::pow(scale, hs.h()) * hs.cell_mass * (1.0 + noise * u(rng)));
    }
    return out;
  }
  if (kind == "cone_graph") {
    const double alpha = param(params, "alpha", 0.05);
    SplittingPair sp(v, l);
    auto prof = random_lipschitz_profile(sp, alpha, rng);
    auto hs = haar_on_subgroup(v, nrm, radius, mesh);
    auto base = hs.measure(g.identity(), scale, theta);
    for (auto& p : base.points) p = g.product(x, p);
    return graph_pushforward(base, prof, g);
  }
  throw ConfigError("unknown synthetic kind '" + kind + "' (haar_coset, cone_graph, perturbed_flat)");
}

double flat_floor(const HomogeneousSubgroup& v, const BoxNorm& nrm, int mesh) {
  auto a = haar_on_subgroup(v, nrm, 1.0, mesh).measure();
  auto b = haar_on_subgroup(v, nrm, 1.0, 2 * mesh).measure();
  return F_K(a, b, v.group().identity(), 1.0, nrm);
}

std::vector<double> aligned_radii(double radius, int levels) {
  std::vector<double> r;
  for (int j = 1; j < levels; ++j) {
    double rho = radius * std::ldexp(1.0, -j);
    r.push_back(rho);
    r.push_back(0.75 * rho);
  }
  return r;
}

DensityRatioStudy density_ratio_study(const SplittingPair& sp, const BoxNorm& nrm,
                                      const std::function<GroupPoint(const GroupPoint&)>& phi,
                                      const std::vector<GroupPoint>& base_points, const std::vector<double>& radii,
                                      double radius, int levels, int mesh) {
  const Group& g = sp.group();
  const double h = sp.V().hom_dim();
  DensityRatioStudy st;
  st.radii = radii;
  for (const auto& a : base_points) {
    auto mu = graph_pushforward(graded_haar(sp.V(), nrm, a, radius, levels, mesh), phi, g);
    GroupPoint c = g.product(a, phi(a));
    auto prof = density_profile(mu, c, h, radii, nrm);
    auto [lo, hi] = std::minmax_element(prof.begin(), prof.end());
    st.centres.push_back(c);
    st.ratios.push_back(*hi > 0.0 ? *lo / *hi : 0.0);
    st.profiles.push_back(std::move(prof));
  }
  st.min_ratio = st.ratios.empty() ? 0.0 : *std::min_element(st.ratios.begin(), st.ratios.end());
  return st;
}

// ---- scenarios -------------------------------------------------------------

const char* to_string(CheckStatus s) {
  switch (s) {
    case CheckStatus::Pass: return "pass";
    case CheckStatus::Fail: return "fail";
    case CheckStatus::Skipped: return "skipped";
  }
  return "?";
}

namespace {

struct Context {
  const ScenarioSpec& spec;
  GroupPtr g;
  BoxNorm nrm;
  std::map<std::string, HomogeneousSubgroup> subgroups;
  std::pair<std::string, std::string> split_names{"V", "L"};
  std::optional<DiscreteMeasure> measure;

  double tol(const std::string& key, double def) const {
    auto it = spec.tolerances.find(key);
    return it == spec.tolerances.end() ? def : it->second;
  }
  bool has(const std::string& name) const { return subgroups.count(name) > 0; }
  std::shared_ptr<SplittingPair> split() const {
    return make_split(subgroups, split_names.first, split_names.second, nrm);
  }
};

using CheckFn = void (*)(const Context&, const Json&, std::uint64_t, CheckResult&);

void pass_if(CheckResult& r, bool ok, const std::string& why_not = {}) {
  r.status = ok ? CheckStatus::Pass : CheckStatus::Fail;
  if (!ok && r.message.empty()) r.message = why_not;
}

void skip(CheckResult& r, const std::string& why) {
  r.status = CheckStatus::Skipped;
  r.message = why;
}

Table profile_table(const std::string& name, const std::vector<double>& r, const std::vector<double>& v) {
  Table t{name, {"r", "value"}, {}};
  for (std::size_t i = 0; i < r.size(); ++i) t.rows.push_back({r[i], v[i]});
  return t;
}

void check_bch(const Context& c, const Json& p, std::uint64_t seed, CheckResult& r) {
  const auto n = param<std::size_t>(p, "samples", 2000);
  const double R = param(p, "radius", 3.0);
  const double tol = c.tol("bch", 1e-9);
  std::mt19937_64 rng(seed);
  const Group& g = *c.g;
  double assoc = 0.0, inv = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    GroupPoint x = sample_in_ball(c.nrm, R, rng), y = sample_in_ball(c.nrm, R, rng),
               z = sample_in_ball(c.nrm, R, rng);
    assoc = std::max(assoc, (g.product(g.product(x, y), z) - g.product(x, g.product(y, z))).lpNorm<Eigen::Infinity>());
    inv = std::max(inv, g.product(x, g.inverse(x)).lpNorm<Eigen::Infinity>());
    inv = std::max(inv, g.product(g.inverse(x), x).lpNorm<Eigen::Infinity>());
  }
  r.values = {{"samples", n}, {"associativity_residual", assoc}, {"inverse_residual", inv}, {"tolerance", tol}};
  pass_if(r, assoc < tol && inv < tol, "BCH residual above tolerance");
}

void check_norm(const Context& c, const Json& p, std::uint64_t seed, CheckResult& r) {
  const auto pairs = param<std::size_t>(p, "pairs", 20000);
  const double R = param(p, "radius", 10.0);
  auto scan = scan_triangle_inequality(c.nrm, pairs, R, seed);
  std::mt19937_64 rng(seed + 1);
  std::uniform_real_distribution<double> lam(0.01, 100.0);
  double hom = 0.0;
  for (std::size_t i = 0; i < pairs / 10; ++i) {
    GroupPoint x = sample_in_ball(c.nrm, R, rng);
    double l = lam(rng);
    double a = c.nrm.norm(c.g->dilate(l, x)), b = l * c.nrm.norm(x);
    hom = std::max(hom, std::abs(a - b) / std::max(1.0, b));
  }
  r.values = {{"pairs", scan.pairs},
              {"violations", scan.violations},
              {"worst_ratio", scan.worst_ratio},
              {"homogeneity_residual", hom},
              {"epsilons", c.nrm.epsilons()}};
  pass_if(r, scan.violations == 0 && hom <= c.tol("homogeneity", 1e-12), "triangle or homogeneity violation");
}

void check_splitting(const Context& c, const Json& p, std::uint64_t seed, CheckResult& r) {
  auto sp = c.split();
  const auto n = param<std::size_t>(p, "samples", 2000);
  const double tol = c.tol("sandwich", 1e-6);
  const double cs = sp->c_split_or_throw();
  std::mt19937_64 rng(seed);
  double round_trip = 0.0;
  std::size_t violations = 0;
  DistOptions opt;
  opt.complement = sp.get();
  for (std::size_t i = 0; i < n; ++i) {
    GroupPoint x = sample_in_ball(c.nrm, 2.0, rng);
    auto [pv, pl] = sp->project(x);
    round_trip = std::max(round_trip, (c.g->product(pv, pl) - x).lpNorm<Eigen::Infinity>());
    double nl = c.nrm.norm(pl);
    auto d = dist_to_subgroup(x, sp->V(), c.nrm, opt);
    if (cs * nl > d.hi + tol || d.hi > nl + tol) ++violations;
  }
  r.values = {{"samples", n}, {"c_split", cs}, {"round_trip_residual", round_trip}, {"sandwich_violations", violations}};
  pass_if(r, round_trip < c.tol("round_trip", 1e-9) && violations == 0, "splitting round trip or sandwich failed");
}

void check_haar(const Context& c, const Json& p, std::uint64_t, CheckResult& r) {
  const auto& w = lookup(c.subgroups, param<std::string>(p, "subgroup", "V"));
  const int mesh = param(p, "mesh", w.top_dim() == 1 ? 128 : 64);
  const double tol = c.tol("haar", 0.02);
  // Exact counts need r^i mesh / 2 integral in every layer i.
  auto radii = param<std::vector<double>>(p, "radii", {2.0, 1.0, 0.5, 0.25});
  if (radii.empty() || std::find(radii.begin(), radii.end(), 1.0) == radii.end())
    throw ConfigError("haar_normalization radii must include 1");
  std::sort(radii.rbegin(), radii.rend());
  auto hs = haar_on_subgroup(w, c.nrm, radii.front(), mesh);
  auto prof = density_profile(hs.measure(), c.g->identity(), w.hom_dim(), radii, c.nrm);
  double unit = prof[std::find(radii.begin(), radii.end(), 1.0) - radii.begin()];
  double spread = 0.0;
  for (double v : prof) spread = std::max(spread, std::abs(v / unit - 1.0));
  r.values = {{"mesh", mesh}, {"h", w.hom_dim()}, {"unit_ball_mass", unit}, {"ratio_spread", spread},
              {"lattice_points", hs.lattice.size()}};
  r.tables.push_back(profile_table("density", radii, prof));
  pass_if(r, std::abs(unit - 1.0) <= tol && spread <= tol, "Haar mass or scaling outside tolerance");
}

void check_inclusion(const Context& c, const Json& p, std::uint64_t seed, CheckResult& r) {
  auto sp = c.split();
  const double alpha = param(p, "alpha_factor", 0.1) * sp->c_split_or_throw();
  auto rep = projection_inclusion_check(*sp, alpha, c.nrm, param<std::size_t>(p, "samples", 2000), seed);
  r.values = {{"alpha", alpha},
              {"frak_c", rep.frak_c},
              {"tested_inner", rep.tested_inner},
              {"tested_outer", rep.tested_outer},
              {"inner_violations", rep.inner_violations},
              {"outer_violations", rep.outer_violations}};
  pass_if(r, rep.pass(), "projection inclusion violated");
}

void check_vitali(const Context& c, const Json& p, std::uint64_t seed, CheckResult& r) {
  const int families = param(p, "families", 5);
  const auto balls = param<std::size_t>(p, "balls", 200);
  const double R = param(p, "radius", 5.0);
  auto Ns = param<std::vector<int>>(p, "N", {0, 1, 2});
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> rad(0.05, 1.0);
  std::size_t dis = 0, cov = 0, pairs = 0, points = 0;
  try {
    for (int f = 0; f < families; ++f) {
      BallFamily fam;
      for (std::size_t i = 0; i < balls; ++i) fam.add(sample_in_ball(c.nrm, R, rng), rad(rng));
      for (int N : Ns) {
        auto res = vitali_select(fam, N, c.nrm, 12, seed + f);
        dis += res.disjoint_violations;
        cov += res.coverage_violations;
        pairs += res.pairs_checked;
        points += res.points_checked;
      }
    }
  } catch (const AlgorithmInvariantError& e) {
    r.message = e.what();
    ++cov;
  }
  r.values = {{"families", families}, {"balls", balls}, {"pairs_checked", pairs}, {"points_checked", points},
              {"disjoint_violations", dis}, {"coverage_violations", cov}};
  pass_if(r, dis == 0 && cov == 0, "Vitali property violated");
}

void check_fk_scaling(const Context& c, const Json& p, std::uint64_t seed, CheckResult& r) {
  const int instances = param(p, "instances", 20);
  const int atoms = param(p, "atoms", 6);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> mass(0.1, 1.0), scale(0.3, 3.0);
  double worst = 0.0;
  for (int t = 0; t < instances; ++t) {
    GroupPoint x = sample_in_ball(c.nrm, 2.0, rng);
    double rr = scale(rng);
    DiscreteMeasure a, b;
    for (int i = 0; i < atoms; ++i) {
      a.add(c.g->product(x, sample_in_ball(c.nrm, 1.2 * rr, rng)), mass(rng));
      b.add(c.g->product(x, sample_in_ball(c.nrm, 1.2 * rr, rng)), mass(rng));
    }
    double lhs = F_K(a, b, x, rr, c.nrm);
    double rhs = rr * F_K(blowup(a, x, rr, 0, c.nrm), blowup(b, x, rr, 0, c.nrm), c.g->identity(), 1.0, c.nrm);
    worst = std::max(worst, std::abs(lhs - rhs));
  }
  r.values = {{"instances", instances}, {"max_abs_difference", worst}};
  pass_if(r, worst <= c.tol("fk_scaling", 1e-6), "scaling identity off");
}

void check_flatness(const Context& c, const Json& p, std::uint64_t, CheckResult& r) {
  // Lines by default: their lattices resolve the metric uniformly, while
  // higher-layer cells of a mesh m lattice are about m^{-1/i} wide.
  const auto& v = lookup(c.subgroups, param<std::string>(p, "subgroup", "L"));
  const std::string far_name = param<std::string>(p, "far", "M");
  if (!c.has(far_name)) return skip(r, "no far subgroup '" + far_name + "'");
  const auto& w = lookup(c.subgroups, far_name);
  const int mesh = param(p, "mesh", 100);
  const int measure_mesh = param(p, "measure_mesh", 150);
  auto gd = grassmannian_distance(v, w, c.nrm, param(p, "resolution", 9));
  double floor = flat_floor(v, c.nrm, mesh);
  GroupPoint x = p.contains("x") ? point_from(p["x"], c.g->dim(), "x") : c.g->identity();
  auto phi = haar_on_subgroup(v, c.nrm, 1.5, measure_mesh).measure(x);
  DFlatOptions opt;
  opt.mesh = mesh;
  double own = d_flat(phi, x, 1.0, v.hom_dim(), {v}, c.nrm, opt).value;
  double far = d_flat(phi, x, 1.0, v.hom_dim(), {w}, c.nrm, opt).value;
  r.values = {{"floor", floor}, {"own", own}, {"far", far}, {"grassmannian_lo", gd.lo}, {"mesh", mesh},
              {"measure_mesh", measure_mesh}};
  if (!(gd.lo > 0.3)) return skip(r, "far subgroup is not separated (grassmannian lo <= 0.3)");
  pass_if(r, own <= 3.0 * floor && far >= 5.0 * floor, "flat self-test outside the floor bands");
}

TrapParams trap_params(const Json& p, double h) {
  TrapParams tp;
  tp.theta = param(p, "theta", 2);
  tp.gamma = param(p, "gamma", 1);
  tp.h = h;
  tp.r = param(p, "r", 0.75);
  tp.grid = param<std::vector<double>>(p, "grid", {0.9, 0.5, 0.3});
  tp.mesh = param(p, "mesh", 16);
  if (p.contains("Theta")) tp.Theta = p["Theta"].get<double>();
  return tp;
}

Json trap_json(const TrapReport& rep) {
  return {{"premises", rep.premises}, {"failed_premises", rep.failed_premises}, {"F", rep.F},
          {"Theta", rep.Theta}, {"bound", rep.bound}, {"checked", rep.checked},
          {"violations", rep.violations}, {"worst", rep.worst}};
}

void finish_trap(const TrapReport& rep, CheckResult& r) {
  r.values.update(trap_json(rep));
  if (!rep.premises) {
    std::string why = "premises not met:";
    for (const auto& f : rep.failed_premises) why += " " + f + ";";
    return skip(r, why);
  }
  pass_if(r, rep.violations == 0 && rep.checked > 0, "bound violated");
}

DiscreteMeasure trap_measure(const Context& c, const Json& p, double scale, double xi, std::uint64_t seed) {
  if (c.measure) return *c.measure;
  Json gen = {{"subgroup", c.split_names.first}, {"complement", c.split_names.second}, {"mesh", param(p, "mesh", 16)},
              {"radius", 2.0}, {"scale", scale}, {"amplitude", xi}};
  if (p.contains("x")) gen["x"] = p["x"];
  return generate_synthetic("perturbed_flat", gen, c.nrm, c.subgroups, seed);
}

void check_cone_trap(const Context& c, const Json& p, std::uint64_t seed, CheckResult& r) {
  const auto& v = lookup(c.subgroups, c.split_names.first);
  auto tp = trap_params(p, v.hom_dim());
  tp.delta = param(p, "delta_factor", 0.5) * delta_G(tp.theta, tp.h);
  // Displacements xi keep F below xi r^{h+1} (mass of B(x, r) is about r^h).
  double xi = param(p, "amplitude_factor", 0.5) * delta_G(tp.theta, tp.h);
  auto phi = trap_measure(c, p, tp.r, xi, seed);
  GroupPoint x = p.contains("x") ? point_from(p["x"], c.g->dim(), "x") : c.g->identity();
  r.values = {{"delta", tp.delta}, {"delta_G", delta_G(tp.theta, tp.h)}, {"C1", C1(tp.theta, tp.h)}, {"xi", xi}};
  finish_trap(cone_trap_check(phi, x, v, tp, c.nrm), r);
}

void check_ball_hit(const Context& c, const Json& p, std::uint64_t seed, CheckResult& r) {
  const auto& v = lookup(c.subgroups, c.split_names.first);
  auto tp = trap_params(p, v.hom_dim());
  tp.delta = param(p, "delta_factor", 0.5) * C4(tp.theta, tp.h);
  auto phi = trap_measure(c, p, tp.r, param(p, "amplitude", 0.0), seed);
  GroupPoint x = p.contains("x") ? point_from(p["x"], c.g->dim(), "x") : c.g->identity();
  r.values = {{"delta", tp.delta}, {"C4", C4(tp.theta, tp.h)}};
  finish_trap(ball_hit_check(phi, phi, x, v, tp, c.nrm), r);
}

void check_density_ratio(const Context& c, const Json& p, std::uint64_t seed, CheckResult& r) {
  auto sp = c.split();
  const double cs = sp->c_split_or_throw();
  const double alpha = param(p, "alpha_factor", 0.05) * cs;
  const int points = param(p, "points", 50);
  const int mesh = param(p, "mesh", 64);
  const int levels = param(p, "levels", 5);
  const double radius = param(p, "radius", 2.0);
  const double slack = c.tol("density_slack", 0.05);
  const double h = sp->V().hom_dim();
  auto radii = aligned_radii(radius, levels);
  std::mt19937_64 rng(seed);
  auto prof = random_lipschitz_profile(*sp, alpha, rng);
  std::vector<GroupPoint> base;
  for (int i = 0; i < points; ++i) base.push_back(sp->V().orthogonal_projection(sample_in_ball(c.nrm, 0.5, rng)));
  auto graph = density_ratio_study(*sp, c.nrm, prof, base, radii, radius, levels, mesh);
  auto flat = density_ratio_study(*sp, c.nrm, [&](const GroupPoint&) { return c.g->identity(); },
                                  {base.front()}, radii, radius, levels, mesh);
  const double fc = frak_c(alpha, cs);
  const double bound = std::pow(1.0 - fc, 2.0 * h) * std::pow(1.0 + fc, -h);
  r.values = {{"alpha", alpha}, {"frak_c", fc}, {"bound", bound}, {"slack", slack}, {"min_ratio", graph.min_ratio},
              {"flat_ratio", flat.min_ratio}, {"points", points}, {"lipschitz", prof.lipschitz()}};
  // Mean density over the centres, as a plot-ready profile.
  std::vector<double> mean(radii.size(), 0.0);
  for (const auto& pr : graph.profiles)
    for (std::size_t k = 0; k < radii.size(); ++k) mean[k] += pr[k] / graph.profiles.size();
  r.tables.push_back(profile_table("mean_density", radii, mean));
  r.tables.push_back(profile_table("flat_density", radii, flat.profiles.front()));
  pass_if(r, graph.min_ratio >= bound - slack && flat.min_ratio >= 0.95, "density ratio below the bound");
}

void check_blowup(const Context& c, const Json& p, std::uint64_t, CheckResult& r) {
  auto sp = c.split();
  const auto& v = sp->V();
  const double cc = param(p, "c", 0.2);
  const int n = param(p, "radii", 8);
  const int res = param(p, "resolution", 9);
  if (sp->L().basis(1).cols() == 0) return skip(r, "complement has no horizontal direction");
  std::vector<double> radii;
  for (int i = 0; i < n; ++i) radii.push_back(std::ldexp(1.0, -i));
  // phi(b) = c t(b) l with t the first coordinate of V's top layer: flat at 0 to order > 1.
  const Group& g = *c.g;
  int top = g.step();
  while (top > 1 && v.basis(top).cols() == 0) --top;
  GroupPoint axis = GroupPoint::Zero(g.dim()), dir = GroupPoint::Zero(g.dim());
  axis.segment(g.algebra().layer_offset(top), g.algebra().layer_size(top)) = v.basis(top).col(0);
  dir.head(g.algebra().layer_size(1)) = sp->L().basis(1).col(0);
  auto base = multiscale_base_points(v, c.nrm, radii, 1.0, res);
  std::vector<GroupPoint> gamma;
  for (const auto& b : base) gamma.push_back(g.product(b, cc * axis.dot(b) * dir));
  auto graph = extract_graph(gamma, sp, param(p, "alpha", 0.45), c.nrm);
  FlatnessOptions opt;
  opt.resolution = res;
  GroupPoint shift = 0.3 * dir + 0.2 * axis;
  shift.head(g.algebra().layer_size(1)) += 0.2 * v.basis(1).col(0);
  GroupPoint q = p.contains("q") ? point_from(p["q"], g.dim(), "q") : shift;
  auto moved = translate_function(graph, q);
  GroupPoint a0 = sp->project(q).first;
  auto prof = flatness_profile(moved.graph, a0, v, radii, 1.0, c.nrm, opt);
  r.values = {{"spearman", prof.spearman}, {"floor", prof.floor}, {"final", prof.values.back()},
              {"values", prof.values}, {"dropped", moved.dropped}};
  r.tables.push_back(profile_table("flatness", radii, prof.values));
  pass_if(r, prof.spearman < -0.9 && prof.values.back() < 2.0 * prof.floor, "blow-ups do not flatten");
}

void check_constants(const Context& c, const Json& p, std::uint64_t, CheckResult& r) {
  const double theta = param(p, "theta", 2.0);
  const double h = param(p, "h", static_cast<double>(lookup(c.subgroups, c.split_names.first).hom_dim()));
  double dg = delta_G(theta, h), c1 = C1(theta, h), e = eta(h), c4 = C4(theta, h);
  // Closed forms rearranged: each residual vanishes exactly in exact arithmetic.
  double r1 = std::abs(dg * theta * std::pow(2.0, 4 * h + 5) - 1.0);
  double r2 = std::abs(std::pow(c1, h + 1) / (std::pow(2.0, h + 2) * theta) - 1.0);
  double r3 = std::abs(std::pow(c4, 1.0 / (h + 2)) * 32 * theta / (e * std::pow(1 - e, h)) - 1.0);
  r.values = {{"theta", theta}, {"h", h}, {"delta_G", dg}, {"C1", c1}, {"eta", e}, {"C4", c4}};
  pass_if(r, r1 < 1e-12 && r2 < 1e-12 && r3 < 1e-12 && e == 1.0 / (h + 1), "constant identities fail");
}

void check_cover(const Context& c, const Json& p, std::uint64_t seed, CheckResult& r) {
  const auto& v = lookup(c.subgroups, c.split_names.first);
  const std::string other = param<std::string>(p, "other", "W");
  if (!c.has(other)) return skip(r, "no second direction '" + other + "'");
  const auto& w = lookup(c.subgroups, other);
  const Group& g = *c.g;
  const int k = param(p, "k", 3);
  const double beta = param(p, "beta", 0.25);
  // Patches of v and w cosets far apart, labelled by construction.
  auto patch = [&](const HomogeneousSubgroup& s, const GroupPoint& q) {
    std::vector<GroupPoint> out;
    for (const auto& a : haar_on_subgroup(s, c.nrm, 0.5, 24).lattice)
      if (c.nrm.norm(a) <= 0.4) out.push_back(g.product(q, a));
    return out;
  };
  GroupPoint q2 = GroupPoint::Zero(g.dim());
  q2[0] = 2.0;
  auto e = patch(v, g.identity());
  std::size_t na = e.size();
  auto b = patch(w, q2);
  e.insert(e.end(), b.begin(), b.end());

  std::vector<ConeSpec> family{ConeSpec(v, 0.1), ConeSpec(w, 0.1)};
  auto asg = cone_decompose(e, family, param(p, "locality", 0.5), c.nrm);
  std::size_t mislabelled = 0;
  for (std::size_t i = 0; i < e.size(); ++i)
    if (!asg.label[i] || *asg.label[i] != (i < na ? 0u : 1u)) ++mislabelled;

  auto conj = estimate_conjugate_constant(c.nrm, k, param<std::size_t>(p, "conj_samples", 5000), seed);
  std::size_t pieces = 0, bad = 0;
  Table t{"pieces", {"point", "class", "piece", "cone_ok"}, {}};
  for (std::size_t f = 0; f < family.size(); ++f) {
    std::vector<GroupPoint> cls;
    for (std::size_t i : asg.classes[f]) cls.push_back(e[i]);
    if (cls.empty()) continue;
    auto tc = tubular_cover(cls, family[f].V, 1, k, beta, conj.value, c.nrm);
    for (std::size_t i = 0; i < cls.size(); ++i)
      t.rows.push_back({double(asg.classes[f][i]), double(f), double(pieces + tc.piece_of[i]),
                        tc.pieces[tc.piece_of[i]].cone_ok ? 1.0 : 0.0});
    pieces += tc.pieces.size();
    for (const auto& pc : tc.pieces) bad += !pc.cone_ok;
  }
  r.tables.push_back(std::move(t));
  r.values = {{"points", e.size()}, {"unassigned", asg.unassigned.size()}, {"mislabelled", mislabelled},
              {"pieces", pieces}, {"pieces_failing_cone", bad}, {"conj_const", conj.value},
              {"tube_radius", tube_radius(g.step(), 1, k, beta, conj.value)}};
  pass_if(r, mislabelled == 0 && bad == 0, "decomposition or cover failed");
}

struct Registered {
  const char* name;
  CheckFn fn;
  std::vector<const char*> aliases;
};

const std::vector<Registered>& registry() {
  static const std::vector<Registered> r{
      {"ball_hit", check_ball_hit, {}},
      {"bch", check_bch, {}},
      {"blowup_convergence", check_blowup, {"hausdorff_blowup"}},
      {"cone_trap", check_cone_trap, {"trap"}},
      {"constants", check_constants, {}},
      {"density_ratio", check_density_ratio, {"density"}},
      {"fk_scaling", check_fk_scaling, {}},
      {"flatness", check_flatness, {"flat_self_test"}},
      {"haar_normalization", check_haar, {"haar"}},
      {"norm_calibration", check_norm, {}},
      {"projection_inclusion", check_inclusion, {"inclusion"}},
      {"splitting", check_splitting, {}},
      {"tubular_cover", check_cover, {"rectifiability_cover"}},
      {"vitali", check_vitali, {"vitali_covering"}},
  };
  return r;
}

const Registered* find_check(const std::string& name) {
  for (const auto& r : registry()) {
    if (name == r.name) return &r;
    for (const char* a : r.aliases)
      if (name == a) return &r;
  }
  return nullptr;
}

}  // namespace

std::vector<std::string> available_checks() {
  std::vector<std::string> out;
  for (const auto& r : registry()) out.push_back(r.name);
  for (const auto& r : registry())
    for (const char* a : r.aliases) out.push_back(a);
  return out;
}

ScenarioSpec parse_scenario(const Json& j) {
  if (!j.is_object()) throw ConfigError("scenario must be a JSON object");
  static const std::set<std::string> keys{"name", "group", "epsilons", "subgroups", "splitting", "measure",
                                          "checks", "tolerances", "params", "seed", "description"};
  for (const auto& [k, v] : j.items())
    if (!keys.count(k)) throw ConfigError("unknown scenario key '" + k + "'");
  if (!j.contains("seed")) throw ConfigError("scenario needs a \"seed\"");
  ScenarioSpec s;
  try {
    s.seed = j.at("seed").get<std::uint64_t>();
    s.name = j.value("name", s.name);
    if (j.contains("group")) s.group = j.at("group");
    if (j.contains("epsilons")) s.epsilons = j.at("epsilons").get<std::vector<double>>();
    if (j.contains("subgroups"))
      for (const auto& [k, v] : j.at("subgroups").items()) s.subgroups[k] = v;
    if (j.contains("splitting")) {
      auto sp = j.at("splitting").get<std::vector<std::string>>();
      if (sp.size() != 2) throw ConfigError("splitting names two subgroups");
      s.splitting = std::make_pair(sp[0], sp[1]);
    }
    if (j.contains("measure")) s.measure = j.at("measure");
    s.checks = j.value("checks", std::vector<std::string>{});
    if (j.contains("tolerances")) s.tolerances = j.at("tolerances").get<std::map<std::string, double>>();
    if (j.contains("params")) s.params = j.at("params");
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("malformed scenario: ") + e.what());
  }
  std::set<std::string> seen;
  for (const auto& c : s.checks) {
    if (!find_check(c)) {
      std::string list;
      for (const auto& n : available_checks()) list += (list.empty() ? "" : ", ") + n;
      throw ConfigError("unknown check '" + c + "'; available: " + list);
    }
    if (!seen.insert(c).second) throw ConfigError("check '" + c + "' listed twice");
  }
  return s;
}

Json ScenarioReport::to_json() const {
  Json j;
  j["scenario"] = scenario;
  j["seed"] = seed;
  j["version"] = kVersion;
  j["group"] = group;
  j["constants"] = constants;
  Json cs = Json::array();
  for (const auto& c : checks) {
    Json e = {{"name", c.name}, {"status", to_string(c.status)}, {"values", c.values}, {"seconds", c.seconds}};
    if (!c.message.empty()) e["message"] = c.message;
    cs.push_back(e);
  }
  j["checks"] = cs;
  j["totals"] = {{"checks", checks.size()}, {"pass", pass}, {"fail", fail}, {"skipped", skipped}};
  j["success"] = success();
  return j;
}

ScenarioReport run_scenario(const ScenarioSpec& spec, int threads) {
  GroupPtr g = group_from_json(spec.group);
  Json norm_spec = spec.group.is_object() ? spec.group : Json::object();
  if (spec.epsilons) norm_spec["epsilons"] = *spec.epsilons;
  Context ctx{spec, g, norm_from_json(g, norm_spec), default_subgroups(g), {"V", "L"}, std::nullopt};
  for (const auto& [name, js] : spec.subgroups) {
    ctx.subgroups.erase(name);
    ctx.subgroups.emplace(name, subgroup_from_json(g, js));
  }
  if (spec.splitting) ctx.split_names = *spec.splitting;
  lookup(ctx.subgroups, ctx.split_names.first);
  lookup(ctx.subgroups, ctx.split_names.second);
  if (spec.measure.is_object()) {
    if (spec.measure.contains("file")) {
      std::ifstream in(spec.measure.at("file").get<std::string>());
      if (!in) throw ConfigError("cannot open measure file");
      ctx.measure = read_measure_csv(in, g->dim());
    } else if (spec.measure.contains("synthetic")) {
      ctx.measure = generate_synthetic(spec.measure.at("synthetic").get<std::string>(),
                                       spec.measure.value("params", Json::object()), ctx.nrm, ctx.subgroups,
                                       spec.seed);
    } else {
      throw ConfigError("measure needs \"file\" or \"synthetic\"");
    }
  }

  ScenarioReport rep;
  rep.scenario = spec.name;
  rep.seed = spec.seed;
  rep.group = group_to_json(*g);
  rep.group["epsilons"] = ctx.nrm.epsilons();
  if (ctx.nrm.certificate)
    rep.group["calibration"] = {{"seed", ctx.nrm.certificate->seed}, {"samples", ctx.nrm.certificate->samples},
                                {"box_radius", ctx.nrm.certificate->box_radius},
                                {"rounds", ctx.nrm.certificate->rounds}};
  {
    const double theta = 2.0, gamma = 1.0;
    const double h = lookup(ctx.subgroups, ctx.split_names.first).hom_dim();
    rep.constants = {{"theta", theta}, {"gamma", gamma}, {"h", h}, {"delta_G", delta_G(theta, h)},
                     {"C1", C1(theta, h)}, {"C4", C4(theta, h)}, {"eta", eta(h)}};
  }

  rep.checks.resize(spec.checks.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next++) < spec.checks.size();) {
      const std::string& name = spec.checks[i];
      CheckResult& r = rep.checks[i];
      r.name = name;
      auto t0 = std::chrono::steady_clock::now();
      try {
        Json p = spec.params.is_object() && spec.params.contains(name) ? spec.params.at(name) : Json::object();
        find_check(name)->fn(ctx, p, mix_seed(spec.seed, name), r);
      } catch (const ConfigError&) {
        throw;
      } catch (const std::exception& e) {
        r.status = CheckStatus::Fail;
        r.message = std::string("error: ") + e.what();
      }
      r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
  };
  const int nt = std::max(1, std::min<int>(threads, static_cast<int>(spec.checks.size())));
  if (nt == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    std::exception_ptr err;
    std::mutex mu;
    for (int t = 0; t < nt; ++t)
      pool.emplace_back([&] {
        try {
          worker();
        } catch (...) {
          std::lock_guard lock(mu);
          err = std::current_exception();
        }
      });
    for (auto& t : pool) t.join();
    if (err) std::rethrow_exception(err);
  }
  std::sort(rep.checks.begin(), rep.checks.end(), [](const auto& a, const auto& b) { return a.name < b.name; });
  for (const auto& c : rep.checks) {
    if (c.status == CheckStatus::Pass) ++rep.pass;
    else if (c.status == CheckStatus::Fail) ++rep.fail;
    else ++rep.skipped;
  }
  // Constants echoed with the splitting when one is available.
  try {
    auto sp = ctx.split();
    double cs = sp->c_split_or_throw();
    rep.constants["c_split"] = cs;
    rep.constants["frak_c(0.1 c_split)"] = frak_c(0.1 * cs, cs);
    rep.constants["frak_D(0.1 c_split)"] = frak_D(0.1 * cs, cs);
  } catch (const Error&) {
  }
  return rep;
}

void write_report_csv(const ScenarioReport& report, const std::string& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& c : report.checks) {
    for (const auto& t : c.tables) {
      std::ofstream out(std::filesystem::path(dir) / (c.name + "_" + t.name + ".csv"));
      out.precision(17);
      for (std::size_t i = 0; i < t.header.size(); ++i) out << (i ? "," : "") << t.header[i];
      out << '\n';
      for (const auto& row : t.rows) {
        for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
        out << '\n';
      }
    }
  }
}

}  // namespace carnot
