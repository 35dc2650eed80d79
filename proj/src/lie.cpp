#include "carnot/lie.hpp"

#include "carnot/errors.hpp"

#include <cmath>
#include <set>
#include <sstream>
#include <utility>

namespace carnot {

namespace {

constexpr double kExactTol = 1e-12;

}  // namespace

StratifiedAlgebra::StratifiedAlgebra(std::vector<int> layer_dims,
                                     const std::vector<BracketEntry>& entries)
    : layer_dims_(std::move(layer_dims)) {
  if (layer_dims_.empty()) throw StructuralError("algebra needs at least one layer");
  for (int d : layer_dims_) {
    if (d <= 0) throw StructuralError("layer dimensions must be positive");
  }
  for (std::size_t l = 0; l < layer_dims_.size(); ++l) {
    offsets_.push_back(n_);
    for (int a = 0; a < layer_dims_[l]; ++a) layer_index_.push_back(static_cast<int>(l) + 1);
    n_ += layer_dims_[l];
  }
  table_.assign(static_cast<std::size_t>(n_) * n_ * n_, 0.0);

  std::set<std::pair<int, int>> given;
  for (const auto& e : entries) {
    if (e.i < 0 || e.i >= n_ || e.j < 0 || e.j >= n_ || e.k < 0 || e.k >= n_) {
      std::ostringstream msg;
      msg << "bracket entry (" << e.i << "," << e.j << "," << e.k << ") outside dimension " << n_;
      throw StructuralError(msg.str());
    }
    given.insert({e.i, e.j});
  }
  for (const auto& e : entries) {
    table_[(e.i * n_ + e.j) * n_ + e.k] += e.coeff;
    if (!given.count({e.j, e.i}) && e.i != e.j) {
      table_[(e.j * n_ + e.i) * n_ + e.k] -= e.coeff;
    }
  }
  for (int i = 0; i < n_; ++i)
    for (int j = 0; j < n_; ++j)
      for (int k = 0; k < n_; ++k) {
        double c = coefficient(i, j, k);
        if (c != 0.0) nonzero_.push_back({i, j, k, c});
      }
}

int StratifiedAlgebra::hom_dim() const {
  int q = 0;
  for (std::size_t l = 0; l < layer_dims_.size(); ++l) q += static_cast<int>(l + 1) * layer_dims_[l];
  return q;
}

AlgebraElement StratifiedAlgebra::bracket(const AlgebraElement& a, const AlgebraElement& b) const {
  if (a.size() != n_ || b.size() != n_) throw StructuralError("bracket: dimension mismatch");
  AlgebraElement out = AlgebraElement::Zero(n_);
  for (const auto& e : nonzero_) out[e.k] += e.coeff * a[e.i] * b[e.j];
  return out;
}

AlgebraReport validate_algebra(const StratifiedAlgebra& alg) {
  AlgebraReport rep;
  const int n = alg.total_dim();

  for (int i = 0; i < n && rep.antisymmetry.pass; ++i)
    for (int j = i; j < n && rep.antisymmetry.pass; ++j)
      for (int k = 0; k < n; ++k) {
        if (std::abs(alg.coefficient(i, j, k) + alg.coefficient(j, i, k)) > kExactTol) {
          rep.antisymmetry.pass = false;
          rep.antisymmetry.witness = std::array<int, 3>{i, j, k};
          rep.antisymmetry.detail = "c(i,j,k) != -c(j,i,k)";
          break;
        }
      }

  auto basis = [n](int i) {
    AlgebraElement e = AlgebraElement::Zero(n);
    e[i] = 1.0;
    return e;
  };
  for (int i = 0; i < n && rep.jacobi.pass; ++i)
    for (int j = 0; j < n && rep.jacobi.pass; ++j)
      for (int k = 0; k < n; ++k) {
        AlgebraElement a = basis(i), b = basis(j), c = basis(k);
        AlgebraElement s = alg.bracket(a, alg.bracket(b, c)) + alg.bracket(b, alg.bracket(c, a)) +
                           alg.bracket(c, alg.bracket(a, b));
        if (s.cwiseAbs().maxCoeff() > kExactTol) {
          rep.jacobi.pass = false;
          rep.jacobi.witness = std::array<int, 3>{i, j, k};
          rep.jacobi.detail = "Jacobi identity fails";
          break;
        }
      }

  for (const auto& e : alg.nonzero_entries()) {
    if (std::abs(e.coeff) <= kExactTol) continue;
    int target = alg.layer_of(e.i) + alg.layer_of(e.j);
    if (target > alg.step() || alg.layer_of(e.k) != target) {
      rep.grading.pass = false;
      rep.grading.witness = std::array<int, 3>{e.i, e.j, e.k};
      rep.grading.detail = "[V_a, V_b] leaves V_{a+b}";
      break;
    }
  }

  for (int layer = 1; layer < alg.step(); ++layer) {
    const int off = alg.layer_offset(layer + 1);
    const int dim = alg.layer_size(layer + 1);
    std::vector<Eigen::VectorXd> cols;
    for (int a = alg.layer_offset(1); a < alg.layer_offset(1) + alg.layer_size(1); ++a)
      for (int b = alg.layer_offset(layer); b < alg.layer_offset(layer) + alg.layer_size(layer); ++b)
        cols.push_back(alg.bracket(basis(a), basis(b)).segment(off, dim));
    Eigen::MatrixXd m(dim, static_cast<Eigen::Index>(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c) m.col(static_cast<Eigen::Index>(c)) = cols[c];
    Eigen::FullPivLU<Eigen::MatrixXd> lu(m);
    lu.setThreshold(1e-10);
    if (lu.rank() != dim) {
      rep.generation.pass = false;
      rep.generation.witness = std::array<int, 3>{layer, layer + 1, -1};
      std::ostringstream msg;
      msg << "[V_1, V_" << layer << "] spans rank " << lu.rank() << " of " << dim;
      rep.generation.detail = msg.str();
      break;
    }
  }
  return rep;
}

Group::Group(StratifiedAlgebra alg, std::string name) : alg_(std::move(alg)), name_(std::move(name)) {}

void Group::check_point(const GroupPoint& p) const {
  if (p.size() != dim()) {
    std::ostringstream msg;
    msg << "point of length " << p.size() << " in a group of dimension " << dim();
    throw StructuralError(msg.str());
  }
}

GroupPoint Group::product(const GroupPoint& p, const GroupPoint& q) const {
  check_point(p);
  check_point(q);
  switch (step()) {
    case 1:
      return p + q;
    case 2:
      return p + q + 0.5 * alg_.bracket(p, q);
    case 3: {
      AlgebraElement pq = alg_.bracket(p, q);
      return p + q + 0.5 * pq + (alg_.bracket(p, pq) - alg_.bracket(q, pq)) / 12.0;
    }
    default:
      // Extension point: step 4 needs the degree-4 term -[q,[p,[p,q]]]/24.
      throw UnsupportedStepError("group law implemented for step <= 3 only");
  }
}

GroupPoint Group::inverse(const GroupPoint& p) const {
  check_point(p);
  return -p;
}

GroupPoint Group::dilate(double lambda, const GroupPoint& p) const {
  check_point(p);
  if (!(lambda > 0.0)) throw DomainError("dilation factor must be positive");
  GroupPoint out = p;
  double scale = 1.0;
  for (int l = 1; l <= step(); ++l) {
    scale *= lambda;
    out.segment(alg_.layer_offset(l), alg_.layer_size(l)) *= scale;
  }
  return out;
}

namespace {

GroupPtr make_heisenberg(int n) {
  std::vector<StratifiedAlgebra::BracketEntry> br;
  for (int a = 0; a < n; ++a) br.push_back({a, n + a, 2 * n, 1.0});
  return std::make_shared<const Group>(StratifiedAlgebra({2 * n, 1}, br),
                                       "heisenberg" + std::to_string(n));
}

GroupPtr make_engel() {
  std::vector<StratifiedAlgebra::BracketEntry> br = {{0, 1, 2, 1.0}, {0, 2, 3, 1.0}};
  return std::make_shared<const Group>(StratifiedAlgebra({2, 1, 1}, br), "engel");
}

GroupPtr make_abelian(int n) {
  return std::make_shared<const Group>(StratifiedAlgebra({n}, {}), "abelian" + std::to_string(n));
}

int parse_suffix(std::string_view name, std::string_view prefix) {
  if (name.substr(0, prefix.size()) != prefix || name.size() == prefix.size()) return -1;
  int v = 0;
  for (char ch : name.substr(prefix.size())) {
    if (ch < '0' || ch > '9') return -1;
    v = v * 10 + (ch - '0');
    if (v > 64) return -1;
  }
  return v;
}

}  // namespace

GroupPtr preset_group(std::string_view name) {
  if (name == "engel") return make_engel();
  if (int n = parse_suffix(name, "heisenberg"); n >= 1) return make_heisenberg(n);
  if (int n = parse_suffix(name, "abelian"); n >= 1) return make_abelian(n);
  throw ConfigError("unknown group preset '" + std::string(name) + "'");
}

std::vector<std::string> preset_names() {
  return {"heisenberg1", "heisenbergN", "engel", "abelianN"};
}

}  // namespace carnot
