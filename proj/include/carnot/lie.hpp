#pragma once

#include <Eigen/Dense>

#include <array>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace carnot {

// Points of the group and elements of its Lie algebra share exponential
// coordinates, so both are plain coordinate vectors.
using GroupPoint = Eigen::VectorXd;
using AlgebraElement = Eigen::VectorXd;

/// Graded nilpotent Lie algebra given by structure constants over a graded
/// basis e_0..e_{n-1}: [e_i, e_j] = sum_k c(i,j,k) e_k.
///
/// Coefficients are stored exactly as supplied. When only c(i,j,.) is given,
/// c(j,i,.) is filled in antisymmetrically; when both are given they are kept
/// verbatim so that validate_algebra can report the inconsistency.
class StratifiedAlgebra {
 public:
  struct BracketEntry {
    int i;  // 0-based basis indices
    int j;
    int k;
    double coeff;
  };

  StratifiedAlgebra(std::vector<int> layer_dims, const std::vector<BracketEntry>& entries);

  const std::vector<int>& layer_dims() const { return layer_dims_; }
  int step() const { return static_cast<int>(layer_dims_.size()); }
  int total_dim() const { return n_; }
  int hom_dim() const;

  // Layers are numbered 1..step as in the usual V_1 + ... + V_step notation.
  int layer_offset(int layer) const { return offsets_[layer - 1]; }
  int layer_size(int layer) const { return layer_dims_[layer - 1]; }
  int layer_of(int index) const { return layer_index_[index]; }

  double coefficient(int i, int j, int k) const { return table_[(i * n_ + j) * n_ + k]; }

  AlgebraElement bracket(const AlgebraElement& a, const AlgebraElement& b) const;

  // Nonzero structure constants, in (i, j, k) lexicographic order.
  const std::vector<BracketEntry>& nonzero_entries() const { return nonzero_; }

 private:
  std::vector<int> layer_dims_;
  std::vector<int> offsets_;
  std::vector<int> layer_index_;
  int n_ = 0;
  std::vector<double> table_;
  std::vector<BracketEntry> nonzero_;
};

struct InvariantCheck {
  bool pass = true;
  // First violating basis triple (0-based); pairs leave the third slot at -1.
  std::optional<std::array<int, 3>> witness;
  std::string detail;
};

struct AlgebraReport {
  InvariantCheck antisymmetry;
  InvariantCheck jacobi;
  InvariantCheck grading;
  InvariantCheck generation;
  bool all_pass() const {
    return antisymmetry.pass && jacobi.pass && grading.pass && generation.pass;
  }
};

AlgebraReport validate_algebra(const StratifiedAlgebra& alg);

/// Carnot group in exponential coordinates. The product is the exact
/// Baker-Campbell-Hausdorff series, which terminates for step <= 3.
class Group {
 public:
  explicit Group(StratifiedAlgebra alg, std::string name = "custom");

  const StratifiedAlgebra& algebra() const { return alg_; }
  const std::string& name() const { return name_; }
  int dim() const { return alg_.total_dim(); }
  int step() const { return alg_.step(); }
  int hom_dim() const { return alg_.hom_dim(); }

  GroupPoint identity() const { return GroupPoint::Zero(dim()); }

  GroupPoint product(const GroupPoint& p, const GroupPoint& q) const;
  GroupPoint inverse(const GroupPoint& p) const;
  GroupPoint dilate(double lambda, const GroupPoint& p) const;

  // p^{-1} q without forming the inverse separately.
  GroupPoint left_quotient(const GroupPoint& p, const GroupPoint& q) const {
    return product(inverse(p), q);
  }

  Eigen::VectorXd layer(const GroupPoint& p, int layer) const {
    return p.segment(alg_.layer_offset(layer), alg_.layer_size(layer));
  }

 private:
  void check_point(const GroupPoint& p) const;

  StratifiedAlgebra alg_;
  std::string name_;
};

using GroupPtr = std::shared_ptr<const Group>;

/// Built-in groups: "heisenberg1", "heisenbergN" (N >= 1), "engel",
/// "abelianN" (R^N with the zero bracket).
GroupPtr preset_group(std::string_view name);
std::vector<std::string> preset_names();

}  // namespace carnot
