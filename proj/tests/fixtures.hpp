#pragma once

#include "carnot/subgroups.hpp"

#include <cmath>
#include <initializer_list>
#include <memory>

namespace carnot::testing {

using Mat = Eigen::MatrixXd;

inline GroupPoint pt(std::initializer_list<double> v) {
  GroupPoint p(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) p[i++] = x;
  return p;
}

inline Mat col(std::initializer_list<double> v) {
  Mat m(static_cast<Eigen::Index>(v.size()), 1);
  Eigen::Index i = 0;
  for (double x : v) m(i++, 0) = x;
  return m;
}

inline Mat none(int rows) { return Mat(rows, 0); }

struct Heis {
  GroupPtr g = preset_group("heisenberg1");
  BoxNorm nrm{g, {1.0, 1.0}};
  HomogeneousSubgroup vertical{g, {col({0, 1}), col({1})}};
  HomogeneousSubgroup horizontal{g, {col({1, 0})}};
  HomogeneousSubgroup line(double theta) const {
    return HomogeneousSubgroup(g, {col({std::cos(theta), std::sin(theta)})});
  }
  HomogeneousSubgroup plane(double theta) const {
    return HomogeneousSubgroup(g, {col({std::cos(theta), std::sin(theta)}), col({1})});
  }
  // Vertical plane over the horizontal line, c_split estimated (it is 1).
  std::shared_ptr<SplittingPair> split() const {
    auto sp = std::make_shared<SplittingPair>(vertical, horizontal);
    estimate_c_split(*sp, nrm, 300, 7);
    return sp;
  }
};

struct Engel {
  GroupPtr g = preset_group("engel");
  BoxNorm nrm{g, {1.0, 1.0, 1.0}};
  HomogeneousSubgroup M(double a, double b) const { return HomogeneousSubgroup(g, {col({a, b})}); }
  HomogeneousSubgroup N(double c, double d) const {
    return HomogeneousSubgroup(g, {col({c, d}), col({1}), col({1})});
  }
  HomogeneousSubgroup K() const { return HomogeneousSubgroup(g, {col({0, 1}), col({1})}); }
  HomogeneousSubgroup H(double a, double b) const {
    return HomogeneousSubgroup(g, {col({a, b}), none(1), col({1})});
  }
};

}  // namespace carnot::testing
