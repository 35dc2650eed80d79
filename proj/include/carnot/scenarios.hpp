#pragma once

#include "carnot/covering.hpp"
#include "carnot/measures.hpp"

#include "json.hpp"

#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace carnot {

using Json = nlohmann::json;

// ---- I/O -------------------------------------------------------------------

// A preset name, or {"layers":[n1,...], "brackets":[{"i":1,"j":2,"coeffs":{"3":1}}], "name":...}
// with 1-based basis indices.
GroupPtr group_from_json(const Json& j);
Json group_to_json(const Group& g);
// "epsilons" from the scenario when present, otherwise calibrated.
BoxNorm norm_from_json(GroupPtr g, const Json& spec);
// {"layers":[[v, ...], ...]}: spanning vectors of each layer in that layer's coordinates.
HomogeneousSubgroup subgroup_from_json(GroupPtr g, const Json& j);
Json subgroup_to_json(const HomogeneousSubgroup& w);

// One atom per row: coordinates then mass; a non-numeric first row is a header.
DiscreteMeasure read_measure_csv(std::istream& in, int dim);
void write_measure_csv(std::ostream& out, const DiscreteMeasure& mu);

// ---- synthetic objects -----------------------------------------------------

// a -> A sum_k c_k sin(w_k t(a) + psi_k) l, where t reads the first horizontal
// coordinate of V and l is a unit horizontal vector of L. Its Lipschitz
// constant in t is A sum |c_k| w_k.
struct LipschitzProfile {
  GroupPoint axis;       // V's first horizontal basis vector, full coordinates
  GroupPoint direction;  // unit horizontal vector of L
  std::vector<double> c, w, psi;
  double amplitude = 0.0;

  GroupPoint operator()(const GroupPoint& a) const;
  double lipschitz() const;
};

// Coefficients and amplitude drawn at random; draws over the budget alpha
// are rejected. Throws ConfigError when L has no horizontal part.
LipschitzProfile random_lipschitz_profile(const SplittingPair& sp, double alpha, std::mt19937_64& rng);

// Atoms a -> a . phi(a), masses unchanged.
DiscreteMeasure graph_pushforward(const DiscreteMeasure& base, const std::function<GroupPoint(const GroupPoint&)>& phi,
                                  const Group& g);

// Kinds: "haar_coset", "cone_graph", "perturbed_flat". Subgroups are looked up
// by name ("V", "L" by default). Deterministic per seed.
DiscreteMeasure generate_synthetic(const std::string& kind, const Json& params, const BoxNorm& nrm,
                                   const std::map<std::string, HomogeneousSubgroup>& subgroups, std::uint64_t seed);

// Default subgroups of any group: "V" = {x_1 = 0}, "L" = the x_1 axis and,
// with two or more horizontal directions, "W" = {x_2 = 0} and "M" = the x_2 axis.
std::map<std::string, HomogeneousSubgroup> default_subgroups(GroupPtr g);

// F_{0,1} between the Haar lattices of V at mesh m and 2m: the resolution
// limit of flatness measurements at mesh m.
double flat_floor(const HomogeneousSubgroup& v, const BoxNorm& nrm, int mesh);

struct DensityRatioStudy {
  std::vector<double> radii;
  std::vector<GroupPoint> centres;             // graph points a . phi(a)
  std::vector<std::vector<double>> profiles;   // density per centre and radius
  std::vector<double> ratios;                  // min / max of each profile
  double min_ratio = 0.0;
};

// Density profiles of the graph measure (a -> a . phi(a))_# Haar(V), sampled
// by dyadic rings about every base point.
DensityRatioStudy density_ratio_study(const SplittingPair& sp, const BoxNorm& nrm,
                                      const std::function<GroupPoint(const GroupPoint&)>& phi,
                                      const std::vector<GroupPoint>& base_points, const std::vector<double>& radii,
                                      double radius, int levels, int mesh);

// Radii r with exact lattice counts in graded_haar(radius, levels, mesh 64):
// rho_j {1/2, 3/4}, rho_j = radius 2^-j, from radius/2 downwards.
std::vector<double> aligned_radii(double radius, int levels);

// ---- scenarios -------------------------------------------------------------

struct ScenarioSpec {
  std::string name = "scenario";
  Json group = "heisenberg1";
  std::optional<std::vector<double>> epsilons;
  std::map<std::string, Json> subgroups;  // added to / overriding the defaults
  std::optional<std::pair<std::string, std::string>> splitting;  // (V, L) names
  Json measure;                           // null, {"file": path} or {"synthetic": kind, "params": {...}}
  std::vector<std::string> checks;
  std::map<std::string, double> tolerances;
  Json params = Json::object();           // per-check parameter objects
  std::uint64_t seed = 0;
};

// Throws ConfigError on a missing seed, unknown keys or unknown checks.
ScenarioSpec parse_scenario(const Json& j);

// Canonical names followed by their aliases.
std::vector<std::string> available_checks();

enum class CheckStatus { Pass, Fail, Skipped };
const char* to_string(CheckStatus s);

struct Table {
  std::string name;
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

struct CheckResult {
  std::string name;
  CheckStatus status = CheckStatus::Skipped;
  std::string message;
  Json values = Json::object();
  std::vector<Table> tables;  // profiles (r, value) and assignments, for CSV export
  double seconds = 0.0;
};

struct ScenarioReport {
  std::string scenario;
  std::uint64_t seed = 0;
  Json group;
  Json constants = Json::object();
  std::vector<CheckResult> checks;  // sorted by name
  std::size_t pass = 0, fail = 0, skipped = 0;

  bool success() const { return fail == 0 && skipped == 0; }
  Json to_json() const;
};

ScenarioReport run_scenario(const ScenarioSpec& spec, int threads = 1);

// Writes <dir>/<check>_<table>.csv for every table of every check.
void write_report_csv(const ScenarioReport& report, const std::string& dir);

}  // namespace carnot
