// carnot-gmt: run verification scenarios on Carnot groups.

#include "carnot/errors.hpp"
#include "carnot/scenarios.hpp"

#include "CLI11.hpp"

#include <fstream>
#include <iostream>

using namespace carnot;

namespace {

Json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

int cmd_run(const std::string& path, const std::string& out, const std::string& csv_dir,
            std::optional<std::uint64_t> seed, int threads) {
  Json j = load_json(path);
  if (seed) j["seed"] = *seed;
  auto spec = parse_scenario(j);
  auto rep = run_scenario(spec, threads);
  Json js = rep.to_json();
  if (out.empty()) {
    std::cout << js.dump(2) << '\n';
  } else {
    std::ofstream f(out);
    f << js.dump(2) << '\n';
  }
  if (!csv_dir.empty()) write_report_csv(rep, csv_dir);
  for (const auto& c : rep.checks)
    std::cerr << to_string(c.status) << "  " << c.name << (c.message.empty() ? "" : "  (" + c.message + ")") << '\n';
  std::cerr << rep.pass << " pass, " << rep.fail << " fail, " << rep.skipped << " skipped\n";
  return rep.success() ? 0 : 1;
}

int cmd_validate(const std::string& path) {
  Json j = load_json(path);
  GroupPtr g = group_from_json(j);
  auto rep = validate_algebra(g->algebra());
  auto inv = [](const InvariantCheck& c) {
    Json e = {{"pass", c.pass}};
    if (c.witness) e["witness"] = {(*c.witness)[0] + 1, (*c.witness)[1] + 1, (*c.witness)[2] + 1};
    if (!c.detail.empty()) e["detail"] = c.detail;
    return e;
  };
  Json out = {{"group", group_to_json(*g)},
              {"antisymmetry", inv(rep.antisymmetry)},
              {"jacobi", inv(rep.jacobi)},
              {"grading", inv(rep.grading)},
              {"generation", inv(rep.generation)},
              {"valid", rep.all_pass()}};
  bool ok = rep.all_pass();
  if (ok && j.is_object() && j.contains("epsilons")) {
    BoxNorm nrm = norm_from_json(g, j);
    auto scan = scan_triangle_inequality(nrm, 20000, 10.0, 0x5eed);
    out["triangle"] = {{"pairs", scan.pairs}, {"violations", scan.violations}, {"worst_ratio", scan.worst_ratio}};
    ok = scan.violations == 0;
  }
  std::cout << out.dump(2) << '\n';
  return ok ? 0 : 1;
}

int cmd_presets() {
  std::cout << "groups:\n";
  for (const auto& n : preset_names()) std::cout << "  " << n << '\n';
  std::cout << "checks:\n";
  for (const auto& n : available_checks()) std::cout << "  " << n << '\n';
  std::cout << "synthetic measures:\n  haar_coset\n  cone_graph\n  perturbed_flat\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Geometric measure theory on Carnot groups"};
  app.require_subcommand(1);

  std::string scenario, out, csv_dir;
  std::optional<std::uint64_t> seed;
  int threads = 1;
  auto* run = app.add_subcommand("run", "Run a scenario file");
  run->add_option("scenario", scenario, "Scenario JSON")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out, "Write the report here instead of stdout");
  run->add_option("--csv-dir", csv_dir, "Directory for plot-ready CSV tables");
  run->add_option("--seed", seed, "Override the scenario seed");
  run->add_option("--threads", threads, "Checks run concurrently")->check(CLI::PositiveNumber);

  std::string group_file;
  auto* validate = app.add_subcommand("validate-group", "Check a group specification");
  validate->add_option("group", group_file, "Group JSON")->required()->check(CLI::ExistingFile);

  auto* presets = app.add_subcommand("presets", "List built-in groups, checks and generators");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run) return cmd_run(scenario, out, csv_dir, seed, threads);
    if (*validate) return cmd_validate(group_file);
    if (*presets) return cmd_presets();
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
