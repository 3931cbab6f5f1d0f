// Scenario-driven simulator CLI.
//
//   ddsim run <scenario.json> [--mode low|combined] [--out DIR] [--seed N]
//   ddsim compare <scenario.json> [--out DIR]
//   ddsim validate <scenario.json>
//
// Exit codes: 0 success, 1 validation error, 2 infeasible plan,
// 3 incomplete run (run only), 4 (compare) low-level mode won. compare
// always reports both runs; completion status lives in the report.

#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "diffdrive/errors.hpp"
#include "diffdrive/scenario.hpp"
#include "diffdrive/simulation.hpp"

namespace {

namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitInfeasible = 2;
constexpr int kExitIncomplete = 3;
constexpr int kExitLowWon = 4;

void write_run_outputs(const diffdrive::RunResult& result, const fs::path& dir,
                       const std::string& tag) {
  fs::create_directories(dir);
  diffdrive::write_trace_file(result.trace, (dir / ("trace_" + tag + ".csv")).string());
  std::ofstream summary(dir / ("summary_" + tag + ".txt"));
  diffdrive::write_summary(result.summary, summary);
}

int run_command(const std::string& file, const std::optional<std::string>& mode,
                const std::optional<std::uint64_t>& seed, const std::string& out_dir) {
  diffdrive::Scenario scenario = diffdrive::load_scenario(file);
  if (mode) {
    if (*mode == "low")
      scenario.controller.mode = diffdrive::ControlMode::kLow;
    else if (*mode == "combined")
      scenario.controller.mode = diffdrive::ControlMode::kCombined;
    else
      throw diffdrive::ValidationError("--mode: must be \"low\" or \"combined\"");
  }
  if (seed) scenario.simulation.seed = *seed;
  const diffdrive::RunResult result = diffdrive::run_scenario(scenario);
  const std::string tag =
      scenario.controller.mode == diffdrive::ControlMode::kLow ? "low" : "combined";
  write_run_outputs(result, out_dir, tag);
  diffdrive::write_summary(result.summary, std::cout);
  return result.summary.completed ? kExitOk : kExitIncomplete;
}

int compare_command(const std::string& file, const std::string& out_dir) {
  const diffdrive::Scenario scenario = diffdrive::load_scenario(file);
  const diffdrive::CompareReport report = diffdrive::compare_modes(scenario);
  write_run_outputs(report.low, out_dir, "low");
  write_run_outputs(report.combined, out_dir, "combined");
  {
    fs::create_directories(out_dir);
    std::ofstream out(fs::path(out_dir) / "compare.txt");
    diffdrive::write_compare_report(report, out);
  }
  diffdrive::write_compare_report(report, std::cout);
  return report.low.summary.final_error >= report.combined.summary.final_error ? kExitOk
                                                                               : kExitLowWon;
}

int validate_command(const std::string& file) {
  const diffdrive::Scenario scenario = diffdrive::load_scenario(file);
  const diffdrive::DynamicParams params = diffdrive::resolved_dynamic_params(scenario);
  const diffdrive::TrajectoryPlan plan = diffdrive::plan(
      scenario.path, scenario.section_vmax, scenario.limits, scenario.v_initial,
      scenario.v_final);
  std::cout << "ok\n"
            << "mass = " << params.mass << '\n'
            << "yaw_inertia = " << params.yaw_inertia << '\n'
            << "path_length = " << scenario.path.total_length() << '\n'
            << "plan_duration = " << plan.duration() << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Differential-drive traction control simulator"};
  app.require_subcommand(1);

  std::string scenario_file;
  std::string out_dir = "out";
  std::optional<std::string> mode;
  std::optional<std::uint64_t> seed;

  CLI::App* run = app.add_subcommand("run", "Simulate one scenario");
  run->add_option("scenario", scenario_file, "Scenario JSON file")->required();
  run->add_option("--mode", mode, "Override controller mode (low|combined)");
  run->add_option("--out", out_dir, "Output directory");
  run->add_option("--seed", seed, "Override the scenario seed");

  CLI::App* compare = app.add_subcommand("compare", "Run both controller modes");
  compare->add_option("scenario", scenario_file, "Scenario JSON file")->required();
  compare->add_option("--out", out_dir, "Output directory");

  CLI::App* validate = app.add_subcommand("validate", "Check a scenario file");
  validate->add_option("scenario", scenario_file, "Scenario JSON file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return run_command(scenario_file, mode, seed, out_dir);
    if (compare->parsed()) return compare_command(scenario_file, out_dir);
    return validate_command(scenario_file);
  } catch (const diffdrive::InfeasiblePlanError& e) {
    std::cerr << "infeasible plan: " << e.what() << '\n';
    return kExitInfeasible;
  } catch (const diffdrive::ValidationError& e) {
    std::cerr << "validation error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::invalid_argument& e) {
    std::cerr << "validation error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  }
}
