// fairenergy: run, compare and sweep federated client-selection strategies.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "fairenergy/config.hpp"
#include "fairenergy/errors.hpp"
#include "fairenergy/experiment.hpp"

namespace fe = fairenergy;

namespace {

struct CommonOptions {
  std::string config_path;
  std::string preset;
  std::optional<std::uint64_t> seed;
  std::optional<int> rounds;
  std::string out_dir = "out";
  std::string log_level = "info";
};

void add_common(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--config", o.config_path, "Experiment config (JSON)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--preset", o.preset, "Named preset applied before --config")
      ->check(CLI::IsMember(fe::preset_names()));
  cmd->add_option("--seed", o.seed, "Master seed");
  cmd->add_option("--rounds", o.rounds, "Number of global rounds");
  cmd->add_option("--out-dir", o.out_dir, "Output directory")->capture_default_str();
  cmd->add_option("--log-level", o.log_level, "trace|debug|info|warn|error|off")
      ->capture_default_str();
}

fe::ExperimentConfig resolve(const CommonOptions& o, const std::optional<std::string>& strategy) {
  fe::ExperimentConfig cfg;
  if (!o.preset.empty()) cfg = fe::overlay_config(cfg, fe::preset_overlay(o.preset));
  if (!o.config_path.empty()) {
    std::ifstream in(o.config_path);
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw fe::ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    cfg = fe::overlay_config(cfg, doc);
  }
  nlohmann::json flags = nlohmann::json::object();
  if (o.seed) flags["seed"] = *o.seed;
  if (o.rounds) flags["rounds"] = *o.rounds;
  if (strategy) flags["strategy"] = *strategy;
  return fe::overlay_config(cfg, flags);
}

nlohmann::json parse_value(const std::string& text) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error&) {
    return nlohmann::json(text);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Joint client selection, bandwidth allocation and compression for "
               "federated learning over a wireless uplink"};
  app.require_subcommand(1);

  CommonOptions run_opts;
  std::optional<std::string> run_strategy;
  auto* run = app.add_subcommand("run", "Run a single strategy");
  add_common(run, run_opts);
  run->add_option("--strategy", run_strategy, "fair_energy|score_max|eco_random");

  CommonOptions cmp_opts;
  std::optional<int> cmp_seeds;
  auto* compare =
      app.add_subcommand("compare", "FairEnergy plus both baselines on paired seeds");
  add_common(compare, cmp_opts);
  compare->add_option("--seeds", cmp_seeds, "Number of paired seeds (default: compare_seeds)");

  CommonOptions sweep_opts;
  std::optional<std::string> sweep_strategy;
  std::string sweep_param;
  std::vector<std::string> sweep_values;
  int replicates = 1;
  auto* sweep = app.add_subcommand("sweep", "Vary one config key over a list of values");
  add_common(sweep, sweep_opts);
  sweep->add_option("--strategy", sweep_strategy, "fair_energy|score_max|eco_random");
  sweep->add_option("--param", sweep_param, "Dotted config key, e.g. solver.max_inner_iters")
      ->required();
  sweep->add_option("--values", sweep_values, "Values (JSON literals)")->required();
  sweep->add_option("--replicates", replicates, "Paired seeds per value")
      ->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  const CommonOptions& active = run->parsed()       ? run_opts
                                : compare->parsed() ? cmp_opts
                                                    : sweep_opts;
  spdlog::set_level(spdlog::level::from_str(active.log_level));
  spdlog::set_pattern("[%l] %v");

  try {
    const std::filesystem::path out(active.out_dir);
    if (run->parsed()) {
      const fe::ExperimentConfig cfg = resolve(run_opts, run_strategy);
      const fe::RunResult result = fe::run_strategy(cfg);
      fe::write_run(result, out);
      const auto& s = result.summary;
      std::cout << s.strategy << ": final accuracy " << s.final_accuracy << ", total energy "
                << s.total_energy_j << " J, participation std " << s.participation.std
                << "\n";
    } else if (compare->parsed()) {
      const fe::ExperimentConfig cfg = resolve(cmp_opts, std::nullopt);
      const fe::CompareResult result =
          fe::run_compare(cfg, cmp_seeds.value_or(cfg.compare_seeds));
      fe::write_compare(result, out);
      std::cout << fe::compare_summary_json(result).dump(2) << "\n";
    } else {
      const fe::ExperimentConfig cfg = resolve(sweep_opts, sweep_strategy);
      std::vector<nlohmann::json> values;
      for (const auto& v : sweep_values) values.push_back(parse_value(v));
      const auto rows = fe::run_sweep(cfg, sweep_param, values, replicates);
      fe::write_sweep_csv(rows, out / "sweep.csv");
      fe::write_json(fe::to_json(cfg), out / "config.resolved.json");
      std::cout << "wrote " << rows.size() << " rows to " << (out / "sweep.csv").string()
                << "\n";
    }
  } catch (const fe::Error& e) {
    spdlog::error("{}", e.what());
    return e.exit_code();
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
