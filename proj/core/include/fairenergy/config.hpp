#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "fairenergy/comm_model.hpp"
#include "fairenergy/contribution.hpp"
#include "fairenergy/fl_sim.hpp"
#include "fairenergy/optimizer.hpp"

namespace fairenergy {

enum class Strategy { kFairEnergy, kScoreMax, kEcoRandom };

Strategy parse_strategy(std::string_view name);
std::string_view to_string(Strategy s);

struct CommConfig {
  /// S in bits. Unset: parameter_count * 32.
  std::optional<double> model_bits;
  /// I = index_overhead_fraction * S.
  double index_overhead_fraction = 0.05;
  double noise_psd = 3.98e-21;
  ChannelModelParams channel;
};

struct TaskBlock {
  TaskConfig synthetic;
  /// Optional external dataset; replaces the synthetic task when set.
  std::string dataset_path;
  double test_fraction = 0.2;
  double init_scale = 0.01;
  int local_epochs = 1;
  std::size_t batch_size = 32;
};

struct BaselineBlock {
  std::optional<int> k_selected;
  std::optional<double> eco_gamma;
  std::optional<double> eco_bandwidth_hz;
  /// summary.json of a finished FairEnergy run to take k and the eco
  /// operating point from.
  std::string reference_summary;
};

struct ExperimentConfig {
  std::string run_id;
  std::size_t n_devices = 50;
  int rounds = 300;
  std::uint64_t seed = 1;
  double b_tot_hz = 1e7;
  std::array<double, 2> power_range_w{1e-4, 3e-4};
  double gamma_min = 0.1;
  int gamma_grid_points = 10;
  double pi_min = 0.2;
  double rho = 0.6;
  double q_init = 1.0;
  double beta_dirichlet = 0.3;
  double lr = 0.01;
  /// Explicit trade-off weight. Unset: eta_scale * calibrated eta_0.
  std::optional<double> eta;
  double eta_scale = 1.0;
  Strategy strategy = Strategy::kFairEnergy;
  NormMode norm_mode = NormMode::kStale;
  double target_accuracy = 0.8;
  /// Relative target used by `compare`: fraction of the best accuracy any
  /// strategy reached on that seed.
  double relative_target_fraction = 0.8;
  int compare_seeds = 5;

  SolverConfig solver = default_solver_config();
  CommConfig comm;
  TaskBlock task;
  BaselineBlock baseline;

  /// Throws ConfigError on any out-of-range value.
  void validate() const;
};

/// Names accepted by --preset.
std::vector<std::string> preset_names();

/// JSON overlay for a named preset; throws ConfigError for unknown names.
nlohmann::json preset_overlay(std::string_view name);

nlohmann::json to_json(const ExperimentConfig& config);

/// Builds a config from defaults overlaid with `doc`. Unknown keys are
/// rejected. Top-level `b_tot_mhz` and `power_range_mw` are accepted and
/// converted to SI.
ExperimentConfig config_from_json(const nlohmann::json& doc);

/// Overlays `doc` onto an existing config.
ExperimentConfig overlay_config(const ExperimentConfig& base, const nlohmann::json& doc);

ExperimentConfig load_config(const std::filesystem::path& path);

/// Dotted key paths (e.g. "solver.max_inner_iters") a sweep may vary.
std::vector<std::string> config_keys(const ExperimentConfig& config);

/// Returns a copy with the dotted key set to `value`.
ExperimentConfig with_key(const ExperimentConfig& config, std::string_view key,
                          const nlohmann::json& value);

}  // namespace fairenergy
