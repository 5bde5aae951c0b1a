#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fairenergy/config.hpp"

namespace fairenergy {

/// Seed-determined world shared by every strategy run on the same seed.
struct Environment {
  Dataset train;
  Dataset test;
  std::vector<ClientDataset> clients;
  std::vector<DeviceProfile> devices;
  ModelState model;
  CommParams comm;
};

Environment build_environment(const ExperimentConfig& config);

/// Channel draw of `round` (0 is the warm-up round).
ChannelRealization round_channel(const ExperimentConfig& config, const Environment& env,
                                 int round);

struct DeviceRoundRecord {
  int x = 0;
  double gamma = 0.0;
  double bandwidth_hz = 0.0;
  /// Participation metric after this round's update.
  double q = 0.0;
  double mu = 0.0;
  double energy_j = 0.0;
  double score = 0.0;
  /// Update norm the strategy saw when deciding.
  double norm = 0.0;
  int norm_age = 0;
};

struct MetricsRecord {
  int round = 0;
  double accuracy = 0.0;
  double round_energy_j = 0.0;
  double cumulative_energy_j = 0.0;
  int selected_count = 0;
  double lambda = 0.0;
  int inner_iterations = 0;
  bool converged = true;
  bool repaired = false;
  std::vector<DeviceRoundRecord> devices;
};

struct EnergyToTarget {
  double energy_j = 0.0;
  int round = 0;
};

/// Cumulative energy at the first round whose accuracy reaches the target.
std::optional<EnergyToTarget> energy_to_target(const std::vector<MetricsRecord>& metrics,
                                               double target_accuracy);

struct ParticipationStats {
  int min = 0;
  int max = 0;
  /// Population standard deviation of per-device selection counts.
  double std = 0.0;
};

std::vector<int> selection_counts(const std::vector<MetricsRecord>& metrics);
ParticipationStats participation_stats(const std::vector<MetricsRecord>& metrics);

struct RunSummary {
  std::string strategy;
  std::uint64_t seed = 0;
  int rounds = 0;
  std::size_t n_devices = 0;
  double eta = 0.0;
  double eta0 = 0.0;
  double model_bits = 0.0;
  double index_overhead_bits = 0.0;
  std::size_t parameter_count = 0;
  int k_selected = 0;
  double eco_gamma = 0.0;
  double eco_bandwidth_hz = 0.0;

  double warmup_energy_j = 0.0;
  double total_energy_j = 0.0;
  double mean_round_energy_j = 0.0;
  double initial_accuracy = 0.0;
  double final_accuracy = 0.0;
  double max_accuracy = 0.0;
  double target_accuracy = 0.0;
  std::optional<EnergyToTarget> energy_to_target;
  ParticipationStats participation;
  double mean_selected = 0.0;
  std::vector<int> selection_counts;
  int idle_rounds = 0;

  /// Device-rounds ending with q below pi_min, and rounds with any such device.
  int floor_violations = 0;
  int rounds_with_floor_violations = 0;
  bool feasibility_warning = false;

  int rounds_not_converged = 0;
  int rounds_repaired = 0;
  int dropped_total = 0;
  double mean_inner_iterations = 0.0;
  int unimodality_violations = 0;

  /// Minimum (gamma, B) over selected (device, round) pairs; 0 if none.
  double observed_min_gamma = 0.0;
  double observed_min_bandwidth_hz = 0.0;
  /// Mean age (rounds) of the norms the strategy scored candidates with.
  double mean_norm_age = 0.0;
  /// FNV-1a hash of every channel gain drawn, for paired-run checks.
  std::string channel_stream_hash;
};

struct RunResult {
  ExperimentConfig config;
  std::vector<MetricsRecord> metrics;
  RunSummary summary;
  /// Wall-clock seconds spent in strategy decisions. Not serialized.
  double decision_seconds = 0.0;
};

/// Executes one strategy. Baselines without explicit k / eco settings read
/// them from baseline.reference_summary, or throw ConfigError.
RunResult run_experiment(const ExperimentConfig& config);

/// Runs FairEnergy if needed, then the requested strategy with its operating
/// point derived from the FairEnergy run.
RunResult run_strategy(const ExperimentConfig& config);

/// Baseline knobs derived from a finished FairEnergy run.
struct ReferencePoint {
  int k_selected = 1;
  double eco_gamma = 0.1;
  double eco_bandwidth_hz = 0.0;
};

ReferencePoint reference_point(const RunSummary& fair_energy, const ExperimentConfig& config);
ReferencePoint reference_point_from_json(const nlohmann::json& summary,
                                         const ExperimentConfig& config);
ExperimentConfig apply_reference(ExperimentConfig config, const ReferencePoint& ref);

struct CompareSeedResult {
  std::uint64_t seed = 0;
  RunResult fair_energy;
  RunResult score_max;
  RunResult eco_random;
};

struct CompareResult {
  ExperimentConfig config;
  std::vector<CompareSeedResult> seeds;
};

/// Paired FairEnergy / ScoreMax / EcoRandom runs on seeds seed .. seed + n - 1.
CompareResult run_compare(const ExperimentConfig& config, int n_seeds);

struct SweepRow {
  std::string parameter;
  nlohmann::json value;
  int replicate = 0;
  std::uint64_t seed = 0;
  RunSummary summary;
  double decision_seconds_per_round = 0.0;
};

/// One run per (value, replicate). Replicate j uses the same derived seed
/// for every value, so rows are paired across values.
std::vector<SweepRow> run_sweep(const ExperimentConfig& config, const std::string& parameter,
                                const std::vector<nlohmann::json>& values,
                                int replicates = 1);

// Output

nlohmann::json summary_to_json(const RunSummary& summary);
nlohmann::json compare_summary_json(const CompareResult& result);

/// Fixed CSV header of metrics.csv.
const std::vector<std::string>& metrics_columns();

void write_metrics_csv(const std::vector<MetricsRecord>& metrics,
                       const std::filesystem::path& path);
void write_json(const nlohmann::json& doc, const std::filesystem::path& path);

/// metrics.csv, summary.json and config.resolved.json into `dir`.
void write_run(const RunResult& run, const std::filesystem::path& dir);

/// seed-<s>/<strategy>/{metrics.csv,summary.json}, summary.json and
/// config.resolved.json into `dir`.
void write_compare(const CompareResult& result, const std::filesystem::path& dir);

void write_sweep_csv(const std::vector<SweepRow>& rows, const std::filesystem::path& path);

}  // namespace fairenergy
