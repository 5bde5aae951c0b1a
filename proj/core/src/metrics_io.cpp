#include <filesystem>
#include <fstream>

#include <fmt/format.h>
#include <fmt/os.h>

#include "fairenergy/errors.hpp"
#include "fairenergy/experiment.hpp"

namespace fairenergy {

using nlohmann::json;

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) {
      throw IoError(fmt::format("cannot create directory '{}': {}",
                                path.parent_path().string(), ec.message()));
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(fmt::format("cannot write '{}'", path.string()));
  return out;
}

json target_json(const std::optional<EnergyToTarget>& t, double target) {
  json j{{"target_accuracy", target}, {"reached", t.has_value()}};
  j["energy_j"] = t ? json(t->energy_j) : json(nullptr);
  j["round"] = t ? json(t->round) : json(nullptr);
  return j;
}

json brief(const RunSummary& s) {
  return json{
      {"final_accuracy", s.final_accuracy},
      {"max_accuracy", s.max_accuracy},
      {"total_energy_j", s.total_energy_j},
      {"mean_round_energy_j", s.mean_round_energy_j},
      {"mean_selected", s.mean_selected},
      {"participation",
       {{"min", s.participation.min}, {"max", s.participation.max}, {"std", s.participation.std}}},
      {"energy_to_target", target_json(s.energy_to_target, s.target_accuracy)},
  };
}

}  // namespace

const std::vector<std::string>& metrics_columns() {
  static const std::vector<std::string> columns{
      "round",        "device",         "x",        "gamma",
      "bandwidth_hz", "q",              "mu",       "energy_j",
      "score",        "norm",           "norm_age", "accuracy",
      "round_energy_j", "cumulative_energy_j", "selected_count", "lambda",
      "inner_iterations", "converged",  "repaired",
  };
  return columns;
}

void write_metrics_csv(const std::vector<MetricsRecord>& metrics,
                       const std::filesystem::path& path) {
  std::ofstream out = open_out(path);
  const auto& cols = metrics_columns();
  for (std::size_t c = 0; c < cols.size(); ++c) {
    out << (c ? "," : "") << cols[c];
  }
  out << '\n';
  fmt::memory_buffer buf;
  for (const auto& m : metrics) {
    for (std::size_t i = 0; i < m.devices.size(); ++i) {
      const auto& d = m.devices[i];
      buf.clear();
      fmt::format_to(std::back_inserter(buf),
                     "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n", m.round,
                     i, d.x, d.gamma, d.bandwidth_hz, d.q, d.mu, d.energy_j, d.score, d.norm,
                     d.norm_age, m.accuracy, m.round_energy_j, m.cumulative_energy_j,
                     m.selected_count, m.lambda, m.inner_iterations, m.converged ? 1 : 0,
                     m.repaired ? 1 : 0);
      out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    }
  }
  if (!out) throw IoError(fmt::format("failed writing '{}'", path.string()));
}

void write_json(const json& doc, const std::filesystem::path& path) {
  std::ofstream out = open_out(path);
  out << doc.dump(2) << '\n';
  if (!out) throw IoError(fmt::format("failed writing '{}'", path.string()));
}

json summary_to_json(const RunSummary& s) {
  return json{
      {"schema_version", 1},
      {"strategy", s.strategy},
      {"seed", s.seed},
      {"rounds", s.rounds},
      {"n_devices", s.n_devices},
      {"eta", s.eta},
      {"eta0", s.eta0},
      {"model_bits", s.model_bits},
      {"index_overhead_bits", s.index_overhead_bits},
      {"parameter_count", s.parameter_count},
      {"k_selected", s.k_selected},
      {"eco_gamma", s.eco_gamma},
      {"eco_bandwidth_hz", s.eco_bandwidth_hz},
      {"warmup_energy_j", s.warmup_energy_j},
      {"total_energy_j", s.total_energy_j},
      {"mean_round_energy_j", s.mean_round_energy_j},
      {"initial_accuracy", s.initial_accuracy},
      {"final_accuracy", s.final_accuracy},
      {"max_accuracy", s.max_accuracy},
      {"energy_to_target", target_json(s.energy_to_target, s.target_accuracy)},
      {"participation",
       {{"min", s.participation.min}, {"max", s.participation.max}, {"std", s.participation.std}}},
      {"mean_selected", s.mean_selected},
      {"selection_counts", s.selection_counts},
      {"idle_rounds", s.idle_rounds},
      {"fairness",
       {{"floor_violations", s.floor_violations},
        {"rounds_with_floor_violations", s.rounds_with_floor_violations},
        {"feasibility_warning", s.feasibility_warning}}},
      {"solver",
       {{"rounds_not_converged", s.rounds_not_converged},
        {"rounds_repaired", s.rounds_repaired},
        {"dropped_total", s.dropped_total},
        {"mean_inner_iterations", s.mean_inner_iterations},
        {"unimodality_violations", s.unimodality_violations}}},
      {"observed_min_gamma", s.observed_min_gamma},
      {"observed_min_bandwidth_hz", s.observed_min_bandwidth_hz},
      {"mean_norm_age", s.mean_norm_age},
      {"channel_stream_hash", s.channel_stream_hash},
  };
}

json compare_summary_json(const CompareResult& result) {
  json seeds = json::array();
  for (const auto& s : result.seeds) {
    const double attainable =
        std::max({s.fair_energy.summary.max_accuracy, s.score_max.summary.max_accuracy,
                  s.eco_random.summary.max_accuracy});
    const double rel_target = result.config.relative_target_fraction * attainable;
    json strategies;
    for (const RunResult* run : {&s.fair_energy, &s.score_max, &s.eco_random}) {
      json b = brief(run->summary);
      b["energy_to_relative_target"] =
          target_json(energy_to_target(run->metrics, rel_target), rel_target);
      strategies[run->summary.strategy] = std::move(b);
    }
    seeds.push_back(json{
        {"seed", s.seed},
        {"attainable_accuracy", attainable},
        {"relative_target", rel_target},
        {"k_selected", s.score_max.summary.k_selected},
        {"eco_gamma", s.eco_random.summary.eco_gamma},
        {"eco_bandwidth_hz", s.eco_random.summary.eco_bandwidth_hz},
        {"strategies", std::move(strategies)},
    });
  }
  return json{{"schema_version", 1}, {"kind", "compare"}, {"seeds", std::move(seeds)}};
}

void write_run(const RunResult& run, const std::filesystem::path& dir) {
  write_metrics_csv(run.metrics, dir / "metrics.csv");
  write_json(summary_to_json(run.summary), dir / "summary.json");
  write_json(to_json(run.config), dir / "config.resolved.json");
}

void write_compare(const CompareResult& result, const std::filesystem::path& dir) {
  for (const auto& s : result.seeds) {
    const auto seed_dir = dir / fmt::format("seed-{}", s.seed);
    for (const RunResult* run : {&s.fair_energy, &s.score_max, &s.eco_random}) {
      write_metrics_csv(run->metrics, seed_dir / run->summary.strategy / "metrics.csv");
      write_json(summary_to_json(run->summary),
                 seed_dir / run->summary.strategy / "summary.json");
    }
  }
  write_json(compare_summary_json(result), dir / "summary.json");
  write_json(to_json(result.config), dir / "config.resolved.json");
}

void write_sweep_csv(const std::vector<SweepRow>& rows, const std::filesystem::path& path) {
  std::ofstream out = open_out(path);
  out << "parameter,value,replicate,seed,strategy,final_accuracy,max_accuracy,"
         "total_energy_j,mean_round_energy_j,mean_selected,participation_min,"
         "participation_max,participation_std,energy_to_target_j,"
         "decision_seconds_per_round\n";
  for (const auto& r : rows) {
    const auto& s = r.summary;
    const std::string e2t = s.energy_to_target ? fmt::format("{}", s.energy_to_target->energy_j)
                                               : std::string("not_reached");
    out << fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n", r.parameter,
                       r.value.dump(), r.replicate, r.seed, s.strategy, s.final_accuracy,
                       s.max_accuracy, s.total_energy_j, s.mean_round_energy_j,
                       s.mean_selected, s.participation.min, s.participation.max,
                       s.participation.std, e2t, r.decision_seconds_per_round);
  }
  if (!out) throw IoError(fmt::format("failed writing '{}'", path.string()));
}

}  // namespace fairenergy
