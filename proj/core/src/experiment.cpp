#include "fairenergy/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "fairenergy/baselines.hpp"
#include "fairenergy/contribution.hpp"
#include "fairenergy/errors.hpp"
#include "fairenergy/fairness.hpp"
#include "fairenergy/fl_sim.hpp"
#include "fairenergy/optimizer.hpp"
#include "fairenergy/rng.hpp"

namespace fairenergy {

Environment build_environment(const ExperimentConfig& c) {
  Environment env;
  Rng task_rng = make_rng(c.seed, streams::kTask);
  if (c.task.dataset_path.empty()) {
    SyntheticTask task = make_synthetic_task(c.task.synthetic, task_rng);
    env.train = std::move(task.train);
    env.test = std::move(task.test);
  } else {
    const Dataset all = load_dataset(c.task.dataset_path);
    split_train_test(all, c.task.test_fraction, task_rng, env.train, env.test);
  }
  if (env.train.size() < c.n_devices) {
    throw ConfigError(fmt::format("{} training samples cannot cover {} devices",
                                  env.train.size(), c.n_devices));
  }

  Rng partition_rng = make_rng(c.seed, streams::kPartition);
  env.clients = dirichlet_partition(env.train.labels, env.train.classes, c.n_devices,
                                    c.beta_dirichlet, partition_rng);

  std::vector<std::size_t> sizes;
  sizes.reserve(env.clients.size());
  for (const auto& cl : env.clients) sizes.push_back(cl.indices.size());
  Rng device_rng = make_rng(c.seed, streams::kDevices);
  env.devices = make_devices(sizes, c.power_range_w[0], c.power_range_w[1],
                             c.comm.channel, device_rng);

  Rng init_rng = make_rng(c.seed, streams::kModelInit);
  env.model = make_model(env.train.classes, env.train.feature_dim, c.task.init_scale,
                         init_rng);

  env.comm.model_bits = c.comm.model_bits.value_or(
      static_cast<double>(env.model.parameter_count()) * 32.0);
  env.comm.index_overhead_bits = c.comm.index_overhead_fraction * env.comm.model_bits;
  env.comm.noise_psd = c.comm.noise_psd;
  env.comm.total_bandwidth_hz = c.b_tot_hz;
  env.comm.validate();
  return env;
}

ChannelRealization round_channel(const ExperimentConfig& config, const Environment& env,
                                 int round) {
  Rng rng = make_rng(config.seed, streams::kChannels, static_cast<std::uint64_t>(round));
  return draw_channel(round, env.devices, rng);
}

namespace {

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 == 1 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

class ChannelHasher {
 public:
  void add(const ChannelRealization& ch) {
    for (double g : ch.gains) {
      std::uint64_t bits = 0;
      std::memcpy(&bits, &g, sizeof bits);
      for (int b = 0; b < 8; ++b) {
        hash_ ^= (bits >> (8 * b)) & 0xffU;
        hash_ *= 0x100000001b3ULL;
      }
    }
  }
  std::string hex() const { return fmt::format("{:016x}", hash_); }

 private:
  std::uint64_t hash_ = 0xcbf29ce484222325ULL;
};

struct Trainer {
  const ExperimentConfig& cfg;
  const Environment& env;
  LocalTrainConfig train_cfg;

  LocalUpdate train(const ModelState& model, int round, std::size_t device) const {
    Rng rng = make_rng(cfg.seed, streams::kTraining, static_cast<std::uint64_t>(round),
                       device);
    try {
      return local_update(model, env.train, env.clients[device].indices, train_cfg, rng);
    } catch (const NumericError& e) {
      throw NumericError(fmt::format("round {} device {}: {}", round, device, e.what()));
    }
  }
};

}  // namespace

std::optional<EnergyToTarget> energy_to_target(const std::vector<MetricsRecord>& metrics,
                                               double target_accuracy) {
  for (const auto& m : metrics) {
    if (m.accuracy >= target_accuracy) return EnergyToTarget{m.cumulative_energy_j, m.round};
  }
  return std::nullopt;
}

std::vector<int> selection_counts(const std::vector<MetricsRecord>& metrics) {
  std::vector<int> counts;
  for (const auto& m : metrics) {
    if (counts.size() < m.devices.size()) counts.resize(m.devices.size(), 0);
    for (std::size_t i = 0; i < m.devices.size(); ++i) counts[i] += m.devices[i].x;
  }
  return counts;
}

ParticipationStats participation_stats(const std::vector<MetricsRecord>& metrics) {
  const std::vector<int> counts = selection_counts(metrics);
  ParticipationStats s;
  if (counts.empty()) return s;
  s.min = *std::min_element(counts.begin(), counts.end());
  s.max = *std::max_element(counts.begin(), counts.end());
  const double n = static_cast<double>(counts.size());
  const double mean = std::accumulate(counts.begin(), counts.end(), 0.0) / n;
  double var = 0.0;
  for (int c : counts) var += (c - mean) * (c - mean);
  s.std = std::sqrt(var / n);
  return s;
}

ReferencePoint reference_point_from_json(const nlohmann::json& summary,
                                         const ExperimentConfig& config) {
  RunSummary s;
  try {
    s.mean_selected = summary.at("mean_selected").get<double>();
    s.observed_min_gamma = summary.at("observed_min_gamma").get<double>();
    s.observed_min_bandwidth_hz = summary.at("observed_min_bandwidth_hz").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("reference summary is missing fields: {}", e.what()));
  }
  return reference_point(s, config);
}

ReferencePoint reference_point(const RunSummary& fe, const ExperimentConfig& config) {
  ReferencePoint ref;
  const auto n = static_cast<long>(config.n_devices);
  ref.k_selected = static_cast<int>(std::clamp(std::lround(fe.mean_selected), 1L, n));
  ref.eco_gamma = fe.observed_min_gamma > 0.0 ? fe.observed_min_gamma : config.gamma_min;
  const double fair_share = config.b_tot_hz / ref.k_selected;
  ref.eco_bandwidth_hz =
      fe.observed_min_bandwidth_hz > 0.0 ? fe.observed_min_bandwidth_hz : fair_share;
  if (ref.eco_bandwidth_hz > fair_share) {
    spdlog::warn("eco bandwidth {} Hz does not fit {} devices; clamped to {} Hz",
                 ref.eco_bandwidth_hz, ref.k_selected, fair_share);
    ref.eco_bandwidth_hz = fair_share;
  }
  return ref;
}

ExperimentConfig apply_reference(ExperimentConfig config, const ReferencePoint& ref) {
  if (!config.baseline.k_selected) config.baseline.k_selected = ref.k_selected;
  if (!config.baseline.eco_gamma) config.baseline.eco_gamma = ref.eco_gamma;
  if (!config.baseline.eco_bandwidth_hz) config.baseline.eco_bandwidth_hz = ref.eco_bandwidth_hz;
  return config;
}

RunResult run_experiment(const ExperimentConfig& input) {
  input.validate();
  ExperimentConfig cfg = input;

  if (cfg.strategy != Strategy::kFairEnergy &&
      !(cfg.baseline.k_selected && cfg.baseline.eco_gamma && cfg.baseline.eco_bandwidth_hz)) {
    if (cfg.baseline.reference_summary.empty()) {
      if (!cfg.baseline.k_selected ||
          (cfg.strategy == Strategy::kEcoRandom &&
           (!cfg.baseline.eco_gamma || !cfg.baseline.eco_bandwidth_hz))) {
        throw ConfigError(
            "baseline strategies need baseline.k_selected (and eco settings for "
            "eco_random) or baseline.reference_summary");
      }
    } else {
      std::ifstream in(cfg.baseline.reference_summary);
      if (!in) {
        throw IoError(fmt::format("cannot open reference summary '{}'",
                                  cfg.baseline.reference_summary));
      }
      nlohmann::json doc;
      try {
        doc = nlohmann::json::parse(in);
      } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(fmt::format("reference summary is not valid JSON: {}", e.what()));
      }
      cfg = apply_reference(cfg, reference_point_from_json(doc, cfg));
    }
  }

  const Environment env = build_environment(cfg);
  const std::size_t n = cfg.n_devices;
  const CommParams& comm = env.comm;

  RunResult result;
  RunSummary& sum = result.summary;
  sum.strategy = std::string(to_string(cfg.strategy));
  sum.seed = cfg.seed;
  sum.rounds = cfg.rounds;
  sum.n_devices = n;
  sum.model_bits = comm.model_bits;
  sum.index_overhead_bits = comm.index_overhead_bits;
  sum.parameter_count = env.model.parameter_count();
  sum.target_accuracy = cfg.target_accuracy;

  BaselineConfig baseline;
  if (cfg.strategy != Strategy::kFairEnergy) {
    baseline.mode = cfg.strategy == Strategy::kScoreMax ? BaselineMode::kScoreMax
                                                        : BaselineMode::kEcoRandom;
    baseline.k_selected = *cfg.baseline.k_selected;
    baseline.eco_gamma = cfg.baseline.eco_gamma.value_or(cfg.gamma_min);
    baseline.eco_bandwidth_hz =
        cfg.baseline.eco_bandwidth_hz.value_or(cfg.b_tot_hz / baseline.k_selected);
    baseline.validate(n, cfg.gamma_min, comm);
    sum.k_selected = baseline.k_selected;
    if (baseline.mode == BaselineMode::kEcoRandom) {
      sum.eco_gamma = baseline.eco_gamma;
      sum.eco_bandwidth_hz = baseline.eco_bandwidth_hz;
    }
  }

  ModelState model = env.model;
  const Trainer trainer{cfg, env, LocalTrainConfig{cfg.task.local_epochs, cfg.lr,
                                                   cfg.task.batch_size}};
  NormProvider norms(cfg.norm_mode, n);
  FairnessState fairness(n, cfg.rho, cfg.pi_min, cfg.q_init);
  FeasibilityMonitor monitor(cfg.pi_min);
  DualState duals;
  duals.mu.assign(n, 0.0);
  ChannelHasher hasher;

  std::vector<double> dataset_weight(n);
  for (std::size_t i = 0; i < n; ++i) {
    dataset_weight[i] = static_cast<double>(env.devices[i].dataset_size);
  }

  auto aggregate_round = [&](const std::vector<std::size_t>& selected,
                             const std::vector<double>& gammas,
                             std::vector<std::vector<double>>& updates) {
    if (selected.empty()) return;
    std::vector<SparseUpdate> sparse;
    std::vector<double> weights;
    double total = 0.0;
    for (std::size_t i : selected) total += dataset_weight[i];
    for (std::size_t k = 0; k < selected.size(); ++k) {
      const std::size_t i = selected[k];
      sparse.push_back(sparsify_topk(updates[i], gammas[k]));
      weights.push_back(dataset_weight[i] / total);
    }
    apply_delta(model, aggregate(sparse, weights, model.parameter_count()));
  };

  // Calibration inputs for eta: energy at full precision over an equal
  // bandwidth split, and update norms, from the first round with norms.
  double eta0 = 0.0;
  auto calibrate = [&](const ChannelRealization& ch, const std::vector<double>& round_norms) {
    const double e_med = probe_energy(env.devices, ch, comm);
    const double u_med = median(round_norms);
    eta0 = u_med > 0.0 ? e_med / u_med : 0.0;
    if (u_med <= 0.0) spdlog::warn("median update norm is zero; eta_0 set to 0");
  };

  std::vector<std::vector<double>> updates(n);
  std::vector<double> current_norms(n, 0.0);
  bool calibrated = false;

  if (cfg.norm_mode == NormMode::kStale) {
    // Warm-up: everyone transmits once at full precision over an equal split.
    const ChannelRealization ch = round_channel(cfg, env, 0);
    hasher.add(ch);
    std::vector<std::size_t> all(n);
    std::iota(all.begin(), all.end(), std::size_t{0});
    const double share = cfg.b_tot_hz / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      updates[i] = trainer.train(model, 0, i).update;
      current_norms[i] = l2_norm(updates[i]);
      norms.record_participation(0, static_cast<int>(i), current_norms[i]);
      if (ch.gains[i] > 0.0) {
        sum.warmup_energy_j += comm_energy(env.devices[i], 1.0, share, ch.gains[i], comm);
      }
    }
    calibrate(ch, current_norms);
    calibrated = true;
    aggregate_round(all, std::vector<double>(n, 1.0), updates);
  }

  sum.initial_accuracy = evaluate(model, env.test);
  double eta = cfg.eta.value_or(0.0);

  double cumulative = 0.0;
  double min_gamma = std::numeric_limits<double>::infinity();
  double min_bw = std::numeric_limits<double>::infinity();
  double age_total = 0.0;
  long long iter_total = 0;
  using Clock = std::chrono::steady_clock;

  for (int r = 1; r <= cfg.rounds; ++r) {
    const ChannelRealization channel = round_channel(cfg, env, r);
    hasher.add(channel);

    std::vector<bool> trained(n, false);
    if (cfg.norm_mode == NormMode::kOracle) {
      for (std::size_t i = 0; i < n; ++i) {
        updates[i] = trainer.train(model, r, i).update;
        current_norms[i] = l2_norm(updates[i]);
        trained[i] = true;
      }
      norms.set_current(r, current_norms);
      if (!calibrated) {
        calibrate(channel, current_norms);
        calibrated = true;
      }
    }
    if (!cfg.eta) eta = cfg.eta_scale * eta0;

    std::vector<double> used_norm(n);
    std::vector<int> norm_age(n);
    for (std::size_t i = 0; i < n; ++i) {
      const UpdateStats st = norms.get(r, static_cast<int>(i));
      used_norm[i] = st.norm;
      norm_age[i] = r - st.freshness;
      age_total += norm_age[i];
    }

    const auto t0 = Clock::now();
    RoundDecision decision(n);
    SolverReport report;
    switch (cfg.strategy) {
      case Strategy::kFairEnergy: {
        RoundInputs in{env.devices, &channel, used_norm, &fairness, eta};
        RoundResult rr = dual_ascent_round(in, duals, cfg.solver, comm);
        decision = std::move(rr.decision);
        duals = std::move(rr.duals);
        report = std::move(rr.report);
        break;
      }
      case Strategy::kScoreMax:
        decision = score_max_round(used_norm, baseline.k_selected, env.devices, channel, comm);
        report.converged = true;
        break;
      case Strategy::kEcoRandom: {
        Rng sel_rng = make_rng(cfg.seed, streams::kBaselineSelection,
                               static_cast<std::uint64_t>(r));
        decision = eco_random_round(sel_rng, baseline.k_selected, baseline.eco_gamma,
                                    baseline.eco_bandwidth_hz, used_norm, env.devices,
                                    channel, comm);
        report.converged = true;
        break;
      }
    }
    result.decision_seconds += std::chrono::duration<double>(Clock::now() - t0).count();

    std::vector<std::size_t> selected;
    std::vector<double> gammas;
    for (std::size_t i = 0; i < n; ++i) {
      if (!decision.x[i]) continue;
      selected.push_back(i);
      gammas.push_back(decision.gamma[i]);
      min_gamma = std::min(min_gamma, decision.gamma[i]);
      min_bw = std::min(min_bw, decision.bandwidth_hz[i]);
      if (!trained[i]) {
        updates[i] = trainer.train(model, r, i).update;
        trained[i] = true;
      }
      if (cfg.norm_mode == NormMode::kStale) {
        norms.record_participation(r, static_cast<int>(i), l2_norm(updates[i]));
      }
    }
    aggregate_round(selected, gammas, updates);
    if (selected.empty()) ++sum.idle_rounds;

    MetricsRecord rec;
    rec.round = r;
    rec.accuracy = evaluate(model, env.test);
    rec.round_energy_j = decision.total_energy();
    cumulative += rec.round_energy_j;
    rec.cumulative_energy_j = cumulative;
    rec.selected_count = decision.selected_count();
    rec.lambda = cfg.strategy == Strategy::kFairEnergy ? duals.lambda : 0.0;
    rec.inner_iterations = report.inner_iterations;
    rec.converged = report.converged;
    rec.repaired = report.repaired;

    const int below = fairness.update(decision.x);
    sum.floor_violations += below;
    if (below > 0) ++sum.rounds_with_floor_violations;
    monitor.observe(static_cast<double>(rec.selected_count) / static_cast<double>(n));

    rec.devices.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      DeviceRoundRecord& d = rec.devices[i];
      d.x = decision.x[i];
      d.gamma = decision.gamma[i];
      d.bandwidth_hz = decision.bandwidth_hz[i];
      d.q = fairness.q(i);
      d.mu = cfg.strategy == Strategy::kFairEnergy ? duals.mu[i] : 0.0;
      d.energy_j = decision.energy_j[i];
      d.score = decision.score[i];
      d.norm = used_norm[i];
      d.norm_age = norm_age[i];
    }

    if (!report.converged) ++sum.rounds_not_converged;
    if (report.repaired) ++sum.rounds_repaired;
    sum.dropped_total += static_cast<int>(report.dropped_devices.size());
    sum.unimodality_violations += report.unimodality_violations;
    iter_total += report.inner_iterations;

    result.metrics.push_back(std::move(rec));
  }

  sum.eta = eta;
  sum.eta0 = eta0;
  sum.total_energy_j = cumulative;
  sum.feasibility_warning = monitor.warned();
  sum.channel_stream_hash = hasher.hex();
  if (!result.metrics.empty()) {
    const double rounds = static_cast<double>(result.metrics.size());
    sum.mean_round_energy_j = cumulative / rounds;
    sum.final_accuracy = result.metrics.back().accuracy;
    double max_acc = 0.0;
    double selected_total = 0.0;
    for (const auto& m : result.metrics) {
      max_acc = std::max(max_acc, m.accuracy);
      selected_total += m.selected_count;
    }
    sum.max_accuracy = max_acc;
    sum.mean_selected = selected_total / rounds;
    sum.mean_inner_iterations = static_cast<double>(iter_total) / rounds;
    sum.mean_norm_age = age_total / (rounds * static_cast<double>(n));
  } else {
    sum.final_accuracy = sum.initial_accuracy;
    sum.max_accuracy = sum.initial_accuracy;
  }
  sum.energy_to_target = energy_to_target(result.metrics, cfg.target_accuracy);
  sum.selection_counts = selection_counts(result.metrics);
  if (sum.selection_counts.empty()) sum.selection_counts.assign(n, 0);
  sum.participation = participation_stats(result.metrics);
  sum.observed_min_gamma = std::isfinite(min_gamma) ? min_gamma : 0.0;
  sum.observed_min_bandwidth_hz = std::isfinite(min_bw) ? min_bw : 0.0;

  result.config = cfg;
  return result;
}

RunResult run_strategy(const ExperimentConfig& config) {
  if (config.strategy == Strategy::kFairEnergy) return run_experiment(config);
  const bool explicit_point = config.baseline.k_selected && config.baseline.eco_gamma &&
                              config.baseline.eco_bandwidth_hz;
  const bool explicit_k = config.baseline.k_selected.has_value();
  if (explicit_point || !config.baseline.reference_summary.empty() ||
      (config.strategy == Strategy::kScoreMax && explicit_k)) {
    return run_experiment(config);
  }
  ExperimentConfig reference = config;
  reference.strategy = Strategy::kFairEnergy;
  const RunResult fe = run_experiment(reference);
  return run_experiment(apply_reference(config, reference_point(fe.summary, config)));
}

CompareResult run_compare(const ExperimentConfig& config, int n_seeds) {
  config.validate();
  if (n_seeds < 1) throw ConfigError("compare needs at least one seed");
  CompareResult out;
  out.config = config;
  for (int j = 0; j < n_seeds; ++j) {
    ExperimentConfig c = config;
    c.seed = config.seed + static_cast<std::uint64_t>(j);
    CompareSeedResult s;
    s.seed = c.seed;

    c.strategy = Strategy::kFairEnergy;
    s.fair_energy = run_experiment(c);
    const ExperimentConfig base = apply_reference(c, reference_point(s.fair_energy.summary, c));

    ExperimentConfig sm = base;
    sm.strategy = Strategy::kScoreMax;
    s.score_max = run_experiment(sm);

    ExperimentConfig er = base;
    er.strategy = Strategy::kEcoRandom;
    s.eco_random = run_experiment(er);

    spdlog::info("seed {}: accuracy FE {:.4f} SM {:.4f} ER {:.4f}", c.seed,
                 s.fair_energy.summary.final_accuracy, s.score_max.summary.final_accuracy,
                 s.eco_random.summary.final_accuracy);
    out.seeds.push_back(std::move(s));
  }
  return out;
}

std::vector<SweepRow> run_sweep(const ExperimentConfig& config, const std::string& parameter,
                                const std::vector<nlohmann::json>& values, int replicates) {
  if (replicates < 1) throw ConfigError("sweep needs at least one replicate");
  // Validate the key before running anything.
  const auto keys = config_keys(config);
  if (std::find(keys.begin(), keys.end(), parameter) == keys.end()) {
    (void)with_key(config, parameter, nullptr);
  }
  std::vector<SweepRow> rows;
  for (const auto& value : values) {
    const ExperimentConfig varied = with_key(config, parameter, value);
    for (int j = 0; j < replicates; ++j) {
      ExperimentConfig c = varied;
      c.seed = varied.seed + static_cast<std::uint64_t>(j);
      const RunResult run = run_strategy(c);
      SweepRow row;
      row.parameter = parameter;
      row.value = value;
      row.replicate = j;
      row.seed = c.seed;
      row.summary = run.summary;
      row.decision_seconds_per_round =
          c.rounds > 0 ? run.decision_seconds / static_cast<double>(c.rounds) : 0.0;
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

}  // namespace fairenergy
