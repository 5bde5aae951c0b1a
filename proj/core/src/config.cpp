#include "fairenergy/config.hpp"

#include <fstream>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "fairenergy/errors.hpp"

namespace fairenergy {

using nlohmann::json;

Strategy parse_strategy(std::string_view name) {
  if (name == "fair_energy" || name == "fairenergy") return Strategy::kFairEnergy;
  if (name == "score_max" || name == "scoremax") return Strategy::kScoreMax;
  if (name == "eco_random" || name == "ecorandom") return Strategy::kEcoRandom;
  throw ConfigError(fmt::format(
      "unknown strategy '{}' (expected fair_energy|score_max|eco_random)", name));
}

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::kFairEnergy: return "fair_energy";
    case Strategy::kScoreMax: return "score_max";
    case Strategy::kEcoRandom: return "eco_random";
  }
  return "unknown";
}

void ExperimentConfig::validate() const {
  auto require = [](bool ok, std::string_view what) {
    if (!ok) throw ConfigError(std::string(what));
  };
  require(n_devices >= 1, "n_devices must be >= 1");
  require(rounds >= 0, "rounds must be >= 0");
  require(b_tot_hz > 0.0, "b_tot_hz must be > 0");
  require(power_range_w[0] > 0.0 && power_range_w[1] >= power_range_w[0],
          "power_range_w must be [lo, hi] with 0 < lo <= hi");
  require(gamma_min > 0.0 && gamma_min <= 1.0, "gamma_min must lie in (0, 1]");
  require(gamma_grid_points >= 1, "gamma_grid_points must be >= 1");
  require(pi_min >= 0.0 && pi_min < 1.0, "pi_min must lie in [0, 1)");
  require(rho >= 0.0 && rho < 1.0, "rho must lie in [0, 1)");
  require(q_init >= 0.0, "q_init must be >= 0");
  require(beta_dirichlet > 0.0, "beta_dirichlet must be > 0");
  require(lr >= 0.0, "lr must be >= 0");
  require(!eta || *eta >= 0.0, "eta must be >= 0");
  require(eta_scale >= 0.0, "eta_scale must be >= 0");
  require(target_accuracy > 0.0 && target_accuracy < 1.0,
          "target_accuracy must lie in (0, 1)");
  require(relative_target_fraction > 0.0 && relative_target_fraction <= 1.0,
          "relative_target_fraction must lie in (0, 1]");
  require(compare_seeds >= 1, "compare_seeds must be >= 1");
  require(!comm.model_bits || *comm.model_bits > 0.0, "comm.model_bits must be > 0");
  require(comm.index_overhead_fraction >= 0.0, "comm.index_overhead_fraction must be >= 0");
  require(comm.noise_psd > 0.0, "comm.noise_psd must be > 0");
  comm.channel.validate();
  if (task.dataset_path.empty()) task.synthetic.validate();
  require(task.test_fraction > 0.0 && task.test_fraction < 1.0,
          "task.test_fraction must lie in (0, 1)");
  require(task.local_epochs >= 1, "task.local_epochs must be >= 1");
  require(task.batch_size >= 1, "task.batch_size must be >= 1");
  if (task.dataset_path.empty()) {
    require(task.synthetic.train_size >= n_devices,
            "task.train_size must be at least n_devices");
  }
  require(!baseline.k_selected || *baseline.k_selected >= 1,
          "baseline.k_selected must be >= 1");
  solver.validate();
  if (std::abs(solver.gamma_min - gamma_min) > 1e-15) {
    throw ConfigError("solver gamma_min disagrees with gamma_min");
  }
}

std::vector<std::string> preset_names() { return {"paper-sec7"}; }

json preset_overlay(std::string_view name) {
  if (name == "paper-sec7") {
    // Simulation setup values plus the ~2M-parameter payload at 32 bits,
    // oracle norms (every candidate's update magnitude known to the server)
    // and a doubled trade-off weight.
    return json{
        {"n_devices", 50},
        {"rounds", 300},
        {"b_tot_hz", 1e7},
        {"power_range_w", {1e-4, 3e-4}},
        {"gamma_min", 0.1},
        {"gamma_grid_points", 10},
        {"pi_min", 0.2},
        {"rho", 0.6},
        {"beta_dirichlet", 0.3},
        {"lr", 0.01},
        {"norm_mode", "oracle"},
        {"eta_scale", 2.0},
        {"target_accuracy", 0.8},
        {"comm", {{"model_bits", 2e6 * 32.0}}},
        {"task", {{"synthetic", {{"classes", 10}}}}},
    };
  }
  throw ConfigError(fmt::format("unknown preset '{}' (available: {})", name,
                                fmt::join(preset_names(), ", ")));
}

namespace {

template <typename T>
json opt(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

template <typename T>
std::optional<T> get_opt(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<T>();
}

json solver_to_json(const SolverConfig& s, double gamma_min, int points) {
  const bool derived_grid = s.gamma_grid == uniform_gamma_grid(gamma_min, 1.0, points);
  return json{
      {"gamma_grid", derived_grid ? json(nullptr) : json(s.gamma_grid)},
      {"bandwidth_lo_fraction", s.bandwidth_lo_fraction},
      {"bandwidth_candidates_hz", s.bandwidth_candidates_hz},
      {"gss_tol", s.gss_tol},
      {"gss_max_evals", s.gss_max_evals},
      {"max_inner_iters", s.max_inner_iters},
      {"budget_tol", s.budget_tol},
      {"dual_tol", s.dual_tol},
      {"lambda_step_scale", s.lambda_step_scale},
      {"mu_step_scale", s.mu_step_scale},
      {"warm_start", s.warm_start},
      {"unimodality_check_points", s.unimodality_check_points},
  };
}

void merge_strict(json& base, const json& overlay, const std::string& path) {
  if (!overlay.is_object()) {
    throw ConfigError(fmt::format("config block '{}' must be a JSON object",
                                  path.empty() ? "<root>" : path));
  }
  for (auto it = overlay.begin(); it != overlay.end(); ++it) {
    const std::string key = path.empty() ? it.key() : path + "." + it.key();
    if (!base.contains(it.key())) {
      std::vector<std::string> valid;
      for (auto b = base.begin(); b != base.end(); ++b) valid.push_back(b.key());
      throw ConfigError(fmt::format("unknown config key '{}' (valid here: {})", key,
                                    fmt::join(valid, ", ")));
    }
    json& target = base[it.key()];
    if (target.is_object() && it.value().is_object()) {
      merge_strict(target, it.value(), key);
    } else {
      target = it.value();
    }
  }
}

ExperimentConfig from_resolved(const json& j) {
  ExperimentConfig c;
  c.run_id = j.at("run_id").get<std::string>();
  c.n_devices = j.at("n_devices").get<std::size_t>();
  c.rounds = j.at("rounds").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.b_tot_hz = j.at("b_tot_hz").get<double>();
  c.power_range_w = j.at("power_range_w").get<std::array<double, 2>>();
  c.gamma_min = j.at("gamma_min").get<double>();
  c.gamma_grid_points = j.at("gamma_grid_points").get<int>();
  c.pi_min = j.at("pi_min").get<double>();
  c.rho = j.at("rho").get<double>();
  c.q_init = j.at("q_init").get<double>();
  c.beta_dirichlet = j.at("beta_dirichlet").get<double>();
  c.lr = j.at("lr").get<double>();
  c.eta = get_opt<double>(j.at("eta"));
  c.eta_scale = j.at("eta_scale").get<double>();
  c.strategy = parse_strategy(j.at("strategy").get<std::string>());
  c.norm_mode = parse_norm_mode(j.at("norm_mode").get<std::string>());
  c.target_accuracy = j.at("target_accuracy").get<double>();
  c.relative_target_fraction = j.at("relative_target_fraction").get<double>();
  c.compare_seeds = j.at("compare_seeds").get<int>();

  const json& s = j.at("solver");
  c.solver.gamma_min = c.gamma_min;
  if (s.at("gamma_grid").is_null()) {
    if (c.gamma_grid_points < 1) throw ConfigError("gamma_grid_points must be >= 1");
    c.solver.gamma_grid = uniform_gamma_grid(c.gamma_min, 1.0, c.gamma_grid_points);
  } else {
    c.solver.gamma_grid = s.at("gamma_grid").get<std::vector<double>>();
  }
  c.solver.bandwidth_lo_fraction = s.at("bandwidth_lo_fraction").get<double>();
  c.solver.bandwidth_candidates_hz =
      s.at("bandwidth_candidates_hz").get<std::vector<double>>();
  c.solver.gss_tol = s.at("gss_tol").get<double>();
  c.solver.gss_max_evals = s.at("gss_max_evals").get<int>();
  c.solver.max_inner_iters = s.at("max_inner_iters").get<int>();
  c.solver.budget_tol = s.at("budget_tol").get<double>();
  c.solver.dual_tol = s.at("dual_tol").get<double>();
  c.solver.lambda_step_scale = s.at("lambda_step_scale").get<double>();
  c.solver.mu_step_scale = s.at("mu_step_scale").get<double>();
  c.solver.warm_start = s.at("warm_start").get<bool>();
  c.solver.unimodality_check_points = s.at("unimodality_check_points").get<int>();

  const json& m = j.at("comm");
  c.comm.model_bits = get_opt<double>(m.at("model_bits"));
  c.comm.index_overhead_fraction = m.at("index_overhead_fraction").get<double>();
  c.comm.noise_psd = m.at("noise_psd").get<double>();
  const json& ch = m.at("channel");
  c.comm.channel.min_distance_m = ch.at("min_distance_m").get<double>();
  c.comm.channel.max_distance_m = ch.at("max_distance_m").get<double>();
  c.comm.channel.pathloss_ref_db = ch.at("pathloss_ref_db").get<double>();
  c.comm.channel.pathloss_exponent = ch.at("pathloss_exponent").get<double>();

  const json& t = j.at("task");
  const json& syn = t.at("synthetic");
  c.task.synthetic.classes = syn.at("classes").get<int>();
  c.task.synthetic.feature_dim = syn.at("feature_dim").get<std::size_t>();
  c.task.synthetic.train_size = syn.at("train_size").get<std::size_t>();
  c.task.synthetic.test_size = syn.at("test_size").get<std::size_t>();
  c.task.synthetic.center_scale = syn.at("center_scale").get<double>();
  c.task.synthetic.noise_sigma = syn.at("noise_sigma").get<double>();
  c.task.dataset_path = t.at("dataset_path").get<std::string>();
  c.task.test_fraction = t.at("test_fraction").get<double>();
  c.task.init_scale = t.at("init_scale").get<double>();
  c.task.local_epochs = t.at("local_epochs").get<int>();
  c.task.batch_size = t.at("batch_size").get<std::size_t>();

  const json& b = j.at("baseline");
  c.baseline.k_selected = get_opt<int>(b.at("k_selected"));
  c.baseline.eco_gamma = get_opt<double>(b.at("eco_gamma"));
  c.baseline.eco_bandwidth_hz = get_opt<double>(b.at("eco_bandwidth_hz"));
  c.baseline.reference_summary = b.at("reference_summary").get<std::string>();
  return c;
}

json normalize_units(json doc) {
  if (!doc.is_object()) throw ConfigError("config document must be a JSON object");
  if (doc.contains("b_tot_mhz")) {
    if (doc.contains("b_tot_hz")) throw ConfigError("give b_tot_hz or b_tot_mhz, not both");
    doc["b_tot_hz"] = doc["b_tot_mhz"].get<double>() * 1e6;
    doc.erase("b_tot_mhz");
  }
  if (doc.contains("power_range_mw")) {
    if (doc.contains("power_range_w")) {
      throw ConfigError("give power_range_w or power_range_mw, not both");
    }
    auto mw = doc["power_range_mw"].get<std::array<double, 2>>();
    doc["power_range_w"] = {mw[0] * 1e-3, mw[1] * 1e-3};
    doc.erase("power_range_mw");
  }
  return doc;
}

void collect_keys(const json& j, const std::string& prefix, std::vector<std::string>& out) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string key = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (it.value().is_object()) {
      collect_keys(it.value(), key, out);
    } else {
      out.push_back(key);
    }
  }
}

}  // namespace

json to_json(const ExperimentConfig& c) {
  return json{
      {"run_id", c.run_id},
      {"n_devices", c.n_devices},
      {"rounds", c.rounds},
      {"seed", c.seed},
      {"b_tot_hz", c.b_tot_hz},
      {"power_range_w", c.power_range_w},
      {"gamma_min", c.gamma_min},
      {"gamma_grid_points", c.gamma_grid_points},
      {"pi_min", c.pi_min},
      {"rho", c.rho},
      {"q_init", c.q_init},
      {"beta_dirichlet", c.beta_dirichlet},
      {"lr", c.lr},
      {"eta", opt(c.eta)},
      {"eta_scale", c.eta_scale},
      {"strategy", to_string(c.strategy)},
      {"norm_mode", to_string(c.norm_mode)},
      {"target_accuracy", c.target_accuracy},
      {"relative_target_fraction", c.relative_target_fraction},
      {"compare_seeds", c.compare_seeds},
      {"solver", solver_to_json(c.solver, c.gamma_min, c.gamma_grid_points)},
      {"comm",
       {{"model_bits", opt(c.comm.model_bits)},
        {"index_overhead_fraction", c.comm.index_overhead_fraction},
        {"noise_psd", c.comm.noise_psd},
        {"channel",
         {{"min_distance_m", c.comm.channel.min_distance_m},
          {"max_distance_m", c.comm.channel.max_distance_m},
          {"pathloss_ref_db", c.comm.channel.pathloss_ref_db},
          {"pathloss_exponent", c.comm.channel.pathloss_exponent}}}}},
      {"task",
       {{"synthetic",
         {{"classes", c.task.synthetic.classes},
          {"feature_dim", c.task.synthetic.feature_dim},
          {"train_size", c.task.synthetic.train_size},
          {"test_size", c.task.synthetic.test_size},
          {"center_scale", c.task.synthetic.center_scale},
          {"noise_sigma", c.task.synthetic.noise_sigma}}},
        {"dataset_path", c.task.dataset_path},
        {"test_fraction", c.task.test_fraction},
        {"init_scale", c.task.init_scale},
        {"local_epochs", c.task.local_epochs},
        {"batch_size", c.task.batch_size}}},
      {"baseline",
       {{"k_selected", opt(c.baseline.k_selected)},
        {"eco_gamma", opt(c.baseline.eco_gamma)},
        {"eco_bandwidth_hz", opt(c.baseline.eco_bandwidth_hz)},
        {"reference_summary", c.baseline.reference_summary}}},
  };
}

ExperimentConfig overlay_config(const ExperimentConfig& base, const json& doc) {
  json resolved = to_json(base);
  // A gamma grid that was derived from gamma_min/points must follow changes
  // to those keys.
  merge_strict(resolved, normalize_units(doc), "");
  try {
    ExperimentConfig c = from_resolved(resolved);
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("invalid config value: {}", e.what()));
  }
}

ExperimentConfig config_from_json(const json& doc) {
  return overlay_config(ExperimentConfig{}, doc);
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot open config file '{}'", path.string()));
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(fmt::format("'{}' is not valid JSON: {}", path.string(), e.what()));
  }
  return config_from_json(doc);
}

std::vector<std::string> config_keys(const ExperimentConfig& config) {
  std::vector<std::string> keys;
  collect_keys(to_json(config), "", keys);
  return keys;
}

ExperimentConfig with_key(const ExperimentConfig& config, std::string_view key,
                          const json& value) {
  const auto keys = config_keys(config);
  if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
    throw ConfigError(fmt::format("'{}' is not a config key; valid keys: {}", key,
                                  fmt::join(keys, ", ")));
  }
  json patch = value;
  std::string_view rest = key;
  std::vector<std::string> parts;
  while (true) {
    const auto dot = rest.find('.');
    parts.emplace_back(rest.substr(0, dot));
    if (dot == std::string_view::npos) break;
    rest.remove_prefix(dot + 1);
  }
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) patch = json{{*it, patch}};
  return overlay_config(config, patch);
}

}  // namespace fairenergy
