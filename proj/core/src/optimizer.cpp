#include "fairenergy/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "fairenergy/contribution.hpp"
#include "fairenergy/errors.hpp"
#include "fairenergy/gss.hpp"

namespace fairenergy {

void SolverConfig::validate() const {
  if (gamma_grid.empty()) throw ConfigError("solver.gamma_grid must not be empty");
  if (!(gamma_min > 0.0 && gamma_min <= 1.0)) {
    throw ConfigError(fmt::format("gamma_min must lie in (0, 1] (got {})", gamma_min));
  }
  for (double g : gamma_grid) {
    if (!(g >= gamma_min - 1e-12 && g <= 1.0 + 1e-12)) {
      throw ConfigError(fmt::format(
          "gamma grid entry {} lies outside [gamma_min = {}, 1]", g, gamma_min));
    }
  }
  if (!(bandwidth_lo_fraction > 0.0 && bandwidth_lo_fraction < 1.0)) {
    throw ConfigError("solver.bandwidth_lo_fraction must lie in (0, 1)");
  }
  for (double b : bandwidth_candidates_hz) {
    if (!(b > 0.0)) throw ConfigError("bandwidth candidates must be > 0");
  }
  if (!(gss_tol > 0.0 && gss_tol < 1.0)) throw ConfigError("solver.gss_tol must lie in (0, 1)");
  if (gss_max_evals < 2) throw ConfigError("solver.gss_max_evals must be >= 2");
  if (max_inner_iters < 1) throw ConfigError("solver.max_inner_iters must be >= 1");
  if (!(budget_tol >= 0.0) || !(dual_tol >= 0.0)) {
    throw ConfigError("solver tolerances must be >= 0");
  }
  if (!(lambda_step_scale > 0.0) || !(mu_step_scale > 0.0)) {
    throw ConfigError("solver step scales must be > 0");
  }
  if (unimodality_check_points < 0) {
    throw ConfigError("solver.unimodality_check_points must be >= 0");
  }
}

std::vector<double> uniform_gamma_grid(double lo, double hi, int points) {
  if (points < 1) throw ConfigError("gamma grid needs at least one point");
  if (points == 1) return {hi};
  std::vector<double> grid(static_cast<std::size_t>(points));
  for (int k = 0; k < points; ++k) {
    grid[static_cast<std::size_t>(k)] =
        k == points - 1 ? hi : lo + (hi - lo) * k / static_cast<double>(points - 1);
  }
  return grid;
}

SolverConfig default_solver_config() {
  SolverConfig c;
  c.gamma_grid = uniform_gamma_grid(0.1, 1.0, 10);
  return c;
}

RoundDecision::RoundDecision(std::size_t n)
    : x(n, 0), gamma(n, 0.0), bandwidth_hz(n, 0.0), energy_j(n, 0.0), score(n, 0.0),
      phi(n, 0.0) {}

int RoundDecision::selected_count() const {
  return static_cast<int>(std::count(x.begin(), x.end(), 1));
}

double RoundDecision::total_bandwidth() const {
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i]) total += bandwidth_hz[i];
  }
  return total;
}

double RoundDecision::total_energy() const {
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i]) total += energy_j[i];
  }
  return total;
}

void RoundDecision::deselect(std::size_t i) {
  x[i] = 0;
  gamma[i] = 0.0;
  bandwidth_hz[i] = 0.0;
  energy_j[i] = 0.0;
  score[i] = 0.0;
}

double phi(const DeviceProfile& profile, double gamma, double bandwidth_hz,
           double lambda, double eta, double norm, double gain,
           const CommParams& params) {
  return comm_energy(profile, gamma, bandwidth_hz, gain, params) +
         lambda * bandwidth_hz - eta * contribution_score(norm, gamma);
}

DeviceSolution solve_device(const DeviceProfile& profile, double gain, double norm,
                            const DevicePrices& prices, const SolverConfig& config,
                            const CommParams& params, bool check_unimodality) {
  DeviceSolution sol;
  if (!(gain > 0.0) || !(profile.power_watts > 0.0)) {
    // Unreachable this round: only the constant Lagrangian term remains.
    sol.outage = true;
    return sol;
  }

  const double b_hi = params.total_bandwidth_hz;
  const double b_lo = config.bandwidth_lo_fraction * b_hi;

  double best = std::numeric_limits<double>::infinity();
  for (double gamma : config.gamma_grid) {
    auto f = [&](double b) {
      return phi(profile, gamma, b, prices.lambda, prices.eta, norm, gain, params);
    };
    double b_star = 0.0;
    double value = std::numeric_limits<double>::infinity();
    if (config.bandwidth_candidates_hz.empty()) {
      const GssResult r =
          gss_minimize(f, b_lo, b_hi, config.gss_tol, config.gss_max_evals);
      b_star = r.argmin;
      value = r.min_value;
      if (check_unimodality && config.unimodality_check_points > 0 &&
          slope_sign_changes(f, b_lo, b_hi, config.unimodality_check_points) > 1) {
        ++sol.unimodality_violations;
        spdlog::debug("phi not unimodal in B for device {} at gamma {}", profile.id,
                      gamma);
      }
    } else {
      for (double b : config.bandwidth_candidates_hz) {
        const double v = f(b);
        if (v < value) {
          value = v;
          b_star = b;
        }
      }
    }
    if (value < best) {
      best = value;
      sol.gamma = gamma;
      sol.bandwidth_hz = b_star;
    }
  }

  sol.phi = best;
  sol.energy_j = comm_energy(profile, sol.gamma, sol.bandwidth_hz, gain, params);
  sol.score = contribution_score(norm, sol.gamma);
  // Ties resolve to "not selected".
  sol.x = sol.energy_j + prices.lambda * sol.bandwidth_hz <
                  prices.eta * sol.score + prices.mu * (1.0 - prices.rho)
              ? 1
              : 0;
  return sol;
}

namespace {

void check_inputs(const RoundInputs& in) {
  if (in.channel == nullptr || in.fairness == nullptr) {
    throw ConfigError("round inputs need a channel realization and fairness state");
  }
  const std::size_t n = in.devices.size();
  if (in.channel->gains.size() != n || in.norms.size() != n || in.fairness->size() != n) {
    throw ConfigError(fmt::format(
        "round inputs disagree on device count ({} devices, {} gains, {} norms, {} "
        "fairness entries)",
        n, in.channel->gains.size(), in.norms.size(), in.fairness->size()));
  }
}

bool all_finite_nonneg(const DualState& d) {
  if (!std::isfinite(d.lambda) || d.lambda < 0.0) return false;
  return std::all_of(d.mu.begin(), d.mu.end(),
                     [](double m) { return std::isfinite(m) && m >= 0.0; });
}

}  // namespace

double probe_energy(std::span<const DeviceProfile> devices,
                    const ChannelRealization& channel, const CommParams& params) {
  std::vector<double> energies;
  energies.reserve(devices.size());
  const double share =
      params.total_bandwidth_hz / static_cast<double>(std::max<std::size_t>(1, devices.size()));
  for (std::size_t i = 0; i < devices.size(); ++i) {
    const double h = channel.gains[i];
    if (h > 0.0 && devices[i].power_watts > 0.0) {
      energies.push_back(comm_energy(devices[i], 1.0, share, h, params));
    }
  }
  if (energies.empty()) return 1.0;
  const auto mid = energies.begin() + static_cast<std::ptrdiff_t>(energies.size() / 2);
  std::nth_element(energies.begin(), mid, energies.end());
  if (energies.size() % 2 == 1) return *mid;
  const double upper = *mid;
  const double lower = *std::max_element(energies.begin(), mid);
  return 0.5 * (lower + upper);
}

RoundDecision solve_all_devices(const RoundInputs& in, const DualState& duals,
                                const SolverConfig& config, const CommParams& params,
                                int* outages, int* unimodality_violations) {
  check_inputs(in);
  const std::size_t n = in.devices.size();
  const double rho = in.fairness->rho();
  RoundDecision d(n);
  for (std::size_t i = 0; i < n; ++i) {
    DevicePrices prices{duals.lambda, duals.mu[i], in.eta, rho};
    const DeviceSolution s =
        solve_device(in.devices[i], in.channel->gains[i], in.norms[i], prices, config,
                     params, unimodality_violations != nullptr);
    if (outages != nullptr && s.outage) ++*outages;
    if (unimodality_violations != nullptr) *unimodality_violations += s.unimodality_violations;
    d.phi[i] = s.phi;
    if (s.x == 1) {
      d.x[i] = 1;
      d.gamma[i] = s.gamma;
      d.bandwidth_hz[i] = s.bandwidth_hz;
      d.energy_j[i] = s.energy_j;
      d.score[i] = s.score;
    }
  }
  return d;
}

RepairResult repair_bandwidth(const RoundDecision& decision, const DualState& duals,
                              double eta, double rho, const CommParams& params) {
  RepairResult out{decision, {}};
  const double budget = params.total_bandwidth_hz;
  if (out.decision.total_bandwidth() <= budget) return out;

  struct Candidate {
    double ratio;
    std::size_t id;
  };
  std::vector<Candidate> order;
  for (std::size_t i = 0; i < decision.size(); ++i) {
    if (!decision.x[i]) continue;
    const double mu = i < duals.mu.size() ? duals.mu[i] : 0.0;
    const double benefit =
        eta * decision.score[i] + mu * (1.0 - rho) - decision.energy_j[i];
    order.push_back({benefit / decision.bandwidth_hz[i], i});
  }
  std::sort(order.begin(), order.end(), [](const Candidate& a, const Candidate& b) {
    if (a.ratio != b.ratio) return a.ratio < b.ratio;
    return a.id < b.id;
  });

  for (const Candidate& c : order) {
    out.decision.deselect(c.id);
    out.dropped.push_back(static_cast<int>(c.id));
    if (out.decision.total_bandwidth() <= budget) break;
  }
  return out;
}

double primal_objective(const RoundDecision& decision, double eta) {
  double total = 0.0;
  for (std::size_t i = 0; i < decision.size(); ++i) {
    if (decision.x[i]) total += decision.energy_j[i] - eta * decision.score[i];
  }
  return total;
}

double fairness_priced_objective(const RoundDecision& decision, const DualState& duals,
                                 const FairnessState& fairness, double eta) {
  double total = primal_objective(decision, eta);
  for (std::size_t i = 0; i < decision.size(); ++i) {
    total += duals.mu[i] * fairness.violation(i, decision.x[i]);
  }
  return total;
}

double fairness_shortfall(const RoundDecision& decision, const FairnessState& fairness) {
  double total = 0.0;
  for (std::size_t i = 0; i < decision.size(); ++i) {
    total += std::max(0.0, fairness.violation(i, decision.x[i]));
  }
  return total;
}

RoundResult dual_ascent_round(const RoundInputs& in, const DualState& initial,
                              const SolverConfig& config, const CommParams& params) {
  check_inputs(in);
  const std::size_t n = in.devices.size();
  const double budget = params.total_bandwidth_hz;
  const FairnessState& fairness = *in.fairness;

  RoundResult result;
  SolverReport& report = result.report;
  DualState duals;
  if (config.warm_start) {
    duals = initial;
  }
  duals.mu.resize(n, 0.0);
  if (!all_finite_nonneg(duals)) throw NumericError("initial duals must be finite and >= 0");

  const double probe = probe_energy(in.devices, *in.channel, params);
  const double nd = static_cast<double>(std::max<std::size_t>(1, n));
  report.probe_energy_j = probe;
  report.alpha_lambda0 = config.lambda_step_scale * probe / (budget * budget);
  report.alpha_mu = config.mu_step_scale * probe;

  std::vector<RepairResult> iterates;
  iterates.reserve(static_cast<std::size_t>(config.max_inner_iters));
  RoundDecision last(n);

  for (int t = 1; t <= config.max_inner_iters; ++t) {
    int outages = 0;
    last = solve_all_devices(in, duals, config, params, &outages, nullptr);
    report.outage_devices = outages;

    const double residual = last.total_bandwidth() - budget;

    double max_change = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double next =
          std::max(0.0, duals.mu[i] + report.alpha_mu * fairness.violation(i, last.x[i]));
      max_change = std::max(max_change, std::fabs(next - duals.mu[i]) / probe);
      duals.mu[i] = next;
    }
    const double alpha_lambda = report.alpha_lambda0 / std::sqrt(static_cast<double>(t));
    const double next_lambda = std::max(0.0, duals.lambda + alpha_lambda * residual);
    max_change =
        std::max(max_change, std::fabs(next_lambda - duals.lambda) * budget / (nd * probe));
    duals.lambda = next_lambda;

    if (!all_finite_nonneg(duals)) {
      throw NumericError(fmt::format("dual update produced an invalid value at inner "
                                     "iteration {}",
                                     t));
    }

    report.inner_iterations = t;
    report.lambda_trace.push_back(duals.lambda);
    report.budget_violation_trace.push_back(residual);

    iterates.push_back(repair_bandwidth(last, duals, in.eta, fairness.rho(), params));
    if (spdlog::should_log(spdlog::level::trace)) {
      int need = 0, need_in = 0;
      for (std::size_t i = 0; i < n; ++i) {
        if (fairness.violation(i, 0) > 0) {
          ++need;
          need_in += iterates.back().decision.x[i];
        }
      }
      spdlog::trace("iter {} sel {} resid {:.3g} lambda {:.3g} dropped {} floor-bound {} kept {} "
                    "J {:.4g}",
                    t, last.selected_count(), residual / budget, duals.lambda,
                    iterates.back().dropped.size(), need, need_in,
                    fairness_priced_objective(iterates.back().decision, duals, fairness, in.eta));
    }

    const bool budget_ok = std::fabs(residual) <= config.budget_tol * budget ||
                           (residual <= 0.0 && duals.lambda == 0.0);
    if (budget_ok && max_change <= config.dual_tol) {
      report.converged = true;
      break;
    }
  }

  if (report.converged) {
    RepairResult& r = iterates.back();
    report.repaired = !r.dropped.empty();
    report.dropped_devices = std::move(r.dropped);
    report.chosen_iteration = report.inner_iterations;
    result.decision = std::move(r.decision);
  } else {
    // Best feasible iterate: least floor shortfall, then the fairness-priced
    // objective at the final duals; later iterates win ties.
    std::size_t best = 0;
    double best_shortfall = std::numeric_limits<double>::infinity();
    double best_value = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < iterates.size(); ++k) {
      const double sf = fairness_shortfall(iterates[k].decision, fairness);
      const double v =
          fairness_priced_objective(iterates[k].decision, duals, fairness, in.eta);
      if (sf < best_shortfall || (sf == best_shortfall && v <= best_value)) {
        best_shortfall = sf;
        best_value = v;
        best = k;
      }
    }
    report.repaired = true;
    report.chosen_iteration = static_cast<int>(best) + 1;
    report.dropped_devices = std::move(iterates[best].dropped);
    result.decision = std::move(iterates[best].decision);
  }

  if (config.unimodality_check_points > 0 && config.bandwidth_candidates_hz.empty()) {
    int violations = 0;
    (void)solve_all_devices(in, duals, config, params, nullptr, &violations);
    report.unimodality_violations = violations;
    if (violations > 0) {
      spdlog::warn("unimodality diagnostic: phi(B) had more than one slope sign "
                   "change for {} (device, gamma) pairs",
                   violations);
    }
  }

  result.duals = std::move(duals);
  return result;
}

}  // namespace fairenergy
