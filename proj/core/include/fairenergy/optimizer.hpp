#pragma once

// Per-round joint selection / compression / bandwidth solver.
//
// The binary selection is relaxed and the bandwidth budget and participation
// floors are priced by duals (lambda, mu_i). For fixed duals each device
// minimizes
//
//   phi(gamma, B) = E(gamma, B) + lambda B - eta ||u|| gamma
//
// over a gamma grid, with golden-section search over B for every grid point,
// and joins iff E + lambda B < eta s + mu_i (1 - rho). The duals follow
// projected subgradient steps, and a greedy repair restores the budget.

#include <cstddef>
#include <span>
#include <vector>

#include "fairenergy/comm_model.hpp"
#include "fairenergy/fairness.hpp"

namespace fairenergy {

struct SolverConfig {
  std::vector<double> gamma_grid;
  double gamma_min = 0.1;
  /// Lower end of the bandwidth bracket as a fraction of B_tot.
  double bandwidth_lo_fraction = 1e-4;
  /// When non-empty, B is chosen from these values (Hz) instead of by GSS.
  std::vector<double> bandwidth_candidates_hz;
  double gss_tol = 1e-4;
  int gss_max_evals = 200;
  int max_inner_iters = 200;
  /// Budget convergence: |sum x B - B_tot| <= budget_tol * B_tot.
  double budget_tol = 1e-3;
  /// Largest normalized dual change accepted as converged.
  double dual_tol = 1e-6;
  /// alpha_lambda(t) = lambda_step_scale * E_probe / B_tot^2 / sqrt(t).
  double lambda_step_scale = 1.0;
  /// alpha_mu = mu_step_scale * E_probe (constant).
  double mu_step_scale = 1.0;
  /// Carry duals over between rounds instead of restarting from zero.
  bool warm_start = true;
  /// Grid size of the per-round unimodality diagnostic; 0 disables it.
  int unimodality_check_points = 256;

  void validate() const;
};

/// `points` uniformly spaced values on [lo, hi].
std::vector<double> uniform_gamma_grid(double lo, double hi, int points);

SolverConfig default_solver_config();

struct DualState {
  double lambda = 0.0;
  std::vector<double> mu;
};

struct RoundDecision {
  std::vector<int> x;
  std::vector<double> gamma;
  std::vector<double> bandwidth_hz;
  std::vector<double> energy_j;
  std::vector<double> score;
  /// Best phi found for the device at the duals it was solved with.
  std::vector<double> phi;

  explicit RoundDecision(std::size_t n = 0);

  std::size_t size() const noexcept { return x.size(); }
  int selected_count() const;
  /// Index-ordered sum of x_i B_i.
  double total_bandwidth() const;
  /// Index-ordered sum of x_i E_i.
  double total_energy() const;
  void deselect(std::size_t i);
};

struct SolverReport {
  int inner_iterations = 0;
  std::vector<double> lambda_trace;
  std::vector<double> budget_violation_trace;
  bool converged = false;
  bool repaired = false;
  std::vector<int> dropped_devices;
  double probe_energy_j = 0.0;
  double alpha_lambda0 = 0.0;
  double alpha_mu = 0.0;
  int unimodality_violations = 0;
  int outage_devices = 0;
  /// Inner iteration whose (repaired) primal point was returned, 1-based.
  int chosen_iteration = 0;
};

/// E(gamma, B) + lambda B - eta ||u|| gamma.
double phi(const DeviceProfile& profile, double gamma, double bandwidth_hz,
           double lambda, double eta, double norm, double gain,
           const CommParams& params);

struct DeviceSolution {
  int x = 0;
  double gamma = 0.0;
  double bandwidth_hz = 0.0;
  double phi = 0.0;
  double energy_j = 0.0;
  double score = 0.0;
  bool outage = false;
  int unimodality_violations = 0;
};

struct DevicePrices {
  double lambda = 0.0;
  double mu = 0.0;
  double eta = 0.0;
  double rho = 0.0;
};

/// Minimizes phi over the gamma grid and bandwidth bracket, then applies the
/// threshold rule. gamma/bandwidth/energy/score describe the best selected
/// configuration even when x = 0; RoundDecision zeroes them for x = 0.
DeviceSolution solve_device(const DeviceProfile& profile, double gain, double norm,
                            const DevicePrices& prices, const SolverConfig& config,
                            const CommParams& params, bool check_unimodality = false);

struct RoundInputs {
  std::span<const DeviceProfile> devices;
  const ChannelRealization* channel = nullptr;
  std::span<const double> norms;
  const FairnessState* fairness = nullptr;
  double eta = 0.0;
};

struct RoundResult {
  RoundDecision decision;
  DualState duals;
  SolverReport report;
};

/// Solves every device at fixed duals and assembles the decision.
RoundDecision solve_all_devices(const RoundInputs& in, const DualState& duals,
                                const SolverConfig& config, const CommParams& params,
                                int* outages = nullptr,
                                int* unimodality_violations = nullptr);

/// Projected subgradient dual ascent over one round, followed by repair.
RoundResult dual_ascent_round(const RoundInputs& in, const DualState& duals,
                              const SolverConfig& config, const CommParams& params);

struct RepairResult {
  RoundDecision decision;
  std::vector<int> dropped;
};

/// If the budget is exceeded, drops selected devices in ascending order of
/// (eta s + mu (1 - rho) - E) / B, ties by ascending id, until it fits.
RepairResult repair_bandwidth(const RoundDecision& decision, const DualState& duals,
                              double eta, double rho, const CommParams& params);

/// sum_i x_i (E_i - eta s_i).
double primal_objective(const RoundDecision& decision, double eta);

/// primal_objective plus sum_i mu_i (pi_min - rho q_i - (1 - rho) x_i).
double fairness_priced_objective(const RoundDecision& decision, const DualState& duals,
                                 const FairnessState& fairness, double eta);

/// sum_i max(0, pi_min - rho q_i - (1 - rho) x_i).
double fairness_shortfall(const RoundDecision& decision, const FairnessState& fairness);

/// Median of E_i(gamma = 1, B_tot / N) over reachable devices, or 1 if none.
double probe_energy(std::span<const DeviceProfile> devices,
                    const ChannelRealization& channel, const CommParams& params);

}  // namespace fairenergy
