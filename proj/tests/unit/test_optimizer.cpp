#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include <doctest.h>

#include "../support/instances.hpp"
#include "fairenergy/contribution.hpp"
#include "fairenergy/errors.hpp"
#include "fairenergy/fairness.hpp"
#include "fairenergy/optimizer.hpp"

using namespace fairenergy;
using testing::default_params;

namespace {

double rel(double a, double b) { return std::fabs(a - b) / std::fabs(b); }

DeviceSolution solve(const testing::PhiInstance& inst, double mu, double rho,
                     const SolverConfig& cfg, const CommParams& params) {
  return solve_device(inst.device, inst.gain, inst.norm,
                      DevicePrices{inst.lambda, mu, inst.eta, rho}, cfg, params);
}

/// Drives q down so every device is below the floor.
FairnessState depleted_state(std::size_t n, int idle_rounds) {
  FairnessState f(n, 0.6, 0.2);
  const std::vector<int> none(n, 0);
  for (int r = 0; r < idle_rounds; ++r) f.update(none);
  return f;
}

}  // namespace

TEST_CASE("phi is the literal composition") {
  const CommParams params = default_params();
  std::mt19937_64 rng(1);
  const auto grid = uniform_gamma_grid(0.1, 1.0, 10);
  for (int k = 0; k < 100; ++k) {
    const auto inst = testing::random_phi_instance(rng, params, grid);
    const double b = 3e5;
    const double expected = comm_energy(inst.device, inst.gamma, b, inst.gain, params) +
                            inst.lambda * b - inst.eta * contribution_score(inst.norm, inst.gamma);
    CHECK(phi(inst.device, inst.gamma, b, inst.lambda, inst.eta, inst.norm, inst.gain,
              params) == expected);
  }
}

TEST_CASE("gamma difference at fixed bandwidth has the closed form") {
  const CommParams params = default_params();
  std::mt19937_64 rng(2);
  const auto grid = uniform_gamma_grid(0.1, 1.0, 10);
  for (int k = 0; k < 100; ++k) {
    const auto inst = testing::random_phi_instance(rng, params, grid);
    const double b = 2e5 + 1e4 * k;
    const double g1 = 0.2;
    const double g2 = 0.9;
    const double rate = uplink_rate(b, inst.device.power_watts, inst.gain, params.noise_psd);
    const double expected = inst.device.power_watts * params.model_bits * (g2 - g1) / rate -
                            inst.eta * inst.norm * (g2 - g1);
    const double got =
        phi(inst.device, g2, b, inst.lambda, inst.eta, inst.norm, inst.gain, params) -
        phi(inst.device, g1, b, inst.lambda, inst.eta, inst.norm, inst.gain, params);
    CHECK(std::fabs(got - expected) <= 1e-10 * std::max(std::fabs(expected), 1e-300) +
                                           1e-12 * std::fabs(phi(inst.device, g2, b,
                                                                 inst.lambda, inst.eta,
                                                                 inst.norm, inst.gain,
                                                                 params)));
  }
}

TEST_CASE("no price and no weight: energy only, upper bracket, never selected") {
  const CommParams params = default_params();
  const SolverConfig cfg = default_solver_config();
  std::mt19937_64 rng(3);
  for (int k = 0; k < 50; ++k) {
    auto inst = testing::random_phi_instance(rng, params, cfg.gamma_grid);
    inst.lambda = 0.0;
    inst.eta = 0.0;
    const DeviceSolution s = solve(inst, 0.0, 0.6, cfg, params);
    CHECK(s.x == 0);
    CHECK(s.gamma == cfg.gamma_grid.front());
    CHECK(params.total_bandwidth_hz - s.bandwidth_hz <=
          cfg.gss_tol * params.total_bandwidth_hz);
  }
}

TEST_CASE("large fairness multiplier forces selection") {
  const CommParams params = default_params();
  const SolverConfig cfg = default_solver_config();
  std::mt19937_64 rng(4);
  for (int k = 0; k < 50; ++k) {
    const auto inst = testing::random_phi_instance(rng, params, cfg.gamma_grid);
    const double bound = comm_energy(inst.device, 1.0, 1e-4 * params.total_bandwidth_hz,
                                     inst.gain, params) +
                         inst.lambda * params.total_bandwidth_hz;
    CHECK(solve(inst, bound / 0.4, 0.6, cfg, params).x == 1);
  }
}

TEST_CASE("selection matches the two-branch Lagrangian") {
  const CommParams params = default_params();
  const SolverConfig cfg = default_solver_config();
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  int mismatches = 0;
  for (int k = 0; k < 300; ++k) {
    const auto inst = testing::random_phi_instance(rng, params, cfg.gamma_grid);
    const double rho = 0.6;
    const double mu = unit(rng) < 0.5 ? 0.0 : 3.0 * unit(rng) * inst.eta * inst.norm;
    const DeviceSolution s = solve(inst, mu, rho, cfg, params);
    const double l0 = 0.0;
    const double l1 = s.energy_j + inst.lambda * s.bandwidth_hz - inst.eta * s.score -
                      mu * (1.0 - rho);
    const int expected = l1 < l0 ? 1 : 0;
    if (expected != s.x) ++mismatches;
  }
  CHECK(mismatches == 0);
}

TEST_CASE("raising mu never deselects") {
  const CommParams params = default_params();
  const SolverConfig cfg = default_solver_config();
  std::mt19937_64 rng(6);
  for (int k = 0; k < 100; ++k) {
    const auto inst = testing::random_phi_instance(rng, params, cfg.gamma_grid);
    int prev = 0;
    for (int step = 0; step <= 20; ++step) {
      const double mu = step * 0.25 * inst.eta * inst.norm + step * 1e-9;
      const int x = solve(inst, mu, 0.6, cfg, params).x;
      CHECK(x >= prev);
      prev = x;
    }
  }
}

TEST_CASE("outage devices are never selected") {
  const CommParams params = default_params();
  const SolverConfig cfg = default_solver_config();
  DeviceProfile d{0, 2e-4, 1e-10, 10};
  const DeviceSolution s =
      solve_device(d, 0.0, 1.0, DevicePrices{0.0, 1e9, 1.0, 0.6}, cfg, params);
  CHECK(s.outage);
  CHECK(s.x == 0);
}

TEST_CASE("repair: feasible input is unchanged") {
  const CommParams params = default_params();
  RoundDecision d(3);
  d.x = {1, 0, 1};
  d.bandwidth_hz = {4e6, 0.0, 5e6};
  d.energy_j = {1e-3, 0.0, 2e-3};
  d.score = {1.0, 0.0, 1.0};
  const DualState duals{0.0, {0.0, 0.0, 0.0}};
  const RepairResult r = repair_bandwidth(d, duals, 1e-3, 0.6, params);
  CHECK(r.dropped.empty());
  CHECK(r.decision.x == d.x);
  CHECK(r.decision.bandwidth_hz == d.bandwidth_hz);
}

TEST_CASE("repair: the single lowest value-per-hertz device is dropped") {
  const CommParams params = default_params();
  RoundDecision d(3);
  d.x = {1, 1, 1};
  d.bandwidth_hz = {4e6, 3e6, 4e6};
  d.energy_j = {1e-3, 1e-3, 1e-3};
  d.score = {5.0, 1.2, 5.0};
  const DualState duals{0.0, {0.0, 0.0, 0.0}};
  const RepairResult r = repair_bandwidth(d, duals, 1e-3, 0.6, params);
  REQUIRE(r.dropped.size() == 1);
  CHECK(r.dropped[0] == 1);
  CHECK(r.decision.x == std::vector<int>{1, 0, 1});
  CHECK(r.decision.bandwidth_hz[1] == 0.0);
  CHECK(r.decision.energy_j[1] == 0.0);
  CHECK(r.decision.bandwidth_hz[0] == 4e6);
}

TEST_CASE("repair: fairness multiplier protects a device") {
  const CommParams params = default_params();
  RoundDecision d(2);
  d.x = {1, 1};
  d.bandwidth_hz = {6e6, 6e6};
  d.energy_j = {1e-3, 1e-3};
  d.score = {2.0, 2.0};
  const DualState duals{0.0, {1.0, 0.0}};
  const RepairResult r = repair_bandwidth(d, duals, 1e-3, 0.6, params);
  CHECK(r.dropped == std::vector<int>{1});
}

TEST_CASE("repair: equal ratios break ties by ascending id") {
  const CommParams params = default_params();
  RoundDecision d(4);
  d.x = {1, 1, 1, 1};
  d.bandwidth_hz = {3e6, 3e6, 3e6, 3e6};
  d.energy_j = {1e-3, 1e-3, 1e-3, 1e-3};
  d.score = {2.0, 2.0, 2.0, 2.0};
  const DualState duals{0.0, {0.0, 0.0, 0.0, 0.0}};
  const RepairResult r = repair_bandwidth(d, duals, 1e-3, 0.6, params);
  CHECK(r.dropped == std::vector<int>{0});
  CHECK(r.decision.x == std::vector<int>{0, 1, 1, 1});
}

TEST_CASE("dual ascent output is budget feasible on tight budgets") {
  std::mt19937_64 rng(7);
  SolverConfig cfg = default_solver_config();
  cfg.max_inner_iters = 40;
  cfg.unimodality_check_points = 0;
  for (int k = 0; k < 100; ++k) {
    CommParams params = default_params(6.72e3);
    params.total_bandwidth_hz = 1e5 * (1 + k % 10);
    const auto pop = testing::random_population(12, rng);
    const FairnessState fairness = depleted_state(12, k % 6);
    RoundInputs in{pop.devices, &pop.channel, pop.norms, &fairness,
                   3.0 * testing::calibrated_eta(pop, params)};
    const RoundResult r = dual_ascent_round(in, DualState{}, cfg, params);
    CHECK(r.decision.total_bandwidth() <= params.total_bandwidth_hz * (1.0 + 1e-9));
    CHECK(r.duals.lambda >= 0.0);
    for (double m : r.duals.mu) CHECK(m >= 0.0);
    for (double l : r.report.lambda_trace) CHECK(l >= 0.0);
    CHECK(static_cast<int>(r.report.lambda_trace.size()) == r.report.inner_iterations);
    CHECK(r.report.budget_violation_trace.size() == r.report.lambda_trace.size());
    for (std::size_t i = 0; i < r.decision.size(); ++i) {
      if (r.decision.x[i]) {
        CHECK(r.decision.bandwidth_hz[i] > 0.0);
        CHECK(r.decision.gamma[i] >= cfg.gamma_min);
        CHECK(r.decision.gamma[i] <= 1.0);
      } else {
        CHECK(r.decision.bandwidth_hz[i] == 0.0);
        CHECK(r.decision.energy_j[i] == 0.0);
      }
    }
  }
}

TEST_CASE("inactive budget: lambda stays zero and nothing is repaired") {
  std::mt19937_64 rng(8);
  const CommParams params = default_params(6.72e3);
  SolverConfig cfg = default_solver_config();
  const std::size_t n = 10;
  // Every candidate fits even if all devices take the largest one.
  cfg.bandwidth_candidates_hz = {2e5, 5e5, 1e6};
  const auto pop = testing::random_population(n, rng);
  const FairnessState fairness(n, 0.6, 0.2);
  RoundInputs in{pop.devices, &pop.channel, pop.norms, &fairness,
                 testing::calibrated_eta(pop, params)};
  const RoundResult r = dual_ascent_round(in, DualState{}, cfg, params);
  CHECK(r.report.converged);
  CHECK_FALSE(r.report.repaired);
  CHECK(r.duals.lambda == 0.0);
  for (double l : r.report.lambda_trace) CHECK(l == 0.0);
  // Identical to solving every device on its own.
  for (std::size_t i = 0; i < n; ++i) {
    const DeviceSolution s =
        solve_device(pop.devices[i], pop.channel.gains[i], pop.norms[i],
                     DevicePrices{0.0, 0.0, in.eta, 0.6}, cfg, params);
    CHECK(s.x == r.decision.x[i]);
    if (s.x) {
      CHECK(s.bandwidth_hz == r.decision.bandwidth_hz[i]);
      CHECK(s.gamma == r.decision.gamma[i]);
    }
  }
}

TEST_CASE("two devices: matches enumeration at the returned duals") {
  std::mt19937_64 rng(9);
  SolverConfig cfg = default_solver_config();
  cfg.gamma_grid = {0.1, 1.0};
  cfg.bandwidth_candidates_hz = {1e5, 4e5, 8e5};
  cfg.max_inner_iters = 100;
  CommParams params = default_params(6.72e3);
  params.total_bandwidth_hz = 1e6;
  int within = 0;
  const int trials = 100;
  for (int k = 0; k < trials; ++k) {
    const auto pop = testing::random_population(2, rng);
    const FairnessState fairness = depleted_state(2, k % 5);
    RoundInputs in{pop.devices, &pop.channel, pop.norms, &fairness,
                   2.0 * testing::calibrated_eta(pop, params)};
    const RoundResult r = dual_ascent_round(in, DualState{}, cfg, params);
    REQUIRE(r.decision.total_bandwidth() <= params.total_bandwidth_hz * (1.0 + 1e-9));
    const double got = fairness_priced_objective(r.decision, r.duals, fairness, in.eta);

    double best = std::numeric_limits<double>::infinity();
    RoundDecision trial(2);
    for (int x0 = 0; x0 < 2; ++x0)
      for (int x1 = 0; x1 < 2; ++x1)
        for (double g0 : cfg.gamma_grid)
          for (double g1 : cfg.gamma_grid)
            for (double b0 : cfg.bandwidth_candidates_hz)
              for (double b1 : cfg.bandwidth_candidates_hz) {
                if (x0 * b0 + x1 * b1 > params.total_bandwidth_hz) continue;
                const int xs[2] = {x0, x1};
                const double gs[2] = {g0, g1};
                const double bs[2] = {b0, b1};
                for (std::size_t i = 0; i < 2; ++i) {
                  trial.deselect(i);
                  if (xs[i]) {
                    trial.x[i] = 1;
                    trial.gamma[i] = gs[i];
                    trial.bandwidth_hz[i] = bs[i];
                    trial.energy_j[i] =
                        comm_energy(pop.devices[i], gs[i], bs[i], pop.channel.gains[i], params);
                    trial.score[i] = contribution_score(pop.norms[i], gs[i]);
                  }
                }
                best = std::min(best,
                                fairness_priced_objective(trial, r.duals, fairness, in.eta));
              }
    CHECK(got >= best - 1e-12 * std::fabs(best));
    if (got - best <= 0.05 * std::fabs(best)) ++within;
  }
  CHECK(within >= trials * 95 / 100);
}

TEST_CASE("dual ascent is deterministic") {
  std::mt19937_64 rng(10);
  const CommParams params = default_params();
  SolverConfig cfg = default_solver_config();
  cfg.max_inner_iters = 30;
  const auto pop = testing::random_population(20, rng);
  const FairnessState fairness = depleted_state(20, 3);
  RoundInputs in{pop.devices, &pop.channel, pop.norms, &fairness,
                 testing::calibrated_eta(pop, params)};
  const RoundResult a = dual_ascent_round(in, DualState{}, cfg, params);
  const RoundResult b = dual_ascent_round(in, DualState{}, cfg, params);
  CHECK(a.decision.x == b.decision.x);
  CHECK(a.decision.gamma == b.decision.gamma);
  CHECK(a.decision.bandwidth_hz == b.decision.bandwidth_hz);
  CHECK(a.duals.lambda == b.duals.lambda);
  CHECK(a.duals.mu == b.duals.mu);
  CHECK(a.report.lambda_trace == b.report.lambda_trace);
}

TEST_CASE("warm start carries duals, cold start ignores them") {
  std::mt19937_64 rng(11);
  const CommParams params = default_params();
  SolverConfig cfg = default_solver_config();
  cfg.max_inner_iters = 1;
  cfg.unimodality_check_points = 0;
  const auto pop = testing::random_population(5, rng);
  const FairnessState fairness(5, 0.6, 0.2);
  RoundInputs in{pop.devices, &pop.channel, pop.norms, &fairness,
                 testing::calibrated_eta(pop, params)};
  const DualState start{1e-9, {1.0, 1.0, 1.0, 1.0, 1.0}};
  const RoundResult warm = dual_ascent_round(in, start, cfg, params);
  cfg.warm_start = false;
  const RoundResult cold = dual_ascent_round(in, start, cfg, params);
  CHECK(warm.duals.mu[0] > 0.5);
  CHECK(cold.duals.mu[0] == 0.0);
}

TEST_CASE("solver config validation") {
  SolverConfig c = default_solver_config();
  CHECK_NOTHROW(c.validate());
  c.gamma_grid = {0.05};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = default_solver_config();
  c.gamma_grid.clear();
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = default_solver_config();
  c.max_inner_iters = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK(uniform_gamma_grid(0.1, 1.0, 10).size() == 10);
  CHECK(uniform_gamma_grid(0.1, 1.0, 10).back() == 1.0);
  CHECK(uniform_gamma_grid(0.1, 1.0, 10)[1] == doctest::Approx(0.2));
}

TEST_CASE("unimodality diagnostic is silent under the default config") {
  std::mt19937_64 rng(12);
  const CommParams params = default_params();
  SolverConfig cfg = default_solver_config();
  cfg.max_inner_iters = 5;
  const auto pop = testing::random_population(30, rng);
  const FairnessState fairness = depleted_state(30, 4);
  RoundInputs in{pop.devices, &pop.channel, pop.norms, &fairness,
                 testing::calibrated_eta(pop, params)};
  const RoundResult r = dual_ascent_round(in, DualState{}, cfg, params);
  CHECK(r.report.unimodality_violations == 0);
}
