#include <cmath>
#include <random>
#include <vector>

#include <doctest.h>

#include "../support/instances.hpp"
#include "fairenergy/baselines.hpp"
#include "fairenergy/errors.hpp"

using namespace fairenergy;

TEST_CASE("score max picks the top-k norms at full precision") {
  std::mt19937_64 rng(1);
  const CommParams params = testing::default_params();
  auto pop = testing::random_population(8, rng);
  pop.norms = {0.3, 0.9, 0.1, 0.9, 0.5, 0.2, 0.8, 0.4};
  const RoundDecision d = score_max_round(pop.norms, 3, pop.devices, pop.channel, params);
  // Tie at 0.9 keeps both; lower id first.
  CHECK(d.x == std::vector<int>{0, 1, 0, 1, 0, 0, 1, 0});
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d.x[i]) {
      CHECK(d.gamma[i] == 1.0);
      CHECK(d.bandwidth_hz[i] == doctest::Approx(params.total_bandwidth_hz / 3.0));
      CHECK(d.energy_j[i] == doctest::Approx(comm_energy(pop.devices[i], 1.0,
                                                         params.total_bandwidth_hz / 3.0,
                                                         pop.channel.gains[i], params)));
      CHECK(d.score[i] == pop.norms[i]);
    }
  }
  CHECK(d.total_bandwidth() == doctest::Approx(params.total_bandwidth_hz));
}

TEST_CASE("score max tie at the cutoff goes to the lower id") {
  std::mt19937_64 rng(2);
  const CommParams params = testing::default_params();
  auto pop = testing::random_population(4, rng);
  pop.norms = {0.5, 0.5, 0.5, 0.5};
  const RoundDecision d = score_max_round(pop.norms, 2, pop.devices, pop.channel, params);
  CHECK(d.x == std::vector<int>{1, 1, 0, 0});
}

TEST_CASE("score max skips unreachable devices") {
  std::mt19937_64 rng(3);
  const CommParams params = testing::default_params();
  auto pop = testing::random_population(4, rng);
  pop.norms = {0.9, 0.8, 0.1, 0.2};
  pop.channel.gains[0] = 0.0;
  const RoundDecision d = score_max_round(pop.norms, 2, pop.devices, pop.channel, params);
  CHECK(d.x == std::vector<int>{0, 1, 0, 1});
}

TEST_CASE("eco random selects k devices at the fixed operating point") {
  std::mt19937_64 env(4);
  const CommParams params = testing::default_params();
  const auto pop = testing::random_population(20, env);
  Rng rng(5);
  for (int r = 0; r < 50; ++r) {
    const RoundDecision d =
        eco_random_round(rng, 6, 0.1, 1e5, pop.norms, pop.devices, pop.channel, params);
    CHECK(d.selected_count() == 6);
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (!d.x[i]) continue;
      CHECK(d.gamma[i] == 0.1);
      CHECK(d.bandwidth_hz[i] == 1e5);
      CHECK(d.score[i] == doctest::Approx(0.1 * pop.norms[i]));
    }
  }
}

TEST_CASE("eco random selection frequency is k / N for every device") {
  std::mt19937_64 env(6);
  const CommParams params = testing::default_params();
  const std::size_t n = 10;
  const int k = 3;
  const int rounds = 20000;
  const auto pop = testing::random_population(n, env);
  Rng rng(7);
  std::vector<int> counts(n, 0);
  for (int r = 0; r < rounds; ++r) {
    const RoundDecision d =
        eco_random_round(rng, k, 0.1, 1e5, pop.norms, pop.devices, pop.channel, params);
    for (std::size_t i = 0; i < n; ++i) counts[i] += d.x[i];
  }
  const double p = static_cast<double>(k) / n;
  const double sd = std::sqrt(rounds * p * (1.0 - p));
  for (int c : counts) CHECK(std::fabs(c - rounds * p) < 4.0 * sd);
}

TEST_CASE("baseline config validation") {
  const CommParams params = testing::default_params();
  BaselineConfig c;
  c.k_selected = 5;
  c.mode = BaselineMode::kEcoRandom;
  c.eco_gamma = 0.1;
  c.eco_bandwidth_hz = 1e6;
  CHECK_NOTHROW(c.validate(50, 0.1, params));
  c.eco_bandwidth_hz = 3e6;
  CHECK_THROWS_AS(c.validate(50, 0.1, params), ConfigError);
  c.eco_bandwidth_hz = 1e6;
  c.eco_gamma = 0.05;
  CHECK_THROWS_AS(c.validate(50, 0.1, params), ConfigError);
  c.eco_gamma = 0.1;
  c.k_selected = 51;
  CHECK_THROWS_AS(c.validate(50, 0.1, params), ConfigError);
  c.k_selected = 0;
  CHECK_THROWS_AS(c.validate(50, 0.1, params), ConfigError);
}
