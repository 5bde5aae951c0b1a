#include "fairenergy/baselines.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include <fmt/format.h>

#include "fairenergy/contribution.hpp"
#include "fairenergy/errors.hpp"

namespace fairenergy {

void BaselineConfig::validate(std::size_t n_devices, double gamma_min,
                              const CommParams& params) const {
  if (k_selected < 1 || static_cast<std::size_t>(k_selected) > n_devices) {
    throw ConfigError(fmt::format("baseline k_selected = {} must lie in [1, {}]",
                                  k_selected, n_devices));
  }
  if (mode == BaselineMode::kEcoRandom) {
    if (!(eco_gamma >= gamma_min && eco_gamma <= 1.0)) {
      throw ConfigError(fmt::format("eco_gamma = {} must lie in [{}, 1]", eco_gamma,
                                    gamma_min));
    }
    if (!(eco_bandwidth_hz > 0.0) ||
        k_selected * eco_bandwidth_hz > params.total_bandwidth_hz * (1.0 + 1e-12)) {
      throw ConfigError(fmt::format(
          "eco bandwidth {} Hz for {} devices does not fit in B_tot = {} Hz",
          eco_bandwidth_hz, k_selected, params.total_bandwidth_hz));
    }
  }
}

namespace {

void assign(RoundDecision& d, std::size_t i, double gamma, double bandwidth, double norm,
            const DeviceProfile& profile, double gain, const CommParams& params) {
  d.x[i] = 1;
  d.gamma[i] = gamma;
  d.bandwidth_hz[i] = bandwidth;
  d.energy_j[i] = comm_energy(profile, gamma, bandwidth, gain, params);
  d.score[i] = contribution_score(norm, gamma);
  d.phi[i] = 0.0;
}

bool reachable(const DeviceProfile& p, double gain) {
  return gain > 0.0 && p.power_watts > 0.0;
}

}  // namespace

RoundDecision score_max_round(std::span<const double> norms, int k,
                              std::span<const DeviceProfile> devices,
                              const ChannelRealization& channel,
                              const CommParams& params) {
  const std::size_t n = devices.size();
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < n; ++i) {
    if (reachable(devices[i], channel.gains[i])) order.push_back(i);
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return norms[a] > norms[b]; });
  const std::size_t take = std::min(order.size(), static_cast<std::size_t>(std::max(k, 0)));

  RoundDecision d(n);
  if (take == 0) return d;
  const double share = params.total_bandwidth_hz / static_cast<double>(take);
  for (std::size_t j = 0; j < take; ++j) {
    const std::size_t i = order[j];
    assign(d, i, 1.0, share, norms[i], devices[i], channel.gains[i], params);
  }
  return d;
}

RoundDecision eco_random_round(Rng& rng, int k, double eco_gamma, double eco_bandwidth_hz,
                               std::span<const double> norms,
                               std::span<const DeviceProfile> devices,
                               const ChannelRealization& channel,
                               const CommParams& params) {
  const std::size_t n = devices.size();
  std::vector<std::size_t> pool(n);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  const std::size_t take = std::min(n, static_cast<std::size_t>(std::max(k, 0)));
  // Partial Fisher-Yates.
  for (std::size_t j = 0; j < take; ++j) {
    std::uniform_int_distribution<std::size_t> pick(j, n - 1);
    std::swap(pool[j], pool[pick(rng)]);
  }
  RoundDecision d(n);
  for (std::size_t j = 0; j < take; ++j) {
    const std::size_t i = pool[j];
    if (!reachable(devices[i], channel.gains[i])) continue;
    assign(d, i, eco_gamma, eco_bandwidth_hz, norms[i], devices[i], channel.gains[i],
           params);
  }
  return d;
}

}  // namespace fairenergy
