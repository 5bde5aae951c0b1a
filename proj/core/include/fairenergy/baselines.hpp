#pragma once

#include <span>
#include <string_view>

#include "fairenergy/comm_model.hpp"
#include "fairenergy/optimizer.hpp"
#include "fairenergy/rng.hpp"

namespace fairenergy {

enum class BaselineMode { kScoreMax, kEcoRandom };

struct BaselineConfig {
  int k_selected = 1;
  BaselineMode mode = BaselineMode::kScoreMax;
  double eco_gamma = 0.1;
  double eco_bandwidth_hz = 0.0;

  /// Checks 1 <= k <= n, eco_gamma in [gamma_min, 1] and k * B_eco <= B_tot.
  void validate(std::size_t n_devices, double gamma_min, const CommParams& params) const;
};

/// Top-k devices by update norm (ties by ascending id), full precision,
/// B_tot split equally. Unreachable devices are never picked.
RoundDecision score_max_round(std::span<const double> norms, int k,
                              std::span<const DeviceProfile> devices,
                              const ChannelRealization& channel,
                              const CommParams& params);

/// Uniform k-subset without replacement, everyone at (eco_gamma, eco_bandwidth).
RoundDecision eco_random_round(Rng& rng, int k, double eco_gamma, double eco_bandwidth_hz,
                               std::span<const double> norms,
                               std::span<const DeviceProfile> devices,
                               const ChannelRealization& channel,
                               const CommParams& params);

}  // namespace fairenergy
