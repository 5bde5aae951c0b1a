#pragma once

// Wireless uplink model: sparsified payload size, Shannon rate over an AWGN
// channel, transmission time and transmit energy. All quantities are in base
// SI units (W, Hz, bits, s, J).

#include <cstddef>
#include <span>
#include <vector>

#include "fairenergy/rng.hpp"

namespace fairenergy {

struct DeviceProfile {
  int id = 0;
  double power_watts = 0.0;
  /// Mean (large-scale) channel gain g_i.
  double pathloss_gain = 0.0;
  std::size_t dataset_size = 1;
};

/// Per-round channel gains h_i = g_i * f_i for every device.
struct ChannelRealization {
  int round = 0;
  std::vector<double> gains;
};

struct CommParams {
  /// Size of the full (uncompressed) update, S.
  double model_bits = 0.0;
  /// Index encoding overhead per transmission, I.
  double index_overhead_bits = 0.0;
  double noise_psd = 3.98e-21;
  double total_bandwidth_hz = 1e7;

  /// Throws ConfigError if any invariant is broken.
  void validate() const;
};

/// gamma * S + I.
double payload_bits(double gamma, const CommParams& params);

/// B log2(1 + P h / (N0 B)). Returns 0 when power or gain is zero.
double uplink_rate(double bandwidth_hz, double power_watts, double gain,
                   double noise_psd);

/// payload / rate. Throws OutageError for a positive payload at zero rate.
double comm_time(double payload_bits, double rate_bps);

/// Transmit energy P * T for a device sending a gamma-sparsified update over
/// bandwidth B with instantaneous gain h.
double comm_energy(const DeviceProfile& profile, double gamma,
                   double bandwidth_hz, double gain, const CommParams& params);

/// Closed-form B -> infinity energy limit, (gamma S + I) N0 ln 2 / h.
double comm_energy_limit(double gamma, double gain, const CommParams& params);

// ---------------------------------------------------------------------------
// Channel generation

struct ChannelModelParams {
  double min_distance_m = 50.0;
  double max_distance_m = 250.0;
  /// Path loss at 1 km in dB; PL(d) = ref + 10 * exponent * log10(d_km).
  double pathloss_ref_db = 128.1;
  double pathloss_exponent = 3.76;

  void validate() const;
};

double pathloss_gain_at(double distance_m, const ChannelModelParams& model);

/// Draws static device profiles: power uniform in [power_lo, power_hi] and
/// distance uniform in the configured range.
std::vector<DeviceProfile> make_devices(std::span<const std::size_t> dataset_sizes,
                                        double power_lo, double power_hi,
                                        const ChannelModelParams& model, Rng& rng);

/// Rayleigh block fading: h_i = g_i * Exp(1), drawn independently per round.
ChannelRealization draw_channel(int round, std::span<const DeviceProfile> devices,
                                Rng& rng);

}  // namespace fairenergy
