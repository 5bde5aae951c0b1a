#include "fairenergy/comm_model.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include <fmt/format.h>

#include "fairenergy/errors.hpp"

namespace fairenergy {

void CommParams::validate() const {
  if (!(model_bits > 0.0)) {
    throw ConfigError(fmt::format("comm.model_bits must be > 0 (got {})", model_bits));
  }
  if (!(index_overhead_bits >= 0.0)) {
    throw ConfigError(fmt::format("comm index overhead must be >= 0 (got {})",
                                  index_overhead_bits));
  }
  if (!(noise_psd > 0.0)) {
    throw ConfigError(fmt::format("comm.noise_psd must be > 0 (got {})", noise_psd));
  }
  if (!(total_bandwidth_hz > 0.0)) {
    throw ConfigError(
        fmt::format("total bandwidth must be > 0 (got {})", total_bandwidth_hz));
  }
}

double payload_bits(double gamma, const CommParams& params) {
  return gamma * params.model_bits + params.index_overhead_bits;
}

double uplink_rate(double bandwidth_hz, double power_watts, double gain,
                   double noise_psd) {
  if (power_watts <= 0.0 || gain <= 0.0) return 0.0;
  const double snr = power_watts * gain / (noise_psd * bandwidth_hz);
  // log1p keeps the wideband limit accurate when snr -> 0.
  return bandwidth_hz * std::log1p(snr) / std::numbers::ln2;
}

double comm_time(double payload_bits, double rate_bps) {
  if (payload_bits == 0.0) return 0.0;
  if (!(rate_bps > 0.0)) {
    throw OutageError(
        fmt::format("outage: payload of {} bits at zero uplink rate", payload_bits));
  }
  return payload_bits / rate_bps;
}

double comm_energy(const DeviceProfile& profile, double gamma, double bandwidth_hz,
                   double gain, const CommParams& params) {
  const double rate =
      uplink_rate(bandwidth_hz, profile.power_watts, gain, params.noise_psd);
  return profile.power_watts * comm_time(payload_bits(gamma, params), rate);
}

double comm_energy_limit(double gamma, double gain, const CommParams& params) {
  return payload_bits(gamma, params) * params.noise_psd * std::numbers::ln2 / gain;
}

void ChannelModelParams::validate() const {
  if (!(min_distance_m > 0.0) || !(max_distance_m >= min_distance_m)) {
    throw ConfigError(fmt::format("invalid distance range [{}, {}] m",
                                  min_distance_m, max_distance_m));
  }
  if (!(pathloss_exponent > 0.0)) {
    throw ConfigError("pathloss_exponent must be > 0");
  }
}

double pathloss_gain_at(double distance_m, const ChannelModelParams& model) {
  const double pl_db = model.pathloss_ref_db +
                       10.0 * model.pathloss_exponent * std::log10(distance_m / 1000.0);
  return std::pow(10.0, -pl_db / 10.0);
}

std::vector<DeviceProfile> make_devices(std::span<const std::size_t> dataset_sizes,
                                        double power_lo, double power_hi,
                                        const ChannelModelParams& model, Rng& rng) {
  std::uniform_real_distribution<double> power(power_lo, power_hi);
  std::uniform_real_distribution<double> distance(model.min_distance_m,
                                                  model.max_distance_m);
  std::vector<DeviceProfile> devices;
  devices.reserve(dataset_sizes.size());
  for (std::size_t i = 0; i < dataset_sizes.size(); ++i) {
    DeviceProfile d;
    d.id = static_cast<int>(i);
    d.power_watts = power_lo == power_hi ? power_lo : power(rng);
    d.pathloss_gain = pathloss_gain_at(distance(rng), model);
    d.dataset_size = dataset_sizes[i];
    devices.push_back(d);
  }
  return devices;
}

ChannelRealization draw_channel(int round, std::span<const DeviceProfile> devices,
                                Rng& rng) {
  std::exponential_distribution<double> fading(1.0);
  ChannelRealization ch;
  ch.round = round;
  ch.gains.reserve(devices.size());
  for (const auto& d : devices) ch.gains.push_back(d.pathloss_gain * fading(rng));
  return ch;
}

}  // namespace fairenergy
