#pragma once

// Random solver instances shared by the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "fairenergy/comm_model.hpp"
#include "fairenergy/fairness.hpp"
#include "fairenergy/optimizer.hpp"

namespace fairenergy::testing {

inline CommParams default_params(double model_bits = 6.4e7) {
  CommParams p;
  p.model_bits = model_bits;
  p.index_overhead_bits = 0.05 * model_bits;
  p.noise_psd = 3.98e-21;
  p.total_bandwidth_hz = 1e7;
  return p;
}

struct Population {
  std::vector<DeviceProfile> devices;
  ChannelRealization channel;
  std::vector<double> norms;
};

inline Population random_population(std::size_t n, std::mt19937_64& rng) {
  const ChannelModelParams model;
  std::vector<std::size_t> sizes(n, 100);
  Population pop;
  pop.devices = make_devices(sizes, 1e-4, 3e-4, model, rng);
  pop.channel = draw_channel(1, pop.devices, rng);
  std::uniform_real_distribution<double> norm(0.05, 2.0);
  for (std::size_t i = 0; i < n; ++i) pop.norms.push_back(norm(rng));
  return pop;
}

/// eta that puts the median device at parity between energy and score.
inline double calibrated_eta(const Population& pop, const CommParams& params) {
  const double probe = probe_energy(pop.devices, pop.channel, params);
  std::vector<double> n = pop.norms;
  std::nth_element(n.begin(), n.begin() + n.size() / 2, n.end());
  return probe / n[n.size() / 2];
}

struct PhiInstance {
  DeviceProfile device;
  double gain = 0.0;
  double norm = 0.0;
  double gamma = 1.0;
  double lambda = 0.0;
  double eta = 0.0;
};

/// One device with a random channel, norm, grid gamma and a bandwidth price
/// on the scale of its own energy per equal-share hertz.
inline PhiInstance random_phi_instance(std::mt19937_64& rng, const CommParams& params,
                                       const std::vector<double>& gamma_grid) {
  const ChannelModelParams model;
  std::uniform_real_distribution<double> dist(model.min_distance_m, model.max_distance_m);
  std::uniform_real_distribution<double> power(1e-4, 3e-4);
  std::exponential_distribution<double> fading(1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick(0, gamma_grid.size() - 1);

  PhiInstance inst;
  inst.device.id = 0;
  inst.device.power_watts = power(rng);
  inst.device.pathloss_gain = pathloss_gain_at(dist(rng), model);
  inst.device.dataset_size = 100;
  inst.gain = inst.device.pathloss_gain * std::max(fading(rng), 1e-3);
  inst.norm = 0.05 + 2.0 * unit(rng);
  inst.gamma = gamma_grid[pick(rng)];
  const double b_eq = params.total_bandwidth_hz / 50.0;
  const double e_eq = comm_energy(inst.device, 1.0, b_eq, inst.gain, params);
  inst.lambda = 4.0 * unit(rng) * e_eq / b_eq;
  inst.eta = 2.0 * unit(rng) * e_eq / inst.norm;
  return inst;
}

}  // namespace fairenergy::testing
