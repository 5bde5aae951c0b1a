#include "fairenergy/fairness.hpp"

#include <numeric>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "fairenergy/errors.hpp"

namespace fairenergy {

FairnessState::FairnessState(std::size_t n_devices, double rho, double pi_min,
                             double q_init)
    : q_(n_devices, q_init), rho_(rho), pi_min_(pi_min) {
  if (!(rho >= 0.0 && rho < 1.0)) {
    throw ConfigError(fmt::format("rho must lie in [0, 1) (got {})", rho));
  }
  if (!(pi_min >= 0.0 && pi_min < 1.0)) {
    throw ConfigError(fmt::format("pi_min must lie in [0, 1) (got {})", pi_min));
  }
  if (!(q_init >= 0.0)) throw ConfigError("initial q must be >= 0");
}

int FairnessState::update(std::span<const int> selected) {
  if (selected.size() != q_.size()) {
    throw ConfigError(fmt::format("fairness update expects {} entries, got {}",
                                  q_.size(), selected.size()));
  }
  int below = 0;
  for (std::size_t i = 0; i < q_.size(); ++i) {
    q_[i] = ema_update(q_[i], selected[i], rho_);
    if (q_[i] < pi_min_) ++below;
  }
  return below;
}

FeasibilityMonitor::FeasibilityMonitor(double pi_min, std::size_t window)
    : pi_min_(pi_min), window_(window == 0 ? 1 : window) {}

double FeasibilityMonitor::window_mean() const {
  if (history_.empty()) return 0.0;
  return std::accumulate(history_.begin(), history_.end(), 0.0) /
         static_cast<double>(history_.size());
}

bool FeasibilityMonitor::observe(double selected_fraction) {
  history_.push_back(selected_fraction);
  if (history_.size() > window_) history_.pop_front();
  if (warned_ || history_.size() < window_) return false;
  const double mean = window_mean();
  if (pi_min_ > mean) {
    warned_ = true;
    spdlog::warn(
        "pi_min = {} exceeds the mean selected fraction {:.4f} over the last {} "
        "rounds; the participation floor cannot hold for every device",
        pi_min_, mean, window_);
    return true;
  }
  return false;
}

}  // namespace fairenergy
