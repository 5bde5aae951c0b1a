#pragma once

#include <cstddef>
#include <deque>
#include <span>
#include <vector>

namespace fairenergy {

/// q = rho * q_prev + (1 - rho) * x
inline double ema_update(double q_prev, int x, double rho) {
  return rho * q_prev + (1.0 - rho) * static_cast<double>(x);
}

/// pi_min - rho * q_prev - (1 - rho) * x. Positive means this round's decision
/// leaves the device below the participation floor.
inline double fairness_violation(double q_prev, int x, double rho, double pi_min) {
  return pi_min - rho * q_prev - (1.0 - rho) * static_cast<double>(x);
}

// Long-term participation tracker. q starts at 1 so the floor does not bind
// during the first rounds.
class FairnessState {
 public:
  FairnessState(std::size_t n_devices, double rho, double pi_min,
                double q_init = 1.0);

  double rho() const noexcept { return rho_; }
  double pi_min() const noexcept { return pi_min_; }
  std::size_t size() const noexcept { return q_.size(); }
  std::span<const double> q() const noexcept { return q_; }
  double q(std::size_t i) const { return q_.at(i); }

  double violation(std::size_t i, int x) const {
    return fairness_violation(q_[i], x, rho_, pi_min_);
  }

  /// Applies one round of selections. Returns the number of devices whose q
  /// ends the round below pi_min.
  int update(std::span<const int> selected);

 private:
  std::vector<double> q_;
  double rho_;
  double pi_min_;
};

// Warns (once) when pi_min exceeds the mean selected fraction over a
// sliding window. Never rejects a configuration.
class FeasibilityMonitor {
 public:
  FeasibilityMonitor(double pi_min, std::size_t window = 20);

  /// Returns true exactly on the round the warning is first raised.
  bool observe(double selected_fraction);
  bool warned() const noexcept { return warned_; }
  double window_mean() const;

 private:
  double pi_min_;
  std::size_t window_;
  std::deque<double> history_;
  bool warned_ = false;
};

}  // namespace fairenergy
