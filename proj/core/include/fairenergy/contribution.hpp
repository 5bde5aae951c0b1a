#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace fairenergy {

/// Magnitude of a device's local update and the round it was measured in.
struct UpdateStats {
  double norm = 0.0;
  int freshness = 0;
};

/// s = ||u|| * gamma.
inline double contribution_score(double norm, double gamma) { return norm * gamma; }

enum class NormMode {
  /// Every device computes its update each round; the true norm is known.
  kOracle,
  /// The server only knows the norm from each device's last participation.
  kStale,
};

NormMode parse_norm_mode(std::string_view name);
std::string_view to_string(NormMode mode);

// Holds the update norms the server may use when scoring candidates.
// Writes happen at round boundaries, reads during the round.
class NormProvider {
 public:
  NormProvider(NormMode mode, std::size_t n_devices);

  NormMode mode() const noexcept { return mode_; }
  std::size_t size() const noexcept { return entries_.size(); }

  /// Oracle mode: install this round's true norms for every device.
  void set_current(int round, std::span<const double> norms);

  /// Record the norm a device produced when it participated in `round`.
  void record_participation(int round, int device, double norm);

  /// Norm visible to the server for `device` when deciding round `round`.
  /// Throws ConfigError in stale mode if the device never participated.
  UpdateStats get(int round, int device) const;

  /// True once every device has at least one recorded norm.
  bool warmed_up() const;

 private:
  NormMode mode_;
  std::vector<std::optional<UpdateStats>> entries_;
};

}  // namespace fairenergy
