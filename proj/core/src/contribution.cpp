#include "fairenergy/contribution.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "fairenergy/errors.hpp"

namespace fairenergy {

NormMode parse_norm_mode(std::string_view name) {
  if (name == "oracle") return NormMode::kOracle;
  if (name == "stale") return NormMode::kStale;
  throw ConfigError(fmt::format("unknown norm_mode '{}' (expected oracle|stale)", name));
}

std::string_view to_string(NormMode mode) {
  return mode == NormMode::kOracle ? "oracle" : "stale";
}

NormProvider::NormProvider(NormMode mode, std::size_t n_devices)
    : mode_(mode), entries_(n_devices) {}

void NormProvider::set_current(int round, std::span<const double> norms) {
  if (norms.size() != entries_.size()) {
    throw ConfigError(fmt::format("expected {} norms, got {}", entries_.size(),
                                  norms.size()));
  }
  for (std::size_t i = 0; i < norms.size(); ++i) {
    entries_[i] = UpdateStats{norms[i], round};
  }
}

void NormProvider::record_participation(int round, int device, double norm) {
  entries_.at(static_cast<std::size_t>(device)) = UpdateStats{norm, round};
}

UpdateStats NormProvider::get(int round, int device) const {
  const auto& e = entries_.at(static_cast<std::size_t>(device));
  if (!e) {
    throw ConfigError(fmt::format(
        "no update norm for device {} at round {}: stale mode requires a warm-up "
        "round",
        device, round));
  }
  if (mode_ == NormMode::kOracle && e->freshness != round) {
    throw ConfigError(fmt::format(
        "oracle norm for device {} is from round {}, queried at round {}", device,
        e->freshness, round));
  }
  return *e;
}

bool NormProvider::warmed_up() const {
  return std::all_of(entries_.begin(), entries_.end(),
                     [](const auto& e) { return e.has_value(); });
}

}  // namespace fairenergy
