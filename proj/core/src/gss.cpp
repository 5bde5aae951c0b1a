#include "fairenergy/gss.hpp"

#include <fmt/format.h>

#include "fairenergy/errors.hpp"

namespace fairenergy::detail {

void throw_non_finite(double abscissa, double value) {
  throw NumericError(fmt::format(
      "golden-section search: objective is non-finite ({}) at x = {}", value,
      abscissa));
}

void throw_bad_bracket(double lo, double hi, int max_evals) {
  throw NumericError(fmt::format(
      "golden-section search: invalid bracket [{}, {}] or max_evals {} < 2", lo, hi,
      max_evals));
}

}  // namespace fairenergy::detail
