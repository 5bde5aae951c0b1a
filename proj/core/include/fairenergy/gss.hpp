#pragma once

#include <cmath>
#include <concepts>

namespace fairenergy {

struct GssResult {
  double argmin = 0.0;
  double min_value = 0.0;
  int evals = 0;
  /// False if max_evals ran out before the bracket reached the tolerance.
  bool converged = false;
};

namespace detail {
[[noreturn]] void throw_non_finite(double abscissa, double value);
[[noreturn]] void throw_bad_bracket(double lo, double hi, int max_evals);
}  // namespace detail

/// Golden-section minimization of a unimodal f on [lo, hi]. Stops when the
/// bracket is no wider than tol * (hi - lo) or after max_evals evaluations,
/// and returns the better of the two interior probes.
template <typename F>
  requires std::invocable<F&, double>
GssResult gss_minimize(F&& f, double lo, double hi, double tol, int max_evals) {
  if (!(lo < hi) || max_evals < 2) detail::throw_bad_bracket(lo, hi, max_evals);

  constexpr double kInvPhi = 0.6180339887498948482;
  auto eval = [&f](double x) {
    const double v = f(x);
    if (!std::isfinite(v)) detail::throw_non_finite(x, v);
    return v;
  };

  const double target_width = tol * (hi - lo);
  double a = lo;
  double b = hi;
  double c = b - kInvPhi * (b - a);
  double d = a + kInvPhi * (b - a);
  double fc = eval(c);
  double fd = eval(d);
  int evals = 2;

  while (b - a > target_width && evals < max_evals) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - kInvPhi * (b - a);
      fc = eval(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + kInvPhi * (b - a);
      fd = eval(d);
    }
    ++evals;
  }

  GssResult r;
  r.evals = evals;
  r.converged = b - a <= target_width;
  if (fc < fd) {
    r.argmin = c;
    r.min_value = fc;
  } else {
    r.argmin = d;
    r.min_value = fd;
  }
  return r;
}

/// Counts sign changes of the discrete slope of f over an n-point uniform
/// grid on [lo, hi]. Differences within a few ulps of the function values
/// count as flat. A unimodal function yields at most one change.
template <typename F>
  requires std::invocable<F&, double>
int slope_sign_changes(F&& f, double lo, double hi, int n) {
  if (n < 3) return 0;
  const double step = (hi - lo) / static_cast<double>(n - 1);
  double prev = f(lo);
  int last_sign = 0;
  int changes = 0;
  for (int k = 1; k < n; ++k) {
    const double x = k == n - 1 ? hi : lo + step * static_cast<double>(k);
    const double v = f(x);
    const double diff = v - prev;
    const double noise = 64.0 * 2.220446049250313e-16 *
                         std::fmax(std::fabs(v), std::fabs(prev));
    int sign = 0;
    if (diff > noise) sign = 1;
    if (diff < -noise) sign = -1;
    if (sign != 0) {
      if (last_sign != 0 && sign != last_sign) ++changes;
      last_sign = sign;
    }
    prev = v;
  }
  return changes;
}

}  // namespace fairenergy
