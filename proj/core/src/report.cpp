#include "dustk/report.hpp"

#include <cmath>
#include <cstdio>

#include "dustk/errors.hpp"

namespace dustk {

double round_half_up(double value, int decimals) {
  const double scale = std::pow(10.0, decimals);
  // Snap to 1e-6 of a unit in the last kept place before rounding.
  const double scaled = std::round(value * scale * 1e6) / 1e6;
  const double rounded = scaled >= 0 ? std::floor(scaled + 0.5) : -std::floor(-scaled + 0.5);
  return rounded / scale;
}

double h6_average(std::span<const double> scores) {
  if (scores.size() != 6) {
    throw ValidationError("H6 needs exactly six scores, got " + std::to_string(scores.size()));
  }
  double sum = 0.0;
  for (double s : scores) {
    if (!(s >= 0.0 && s <= 100.0)) throw ValidationError("score outside [0, 100]");
    sum += s;
  }
  return round_half_up(sum / 6.0, 2);
}

std::string format_score(double value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", value);
  return buf;
}

}  // namespace dustk
