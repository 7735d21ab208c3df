#pragma once

#include <span>
#include <string>

namespace dustk {

// Rounds to `decimals` places with ties away from zero, after snapping away
// binary representation error (74.205 is treated as a tie, not 74.2049...).
double round_half_up(double value, int decimals);

// Arithmetic mean of exactly six benchmark scores in [0, 100], rounded to two
// decimals half-up.
double h6_average(std::span<const double> scores);

// Two-decimal rendering used in reports ("74.20").
std::string format_score(double value);

}  // namespace dustk
