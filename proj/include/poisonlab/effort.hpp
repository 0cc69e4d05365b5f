#pragma once

#include <string>
#include <vector>

#include "poisonlab/observation.hpp"

namespace poisonlab {

/// Which part of the observation is poisoned. The declaration order is the
/// hybrid tie-break order.
enum class Aim { rewards, actions, states, hybrid };

std::string to_string(Aim aim);
Aim parse_aim(const std::string& text);

/// Effort U between two observations on the aim's component, with N the
/// total number of steps:
///   rewards                   ||r - r'||_2 / sqrt(N)
///   states, continuous acts   sum_t ||x_t - x'_t||_2 / sqrt(N)
///   discrete actions          (number of flipped actions) / N
double total_effort(Aim aim, const Observation& clean, const Observation& poisoned);

/// Largest number of flips allowed at power eps over n steps.
std::size_t max_flips(double eps, std::size_t n);

/// Nearest point (for rewards, states and continuous actions) or best-gain
/// subset (discrete actions) inside the eps effort ball around `clean`.
/// `flip_gains`, one per step, ranks the flips to keep; without it earlier
/// flips win.
Observation project_onto_power(Aim aim, const Observation& clean, const Observation& candidate,
                               double eps, const std::vector<double>* flip_gains = nullptr);

/// Euclidean projection of a non-negative vector onto {x >= 0, sum x <= radius}.
Vector project_l1_nonnegative(const Vector& v, double radius);

}  // namespace poisonlab
