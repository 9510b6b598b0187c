#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "forge/error.hpp"

namespace forge {

// DDPM variance schedule. Index t - 1 holds step t.
struct NoiseSchedule {
  std::vector<double> beta;
  std::vector<double> alpha;      // 1 - beta
  std::vector<double> alpha_bar;  // running product of alpha

  int steps() const { return static_cast<int>(beta.size()); }

  void validate() const {
    if (beta.empty()) throw InvalidArgument("NoiseSchedule: empty");
    for (std::size_t i = 0; i < beta.size(); ++i) {
      if (!(beta[i] > 0.0 && beta[i] < 1.0)) throw InvalidArgument("NoiseSchedule: beta outside (0, 1)");
      if (i > 0 && !(alpha_bar[i] < alpha_bar[i - 1])) throw InvalidArgument("NoiseSchedule: alpha_bar not decreasing");
    }
  }
};

// Linear beta schedule from beta_start (t = 1) to beta_end (t = T).
inline NoiseSchedule make_schedule(int steps, double beta_start = 1e-4, double beta_end = 2e-2) {
  if (steps < 1) throw InvalidArgument("make_schedule: need at least one step");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0))
    throw InvalidArgument("make_schedule: need 0 < beta_start <= beta_end < 1");
  NoiseSchedule s;
  s.beta.resize(steps);
  s.alpha.resize(steps);
  s.alpha_bar.resize(steps);
  double prod = 1.0;
  for (int i = 0; i < steps; ++i) {
    s.beta[i] = steps == 1 ? beta_start : beta_start + (beta_end - beta_start) * i / (steps - 1);
    s.alpha[i] = 1.0 - s.beta[i];
    prod *= s.alpha[i];
    s.alpha_bar[i] = prod;
  }
  return s;
}

// Closed-form q(x_t | x_0): sqrt(abar_t) x0 + sqrt(1 - abar_t) noise.
inline std::vector<double> forward_sample(std::span<const double> x0, int t, std::span<const double> noise,
                                          const NoiseSchedule& sched) {
  if (t < 1 || t > sched.steps()) throw InvalidArgument("forward_sample: step out of range");
  if (noise.size() != x0.size()) throw InvalidArgument("forward_sample: noise shape differs from x0");
  const double a = std::sqrt(sched.alpha_bar[t - 1]);
  const double b = std::sqrt(1.0 - sched.alpha_bar[t - 1]);
  std::vector<double> out(x0.size());
  for (std::size_t i = 0; i < x0.size(); ++i) out[i] = a * x0[i] + b * noise[i];
  return out;
}

}  // namespace forge
