/*
 * Copyright 2026 The Florinet Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef FLORINET_PRIVACY_HPP_
#define FLORINET_PRIVACY_HPP_

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "florinet/codec.hpp"

namespace florinet::privacy {

using Rng = std::mt19937_64;

enum class DpMode { kOff, kLocal, kGlobal };

std::string to_string(DpMode m);
DpMode dp_mode_from(const std::string& s);

struct DpConfig {
  DpMode mode = DpMode::kOff;
  double clip_norm = 1.0;         // C
  double noise_multiplier = 0.0;  // mu; noise std is mu * C
  double delta = 1e-5;
  /// Size of the population sampled from each step; absent means q = 1.
  std::optional<std::uint64_t> population;

  double noise_std() const { return noise_multiplier * clip_norm; }
  void validate() const;
  bool operator==(const DpConfig&) const = default;
};

/// Scales v onto the l2 ball of radius C when it lies outside.
template <typename Derived>
ModelVector clip(const Eigen::MatrixBase<Derived>& v, double clip_norm) {
  if (!(clip_norm > 0.0)) throw Error("invalid_argument", "clip norm must be positive");
  require_finite(v);
  const double norm = v.norm();
  if (norm <= clip_norm) return v;
  return v * (clip_norm / norm);
}

ModelVector add_gaussian_noise(const Eigen::Ref<const ModelVector>& v, double stddev, Rng& rng);

/// Client-side treatment before upload: clip in either DP placement, add
/// N(0, (mu C)^2) only for local DP.
ModelVector privatize_update(const Eigen::Ref<const ModelVector>& delta, const DpConfig& dp,
                             Rng& rng);

/// RDP of the Poisson-subsampled Gaussian mechanism at order alpha > 1.
/// Integer orders use the exact binomial expansion; fractional orders use the
/// two-sided erfc series. Both are evaluated in log space.
double rdp_subsampled_gaussian(double q, double sigma, double alpha);

/// Integers 2..64 and halves 1.5..9.5.
std::vector<double> default_alpha_grid();

struct AccountantState {
  std::uint64_t steps = 0;
  double sampling_rate = 1.0;  // q
  double sigma = 0.0;          // noise multiplier
  std::vector<double> alphas = default_alpha_grid();

  void step(std::uint64_t n = 1) { steps += n; }
};

struct EpsilonResult {
  double epsilon = 0.0;
  double alpha = 0.0;
};

/// min over the grid of T * rdp(alpha) + ln(1/delta) / (alpha - 1).
EpsilonResult epsilon(const AccountantState& state, double delta);

}  // namespace florinet::privacy

#endif  // FLORINET_PRIVACY_HPP_
