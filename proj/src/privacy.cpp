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

#include "florinet/privacy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace florinet::privacy {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

// log(exp(a) - exp(b)), a >= b.
double log_sub(double a, double b) {
  if (b == kNegInf) return a;
  if (a <= b) return kNegInf;
  return a + std::log1p(-std::exp(b - a));
}

double log_erfc(double x) {
  const double e = std::erfc(x);
  if (e > 0.0) return std::log(e);
  // Asymptotic expansion for large positive x where erfc underflows.
  const double x2 = x * x;
  return -x2 - std::log(x) - 0.5 * std::log(std::numbers::pi) +
         std::log1p(-1.0 / (2 * x2) + 3.0 / (4 * x2 * x2) - 15.0 / (8 * x2 * x2 * x2));
}

double log_binomial(double n, double k) {
  return std::lgamma(n + 1) - std::lgamma(k + 1) - std::lgamma(n - k + 1);
}

double log_a_integer(double q, double sigma, int alpha) {
  double acc = kNegInf;
  const double log_q = std::log(q);
  const double log_1mq = std::log1p(-q);
  for (int k = 0; k <= alpha; ++k) {
    const double tail = alpha - k;
    double term = log_binomial(alpha, k) + static_cast<double>(k) * (k - 1) / (2 * sigma * sigma);
    if (k > 0) term += k * log_q;
    if (tail > 0) term += tail * log_1mq;
    acc = log_add(acc, term);
  }
  return acc;
}

double log_a_fractional(double q, double sigma, double alpha) {
  double log_a0 = kNegInf;
  double log_a1 = kNegInf;
  const double z0 = sigma * sigma * std::log(1.0 / q - 1.0) + 0.5;
  const double log_q = std::log(q);
  const double log_1mq = std::log1p(-q);
  double coef = 1.0;  // generalised binomial C(alpha, i), updated incrementally
  for (int i = 0;; ++i) {
    if (i > 0) coef *= (alpha - (i - 1)) / i;
    const double log_coef = std::log(std::abs(coef));
    const double j = alpha - i;
    const double log_t0 = log_coef + i * log_q + j * log_1mq;
    const double log_t1 = log_coef + j * log_q + i * log_1mq;
    const double log_e0 = std::log(0.5) + log_erfc((i - z0) / (std::numbers::sqrt2 * sigma));
    const double log_e1 = std::log(0.5) + log_erfc((z0 - j) / (std::numbers::sqrt2 * sigma));
    const double log_s0 = log_t0 + (static_cast<double>(i) * i - i) / (2 * sigma * sigma) + log_e0;
    const double log_s1 = log_t1 + (j * j - j) / (2 * sigma * sigma) + log_e1;
    if (coef > 0) {
      log_a0 = log_add(log_a0, log_s0);
      log_a1 = log_add(log_a1, log_s1);
    } else {
      log_a0 = log_sub(log_a0, log_s0);
      log_a1 = log_sub(log_a1, log_s1);
    }
    if (std::max(log_s0, log_s1) < -30 || i > 10000) break;
  }
  return log_add(log_a0, log_a1);
}

}  // namespace

std::string to_string(DpMode m) {
  switch (m) {
    case DpMode::kOff: return "off";
    case DpMode::kLocal: return "local";
    case DpMode::kGlobal: return "global";
  }
  return "off";
}

DpMode dp_mode_from(const std::string& s) {
  if (s == "off") return DpMode::kOff;
  if (s == "local") return DpMode::kLocal;
  if (s == "global") return DpMode::kGlobal;
  throw Error("invalid_spec", "dp.mode must be off, local or global");
}

void DpConfig::validate() const {
  if (mode == DpMode::kOff) return;
  if (!(clip_norm > 0.0) || !std::isfinite(clip_norm)) {
    throw Error("invalid_spec", "dp.clip_norm must be positive");
  }
  if (!(noise_multiplier >= 0.0) || !std::isfinite(noise_multiplier)) {
    throw Error("invalid_spec", "dp.noise_multiplier must be non-negative");
  }
  if (!(delta > 0.0 && delta < 1.0)) throw Error("invalid_spec", "dp.delta must lie in (0, 1)");
  if (population && *population == 0) throw Error("invalid_spec", "dp.population must be positive");
}

ModelVector add_gaussian_noise(const Eigen::Ref<const ModelVector>& v, double stddev, Rng& rng) {
  if (!(stddev >= 0.0)) throw Error("invalid_argument", "noise std must be non-negative");
  if (stddev == 0.0) return v;
  std::normal_distribution<double> normal(0.0, stddev);
  ModelVector out = v;
  for (Eigen::Index i = 0; i < out.size(); ++i) out(i) += normal(rng);
  return out;
}

ModelVector privatize_update(const Eigen::Ref<const ModelVector>& delta, const DpConfig& dp,
                             Rng& rng) {
  if (dp.mode == DpMode::kOff) return delta;
  ModelVector clipped = clip(delta, dp.clip_norm);
  if (dp.mode == DpMode::kLocal) return add_gaussian_noise(clipped, dp.noise_std(), rng);
  return clipped;
}

double rdp_subsampled_gaussian(double q, double sigma, double alpha) {
  if (!(alpha > 1.0)) throw Error("invalid_argument", "RDP order must exceed 1");
  if (!(q >= 0.0 && q <= 1.0)) throw Error("invalid_argument", "sampling rate must lie in [0, 1]");
  if (q == 0.0) return 0.0;
  if (!(sigma > 0.0)) return std::numeric_limits<double>::infinity();
  if (q == 1.0) return alpha / (2 * sigma * sigma);
  const double rounded = std::round(alpha);
  const double log_a = rounded == alpha ? log_a_integer(q, sigma, static_cast<int>(rounded))
                                        : log_a_fractional(q, sigma, alpha);
  return std::max(0.0, log_a / (alpha - 1));
}

std::vector<double> default_alpha_grid() {
  std::vector<double> grid;
  for (int a = 2; a <= 64; ++a) grid.push_back(a);
  for (double a = 1.5; a <= 9.5; a += 1.0) grid.push_back(a);
  std::sort(grid.begin(), grid.end());
  return grid;
}

EpsilonResult epsilon(const AccountantState& state, double delta) {
  if (state.alphas.empty()) throw Error("empty_grid", "alpha grid is empty");
  if (!(delta > 0.0 && delta < 1.0)) throw Error("invalid_argument", "delta must lie in (0, 1)");
  EpsilonResult best{std::numeric_limits<double>::infinity(), state.alphas.front()};
  const double log_inv_delta = std::log(1.0 / delta);
  for (double alpha : state.alphas) {
    const double rdp = state.steps == 0 ? 0.0
                                        : static_cast<double>(state.steps) *
                                              rdp_subsampled_gaussian(state.sampling_rate,
                                                                      state.sigma, alpha);
    const double eps = rdp + log_inv_delta / (alpha - 1);
    if (eps < best.epsilon) best = {eps, alpha};
  }
  return best;
}

}  // namespace florinet::privacy
