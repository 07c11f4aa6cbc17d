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

#ifndef FLORINET_AGGREGATION_HPP_
#define FLORINET_AGGREGATION_HPP_

#include <chrono>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "florinet/codec.hpp"
#include "florinet/privacy.hpp"

namespace florinet::aggregation {

struct InterimResult {
  std::uint32_t group_id = 0;
  std::size_t count = 0;
  ModelVector sum;
  double total_weight = 0.0;
};

/// First-stage accumulator for one virtual group.
///
/// Secure groups keep a running modular sum of masked payloads; the result is
/// only meaningful once every member has contributed. Plaintext groups keep
/// each weighted contribution and sum them in participant order at finalize,
/// so the float result does not depend on arrival order.
class VGAccumulator {
 public:
  static VGAccumulator secure(std::uint32_t group_id, std::size_t group_size,
                              Eigen::Index length, const QuantParams& params);
  static VGAccumulator plaintext(std::uint32_t group_id, std::size_t group_size,
                                 Eigen::Index length);

  /// Strong guarantee: on error the accumulator is unchanged.
  void accumulate(std::size_t participant_index, const Payload& payload, double weight = 1.0);

  std::uint32_t group_id() const { return group_id_; }
  std::size_t group_size() const { return received_.size(); }
  std::size_t received() const { return received_count_; }
  bool has(std::size_t participant_index) const { return received_.at(participant_index); }
  bool complete() const { return received_count_ == received_.size(); }
  bool is_secure() const { return secure_; }
  Eigen::Index length() const { return length_; }
  const QuantizedVector& modular_sum() const { return modular_sum_; }

 private:
  VGAccumulator() = default;

  bool secure_ = false;
  std::uint32_t group_id_ = 0;
  Eigen::Index length_ = 0;
  std::vector<bool> received_;
  std::size_t received_count_ = 0;
  QuantizedVector modular_sum_;
  std::vector<ModelVector> contributions_;
  std::vector<double> weights_;

  friend std::optional<InterimResult> finalize_vg(const VGAccumulator& acc);
};

/// nullopt means the group was discarded: an incomplete secure group (masks
/// cannot cancel) or a group with no contributions.
std::optional<InterimResult> finalize_vg(const VGAccumulator& acc);

enum class StrategyKind { kMean, kWeightedMean, kExternal };

std::string to_string(StrategyKind k);
StrategyKind strategy_kind_from(const std::string& s);

struct AggregationStrategy {
  StrategyKind kind = StrategyKind::kMean;
  /// argv of the external command; the manifest path is appended.
  std::vector<std::string> command;
  std::chrono::milliseconds timeout{60000};

  void validate() const;
  bool operator==(const AggregationStrategy&) const = default;
};

struct InterimTotals {
  ModelVector sum;
  std::size_t count = 0;
  double weight = 0.0;
};

InterimTotals sum_interims(std::span<const InterimResult> interims);

/// Context handed to external aggregators through the manifest.
struct RoundContext {
  std::string task_id;
  std::uint64_t round = 0;
};

/// Applies the strategy to produce the next global model. Clients upload
/// deltas, so the built-in strategies return current + averaged delta.
ModelVector master_aggregate(std::span<const InterimResult> interims,
                             const AggregationStrategy& strategy,
                             const Eigen::Ref<const ModelVector>& current_model,
                             const RoundContext& ctx = {});

ModelVector external_aggregate(const AggregationStrategy& strategy,
                               std::span<const InterimResult> interims,
                               const Eigen::Ref<const ModelVector>& current_model,
                               const RoundContext& ctx);

/// (sum + N(0, (mu C)^2 I)) / n_total.
ModelVector apply_global_dp(const Eigen::Ref<const ModelVector>& aggregate_sum, std::size_t n_total,
                            const privacy::DpConfig& dp, privacy::Rng& rng);

}  // namespace florinet::aggregation

#endif  // FLORINET_AGGREGATION_HPP_
