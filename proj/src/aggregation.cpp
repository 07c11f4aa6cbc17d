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

#include "florinet/aggregation.hpp"

#include <unistd.h>

#include <json.hpp>

#include "florinet/fileio.hpp"
#include "florinet/secagg.hpp"
#include "florinet/subprocess.hpp"

namespace florinet::aggregation {

using nlohmann::json;

VGAccumulator VGAccumulator::secure(std::uint32_t group_id, std::size_t group_size,
                                    Eigen::Index length, const QuantParams& params) {
  params.validate();
  if (group_size == 0 || group_size > params.group_max) {
    throw Error("invalid_argument", "group size must lie in [1, group_max]");
  }
  VGAccumulator acc;
  acc.secure_ = true;
  acc.group_id_ = group_id;
  acc.length_ = length;
  acc.received_.assign(group_size, false);
  acc.modular_sum_ = QuantizedVector{ModularVector::Zero(length), params};
  return acc;
}

VGAccumulator VGAccumulator::plaintext(std::uint32_t group_id, std::size_t group_size,
                                       Eigen::Index length) {
  if (group_size == 0) throw Error("invalid_argument", "empty group");
  VGAccumulator acc;
  acc.group_id_ = group_id;
  acc.length_ = length;
  acc.received_.assign(group_size, false);
  acc.contributions_.resize(group_size);
  acc.weights_.assign(group_size, 0.0);
  return acc;
}

void VGAccumulator::accumulate(std::size_t participant_index, const Payload& payload,
                               double weight) {
  if (participant_index >= received_.size()) {
    throw Error("protocol_error", "participant index outside the group");
  }
  if (received_[participant_index]) throw Error("duplicate", "already contributed");
  if (secure_) {
    const auto* q = std::get_if<QuantizedVector>(&payload);
    if (q == nullptr) throw Error("protocol_error", "secure group expects a quantized payload");
    if (!(q->params == modular_sum_.params)) {
      throw Error("protocol_error", "quantization parameters do not match the group");
    }
    if (q->size() != length_) throw Error("protocol_error", "payload length mismatch");
    secagg::add_assign_mod(modular_sum_.values, q->values, modular_sum_.params);
  } else {
    const auto* v = std::get_if<ModelVector>(&payload);
    if (v == nullptr) throw Error("protocol_error", "plaintext group expects a float payload");
    if (v->size() != length_) throw Error("protocol_error", "payload length mismatch");
    if (!(weight > 0.0) || !std::isfinite(weight)) {
      throw Error("protocol_error", "contribution weight must be positive");
    }
    contributions_[participant_index] = *v * weight;
    weights_[participant_index] = weight;
  }
  received_[participant_index] = true;
  ++received_count_;
}

std::optional<InterimResult> finalize_vg(const VGAccumulator& acc) {
  if (acc.received_count_ == 0) return std::nullopt;
  InterimResult out;
  out.group_id = acc.group_id_;
  if (acc.secure_) {
    if (!acc.complete()) return std::nullopt;
    out.count = acc.group_size();
    out.sum = dequantize_mean(acc.modular_sum_, out.count) * static_cast<double>(out.count);
    out.total_weight = static_cast<double>(out.count);
    return out;
  }
  out.count = acc.received_count_;
  out.sum = ModelVector::Zero(acc.length_);
  for (std::size_t i = 0; i < acc.received_.size(); ++i) {
    if (!acc.received_[i]) continue;
    out.sum += acc.contributions_[i];
    out.total_weight += acc.weights_[i];
  }
  return out;
}

std::string to_string(StrategyKind k) {
  switch (k) {
    case StrategyKind::kMean: return "mean";
    case StrategyKind::kWeightedMean: return "weighted_mean";
    case StrategyKind::kExternal: return "external";
  }
  return "mean";
}

StrategyKind strategy_kind_from(const std::string& s) {
  if (s == "mean") return StrategyKind::kMean;
  if (s == "weighted_mean") return StrategyKind::kWeightedMean;
  if (s == "external") return StrategyKind::kExternal;
  throw Error("invalid_spec", "strategy.kind must be mean, weighted_mean or external");
}

void AggregationStrategy::validate() const {
  if (kind != StrategyKind::kExternal) return;
  if (command.empty()) throw Error("invalid_spec", "external strategy requires a command");
  if (timeout.count() <= 0) throw Error("invalid_spec", "external strategy timeout must be positive");
  const std::filesystem::path exe(command.front());
  if (exe.has_parent_path() && ::access(exe.c_str(), X_OK) != 0) {
    throw Error("invalid_spec", "external aggregator is not executable: " + command.front());
  }
}

InterimTotals sum_interims(std::span<const InterimResult> interims) {
  if (interims.empty()) throw Error("no_interims", "no interim results to aggregate");
  InterimTotals t{ModelVector::Zero(interims.front().sum.size()), 0, 0.0};
  for (const auto& g : interims) {
    if (g.sum.size() != t.sum.size()) throw Error("length_mismatch", "interim lengths differ");
    t.sum += g.sum;
    t.count += g.count;
    t.weight += g.total_weight;
  }
  return t;
}

ModelVector master_aggregate(std::span<const InterimResult> interims,
                             const AggregationStrategy& strategy,
                             const Eigen::Ref<const ModelVector>& current_model,
                             const RoundContext& ctx) {
  if (strategy.kind == StrategyKind::kExternal) {
    return external_aggregate(strategy, interims, current_model, ctx);
  }
  const InterimTotals t = sum_interims(interims);
  if (t.sum.size() != current_model.size()) {
    throw Error("length_mismatch", "aggregate length differs from the model");
  }
  if (strategy.kind == StrategyKind::kMean) {
    if (t.count == 0) throw Error("zero_weight", "no contributors");
    return current_model + t.sum / static_cast<double>(t.count);
  }
  if (!(t.weight > 0.0)) throw Error("zero_weight", "total weight is zero");
  return current_model + t.sum / t.weight;
}

ModelVector external_aggregate(const AggregationStrategy& strategy,
                               std::span<const InterimResult> interims,
                               const Eigen::Ref<const ModelVector>& current_model,
                               const RoundContext& ctx) {
  if (strategy.kind != StrategyKind::kExternal || strategy.command.empty()) {
    throw Error("invalid_spec", "strategy is not external");
  }
  TempDir dir("florinet-agg");
  const auto model_path = dir.path() / "model.bin";
  const auto output_path = dir.path() / "output.bin";
  write_file(model_path, encode_payload(ModelVector(current_model)));

  json manifest{{"task_id", ctx.task_id},
                {"round", ctx.round},
                {"model_path", model_path.string()},
                {"output_path", output_path.string()},
                {"interims", json::array()}};
  for (std::size_t i = 0; i < interims.size(); ++i) {
    const auto p = dir.path() / ("interim_" + std::to_string(i) + ".bin");
    write_file(p, encode_payload(interims[i].sum));
    manifest["interims"].push_back(
        {{"path", p.string()}, {"count", interims[i].count}, {"weight", interims[i].total_weight}});
  }
  const auto manifest_path = dir.path() / "manifest.json";
  write_text(manifest_path, manifest.dump(2));

  std::vector<std::string> argv = strategy.command;
  argv.push_back(manifest_path.string());
  const ProcessResult r = run_process(argv, dir.path(), strategy.timeout);
  if (r.timed_out) throw Error("aggregator_timeout", "external aggregator timed out");
  if (r.exit_code != 0) {
    throw Error("aggregator_failed", "external aggregator exited with code " +
                                         std::to_string(r.exit_code) + ": " + r.stderr_text);
  }
  if (!std::filesystem::exists(output_path)) {
    throw Error("aggregator_output", "external aggregator wrote no output");
  }
  ModelVector out;
  try {
    out = decode_model(read_file(output_path));
  } catch (const Error& e) {
    throw Error("aggregator_output", std::string("malformed aggregator output: ") + e.what());
  }
  if (out.size() != current_model.size()) {
    throw Error("aggregator_output", "aggregator output length differs from the model");
  }
  return out;
}

ModelVector apply_global_dp(const Eigen::Ref<const ModelVector>& aggregate_sum, std::size_t n_total,
                            const privacy::DpConfig& dp, privacy::Rng& rng) {
  if (dp.mode != privacy::DpMode::kGlobal) throw Error("invalid_argument", "dp mode is not global");
  if (n_total == 0) throw Error("empty_aggregate", "empty aggregate");
  return privacy::add_gaussian_noise(aggregate_sum, dp.noise_std(), rng) /
         static_cast<double>(n_total);
}

}  // namespace florinet::aggregation
