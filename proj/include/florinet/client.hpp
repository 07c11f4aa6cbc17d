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

#ifndef FLORINET_CLIENT_HPP_
#define FLORINET_CLIENT_HPP_

#include <atomic>
#include <chrono>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "florinet/codec.hpp"
#include "florinet/http_client.hpp"
#include "florinet/privacy.hpp"
#include "florinet/secagg.hpp"
#include "florinet/task.hpp"

namespace florinet::client {

struct Offer {
  std::string task_id;
  std::uint64_t round = 0;
};

struct TrainContext {
  std::string task_id;
  std::string client_id;
  std::uint64_t round = 0;
  std::uint64_t model_version = 0;
  bool evaluate = false;
};

/// What a trainer hands back: the pseudo-gradient (trained minus received
/// model) plus optional metrics.
struct TrainResult {
  std::vector<double> delta;
  std::optional<double> loss;
  std::map<std::string, double> eval;
  double num_samples = 1.0;
};

using Trainer = std::function<TrainResult(ByteView model_payload, const TrainContext& ctx)>;
using Selector = std::function<bool(const Offer& offer)>;

struct WorkflowDetails {
  std::string app_name;
  std::string workflow_name;
  Trainer trainer;
  Selector selector;  // null admits every offer
};

struct Backoff {
  std::chrono::milliseconds base{1000};
  std::chrono::milliseconds cap{60000};

  /// base * 2^attempt, capped.
  std::chrono::milliseconds delay(unsigned attempt) const;
};

struct ClientConfig {
  std::string endpoint;
  std::string api_key;
  std::string client_id;
  std::map<std::string, std::string> metadata;
  std::chrono::milliseconds poll_interval{2000};
  /// wait_ms sent on round-config and status long-polls.
  std::chrono::milliseconds long_poll{10000};
  std::function<std::string()> attestation;
  Backoff backoff;
  /// Seeds the local DP noise; random when absent.
  std::optional<std::uint64_t> seed;
  /// execute() returns after this many consecutive empty advertise polls.
  std::optional<std::uint64_t> max_idle_polls;
  /// execute() returns after this many attempted rounds.
  std::optional<std::uint64_t> max_rounds;
};

enum class RoundOutcome {
  kCompleted,      // update aggregated (sync) or accepted into the buffer (async)
  kNotSelected,
  kRejected,       // registration refused
  kRegroup,        // virtual group dissolved
  kLate,
  kAborted,        // round abandoned by the server or the task ended
  kTrainerFailed,
};

std::string to_string(RoundOutcome o);

struct RoundResult {
  RoundOutcome outcome = RoundOutcome::kAborted;
  std::string detail;
  std::string public_key_b64;
};

struct RunReport {
  std::uint64_t attempted = 0;
  std::uint64_t completed = 0;
  std::uint64_t rejected = 0;
  std::uint64_t failed = 0;
  std::uint64_t skipped = 0;
  std::uint64_t idle_polls = 0;
  std::vector<RoundResult> rounds;
};

/// Everything the client needs from round-config to build its upload.
struct UploadPlan {
  std::string task_id;
  std::uint64_t round = 0;
  privacy::DpConfig dp;
  bool secagg = false;
  QuantParams params;
  std::uint64_t participant_index = 0;
  secagg::GroupRoster roster;
};

/// Clip (DP on), add local noise (local DP), then quantize and mask
/// (secagg). `clipped` receives the pre-noise vector when non-null.
Bytes prepare_upload(const ModelVector& delta, const UploadPlan& plan, const secagg::KeyPair& keys,
                     privacy::Rng& rng, ModelVector* clipped = nullptr);

UploadPlan plan_from(const json& round_config);

/// Device-side protocol loop.
class ClientRuntime {
 public:
  explicit ClientRuntime(ClientConfig config);

  /// Polls for offers and runs rounds until `stop` is set or a configured
  /// limit is reached. Several workflows run on their own threads.
  RunReport execute(const std::vector<WorkflowDetails>& workflows, const std::atomic<bool>& stop);

  /// One full round for an offer: register with a fresh keypair, wait for
  /// the roster, train, privatize, upload, and wait for the outcome.
  RoundResult run_round(const WorkflowDetails& wf, const Offer& offer, const std::atomic<bool>& stop);

  const ClientConfig& config() const { return config_; }

 private:
  RunReport execute_one(const WorkflowDetails& wf, const std::atomic<bool>& stop);
  ClientInfo info_for(const WorkflowDetails& wf) const;
  template <typename Fn>
  auto with_retry(const Fn& fn, const std::atomic<bool>& stop) -> decltype(fn());
  bool sleep_for(std::chrono::milliseconds d, const std::atomic<bool>& stop) const;

  ClientConfig config_;
  ApiClient api_;
  privacy::Rng rng_;
  std::string cached_model_key_;
  Bytes cached_model_;
};

struct Proximal {
  double value = 0.0;
  ModelVector gradient;
};

/// (mu/2) * ||w - w_global||^2 and its gradient mu * (w - w_global).
Proximal fedprox_penalty(const ModelVector& w, const ModelVector& w_global, double mu);

}  // namespace florinet::client

#endif  // FLORINET_CLIENT_HPP_
