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

#ifndef FLORINET_ORCHESTRATOR_HPP_
#define FLORINET_ORCHESTRATOR_HPP_

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "florinet/attestation.hpp"
#include "florinet/crypto.hpp"
#include "florinet/lifecycle.hpp"
#include "florinet/store.hpp"
#include "florinet/task.hpp"
#include "florinet/ticket.hpp"

namespace florinet {

enum class RoundPhase { kSelecting, kKeyExchange, kCollecting, kAggregating };
std::string to_string(RoundPhase p);

/// What a polling client should do next.
enum class Instruction { kWait, kProceed, kNotSelected, kRegroup, kSubmitted, kDone, kAbort, kStale };
std::string to_string(Instruction i);

/// Milliseconds since the epoch. Injectable so tests can drive deadlines.
using Clock = std::function<std::int64_t()>;
std::int64_t system_clock_ms();

struct OrchestratorConfig {
  Clock clock = system_clock_ms;
  /// HMAC key for tickets; random per process when absent.
  std::optional<crypto::Key32> ticket_key;
  VerifierRegistry verifiers = default_verifiers();
  /// Persistence; an in-memory store when null.
  std::shared_ptr<KeyValueStore> store;
  /// Task id source; random "t<16 hex>" ids when null.
  std::function<std::string()> id_source;
};

struct Offer {
  std::string task_id;
  std::uint64_t round = 0;
};

/// Uniform sample of k distinct indices from [0, n): the first k entries of
/// a Fisher-Yates shuffle driven by mt19937_64 seeded with
/// seed_seq{lo32(seed), hi32(seed), lo32(round), hi32(round), attempt}.
/// Bounded draws use rejection so every index is equally likely.
std::vector<std::size_t> select_cohort(std::size_t n, std::size_t k, std::uint64_t seed,
                                       std::uint64_t round, std::uint32_t attempt);

/// Splits a cohort of `cohort` into virtual groups of size g. The last group
/// may be smaller but never a singleton; a singleton remainder is dropped.
std::vector<std::size_t> partition_sizes(std::size_t cohort, std::size_t g);

/// Task registry and per-task round state machine.
///
/// Every operation on one task runs under that task's lock, so mutations of a
/// task are serialized while different tasks proceed in parallel. Deadlines
/// are measured on a task-local active clock that stands still while the task
/// is paused. Only lifecycle, counters, model versions, the accountant and the
/// metrics ledger are persisted; an in-flight round restarts from Selecting
/// after restore.
class Orchestrator {
 public:
  explicit Orchestrator(OrchestratorConfig config = {});
  ~Orchestrator();
  Orchestrator(const Orchestrator&) = delete;
  Orchestrator& operator=(const Orchestrator&) = delete;

  std::string create_task(const TaskSpec& spec, ByteView initial_model);

  std::vector<Offer> advertise(const ClientInfo& client);
  /// Returns the ticket token.
  std::string register_client(const std::string& task_id, const ClientInfo& client,
                              const crypto::Key32& public_key);
  /// Long-polls up to `wait` until the configuration is ready.
  json round_config(const std::string& task_id, const std::string& ticket,
                    std::chrono::milliseconds wait = {});
  void submit_update(const std::string& task_id, const std::string& ticket, ByteView payload,
                     const ClientMetrics& metrics);
  /// Long-polls up to `wait` until the instruction differs from `wait_while`
  /// (or, when absent, from the instruction at call time).
  json status(const std::string& task_id, const std::string& ticket,
              std::chrono::milliseconds wait = {},
              std::optional<Instruction> wait_while = std::nullopt);
  Bytes model(const std::string& task_id, std::uint64_t version) const;

  Lifecycle control(const std::string& task_id, LifecycleEvent action);
  /// Enforces deadlines and starts created tasks.
  void tick();

  json list_tasks() const;
  json task_view(const std::string& task_id) const;
  json metrics(const std::string& task_id) const;
  json privacy_report(const std::string& task_id) const;
  std::vector<std::string> task_ids() const;

  /// Blocks until the task has changed since `seen` or `wait` elapses;
  /// returns the current change counter.
  std::uint64_t wait_for_change(const std::string& task_id, std::uint64_t seen,
                                std::chrono::milliseconds wait) const;

  /// Wakes every long-poll and makes later waits return immediately.
  void shutdown();

  /// Writes every task's persisted state into dest, including model blobs.
  void snapshot(KeyValueStore& dest) const;
  /// Loads all tasks from the configured store. Tasks whose records do not
  /// parse are registered as Failed with a corrupt_state diagnostic.
  void restore();

  struct Task;

 private:
  std::shared_ptr<Task> find(const std::string& task_id) const;
  std::shared_ptr<Task> find_by_ticket(const std::string& task_id, const std::string& ticket,
                                       TicketClaims& claims) const;

  OrchestratorConfig config_;
  crypto::Key32 ticket_key_{};
  std::atomic<bool> stopping_{false};
  mutable std::shared_mutex registry_mu_;
  std::map<std::string, std::shared_ptr<Task>> tasks_;
};

}  // namespace florinet

#endif  // FLORINET_ORCHESTRATOR_HPP_
