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

#ifndef FLORINET_SIMULATOR_HPP_
#define FLORINET_SIMULATOR_HPP_

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "florinet/task.hpp"
#include "florinet/trainers.hpp"

namespace florinet::sim {

enum class TrainerKind { kOnes, kZeros, kLogistic };

std::string to_string(TrainerKind k);
TrainerKind trainer_kind_from(const std::string& s);

struct SimConfig {
  std::size_t n_clients = 32;
  /// Reporting only: clients are labelled node-<i / clients_per_node>.
  std::size_t clients_per_node = 4;
  TaskSpec task;
  TrainerKind trainer = TrainerKind::kOnes;
  /// Model length for the ones and zeros trainers.
  std::size_t vector_len = 5;
  std::uint64_t seed = 1;
  /// Delay between successive client start-ups.
  std::optional<std::chrono::milliseconds> ramp;
  /// Each training call sleeps uniformly in [0, straggler_max) before
  /// returning, seeded per (client, round).
  std::chrono::milliseconds straggler_max{0};
  trainers::BlobConfig blobs;
  trainers::LogisticConfig logistic;
  /// Existing server; an in-process server on an ephemeral port when empty.
  std::string endpoint;
  std::string admin_key;
  std::string client_key;
  /// Gives up (and cancels the task) after this long.
  std::chrono::milliseconds timeout{600000};
  std::chrono::milliseconds client_poll{100};

  void validate() const;
};

struct RoundPoint {
  std::uint64_t round = 0;
  std::uint64_t model_version = 0;
  std::string status;
  double duration_ms = 0.0;
  std::uint64_t clients_reported = 0;
  std::optional<double> mean_loss;
  std::optional<double> accuracy;  // held-out, logistic trainer only
  std::optional<double> epsilon;
};

struct SimReport {
  std::string task_id;
  std::string lifecycle;
  std::string diagnostic;
  std::vector<RoundPoint> rounds;
  /// Mean of the last committed update: final minus previous model.
  ModelVector aggregate;
  /// aggregate times clients_reported in the last round.
  ModelVector aggregate_sum;
  double wall_ms = 0.0;
  double mean_round_ms = 0.0;
  std::optional<double> final_accuracy;
  bool diverged = false;
  std::uint64_t client_rounds_completed = 0;
  std::uint64_t client_rounds_failed = 0;
  ModelVector final_model;
  json metrics;

  json to_json() const;
};

/// Runs one task to completion with n simulated clients.
SimReport run_training(const SimConfig& sim);

struct DummyOptions {
  bool secagg = false;
  std::uint64_t vg_size = 8;
  double clip_range = 2.0;
  int bits = 16;
  std::uint64_t seed = 1;
  std::chrono::milliseconds timeout{120000};
  std::optional<std::chrono::milliseconds> ramp;
  std::string endpoint;
  std::string admin_key;
};

/// The all-ones task: n clients, one round, every client uploads ones.
SimReport run_dummy(std::size_t n, std::size_t vector_len = 5, const DummyOptions& opts = {});

struct SweepRow {
  std::size_t n = 0;
  std::optional<double> duration_ms;  // round duration as recorded by the server
  double wall_ms = 0.0;
  std::string error;
};

/// run_dummy for each n, continuing past failures.
std::vector<SweepRow> scaling_sweep(const std::vector<std::size_t>& ns, const DummyOptions& opts = {});

/// "n,duration_ms" header then one row per entry; failed runs leave the
/// duration empty.
std::string sweep_csv(const std::vector<SweepRow>& rows);

/// TaskSpec for the logistic task: 32 per round, 10 rounds, plain FedAvg.
TaskSpec training_task(std::size_t clients_per_round, std::uint64_t rounds);

/// Variance of a series (population form); 0 for fewer than two values.
double variance(const std::vector<double>& xs);

}  // namespace florinet::sim

#endif  // FLORINET_SIMULATOR_HPP_
