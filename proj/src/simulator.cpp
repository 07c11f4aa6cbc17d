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

#include "florinet/simulator.hpp"

#include <spdlog/spdlog.h>

#include <atomic>
#include <cmath>
#include <cstdio>
#include <memory>
#include <numeric>
#include <random>
#include <sstream>
#include <thread>

#include "florinet/admin_client.hpp"
#include "florinet/client.hpp"
#include "florinet/error.hpp"
#include "florinet/lifecycle.hpp"
#include "florinet/server.hpp"

namespace florinet::sim {
namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

std::string client_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "sim-%05zu", i);
  return buf;
}

std::string node_name(std::size_t i, std::size_t per_node) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "node-%03zu", i / std::max<std::size_t>(per_node, 1));
  return buf;
}

client::Trainer with_straggler(client::Trainer inner, std::chrono::milliseconds max_delay, std::uint64_t seed) {
  if (max_delay.count() <= 0) return inner;
  return [inner = std::move(inner), max_delay, seed](ByteView model, const client::TrainContext& ctx) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(std::hash<std::string>{}(ctx.client_id)),
                      static_cast<std::uint32_t>(ctx.round), 0x5717u};
    std::mt19937_64 rng(seq);
    std::uniform_int_distribution<std::int64_t> d(0, max_delay.count() - 1);
    std::this_thread::sleep_for(std::chrono::milliseconds(d(rng)));
    return inner(model, ctx);
  };
}

std::optional<double> opt_number(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_number()) return std::nullopt;
  return it->get<double>();
}

}  // namespace

std::string to_string(TrainerKind k) {
  switch (k) {
    case TrainerKind::kOnes: return "ones";
    case TrainerKind::kZeros: return "zeros";
    case TrainerKind::kLogistic: return "logistic";
  }
  return "unknown";
}

TrainerKind trainer_kind_from(const std::string& s) {
  if (s == "ones") return TrainerKind::kOnes;
  if (s == "zeros") return TrainerKind::kZeros;
  if (s == "logistic") return TrainerKind::kLogistic;
  throw Error("invalid_argument", "unknown trainer '" + s + "' (ones, zeros, logistic)");
}

void SimConfig::validate() const {
  if (n_clients < 1) throw Error("invalid_argument", "n_clients must be at least 1");
  if (trainer != TrainerKind::kLogistic && vector_len < 1) {
    throw Error("invalid_argument", "vector_len must be at least 1");
  }
  if (straggler_max.count() < 0) throw Error("invalid_argument", "straggler_max must be non-negative");
  task.validate();
}

json SimReport::to_json() const {
  json rs = json::array();
  for (const auto& r : rounds) {
    rs.push_back({{"round", r.round},
                  {"model_version", r.model_version},
                  {"status", r.status},
                  {"duration_ms", r.duration_ms},
                  {"clients_reported", r.clients_reported},
                  {"mean_loss", r.mean_loss ? json(*r.mean_loss) : json(nullptr)},
                  {"accuracy", r.accuracy ? json(*r.accuracy) : json(nullptr)},
                  {"epsilon", r.epsilon ? json(*r.epsilon) : json(nullptr)}});
  }
  auto vec = [](const ModelVector& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  return {{"task_id", task_id},
          {"lifecycle", lifecycle},
          {"diagnostic", diagnostic},
          {"rounds", rs},
          {"aggregate", vec(aggregate)},
          {"aggregate_sum", vec(aggregate_sum)},
          {"wall_ms", wall_ms},
          {"mean_round_ms", mean_round_ms},
          {"final_accuracy", final_accuracy ? json(*final_accuracy) : json(nullptr)},
          {"diverged", diverged},
          {"client_rounds_completed", client_rounds_completed},
          {"client_rounds_failed", client_rounds_failed}};
}

SimReport run_training(const SimConfig& sim) {
  sim.validate();
  const auto t0 = Clock::now();

  std::unique_ptr<Server> server;
  std::string endpoint = sim.endpoint;
  if (endpoint.empty()) {
    ServerConfig sc;
    sc.port = 0;
    sc.threads = sim.n_clients + 64;
    sc.admin_key = sim.admin_key;
    sc.client_key = sim.client_key;
    server = std::make_unique<Server>(std::move(sc));
    server->start();
    endpoint = server->base_url();
  }

  std::shared_ptr<const trainers::BlobDataset> data;
  client::Trainer base;
  std::size_t model_len = sim.vector_len;
  switch (sim.trainer) {
    case TrainerKind::kOnes: base = trainers::ones_trainer(); break;
    case TrainerKind::kZeros: base = trainers::zeros_trainer(); break;
    case TrainerKind::kLogistic:
      data = std::make_shared<const trainers::BlobDataset>(trainers::make_blobs(sim.blobs));
      base = trainers::logistic_trainer(data, sim.logistic, sim.seed);
      model_len = static_cast<std::size_t>(data->model_length());
      break;
  }

  TaskSpec spec = sim.task;
  if (!spec.seed) spec.seed = sim.seed;
  SimReport report;
  // Scoped so its kept-alive connection closes before the server stops.
  {
    AdminClient admin(endpoint, sim.admin_key);
    report.task_id = admin.create_task(spec, ModelVector::Zero(static_cast<Eigen::Index>(model_len)));
    spdlog::info("sim: task {} with {} clients ({} trainer)", report.task_id, sim.n_clients, to_string(sim.trainer));

    std::atomic<bool> stop{false};
    std::vector<client::RunReport> client_reports(sim.n_clients);
    std::vector<std::thread> clients;
    clients.reserve(sim.n_clients);
    const auto trainer = with_straggler(base, sim.straggler_max, sim.seed);
    for (std::size_t i = 0; i < sim.n_clients; ++i) {
      if (sim.ramp && i > 0) std::this_thread::sleep_for(*sim.ramp);
      clients.emplace_back([&, i] {
        client::ClientConfig cc;
        cc.endpoint = endpoint;
        cc.api_key = sim.client_key;
        cc.client_id = client_name(i);
        cc.metadata = {{"node", node_name(i, sim.clients_per_node)}};
        cc.poll_interval = sim.client_poll;
        cc.long_poll = std::chrono::milliseconds(2000);
        cc.backoff = {std::chrono::milliseconds(100), std::chrono::milliseconds(2000)};
        cc.seed = sim.seed * 1000003ULL + i;
        client::WorkflowDetails wf{spec.app_name, spec.workflow_name, trainer, nullptr};
        try {
          client::ClientRuntime runtime(std::move(cc));
          client_reports[i] = runtime.execute({wf}, stop);
        } catch (const std::exception& e) {
          spdlog::error("sim: client {} stopped: {}", i, e.what());
        }
      });
    }

    json view;
    const auto deadline = t0 + sim.timeout;
    while (true) {
      view = admin.task(report.task_id);
      if (is_terminal(lifecycle_from(view.at("lifecycle").get<std::string>()))) break;
      if (Clock::now() >= deadline) {
        spdlog::warn("sim: timed out after {} ms; cancelling {}", sim.timeout.count(), report.task_id);
        admin.control(report.task_id, "cancel");
        view = admin.task(report.task_id);
        report.diagnostic = "timeout";
        break;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
    report.wall_ms = ms_since(t0);
    stop = true;
    for (auto& t : clients) t.join();

    report.lifecycle = view.at("lifecycle").get<std::string>();
    if (report.diagnostic.empty()) report.diagnostic = view.value("diagnostic", "");
    for (const auto& r : client_reports) {
      report.client_rounds_completed += r.completed;
      report.client_rounds_failed += r.failed;
    }
    report.metrics = admin.metrics(report.task_id);

    double dur_sum = 0.0;
    std::size_t done = 0;
    std::uint64_t last_reported = 0;
    for (const auto& m : report.metrics.at("rounds")) {
      RoundPoint p;
      p.round = m.at("round").get<std::uint64_t>();
      p.status = m.at("status").get<std::string>();
      p.duration_ms = m.at("duration_ms").get<double>();
      p.clients_reported = m.at("clients_reported").get<std::uint64_t>();
      p.mean_loss = opt_number(m, "mean_loss");
      p.epsilon = opt_number(m, "epsilon");
      if (p.status == "completed") {
        p.model_version = m.at("model_version").get<std::uint64_t>();
        if (data) {
          p.accuracy = trainers::accuracy(admin.model(report.task_id, p.model_version), data->x_test, data->y_test);
        }
        dur_sum += p.duration_ms;
        ++done;
        last_reported = p.clients_reported;
      }
      report.rounds.push_back(std::move(p));
    }
    if (done) report.mean_round_ms = dur_sum / static_cast<double>(done);

    const auto version = view.at("model_version").get<std::uint64_t>();
    report.final_model = admin.model(report.task_id, version);
    if (version > 0) {
      report.aggregate = report.final_model - admin.model(report.task_id, version - 1);
      report.aggregate_sum = report.aggregate * static_cast<double>(last_reported);
    }
    if (data) {
      report.final_accuracy = trainers::accuracy(report.final_model, data->x_test, data->y_test);
      report.diverged = *report.final_accuracy < 0.55;
    }
  }
  if (server) server->stop();
  spdlog::info("sim: task {} {} after {:.0f} ms", report.task_id, report.lifecycle, report.wall_ms);
  return report;
}

SimReport run_dummy(std::size_t n, std::size_t vector_len, const DummyOptions& opts) {
  SimConfig sim;
  sim.n_clients = n;
  sim.trainer = TrainerKind::kOnes;
  sim.vector_len = vector_len;
  sim.seed = opts.seed;
  sim.ramp = opts.ramp;
  sim.endpoint = opts.endpoint;
  sim.admin_key = opts.admin_key;
  sim.timeout = opts.timeout;
  sim.client_poll = std::chrono::milliseconds(250);
  auto& t = sim.task;
  t.task_name = "dummy-" + std::to_string(n);
  t.app_name = "florinet-sim";
  t.workflow_name = "dummy";
  t.clients_per_round = n;
  t.total_rounds = 1;
  t.over_provision = 1.0;
  t.timeouts.registration = std::chrono::milliseconds(60000);
  t.timeouts.key_exchange = std::chrono::milliseconds(60000);
  t.timeouts.upload = std::chrono::milliseconds(120000);
  if (opts.secagg) {
    t.secagg.enabled = true;
    t.secagg.clip_range = opts.clip_range;
    t.secagg.bits = opts.bits;
    t.vg_size = opts.vg_size;
  } else {
    t.vg_size = std::max<std::uint64_t>(n, 1);
  }
  return run_training(sim);
}

std::vector<SweepRow> scaling_sweep(const std::vector<std::size_t>& ns, const DummyOptions& opts) {
  std::vector<SweepRow> rows;
  for (auto n : ns) {
    SweepRow row;
    row.n = n;
    const auto t0 = Clock::now();
    try {
      const auto r = run_dummy(n, 5, opts);
      if (r.lifecycle != "completed") {
        row.error = r.lifecycle + (r.diagnostic.empty() ? "" : ": " + r.diagnostic);
      } else if (!r.rounds.empty()) {
        row.duration_ms = r.rounds.back().duration_ms;
      }
    } catch (const std::exception& e) {
      row.error = e.what();
    }
    row.wall_ms = ms_since(t0);
    if (!row.error.empty()) spdlog::warn("sweep: n={} failed: {}", n, row.error);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out << "n,duration_ms\n";
  for (const auto& r : rows) {
    out << r.n << ',';
    if (r.duration_ms) out << *r.duration_ms;
    out << '\n';
  }
  return out.str();
}

TaskSpec training_task(std::size_t clients_per_round, std::uint64_t rounds) {
  TaskSpec t;
  t.task_name = "synthetic-logistic";
  t.app_name = "florinet-sim";
  t.workflow_name = "blobs";
  t.clients_per_round = clients_per_round;
  t.total_rounds = rounds;
  t.over_provision = 1.0;
  t.vg_size = std::max<std::uint64_t>(clients_per_round, 1);
  t.timeouts.registration = std::chrono::milliseconds(60000);
  t.timeouts.key_exchange = std::chrono::milliseconds(30000);
  t.timeouts.upload = std::chrono::milliseconds(120000);
  return t;
}

double variance(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
  double s = 0.0;
  for (double x : xs) s += (x - mean) * (x - mean);
  return s / static_cast<double>(xs.size());
}

}  // namespace florinet::sim
