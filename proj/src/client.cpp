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

#include "florinet/client.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <random>
#include <thread>

#include "florinet/crypto.hpp"
#include "florinet/error.hpp"

namespace florinet::client {
namespace {

std::int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

bool is_transient(const Error& e) {
  if (e.code() == "network" || e.code() == "internal") return true;
  if (auto* api = dynamic_cast<const ApiError*>(&e)) return api->status() >= 500;
  return false;
}

privacy::Rng make_rng(const std::optional<std::uint64_t>& seed, const std::string& client_id) {
  if (seed) {
    std::seed_seq seq(client_id.begin(), client_id.end());
    std::vector<std::uint32_t> s(2);
    seq.generate(s.begin(), s.end());
    std::seed_seq mixed{static_cast<std::uint32_t>(*seed), static_cast<std::uint32_t>(*seed >> 32), s[0], s[1]};
    return privacy::Rng(mixed);
  }
  std::random_device rd;
  std::seed_seq seq{rd(), rd(), rd(), rd()};
  return privacy::Rng(seq);
}

}  // namespace

std::string to_string(RoundOutcome o) {
  switch (o) {
    case RoundOutcome::kCompleted: return "completed";
    case RoundOutcome::kNotSelected: return "not_selected";
    case RoundOutcome::kRejected: return "rejected";
    case RoundOutcome::kRegroup: return "regroup";
    case RoundOutcome::kLate: return "late";
    case RoundOutcome::kAborted: return "aborted";
    case RoundOutcome::kTrainerFailed: return "trainer_failed";
  }
  return "unknown";
}

std::chrono::milliseconds Backoff::delay(unsigned attempt) const {
  auto d = base;
  for (unsigned i = 0; i < attempt && d < cap; ++i) d *= 2;
  return std::min(d, cap);
}

UploadPlan plan_from(const json& cfg) {
  UploadPlan p;
  p.task_id = cfg.at("task_id").get<std::string>();
  p.round = cfg.at("round").get<std::uint64_t>();
  const auto& dp = cfg.at("dp");
  p.dp.mode = privacy::dp_mode_from(dp.at("mode").get<std::string>());
  p.dp.clip_norm = dp.at("clip_norm").get<double>();
  p.dp.noise_multiplier = dp.at("noise_multiplier").get<double>();
  const auto& sa = cfg.at("secagg");
  p.secagg = sa.at("enabled").get<bool>();
  if (p.secagg) {
    p.params = QuantParams{sa.at("clip_range").get<double>(), sa.at("bits").get<int>(),
                           sa.at("group_max").get<std::uint32_t>()};
    p.participant_index = cfg.at("participant_index").get<std::uint64_t>();
    for (const auto& r : cfg.at("roster")) {
      p.roster.members.push_back(
          {r.at("participant_index").get<std::uint64_t>(), "",
           crypto::key_from(crypto::from_base64(r.at("public_key_b64").get<std::string>()))});
    }
  }
  return p;
}

Bytes prepare_upload(const ModelVector& delta, const UploadPlan& plan, const secagg::KeyPair& keys,
                     privacy::Rng& rng, ModelVector* clipped) {
  require_finite(delta);
  ModelVector x = delta;
  if (plan.dp.mode != privacy::DpMode::kOff) x = privacy::clip(x, plan.dp.clip_norm);
  if (clipped) *clipped = x;
  if (plan.dp.mode == privacy::DpMode::kLocal) {
    x = privacy::add_gaussian_noise(x, plan.dp.noise_std(), rng);
  }
  if (!plan.secagg) return encode_payload(x);
  const auto seeds = secagg::derive_group_seeds(keys, plan.participant_index, plan.roster, plan.task_id,
                                                static_cast<std::uint32_t>(plan.round));
  const auto masked = secagg::apply_masks(quantize(x, plan.params), plan.participant_index,
                                          plan.roster.members.size(), seeds);
  return encode_payload(masked);
}

Proximal fedprox_penalty(const ModelVector& w, const ModelVector& w_global, double mu) {
  if (w.size() != w_global.size()) throw Error("length_mismatch", "fedprox: vectors differ in length");
  const ModelVector diff = w - w_global;
  return {0.5 * mu * diff.squaredNorm(), mu * diff};
}

ClientRuntime::ClientRuntime(ClientConfig config)
    : config_(std::move(config)),
      api_(config_.endpoint, config_.api_key,
           std::max(std::chrono::milliseconds(60000), config_.long_poll + std::chrono::milliseconds(30000))),
      rng_(make_rng(config_.seed, config_.client_id)) {
  if (config_.client_id.empty()) throw Error("invalid_argument", "client_id must be non-empty");
}

bool ClientRuntime::sleep_for(std::chrono::milliseconds d, const std::atomic<bool>& stop) const {
  const auto until = std::chrono::steady_clock::now() + d;
  while (!stop.load()) {
    const auto now = std::chrono::steady_clock::now();
    if (now >= until) return true;
    std::this_thread::sleep_for(std::min<std::chrono::steady_clock::duration>(until - now,
                                                                               std::chrono::milliseconds(50)));
  }
  return false;
}

template <typename Fn>
auto ClientRuntime::with_retry(const Fn& fn, const std::atomic<bool>& stop) -> decltype(fn()) {
  for (unsigned attempt = 0;; ++attempt) {
    try {
      return fn();
    } catch (const Error& e) {
      if (!is_transient(e) || stop.load()) throw;
      const auto d = config_.backoff.delay(attempt);
      spdlog::debug("{}: {} ({}); retrying in {} ms", config_.client_id, e.code(), e.what(), d.count());
      if (!sleep_for(d, stop)) throw;
    }
  }
}

ClientInfo ClientRuntime::info_for(const WorkflowDetails& wf) const {
  ClientInfo c;
  c.client_id = config_.client_id;
  c.app_name = wf.app_name;
  c.workflow_name = wf.workflow_name;
  c.metadata = config_.metadata;
  if (config_.attestation) c.attestation = config_.attestation();
  return c;
}

RoundResult ClientRuntime::run_round(const WorkflowDetails& wf, const Offer& offer,
                                     const std::atomic<bool>& stop) {
  RoundResult result;
  const auto keys = secagg::generate_keypair();
  result.public_key_b64 = crypto::to_base64(keys.public_key);
  const std::string base = "/v1/tasks/" + offer.task_id;
  const auto wait_q = "&wait_ms=" + std::to_string(config_.long_poll.count());
  auto finish = [&](RoundOutcome o, std::string detail) {
    result.outcome = o;
    result.detail = std::move(detail);
    return result;
  };

  std::string ticket;
  try {
    const auto r = with_retry([&] {
      return api_.post_json(base + "/register",
                            {{"client_info", info_for(wf)}, {"public_key_b64", result.public_key_b64}});
    }, stop);
    ticket = url_encode(r.at("ticket").get<std::string>());
  } catch (const Error& e) {
    return finish(RoundOutcome::kRejected, e.code());
  }

  json cfg;
  try {
    while (true) {
      cfg = with_retry([&] { return api_.get_json(base + "/round-config?ticket=" + ticket + wait_q); }, stop);
      if (cfg.at("ready").get<bool>()) break;
      if (stop.load()) return finish(RoundOutcome::kAborted, "stopped");
    }
  } catch (const Error& e) {
    if (e.code() == "not_selected") return finish(RoundOutcome::kNotSelected, e.code());
    if (e.code() == "regroup") return finish(RoundOutcome::kRegroup, e.code());
    return finish(RoundOutcome::kAborted, e.code());
  }

  const auto model_path = cfg.at("model_path").get<std::string>();
  const auto model_key = offer.task_id + "@" + std::to_string(cfg.at("model_version").get<std::uint64_t>());
  try {
    if (model_key != cached_model_key_) {
      cached_model_ = with_retry([&] { return api_.get_bytes(model_path); }, stop);
      cached_model_key_ = model_key;
    }
  } catch (const Error& e) {
    return finish(RoundOutcome::kAborted, e.code());
  }

  TrainContext ctx{offer.task_id, config_.client_id, cfg.at("round").get<std::uint64_t>(),
                   cfg.at("model_version").get<std::uint64_t>(), cfg.value("evaluate", false)};
  TrainResult trained;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    trained = wf.trainer(cached_model_, ctx);
    const auto expected = cfg.at("model_length").get<std::size_t>();
    if (trained.delta.size() != expected) {
      throw Error("length_mismatch", "trainer returned " + std::to_string(trained.delta.size()) +
                                         " values for a model of " + std::to_string(expected));
    }
  } catch (const std::exception& e) {
    spdlog::warn("{}: trainer failed: {}", config_.client_id, e.what());
    return finish(RoundOutcome::kTrainerFailed, e.what());
  }
  const double duration_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();

  const auto& upload_deadline = cfg.at("deadlines").at("upload_ms");
  if (!upload_deadline.is_null() && now_ms() > upload_deadline.get<std::int64_t>()) {
    return finish(RoundOutcome::kLate, "local deadline passed");
  }

  Bytes payload;
  try {
    const ModelVector delta = Eigen::Map<const ModelVector>(trained.delta.data(),
                                                            static_cast<Eigen::Index>(trained.delta.size()));
    payload = prepare_upload(delta, plan_from(cfg), keys, rng_);
  } catch (const Error& e) {
    return finish(RoundOutcome::kTrainerFailed, e.code());
  }

  ClientMetrics metrics;
  metrics.loss = trained.loss;
  metrics.eval = trained.eval;
  metrics.duration_ms = duration_ms;
  metrics.num_samples = trained.num_samples;
  const auto metrics_header = crypto::to_base64(view_of(json(metrics).dump()));
  try {
    with_retry([&] {
      return api_.post_bytes(base + "/update?ticket=" + ticket, payload,
                             {{"X-Florinet-Metrics", metrics_header}});
    }, stop);
  } catch (const Error& e) {
    if (e.code() == "late") return finish(RoundOutcome::kLate, e.code());
    if (e.code() == "regroup") return finish(RoundOutcome::kRegroup, e.code());
    if (e.code() != "duplicate") return finish(RoundOutcome::kAborted, e.code());
  }
  if (cfg.at("mode") == "async") return finish(RoundOutcome::kCompleted, "buffered");

  try {
    while (true) {
      const auto st = with_retry([&] {
        return api_.get_json(base + "/status?ticket=" + ticket + wait_q + "&wait_while=submitted");
      }, stop);
      const auto instr = st.at("instruction").get<std::string>();
      if (instr == "done") return finish(RoundOutcome::kCompleted, instr);
      if (instr == "regroup") return finish(RoundOutcome::kRegroup, instr);
      if (instr == "abort" || instr == "stale" || instr == "not_selected") {
        return finish(RoundOutcome::kAborted, instr);
      }
      if (stop.load()) return finish(RoundOutcome::kAborted, "stopped");
    }
  } catch (const Error& e) {
    return finish(RoundOutcome::kAborted, e.code());
  }
}

RunReport ClientRuntime::execute_one(const WorkflowDetails& wf, const std::atomic<bool>& stop) {
  RunReport report;
  std::uint64_t idle = 0;
  while (!stop.load()) {
    if (config_.max_rounds && report.attempted >= *config_.max_rounds) break;
    std::vector<Offer> offers;
    try {
      const auto r = with_retry([&] { return api_.post_json("/v1/advertise", {{"client_info", info_for(wf)}}); },
                                stop);
      for (const auto& o : r.at("offers")) {
        offers.push_back({o.at("task_id").get<std::string>(), o.at("round").get<std::uint64_t>()});
      }
    } catch (const Error& e) {
      if (stop.load()) break;
      spdlog::warn("{}: advertise failed: {}: {}", config_.client_id, e.code(), e.what());
    }
    if (offers.empty()) {
      ++report.idle_polls;
      if (config_.max_idle_polls && ++idle >= *config_.max_idle_polls) break;
      sleep_for(config_.poll_interval, stop);
      continue;
    }
    idle = 0;
    const auto& offer = offers.front();
    if (wf.selector && !wf.selector(offer)) {
      spdlog::info("{}: selector declined task {} round {}", config_.client_id, offer.task_id, offer.round);
      ++report.skipped;
      sleep_for(config_.poll_interval, stop);
      continue;
    }
    ++report.attempted;
    auto r = run_round(wf, offer, stop);
    switch (r.outcome) {
      case RoundOutcome::kCompleted: ++report.completed; break;
      case RoundOutcome::kRejected:
      case RoundOutcome::kNotSelected: ++report.rejected; break;
      default: ++report.failed; break;
    }
    spdlog::debug("{}: round {} of {}: {} ({})", config_.client_id, offer.round, offer.task_id,
                  to_string(r.outcome), r.detail);
    const bool back_off = r.outcome == RoundOutcome::kRejected || r.outcome == RoundOutcome::kNotSelected;
    report.rounds.push_back(std::move(r));
    if (back_off) sleep_for(config_.poll_interval, stop);
  }
  return report;
}

RunReport ClientRuntime::execute(const std::vector<WorkflowDetails>& workflows,
                                 const std::atomic<bool>& stop) {
  if (workflows.empty()) throw Error("invalid_argument", "at least one workflow is required");
  if (workflows.size() == 1) return execute_one(workflows.front(), stop);
  std::vector<RunReport> reports(workflows.size());
  std::vector<std::thread> threads;
  for (std::size_t i = 0; i < workflows.size(); ++i) {
    threads.emplace_back([&, i] {
      ClientRuntime worker(config_);
      reports[i] = worker.execute_one(workflows[i], stop);
    });
  }
  for (auto& t : threads) t.join();
  RunReport total;
  for (auto& r : reports) {
    total.attempted += r.attempted;
    total.completed += r.completed;
    total.rejected += r.rejected;
    total.failed += r.failed;
    total.skipped += r.skipped;
    total.idle_polls += r.idle_polls;
    for (auto& x : r.rounds) total.rounds.push_back(std::move(x));
  }
  return total;
}

}  // namespace florinet::client
