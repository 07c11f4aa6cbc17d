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

#include "florinet/orchestrator.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <condition_variable>
#include <limits>
#include <mutex>
#include <random>
#include <set>
#include <sstream>
#include <type_traits>

#include "florinet/aggregation.hpp"
#include "florinet/error.hpp"
#include "florinet/privacy.hpp"
#include "florinet/secagg.hpp"

namespace florinet {

using aggregation::InterimResult;
using aggregation::VGAccumulator;

std::string to_string(RoundPhase p) {
  switch (p) {
    case RoundPhase::kSelecting: return "selecting";
    case RoundPhase::kKeyExchange: return "key_exchange";
    case RoundPhase::kCollecting: return "collecting";
    case RoundPhase::kAggregating: return "aggregating";
  }
  return "unknown";
}

std::string to_string(Instruction i) {
  switch (i) {
    case Instruction::kWait: return "wait";
    case Instruction::kProceed: return "proceed";
    case Instruction::kNotSelected: return "not_selected";
    case Instruction::kRegroup: return "regroup";
    case Instruction::kSubmitted: return "submitted";
    case Instruction::kDone: return "done";
    case Instruction::kAbort: return "abort";
    case Instruction::kStale: return "stale";
  }
  return "unknown";
}

std::int64_t system_clock_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

namespace {

std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t n) {
  const std::uint64_t threshold = (0 - n) % n;
  while (true) {
    const std::uint64_t r = rng();
    if (r >= threshold) return r % n;
  }
}

}  // namespace

std::vector<std::size_t> select_cohort(std::size_t n, std::size_t k, std::uint64_t seed,
                                       std::uint64_t round, std::uint32_t attempt) {
  if (k > n) throw Error("invalid_argument", "cohort larger than pool");
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(round), static_cast<std::uint32_t>(round >> 32),
                    attempt};
  std::mt19937_64 rng(seq);
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = 0; i < k; ++i) {
    const auto j = i + uniform_below(rng, n - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  return idx;
}

std::vector<std::size_t> partition_sizes(std::size_t cohort, std::size_t g) {
  if (g == 0) throw Error("invalid_argument", "group size must be positive");
  std::vector<std::size_t> sizes(cohort / g, g);
  if (cohort % g >= 2) sizes.push_back(cohort % g);
  return sizes;
}

namespace {

enum class PStatus { kPool, kNotSelected, kSelected, kRegroup, kSubmitted, kFlushed, kExpired };

struct Participant {
  std::string client_id;
  crypto::Key32 public_key{};
  std::int64_t expiry = 0;
  PStatus status = PStatus::kPool;
  int group = -1;
  std::uint32_t index = 0;
  bool confirmed = false;
  std::uint64_t base_version = 0;
  std::optional<ClientMetrics> metrics;
};

enum class GState { kKeyExchange, kCollecting, kFinalized };

struct Group {
  std::uint32_t id = 0;
  std::vector<std::uint64_t> slots;
  GState state = GState::kKeyExchange;
  std::int64_t kx_deadline = 0;
  std::int64_t upload_deadline = 0;
  std::optional<VGAccumulator> acc;
  std::optional<InterimResult> interim;
  bool dissolved = false;
  bool discarded = false;
};

struct Buffered {
  std::uint64_t slot = 0;
  ModelVector delta;
  double samples = 1.0;
  std::uint64_t base_version = 0;
};

struct RoundRuntime {
  std::int64_t start_wall = 0;
  std::int64_t registration_deadline = 0;
  std::vector<Participant> participants;
  std::map<std::string, std::uint64_t> open_by_client;
  bool selected = false;
  std::vector<Group> groups;
  std::vector<Buffered> buffer;
  std::uint64_t expired_since_flush = 0;
};

std::string task_key(const std::string& id, const std::string& leaf) {
  return "tasks/" + id + "/" + leaf;
}

std::string model_key(const std::string& id, std::uint64_t version) {
  return task_key(id, "models/v" + std::to_string(version) + ".bin");
}

json roster_json(const std::vector<Participant>& ps, const Group& g) {
  json roster = json::array();
  for (auto slot : g.slots) {
    const auto& p = ps[slot];
    roster.push_back({{"participant_index", p.index},
                      {"public_key_b64", crypto::to_base64(p.public_key)}});
  }
  return roster;
}

template <typename Fn>
void with_error_context(const std::string& prefix, Fn fn) {
  try {
    fn();
  } catch (const Error& e) {
    throw Error(e.code(), prefix + e.what(), e.retryable());
  }
}

}  // namespace

struct Orchestrator::Task {
  mutable std::mutex mu;
  mutable std::condition_variable cv;
  std::uint64_t changes = 0;

  const OrchestratorConfig* cfg = nullptr;
  const std::atomic<bool>* stopping = nullptr;
  std::string id;
  TaskSpec spec;
  bool spec_corrupt = false;
  Lifecycle lifecycle = Lifecycle::kCreated;
  RoundPhase phase = RoundPhase::kSelecting;
  std::uint64_t round = 0;
  std::uint32_t attempt = 0;
  std::uint64_t model_version = 0;
  ModelVector model;
  std::uint64_t selection_seed = 0;
  privacy::AccountantState accountant;
  std::vector<json> metrics;
  std::map<std::uint64_t, std::uint32_t> completed_attempt;
  std::string diagnostic;
  std::int64_t created_ms = 0;
  std::int64_t paused_total_ms = 0;
  std::optional<std::int64_t> paused_at_ms;
  std::vector<json> transitions;
  RoundRuntime rt;

  KeyValueStore& store() const { return *cfg->store; }
  std::int64_t wall() const { return cfg->clock(); }
  std::int64_t active_now() const {
    const auto w = wall();
    return w - paused_total_ms - (paused_at_ms ? w - *paused_at_ms : 0);
  }
  std::int64_t to_wall(std::int64_t active) const { return active + (wall() - active_now()); }
  bool is_async() const { return spec.mode == TaskMode::kAsync; }

  void bump() {
    ++changes;
    cv.notify_all();
  }

  // ---- persistence --------------------------------------------------------

  json state_json() const {
    return json{{"task_id", id},
                {"lifecycle", to_string(lifecycle)},
                {"round", round},
                {"attempt", attempt},
                {"model_version", model_version},
                {"selection_seed", selection_seed},
                {"accountant",
                 {{"steps", accountant.steps},
                  {"sampling_rate", accountant.sampling_rate},
                  {"sigma", accountant.sigma}}},
                {"diagnostic", diagnostic},
                {"created_ms", created_ms},
                {"paused_total_ms", paused_total_ms},
                {"paused_at_ms", paused_at_ms ? json(*paused_at_ms) : json(nullptr)},
                {"transitions", transitions}};
  }

  std::string spec_text() const { return json(spec).dump(2) + "\n"; }
  std::string state_text() const { return state_json().dump(2) + "\n"; }
  std::string metrics_text() const {
    std::string out;
    for (const auto& m : metrics) out += m.dump() + "\n";
    return out;
  }

  void persist_state() { store().put(task_key(id, "state.json"), view_of(state_text())); }
  void persist_metrics() { store().put(task_key(id, "metrics.jsonl"), view_of(metrics_text())); }
  void persist_all() {
    if (!spec_corrupt) store().put(task_key(id, "spec.json"), view_of(spec_text()));
    persist_state();
    persist_metrics();
  }

  // ---- lifecycle ----------------------------------------------------------

  void move(LifecycleEvent e) {
    const auto to = transition(lifecycle, e);
    const auto w = wall();
    if (e == LifecycleEvent::kPause) paused_at_ms = w;
    if (lifecycle == Lifecycle::kPaused && paused_at_ms) {
      paused_total_ms += w - *paused_at_ms;
      paused_at_ms.reset();
    }
    transitions.push_back(
        {{"from", to_string(lifecycle)}, {"to", to_string(to)}, {"event", to_string(e)}, {"at_ms", w}});
    lifecycle = to;
  }

  void fail(const std::string& why) {
    if (is_terminal(lifecycle)) return;
    if (lifecycle == Lifecycle::kPaused) move(LifecycleEvent::kResume);
    move(LifecycleEvent::kFail);
    diagnostic = why;
    persist_state();
    bump();
  }

  void begin_attempt() {
    rt = RoundRuntime{};
    rt.start_wall = wall();
    rt.registration_deadline = active_now() + spec.timeouts.registration.count();
    phase = is_async() ? RoundPhase::kCollecting : RoundPhase::kSelecting;
    bump();
  }

  // ---- selection ----------------------------------------------------------

  std::vector<std::uint64_t> pool_slots() const {
    std::vector<std::uint64_t> out;
    for (std::uint64_t s = 0; s < rt.participants.size(); ++s) {
      if (rt.participants[s].status == PStatus::kPool) out.push_back(s);
    }
    return out;
  }

  std::uint64_t in_flight() const {
    std::uint64_t n = 0;
    for (const auto& p : rt.participants) n += p.status == PStatus::kSelected;
    return n;
  }

  void select() {
    auto pool = pool_slots();
    std::sort(pool.begin(), pool.end(), [&](auto a, auto b) {
      return rt.participants[a].client_id < rt.participants[b].client_id;
    });
    const auto cohort_size = static_cast<std::size_t>(spec.clients_per_round);
    const auto picked = select_cohort(pool.size(), cohort_size, selection_seed, round, attempt);
    std::vector<std::uint64_t> cohort;
    for (auto i : picked) cohort.push_back(pool[i]);
    for (auto s : pool) rt.participants[s].status = PStatus::kNotSelected;

    const auto sizes = spec.secagg.enabled
                           ? partition_sizes(cohort.size(), spec.vg_size)
                           : std::vector<std::size_t>{cohort.size()};
    const auto now = active_now();
    const auto length = model.size();
    std::size_t next = 0;
    for (std::size_t gi = 0; gi < sizes.size(); ++gi) {
      Group g;
      g.id = static_cast<std::uint32_t>(gi);
      for (std::size_t i = 0; i < sizes[gi]; ++i) {
        const auto slot = cohort[next++];
        auto& p = rt.participants[slot];
        p.status = PStatus::kSelected;
        p.group = static_cast<int>(gi);
        p.index = static_cast<std::uint32_t>(i);
        g.slots.push_back(slot);
      }
      if (spec.secagg.enabled) {
        g.state = GState::kKeyExchange;
        g.kx_deadline = now + spec.timeouts.key_exchange.count();
        g.acc = VGAccumulator::secure(g.id, sizes[gi], length, spec.quant_params());
      } else {
        g.state = GState::kCollecting;
        g.upload_deadline = now + spec.timeouts.upload.count();
        g.acc = VGAccumulator::plaintext(g.id, sizes[gi], length);
      }
      rt.groups.push_back(std::move(g));
    }
    rt.selected = true;
    bump();
  }

  // ---- round progression --------------------------------------------------

  void finalize(Group& g) {
    g.interim = aggregation::finalize_vg(*g.acc);
    g.discarded = !g.interim.has_value();
    g.state = GState::kFinalized;
    bump();
  }

  void dissolve(Group& g) {
    for (auto s : g.slots) rt.participants[s].status = PStatus::kRegroup;
    g.dissolved = true;
    g.discarded = true;
    g.state = GState::kFinalized;
    bump();
  }

  void refresh_phase() {
    if (is_async()) {
      phase = RoundPhase::kCollecting;
      return;
    }
    if (!rt.selected) {
      phase = RoundPhase::kSelecting;
      return;
    }
    bool kx = false, collecting = false;
    for (const auto& g : rt.groups) {
      kx |= g.state == GState::kKeyExchange;
      collecting |= g.state == GState::kCollecting;
    }
    phase = kx ? RoundPhase::kKeyExchange
               : (collecting ? RoundPhase::kCollecting : RoundPhase::kAggregating);
  }

  void advance() {
    if (lifecycle == Lifecycle::kCreated) {
      move(LifecycleEvent::kStart);
      begin_attempt();
      persist_state();
    }
    if (lifecycle != Lifecycle::kRunning) return;
    const auto now = active_now();
    if (is_async()) {
      for (auto& p : rt.participants) {
        if (p.status == PStatus::kSelected && p.expiry <= now) {
          p.status = PStatus::kExpired;
          ++rt.expired_since_flush;
        }
      }
      return;
    }
    if (!rt.selected) {
      if (now < rt.registration_deadline) return;
      if (pool_slots().size() >= spec.clients_per_round) {
        select();
      } else {
        rt.registration_deadline = now + spec.timeouts.registration.count();
        return;
      }
    }
    for (auto& g : rt.groups) {
      if (g.state == GState::kKeyExchange) {
        const bool all = std::all_of(g.slots.begin(), g.slots.end(),
                                     [&](auto s) { return rt.participants[s].confirmed; });
        if (all) {
          g.state = GState::kCollecting;
          g.upload_deadline = now + spec.timeouts.upload.count();
          bump();
        } else if (now >= g.kx_deadline) {
          dissolve(g);
        }
      }
      if (g.state == GState::kCollecting && (g.acc->complete() || now >= g.upload_deadline)) {
        finalize(g);
      }
    }
    refresh_phase();
    const bool all_final = std::all_of(rt.groups.begin(), rt.groups.end(),
                                       [](const Group& g) { return g.state == GState::kFinalized; });
    if (all_final) aggregate_round();
  }

  // ---- aggregation --------------------------------------------------------

  privacy::Rng dp_rng() const {
    std::seed_seq seq{static_cast<std::uint32_t>(selection_seed),
                      static_cast<std::uint32_t>(selection_seed >> 32),
                      static_cast<std::uint32_t>(round), attempt, 0x6470u};
    return privacy::Rng(seq);
  }

  ModelVector compute(const std::vector<InterimResult>& interims) {
    if (spec.dp.mode == privacy::DpMode::kGlobal) {
      const auto totals = aggregation::sum_interims(interims);
      auto rng = dp_rng();
      return model + aggregation::apply_global_dp(totals.sum, totals.count, spec.dp, rng);
    }
    return aggregation::master_aggregate(interims, spec.strategy, model, {id, round});
  }

  static void client_means(json& entry, const std::vector<const ClientMetrics*>& ms) {
    double loss_sum = 0.0, dur_sum = 0.0;
    std::size_t loss_n = 0;
    std::map<std::string, std::pair<double, std::size_t>> eval;
    for (const auto* m : ms) {
      if (m->loss) {
        loss_sum += *m->loss;
        ++loss_n;
      }
      dur_sum += m->duration_ms;
      for (const auto& [k, v] : m->eval) {
        eval[k].first += v;
        ++eval[k].second;
      }
    }
    entry["mean_loss"] = loss_n ? json(loss_sum / static_cast<double>(loss_n)) : json(nullptr);
    entry["mean_client_duration_ms"] =
        ms.empty() ? json(nullptr) : json(dur_sum / static_cast<double>(ms.size()));
    json e = json::object();
    for (const auto& [k, acc] : eval) e[k] = acc.first / static_cast<double>(acc.second);
    entry["eval"] = e;
  }

  json base_entry(const std::string& status) const {
    const auto end = wall();
    return json{{"round", round},
                {"attempt", attempt},
                {"status", status},
                {"start_ms", rt.start_wall},
                {"end_ms", end},
                {"duration_ms", end - rt.start_wall}};
  }

  void aggregate_round() {
    phase = RoundPhase::kAggregating;
    std::vector<InterimResult> interims;
    std::size_t cohort = 0, reported = 0, discarded = 0;
    std::vector<const ClientMetrics*> ms;
    for (const auto& g : rt.groups) {
      cohort += g.slots.size();
      discarded += g.discarded;
      if (g.interim) interims.push_back(*g.interim);
      for (auto s : g.slots) {
        const auto& p = rt.participants[s];
        if (p.status == PStatus::kSubmitted) {
          ++reported;
          ms.push_back(&*p.metrics);
        }
      }
    }
    auto entry = base_entry(interims.empty() ? "failed" : "completed");
    entry["clients_selected"] = cohort;
    entry["clients_reported"] = reported;
    entry["clients_dropped"] = cohort - reported;
    entry["groups"] = rt.groups.size();
    entry["groups_discarded"] = discarded;
    client_means(entry, ms);

    if (interims.empty()) {
      entry["model_version"] = model_version;
      entry["epsilon"] = nullptr;
      metrics.push_back(entry);
      persist_metrics();
      ++attempt;
      if (attempt > spec.retry_limit) {
        fail("round " + std::to_string(round) + " failed " + std::to_string(attempt) +
             " attempts: every virtual group was discarded");
        return;
      }
      persist_state();
      begin_attempt();
      return;
    }
    commit(interims, std::move(entry));
  }

  void commit(const std::vector<InterimResult>& interims, json entry) {
    ModelVector next;
    try {
      next = compute(interims);
      require_finite(next);
    } catch (const Error& e) {
      fail("aggregation failed in round " + std::to_string(round) + ": " + e.code() + ": " +
           e.what());
      return;
    } catch (const std::exception& e) {
      fail("aggregation failed in round " + std::to_string(round) + ": " + e.what());
      return;
    }
    if (spec.dp.mode != privacy::DpMode::kOff) {
      accountant.sigma = spec.dp.noise_multiplier;
      accountant.sampling_rate =
          spec.dp.population ? std::min(1.0, static_cast<double>(spec.clients_per_round) /
                                                 static_cast<double>(*spec.dp.population))
                             : 1.0;
      accountant.step();
    }
    model = std::move(next);
    ++model_version;
    store().put(model_key(id, model_version), encode_payload(model));
    entry["model_version"] = model_version;
    entry["epsilon"] = epsilon_json();
    metrics.push_back(std::move(entry));
    completed_attempt[round] = attempt;
    ++round;
    attempt = 0;
    persist_metrics();
    if (round >= spec.total_rounds) {
      move(LifecycleEvent::kComplete);
      persist_state();
      bump();
      return;
    }
    persist_state();
    if (is_async()) {
      rt.start_wall = wall();
      rt.expired_since_flush = 0;
      bump();
    } else {
      begin_attempt();
    }
  }

  json epsilon_json() const {
    if (spec.dp.mode == privacy::DpMode::kOff || accountant.steps == 0) return nullptr;
    const auto eps = privacy::epsilon(accountant, spec.dp.delta).epsilon;
    return std::isfinite(eps) ? json(eps) : json(nullptr);
  }

  void flush_async() {
    const auto k = static_cast<std::size_t>(spec.async_buffer_size);
    std::vector<InterimResult> interims;
    std::vector<const ClientMetrics*> ms;
    double staleness_sum = 0.0;
    const bool weighted = spec.strategy.kind == aggregation::StrategyKind::kWeightedMean;
    for (std::size_t i = 0; i < k; ++i) {
      const auto& b = rt.buffer[i];
      const auto stale = static_cast<double>(model_version - b.base_version);
      staleness_sum += stale;
      const double w = spec.staleness_discount ? 1.0 / (1.0 + stale) : 1.0;
      InterimResult r;
      r.group_id = static_cast<std::uint32_t>(i);
      r.count = 1;
      r.total_weight = b.samples;
      r.sum = b.delta * (w * (weighted ? b.samples : 1.0));
      interims.push_back(std::move(r));
      auto& p = rt.participants[b.slot];
      p.status = PStatus::kFlushed;
      ms.push_back(&*p.metrics);
    }
    auto entry = base_entry("completed");
    entry["clients_selected"] = k;
    entry["clients_reported"] = k;
    entry["clients_dropped"] = rt.expired_since_flush;
    entry["groups"] = 0;
    entry["groups_discarded"] = 0;
    entry["mean_staleness"] = staleness_sum / static_cast<double>(k);
    client_means(entry, ms);
    rt.buffer.erase(rt.buffer.begin(), rt.buffer.begin() + static_cast<std::ptrdiff_t>(k));
    commit(interims, std::move(entry));
  }

  // ---- client-facing views ------------------------------------------------

  Instruction instruction_for(const TicketClaims& c) const {
    if (!is_async() && (c.round != round || c.attempt != attempt)) {
      auto it = completed_attempt.find(c.round);
      if (it != completed_attempt.end()) return it->second == c.attempt ? Instruction::kDone
                                                                        : Instruction::kStale;
      return is_terminal(lifecycle) ? Instruction::kAbort : Instruction::kStale;
    }
    if (c.slot >= rt.participants.size()) return Instruction::kStale;
    const auto& p = rt.participants[c.slot];
    if (is_terminal(lifecycle)) {
      return p.status == PStatus::kFlushed ? Instruction::kDone : Instruction::kAbort;
    }
    switch (p.status) {
      case PStatus::kPool: return Instruction::kWait;
      case PStatus::kNotSelected: return Instruction::kNotSelected;
      case PStatus::kSelected: return Instruction::kProceed;
      case PStatus::kRegroup: return Instruction::kRegroup;
      case PStatus::kSubmitted: return Instruction::kSubmitted;
      case PStatus::kFlushed: return Instruction::kDone;
      case PStatus::kExpired: return Instruction::kAbort;
    }
    return Instruction::kWait;
  }

  /// Resolves a ticket to its live participant or throws.
  Participant& participant(const TicketClaims& c) {
    if (!is_async() && (c.round != round || c.attempt != attempt)) {
      throw Error("stale_ticket", "ticket belongs to round " + std::to_string(c.round) +
                                      " attempt " + std::to_string(c.attempt));
    }
    if (c.slot >= rt.participants.size() || rt.participants[c.slot].client_id != c.client_id) {
      throw Error("stale_ticket", "ticket does not match a live registration");
    }
    return rt.participants[c.slot];
  }

  json status_json(const TicketClaims& c) const {
    return json{{"task_id", id},
                {"round", round},
                {"attempt", attempt},
                {"phase", to_string(phase)},
                {"lifecycle", to_string(lifecycle)},
                {"model_version", model_version},
                {"instruction", to_string(instruction_for(c))}};
  }

  json deadline_json(std::optional<std::int64_t> active) const {
    return active ? json(to_wall(*active)) : json(nullptr);
  }

  json config_json(const TicketClaims& c, const Participant& p) const {
    json j{{"task_id", id},
           {"round", is_async() ? round : c.round},
           {"attempt", c.attempt},
           {"mode", to_string(spec.mode)},
           {"phase", to_string(phase)},
           {"lifecycle", to_string(lifecycle)},
           {"evaluate", (c.round + 1) % spec.eval_interval == 0},
           {"dp", {{"mode", privacy::to_string(spec.dp.mode)},
                   {"clip_norm", spec.dp.clip_norm},
                   {"noise_multiplier", spec.dp.noise_multiplier}}},
           {"secagg", {{"enabled", spec.secagg.enabled},
                       {"clip_range", spec.secagg.clip_range},
                       {"bits", spec.secagg.bits},
                       {"group_max", spec.vg_size}}}};
    const auto version = is_async() ? p.base_version : model_version;
    j["model_version"] = version;
    j["model_path"] = "/v1/tasks/" + id + "/model/" + std::to_string(version);
    j["model_length"] = model.size();
    std::optional<std::int64_t> kx, up;
    bool ready = false;
    json roster = json::array();
    std::size_t group_size = 0;
    if (is_async()) {
      ready = p.status == PStatus::kSelected;
      up = p.expiry;
    } else if (rt.selected && p.group >= 0) {
      const auto& g = rt.groups[static_cast<std::size_t>(p.group)];
      group_size = g.slots.size();
      if (spec.secagg.enabled) kx = g.kx_deadline;
      if (g.state != GState::kKeyExchange) {
        ready = !g.dissolved;
        up = g.upload_deadline;
        if (spec.secagg.enabled && ready) roster = roster_json(rt.participants, g);
      }
    }
    j["ready"] = ready;
    j["instruction"] = to_string(instruction_for(c));
    j["group_id"] = p.group >= 0 ? json(p.group) : json(nullptr);
    j["participant_index"] = p.group >= 0 ? json(p.index) : json(nullptr);
    j["group_size"] = group_size;
    j["roster"] = roster;
    j["deadlines"] = {{"registration_ms", is_async() ? json(nullptr)
                                                     : deadline_json(rt.registration_deadline)},
                      {"key_exchange_ms", deadline_json(kx)},
                      {"upload_ms", deadline_json(up)}};
    return j;
  }

  bool open_for_registration() const {
    if (lifecycle != Lifecycle::kRunning) return false;
    if (is_async()) return in_flight() < spec.clients_per_round;
    return !rt.selected && pool_slots().size() < spec.registration_target();
  }

  bool eligible(const ClientInfo& c) const {
    if (c.app_name != spec.app_name || c.workflow_name != spec.workflow_name) return false;
    for (const auto& [key, pred] : spec.selection_criteria) {
      auto it = c.metadata.find(key);
      const auto value = it == c.metadata.end() ? std::nullopt : std::optional(it->second);
      if (!pred.matches(value)) return false;
    }
    return true;
  }

  json summary() const {
    std::uint64_t registered = 0;
    for (const auto& p : rt.participants) registered += p.status != PStatus::kExpired;
    return json{{"task_id", id},
                {"task_name", spec.task_name},
                {"app_name", spec.app_name},
                {"workflow_name", spec.workflow_name},
                {"mode", to_string(spec.mode)},
                {"lifecycle", to_string(lifecycle)},
                {"phase", to_string(phase)},
                {"round", round},
                {"total_rounds", spec.total_rounds},
                {"clients_per_round", spec.clients_per_round},
                {"clients", registered},
                {"model_version", model_version}};
  }

  json privacy_json() const {
    json j{{"task_id", id},
           {"enabled", spec.dp.mode != privacy::DpMode::kOff},
           {"mode", privacy::to_string(spec.dp.mode)},
           {"clip_norm", spec.dp.clip_norm},
           {"noise_multiplier", spec.dp.noise_multiplier},
           {"delta", spec.dp.delta},
           {"steps", accountant.steps},
           {"sampling_rate", accountant.sampling_rate},
           {"sigma", accountant.sigma},
           {"epsilon", nullptr},
           {"alpha", nullptr},
           {"unbounded", false}};
    if (spec.dp.mode != privacy::DpMode::kOff && accountant.steps > 0) {
      const auto r = privacy::epsilon(accountant, spec.dp.delta);
      if (std::isfinite(r.epsilon)) {
        j["epsilon"] = r.epsilon;
        j["alpha"] = r.alpha;
      } else {
        j["unbounded"] = true;
      }
    }
    return j;
  }
};

// ---- Orchestrator -----------------------------------------------------------

Orchestrator::Orchestrator(OrchestratorConfig config) : config_(std::move(config)) {
  if (!config_.clock) config_.clock = system_clock_ms;
  if (!config_.store) config_.store = std::make_shared<MemoryStore>();
  if (!config_.verifiers.count("none")) config_.verifiers["none"] = std::make_shared<AllowAllVerifier>();
  ticket_key_ = config_.ticket_key ? *config_.ticket_key : crypto::random_key();
}

Orchestrator::~Orchestrator() = default;

std::shared_ptr<Orchestrator::Task> Orchestrator::find(const std::string& task_id) const {
  std::shared_lock lock(registry_mu_);
  auto it = tasks_.find(task_id);
  if (it == tasks_.end()) throw Error("not_found", "no task '" + task_id + "'");
  return it->second;
}

std::shared_ptr<Orchestrator::Task> Orchestrator::find_by_ticket(const std::string& task_id,
                                                                 const std::string& ticket,
                                                                 TicketClaims& claims) const {
  auto task = find(task_id);
  claims = verify_ticket(ticket, ticket_key_);
  if (claims.task_id != task_id) throw Error("bad_ticket", "ticket was issued for another task");
  return task;
}

std::vector<std::string> Orchestrator::task_ids() const {
  std::shared_lock lock(registry_mu_);
  std::vector<std::string> ids;
  for (const auto& [id, t] : tasks_) ids.push_back(id);
  return ids;
}

std::string Orchestrator::create_task(const TaskSpec& spec, ByteView initial_model) {
  spec.validate();
  ModelVector model;
  with_error_context("initial model: ", [&] { model = decode_model(initial_model); });
  if (spec.attestation != "none" && !config_.verifiers.count(spec.attestation)) {
    throw Error("invalid_spec", "unknown attestation verifier '" + spec.attestation + "'");
  }

  auto task = std::make_shared<Task>();
  task->cfg = &config_;
  task->stopping = &stopping_;
  task->spec = spec;
  task->model = std::move(model);
  task->created_ms = config_.clock();
  std::uint64_t seed = 0;
  if (spec.seed) {
    seed = *spec.seed;
  } else {
    crypto::random_bytes({reinterpret_cast<std::uint8_t*>(&seed), sizeof seed});
  }
  task->selection_seed = seed;

  std::unique_lock lock(registry_mu_);
  for (const auto& [id, t] : tasks_) {
    if (t->spec.app_name == spec.app_name && t->spec.workflow_name == spec.workflow_name &&
        t->spec.task_name == spec.task_name) {
      throw Error("duplicate_task", "a task named '" + spec.task_name + "' already exists for " +
                                        spec.app_name + "/" + spec.workflow_name);
    }
  }
  std::string id;
  do {
    if (config_.id_source) {
      id = config_.id_source();
    } else {
      std::array<std::uint8_t, 8> raw{};
      crypto::random_bytes(raw);
      id = "t" + crypto::to_hex(raw);
    }
  } while (tasks_.count(id));
  if (id.empty() || id.find_first_of("./") != std::string::npos) {
    throw Error("invalid_argument", "task ids must be non-empty without '.' or '/'");
  }
  task->id = id;
  {
    std::lock_guard tl(task->mu);
    config_.store->put(model_key(id, 0), encode_payload(task->model));
    task->persist_all();
  }
  tasks_[id] = task;
  return id;
}

std::vector<Offer> Orchestrator::advertise(const ClientInfo& client) {
  std::vector<std::shared_ptr<Task>> all;
  {
    std::shared_lock lock(registry_mu_);
    for (const auto& [id, t] : tasks_) all.push_back(t);
  }
  std::vector<Offer> offers;
  for (const auto& t : all) {
    std::lock_guard lock(t->mu);
    t->advance();
    if (t->open_for_registration() && t->eligible(client)) offers.push_back({t->id, t->round});
  }
  return offers;
}

std::string Orchestrator::register_client(const std::string& task_id, const ClientInfo& client,
                                          const crypto::Key32& public_key) {
  client.validate();
  auto t = find(task_id);
  std::lock_guard lock(t->mu);
  t->advance();
  if (t->lifecycle == Lifecycle::kPaused) throw Error("paused", "task is paused", true);
  if (is_terminal(t->lifecycle)) throw Error("terminal", "task is " + to_string(t->lifecycle));
  if (!t->eligible(client)) throw Error("not_eligible", "client does not match the task's criteria");
  auto vit = config_.verifiers.find(t->spec.attestation);
  if (vit == config_.verifiers.end() || !vit->second->verify(client)) {
    throw Error("attestation", "attestation evidence rejected");
  }
  if (!t->is_async() && t->rt.open_by_client.count(client.client_id)) {
    throw Error("already_registered", "client already registered for this round");
  }
  if (t->is_async()) {
    if (auto it = t->rt.open_by_client.find(client.client_id);
        it != t->rt.open_by_client.end() &&
        t->rt.participants[it->second].status == PStatus::kSelected) {
      throw Error("already_registered", "client already holds an open async ticket");
    }
  }
  if (!t->open_for_registration()) throw Error("round_full", "round full", true);

  const auto now = t->active_now();
  Participant p;
  p.client_id = client.client_id;
  p.public_key = public_key;
  if (t->is_async()) {
    p.status = PStatus::kSelected;
    p.base_version = t->model_version;
    p.expiry = now + t->spec.timeouts.upload.count();
  } else {
    p.expiry = t->rt.registration_deadline + t->spec.timeouts.key_exchange.count() +
               t->spec.timeouts.upload.count();
  }
  const std::uint64_t slot = t->rt.participants.size();
  t->rt.participants.push_back(p);
  t->rt.open_by_client[client.client_id] = slot;

  TicketClaims claims{t->id, t->is_async() ? t->model_version : t->round, t->attempt, slot,
                      p.expiry, client.client_id};
  if (!t->is_async() && t->pool_slots().size() >= t->spec.registration_target()) {
    t->select();
    t->advance();
  }
  return issue_ticket(claims, ticket_key_);
}

json Orchestrator::round_config(const std::string& task_id, const std::string& ticket,
                                std::chrono::milliseconds wait) {
  TicketClaims c;
  auto t = find_by_ticket(task_id, ticket, c);
  const auto until = std::chrono::steady_clock::now() + wait;
  std::unique_lock lock(t->mu);
  while (true) {
    t->advance();
    if (is_terminal(t->lifecycle)) throw Error("terminal", "task is " + to_string(t->lifecycle));
    auto& p = t->participant(c);
    switch (p.status) {
      case PStatus::kNotSelected: throw Error("not_selected", "client was not selected this round");
      case PStatus::kRegroup: throw Error("regroup", "virtual group dissolved", true);
      case PStatus::kExpired: throw Error("expired_ticket", "ticket expired");
      default: break;
    }
    if (p.status == PStatus::kSelected && !p.confirmed && t->lifecycle == Lifecycle::kRunning) {
      p.confirmed = true;
      t->advance();
    }
    auto j = t->config_json(c, p);
    if (j["ready"].get<bool>() || std::chrono::steady_clock::now() >= until) return j;
    const auto seen = t->changes;
    if (t->stopping->load()) return j;
    t->cv.wait_until(lock, until, [&] { return t->changes != seen || t->stopping->load(); });
  }
}

void Orchestrator::submit_update(const std::string& task_id, const std::string& ticket,
                                 ByteView payload, const ClientMetrics& metrics) {
  TicketClaims c;
  auto t = find_by_ticket(task_id, ticket, c);
  Payload decoded;
  with_error_context("update: ", [&] { decoded = decode_payload(payload); });
  if (!(metrics.num_samples > 0.0) || !std::isfinite(metrics.num_samples)) {
    throw Error("bad_request", "num_samples must be positive");
  }

  std::lock_guard lock(t->mu);
  t->advance();
  if (!t->is_async() && (c.round != t->round || c.attempt != t->attempt) &&
      std::pair(c.round, c.attempt) < std::pair(t->round, t->attempt)) {
    throw Error("late", "round " + std::to_string(c.round) + " attempt " +
                            std::to_string(c.attempt) + " has closed");
  }
  if (t->lifecycle == Lifecycle::kPaused) throw Error("paused", "task is paused", true);
  if (is_terminal(t->lifecycle)) throw Error("terminal", "task is " + to_string(t->lifecycle));
  auto& p = t->participant(c);
  if (p.status == PStatus::kSubmitted || p.status == PStatus::kFlushed) {
    throw Error("duplicate", "update already submitted for this ticket");
  }
  if (p.status == PStatus::kExpired) {
    throw Error(t->is_async() ? "expired_ticket" : "late", "ticket expired");
  }
  if (p.status == PStatus::kRegroup) throw Error("regroup", "virtual group dissolved", true);
  if (p.status != PStatus::kSelected) throw Error("not_selected", "client is not in the cohort");

  if (t->is_async()) {
    auto* v = std::get_if<ModelVector>(&decoded);
    if (!v) throw Error("wrong_kind", "async updates must be float payloads");
    if (v->size() != t->model.size()) throw Error("length_mismatch", "update length differs from model");
    p.status = PStatus::kSubmitted;
    p.metrics = metrics;
    t->rt.buffer.push_back({c.slot, std::move(*v), metrics.num_samples, p.base_version});
    if (t->rt.buffer.size() >= t->spec.async_buffer_size) t->flush_async();
    t->bump();
    return;
  }

  auto& g = t->rt.groups[static_cast<std::size_t>(p.group)];
  if (g.state == GState::kKeyExchange) {
    throw Error("not_collecting", "virtual group is still exchanging keys", true);
  }
  if (g.state == GState::kFinalized) throw Error("late", "upload deadline passed");
  if (!g.acc->is_secure() && !std::holds_alternative<ModelVector>(decoded)) {
    throw Error("wrong_kind", "plaintext rounds take float payloads");
  }
  const auto length = std::visit(
      [](const auto& v) {
        if constexpr (std::is_same_v<std::decay_t<decltype(v)>, ModelVector>) {
          return v.size();
        } else {
          return v.values.size();
        }
      },
      decoded);
  if (length != t->model.size()) throw Error("length_mismatch", "update length differs from model");
  const double weight =
      t->spec.strategy.kind == aggregation::StrategyKind::kWeightedMean ? metrics.num_samples : 1.0;
  g.acc->accumulate(p.index, decoded, weight);
  p.status = PStatus::kSubmitted;
  p.metrics = metrics;
  if (g.acc->complete()) t->finalize(g);
  t->advance();
}

json Orchestrator::status(const std::string& task_id, const std::string& ticket,
                          std::chrono::milliseconds wait, std::optional<Instruction> wait_while) {
  TicketClaims c;
  auto t = find_by_ticket(task_id, ticket, c);
  const auto until = std::chrono::steady_clock::now() + wait;
  std::unique_lock lock(t->mu);
  t->advance();
  const auto initial = wait_while ? *wait_while : t->instruction_for(c);
  while (t->instruction_for(c) == initial && std::chrono::steady_clock::now() < until &&
         !t->stopping->load()) {
    const auto seen = t->changes;
    t->cv.wait_until(lock, until, [&] { return t->changes != seen || t->stopping->load(); });
    t->advance();
  }
  return t->status_json(c);
}

Bytes Orchestrator::model(const std::string& task_id, std::uint64_t version) const {
  auto t = find(task_id);
  {
    std::lock_guard lock(t->mu);
    if (version > t->model_version) {
      throw Error("not_found", "model version " + std::to_string(version) + " does not exist");
    }
  }
  auto blob = config_.store->get(model_key(task_id, version));
  if (!blob) throw Error("not_found", "model version " + std::to_string(version) + " is missing");
  return *blob;
}

Lifecycle Orchestrator::control(const std::string& task_id, LifecycleEvent action) {
  if (action != LifecycleEvent::kPause && action != LifecycleEvent::kResume &&
      action != LifecycleEvent::kCancel) {
    throw Error("bad_request", "unsupported action " + to_string(action));
  }
  auto t = find(task_id);
  std::lock_guard lock(t->mu);
  t->advance();
  t->move(action);
  t->persist_state();
  t->bump();
  if (t->lifecycle == Lifecycle::kRunning) t->advance();
  return t->lifecycle;
}

void Orchestrator::tick() {
  std::vector<std::shared_ptr<Task>> all;
  {
    std::shared_lock lock(registry_mu_);
    for (const auto& [id, t] : tasks_) all.push_back(t);
  }
  for (const auto& t : all) {
    std::lock_guard lock(t->mu);
    t->advance();
  }
}

json Orchestrator::list_tasks() const {
  std::vector<std::shared_ptr<Task>> all;
  {
    std::shared_lock lock(registry_mu_);
    for (const auto& [id, t] : tasks_) all.push_back(t);
  }
  json out = json::array();
  for (const auto& t : all) {
    std::lock_guard lock(t->mu);
    out.push_back(t->summary());
  }
  return out;
}

json Orchestrator::task_view(const std::string& task_id) const {
  auto t = find(task_id);
  std::lock_guard lock(t->mu);
  json j = t->summary();
  j["spec"] = t->spec;
  j["attempt"] = t->attempt;
  j["diagnostic"] = t->diagnostic;
  j["created_ms"] = t->created_ms;
  j["paused_total_ms"] = t->paused_total_ms;
  j["transitions"] = t->transitions;
  j["model_length"] = t->model.size();
  std::uint64_t pool = 0, selected = 0, submitted = 0;
  for (const auto& p : t->rt.participants) {
    pool += p.status == PStatus::kPool;
    selected += p.status == PStatus::kSelected;
    submitted += p.status == PStatus::kSubmitted;
  }
  j["participants"] = {{"pool", pool}, {"in_progress", selected}, {"submitted", submitted}};
  if (t->is_async()) j["buffered"] = t->rt.buffer.size();
  json groups = json::array();
  for (const auto& g : t->rt.groups) {
    const char* state = g.dissolved ? "dissolved"
                        : g.state == GState::kKeyExchange ? "key_exchange"
                        : g.state == GState::kCollecting  ? "collecting"
                        : g.discarded                     ? "discarded"
                                                          : "finalized";
    groups.push_back({{"group_id", g.id},
                      {"size", g.slots.size()},
                      {"received", g.acc ? g.acc->received() : 0},
                      {"state", state}});
  }
  j["groups"] = groups;
  j["privacy"] = t->privacy_json();
  j["metrics_count"] = t->metrics.size();
  return j;
}

json Orchestrator::metrics(const std::string& task_id) const {
  auto t = find(task_id);
  std::lock_guard lock(t->mu);
  return json{{"task_id", task_id}, {"rounds", t->metrics}, {"privacy", t->privacy_json()}};
}

json Orchestrator::privacy_report(const std::string& task_id) const {
  auto t = find(task_id);
  std::lock_guard lock(t->mu);
  return t->privacy_json();
}

std::uint64_t Orchestrator::wait_for_change(const std::string& task_id, std::uint64_t seen,
                                            std::chrono::milliseconds wait) const {
  auto t = find(task_id);
  std::unique_lock lock(t->mu);
  t->cv.wait_for(lock, wait, [&] { return t->changes != seen || stopping_.load(); });
  return t->changes;
}

void Orchestrator::shutdown() {
  stopping_ = true;
  for (const auto& id : task_ids()) {
    auto t = find(id);
    std::lock_guard lock(t->mu);
    t->bump();
  }
}

void Orchestrator::snapshot(KeyValueStore& dest) const {
  std::vector<std::shared_ptr<Task>> all;
  {
    std::shared_lock lock(registry_mu_);
    for (const auto& [id, t] : tasks_) all.push_back(t);
  }
  for (const auto& t : all) {
    std::lock_guard lock(t->mu);
    if (!t->spec_corrupt) dest.put(task_key(t->id, "spec.json"), view_of(t->spec_text()));
    dest.put(task_key(t->id, "state.json"), view_of(t->state_text()));
    dest.put(task_key(t->id, "metrics.jsonl"), view_of(t->metrics_text()));
    for (const auto& key : config_.store->list(task_key(t->id, "models/"))) {
      if (auto blob = config_.store->get(key)) dest.put(key, *blob);
    }
  }
}

namespace {

json parse_json(const std::optional<Bytes>& blob, const std::string& what) {
  if (!blob) throw Error("corrupt_state", what + " is missing");
  try {
    return json::parse(blob->begin(), blob->end());
  } catch (const json::exception& e) {
    throw Error("corrupt_state", what + " does not parse: " + e.what());
  }
}

}  // namespace

void Orchestrator::restore() {
  std::set<std::string> ids;
  for (const auto& key : config_.store->list("tasks/")) {
    const auto rest = key.substr(6);
    const auto slash = rest.find('/');
    if (slash != std::string::npos) ids.insert(rest.substr(0, slash));
  }
  std::unique_lock lock(registry_mu_);
  for (const auto& id : ids) {
    if (tasks_.count(id)) continue;
    auto t = std::make_shared<Task>();
    t->cfg = &config_;
    t->stopping = &stopping_;
    t->id = id;
    std::lock_guard tl(t->mu);
    try {
      try {
        t->spec = parse_json(config_.store->get(task_key(id, "spec.json")), "spec.json")
                      .get<TaskSpec>();
        t->spec.validate();
      } catch (const Error& e) {
        t->spec_corrupt = true;
        throw Error("corrupt_state", std::string("spec.json: ") + e.what());
      } catch (const json::exception& e) {
        t->spec_corrupt = true;
        throw Error("corrupt_state", std::string("spec.json: ") + e.what());
      }
      const auto s = parse_json(config_.store->get(task_key(id, "state.json")), "state.json");
      try {
        t->lifecycle = lifecycle_from(s.at("lifecycle").get<std::string>());
        t->round = s.at("round").get<std::uint64_t>();
        t->attempt = s.at("attempt").get<std::uint32_t>();
        t->model_version = s.at("model_version").get<std::uint64_t>();
        t->selection_seed = s.at("selection_seed").get<std::uint64_t>();
        const auto& a = s.at("accountant");
        t->accountant.steps = a.at("steps").get<std::uint64_t>();
        t->accountant.sampling_rate = a.at("sampling_rate").get<double>();
        t->accountant.sigma = a.at("sigma").get<double>();
        t->diagnostic = s.at("diagnostic").get<std::string>();
        t->created_ms = s.at("created_ms").get<std::int64_t>();
        t->paused_total_ms = s.at("paused_total_ms").get<std::int64_t>();
        if (!s.at("paused_at_ms").is_null()) t->paused_at_ms = s.at("paused_at_ms").get<std::int64_t>();
        t->transitions = s.at("transitions").get<std::vector<json>>();
      } catch (const json::exception& e) {
        throw Error("corrupt_state", std::string("state.json: ") + e.what());
      }
      const auto blob = config_.store->get(model_key(id, t->model_version));
      if (!blob) throw Error("corrupt_state", "model v" + std::to_string(t->model_version) + " is missing");
      try {
        t->model = decode_model(*blob);
      } catch (const Error& e) {
        throw Error("corrupt_state", "model v" + std::to_string(t->model_version) + ": " +
                                         e.code() + ": " + e.what());
      }
      if (auto m = config_.store->get(task_key(id, "metrics.jsonl"))) {
        std::istringstream in(to_string(*m));
        std::string line;
        while (std::getline(in, line)) {
          if (line.empty()) continue;
          try {
            auto entry = json::parse(line);
            if (entry.value("status", "") == "completed") {
              t->completed_attempt[entry.at("round").get<std::uint64_t>()] =
                  entry.at("attempt").get<std::uint32_t>();
            }
            t->metrics.push_back(std::move(entry));
          } catch (const json::exception& e) {
            throw Error("corrupt_state", std::string("metrics.jsonl: ") + e.what());
          }
        }
      }
      if (t->lifecycle == Lifecycle::kRunning || t->lifecycle == Lifecycle::kPaused) {
        t->begin_attempt();
      }
    } catch (const Error& e) {
      if (t->lifecycle != Lifecycle::kFailed) {
        t->transitions.push_back({{"from", to_string(t->lifecycle)},
                                  {"to", "failed"},
                                  {"event", "restore"},
                                  {"at_ms", t->wall()}});
      }
      t->lifecycle = Lifecycle::kFailed;
      t->paused_at_ms.reset();
      t->diagnostic = std::string(e.code()) + ": " + e.what();
      t->persist_state();
    }
    tasks_[id] = t;
  }
}

}  // namespace florinet
