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

// Acceptance gate: one PASS/FAIL line per product-level criterion. Exit
// status is the number of failures. Tolerances and floors are fixed here.

#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "florinet/codec.hpp"
#include "florinet/orchestrator.hpp"
#include "florinet/privacy.hpp"
#include "florinet/secagg.hpp"
#include "florinet/server.hpp"
#include "florinet/simulator.hpp"
#include "florinet/store.hpp"

// After Eigen: <resolv.h>, pulled in by httplib, defines _res.
#include <httplib.h>

namespace florinet {
namespace {

using Clk = std::chrono::steady_clock;
using std::chrono::milliseconds;

struct Verdict {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clk::time_point t0) { return std::chrono::duration<double>(Clk::now() - t0).count(); }

std::string fmt(double v, int prec = 4) {
  std::ostringstream s;
  s.precision(prec);
  s << v;
  return s.str();
}

// ---- secure aggregation ------------------------------------------------------

secagg::Key32 key_from_seed(std::uint64_t s) {
  secagg::Key32 k{};
  std::mt19937_64 rng(s);
  for (auto& b : k) b = static_cast<std::uint8_t>(rng());
  return k;
}

Verdict sa_cancellation() {
  constexpr int kTrials = 500;
  constexpr double kBudgetS = 30.0;
  const auto t0 = Clk::now();
  std::mt19937_64 rng(500);
  int bad = 0;
  for (int trial = 0; trial < kTrials; ++trial) {
    const std::size_t n = 2 + rng() % 15;
    const int bits = 1 + static_cast<int>(rng() % 16);
    const QuantParams p{1.0, bits, static_cast<std::uint32_t>(n)};
    const Eigen::Index len = 1 + static_cast<Eigen::Index>(rng() % 1000);
    std::vector<secagg::KeyPair> keys;
    secagg::GroupRoster roster;
    for (std::size_t i = 0; i < n; ++i) {
      keys.push_back(secagg::generate_keypair(key_from_seed(rng())));
      roster.members.push_back({i, "c" + std::to_string(i), keys.back().public_key});
    }
    ModularVector plain = ModularVector::Zero(len);
    std::vector<QuantizedVector> ys;
    const std::string task = "acc-" + std::to_string(trial);
    for (std::size_t i = 0; i < n; ++i) {
      QuantizedVector x{ModularVector(len), p};
      for (auto& v : x.values) v = static_cast<std::uint32_t>(rng() % (p.levels() + 1));
      plain += x.values;
      const auto seeds = secagg::derive_group_seeds(keys[i], i, roster, task, static_cast<std::uint32_t>(trial));
      ys.push_back(secagg::apply_masks(x, i, n, seeds));
    }
    const auto sum = secagg::aggregate_masked(ys);
    const std::uint64_t m = p.modulus();
    for (Eigen::Index j = 0; j < len; ++j) {
      if (sum.values(j) != plain(j) % m) {
        ++bad;
        break;
      }
    }
  }
  const double t = seconds_since(t0);
  return {bad == 0 && t < kBudgetS,
          std::to_string(kTrials - bad) + "/" + std::to_string(kTrials) + " exact, " + fmt(t, 3) + " s (< 30 s)"};
}

Verdict kdf_fixture() {
  std::ifstream in(std::string(FLORINET_FIXTURE_DIR) + "/kdf_vectors.json");
  if (!in) return {false, "fixture missing"};
  const auto doc = json::parse(in);
  const auto& keys = doc["keys"];
  auto pair = [&](const char* name) {
    return secagg::generate_keypair(crypto::key_from(crypto::from_hex(keys[name].get<std::string>())));
  };
  const auto alice = pair("alice_private"), bob = pair("bob_private"), carol = pair("carol_private");
  int cases = 0, ok = 0;
  bool pubs = crypto::to_hex(alice.public_key) == keys["alice_public"] &&
              crypto::to_hex(bob.public_key) == keys["bob_public"] &&
              crypto::to_hex(carol.public_key) == keys["carol_public"];
  for (const auto& c : doc["cases"]) {
    ++cases;
    const auto& peer = c["id_hi"] == 1 ? bob : carol;
    const auto seed = secagg::derive_mask_seed(alice, peer.public_key, c["task_id"].get<std::string>(),
                                               c["round"], c["id_lo"], c["id_hi"]);
    const QuantParams p{1.0, c["bits"], c["group_max"]};
    const auto mask = secagg::expand_mask(seed, 16, p);
    bool same = crypto::to_hex(seed.seed) == c["seed"].get<std::string>();
    // The peer derives the same seed from its side.
    const auto mirror = secagg::derive_mask_seed(peer, alice.public_key, c["task_id"].get<std::string>(),
                                                 c["round"], c["id_lo"], c["id_hi"]);
    same = same && mirror.seed == seed.seed;
    for (int j = 0; j < 16; ++j) same = same && mask.values(j) == c["mask16"][j].get<std::uint32_t>();
    ok += same;
  }
  return {pubs && cases > 0 && ok == cases,
          std::to_string(ok) + "/" + std::to_string(cases) + " vectors bit-exact, public keys " +
              (pubs ? "match" : "DIFFER")};
}

// ---- simulated runs ------------------------------------------------------------

Verdict dummy_task() {
  constexpr double kBudgetS = 60.0;
  const auto t0 = Clk::now();
  const auto plain = sim::run_dummy(32, 5);
  const bool plain_ok = plain.lifecycle == "completed" && plain.aggregate == ModelVector::Ones(5);
  sim::DummyOptions o;
  o.secagg = true;
  o.vg_size = 8;
  o.bits = 16;
  o.clip_range = 2.0;
  const auto sec = sim::run_dummy(32, 5, o);
  const double tol = 2 * o.clip_range / (std::ldexp(1.0, o.bits) - 1);
  double err = INFINITY;
  if (sec.lifecycle == "completed" && sec.aggregate.size() == 5) {
    err = (sec.aggregate.array() - 1.0).abs().maxCoeff();
  }
  const double t = seconds_since(t0);
  return {plain_ok && err <= tol && t < kBudgetS,
          std::string("plaintext ") + (plain_ok ? "exact" : "NOT exact") + ", secagg max err " + fmt(err, 3) +
              " (<= " + fmt(tol, 3) + "), " + fmt(t, 3) + " s (< 60 s)"};
}

Verdict scaling_sweep() {
  constexpr double kBudgetS = 120.0;
  const auto rows = sim::scaling_sweep({32, 256, 1024});
  const auto csv = sim::sweep_csv(rows);
  std::cout << csv;
  const auto& last = rows.back();
  const bool ok = last.n == 1024 && last.error.empty() && last.duration_ms && last.wall_ms / 1000 < kBudgetS &&
                  csv.rfind("n,duration_ms\n", 0) == 0;
  return {ok, "n=1024 " + (last.error.empty() ? "ok" : last.error) + ", wall " + fmt(last.wall_ms / 1000, 3) +
                  " s (< 120 s), round " + (last.duration_ms ? fmt(*last.duration_ms, 4) : "-") + " ms"};
}

sim::SimConfig logistic_run(std::uint64_t seed) {
  sim::SimConfig s;
  s.n_clients = 32;
  s.trainer = sim::TrainerKind::kLogistic;
  s.seed = seed;
  s.blobs.seed = seed;
  s.ramp = milliseconds(5);
  s.task = sim::training_task(32, 10);
  return s;
}

Verdict convergence() {
  constexpr double kFloor = 0.95, kOracleFloor = 0.98, kBudgetS = 300.0;
  const auto cfg = logistic_run(1);
  const auto data = trainers::make_blobs(cfg.blobs);
  const double central = trainers::accuracy(trainers::fit_centralized(data), data.x_test, data.y_test);
  const auto t0 = Clk::now();
  const auto r = sim::run_training(cfg);
  const double t = seconds_since(t0);
  const double acc = r.final_accuracy.value_or(0.0);
  return {r.lifecycle == "completed" && r.rounds.size() == 10 && central >= kOracleFloor && acc >= kFloor &&
              t < kBudgetS,
          "centralized " + fmt(central) + " (>= 0.98), federated " + fmt(acc) + " after " +
              std::to_string(r.rounds.size()) + " rounds (>= 0.95), " + fmt(t, 3) + " s (< 300 s)"};
}

std::vector<double> accuracies(const sim::SimReport& r) {
  std::vector<double> a;
  for (const auto& p : r.rounds) {
    if (p.accuracy) a.push_back(*p.accuracy);
  }
  return a;
}

Verdict dp_direction() {
  double acc_plain = 0, acc_dp = 0, var_plain = 0, var_dp = 0;
  bool all_done = true;
  for (std::uint64_t seed : {1, 2, 3}) {
    auto plain = logistic_run(seed);
    auto dp = plain;
    dp.task.dp.mode = privacy::DpMode::kLocal;
    dp.task.dp.clip_norm = 0.5;
    dp.task.dp.noise_multiplier = 0.08;
    const auto a = sim::run_training(plain);
    const auto b = sim::run_training(dp);
    all_done = all_done && a.lifecycle == "completed" && b.lifecycle == "completed";
    acc_plain += a.final_accuracy.value_or(0) / 3;
    acc_dp += b.final_accuracy.value_or(0) / 3;
    var_plain += sim::variance(accuracies(a)) / 3;
    var_dp += sim::variance(accuracies(b)) / 3;
  }
  return {all_done && acc_dp < acc_plain && var_dp > var_plain,
          "mean final accuracy " + fmt(acc_dp) + " DP vs " + fmt(acc_plain) + " plain; mean round variance " +
              fmt(var_dp, 3) + " DP vs " + fmt(var_plain, 3) + " plain"};
}

Verdict async_vs_sync() {
  double sync_ms = 0, async_ms = 0;
  bool ok = true;
  std::string flushes;
  for (std::uint64_t seed : {1, 2, 3}) {
    auto s = logistic_run(seed);
    s.straggler_max = milliseconds(1000);
    auto a = s;
    a.task.mode = TaskMode::kAsync;
    a.task.async_buffer_size = 32;
    const auto rs = sim::run_training(s);
    const auto ra = sim::run_training(a);
    std::size_t n_flush = 0;
    for (const auto& p : ra.rounds) n_flush += p.status == "completed";
    ok = ok && rs.lifecycle == "completed" && ra.lifecycle == "completed" && n_flush == 10 &&
         ra.final_model.size() > 0;
    flushes += (flushes.empty() ? "" : ",") + std::to_string(n_flush);
    sync_ms += rs.mean_round_ms / 3;
    async_ms += ra.mean_round_ms / 3;
  }
  return {ok && async_ms < sync_ms, "mean async flush interval " + fmt(async_ms) + " ms vs sync round " +
                                        fmt(sync_ms) + " ms; flushes per run " + flushes + " (== 10)"};
}

// ---- accountant -------------------------------------------------------------

Verdict accountant() {
  double worst_q1 = 0;
  for (double alpha : privacy::default_alpha_grid()) {
    for (double sigma : {0.3, 0.5, 1.0, 2.0, 4.0}) {
      worst_q1 = std::max(worst_q1,
                          std::abs(privacy::rdp_subsampled_gaussian(1.0, sigma, alpha) - alpha / (2 * sigma * sigma)));
    }
  }
  const double a_star = 1 + std::sqrt(2 * std::log(1e5));
  const double closed = a_star / 2 + std::log(1e5) / (a_star - 1);
  const double grid = privacy::epsilon({1, 1.0, 1.0}, 1e-5).epsilon;

  std::mt19937_64 rng(1000);
  std::uniform_real_distribution<double> u(0, 1);
  int violations = 0;
  for (int draw = 0; draw < 1000; ++draw) {
    const double q = 0.001 + 0.999 * u(rng);
    const double sigma = 0.5 + 4.5 * u(rng);
    const std::uint64_t steps = rng() % 500;
    const double delta = std::pow(10.0, -3 - 5 * u(rng));
    const double base = privacy::epsilon({steps, q, sigma}, delta).epsilon;
    violations += privacy::epsilon({steps + 1, q, sigma}, delta).epsilon < base * (1 - 1e-12);
    violations += privacy::epsilon({steps, q, sigma * 1.1}, delta).epsilon > base * (1 + 1e-12);
    violations += privacy::epsilon({steps, std::min(1.0, q * 1.1), sigma}, delta).epsilon < base * (1 - 1e-12);
    violations += privacy::epsilon({steps, q, sigma}, delta * 10).epsilon > base * (1 + 1e-12);
  }
  return {worst_q1 <= 1e-9 && std::abs(grid - closed) <= 0.05 && violations == 0,
          "q=1 max err " + fmt(worst_q1, 2) + " (<= 1e-9); grid optimum " + fmt(grid) + " vs closed form " +
              fmt(closed) + " (within 0.05); " + std::to_string(violations) + " monotonicity violations in 1000 draws"};
}

// ---- orchestrator --------------------------------------------------------------

struct Harness {
  std::shared_ptr<std::atomic<std::int64_t>> now = std::make_shared<std::atomic<std::int64_t>>(1'000'000);
  std::shared_ptr<MemoryStore> store = std::make_shared<MemoryStore>();
  std::unique_ptr<Orchestrator> orch;

  Harness() {
    OrchestratorConfig cfg;
    auto n = now;
    cfg.clock = [n] { return n->load(); };
    cfg.store = store;
    crypto::Key32 key{};
    key.fill(9);
    cfg.ticket_key = key;
    orch = std::make_unique<Orchestrator>(cfg);
  }
  void advance(std::int64_t ms) {
    *now += ms;
    orch->tick();
  }
  std::string join(const std::string& task, const std::string& client, const crypto::Key32& pk = {}) {
    ClientInfo c;
    c.client_id = client;
    c.app_name = "app";
    c.workflow_name = "wf";
    return orch->register_client(task, c, pk);
  }
  void submit(const std::string& task, const std::string& ticket, const ModelVector& d) {
    orch->submit_update(task, ticket, encode_payload(d), {});
  }
  std::string lifecycle(const std::string& task) { return orch->task_view(task)["lifecycle"].get<std::string>(); }
};

TaskSpec sync_spec(std::uint64_t cpr, std::uint64_t rounds) {
  TaskSpec s;
  s.task_name = "t";
  s.app_name = "app";
  s.workflow_name = "wf";
  s.clients_per_round = cpr;
  s.total_rounds = rounds;
  s.over_provision = 1.0;
  s.seed = 7;
  s.retry_limit = 1;
  s.timeouts = {milliseconds(1000), milliseconds(500), milliseconds(2000)};
  return s;
}

template <class F>
void swallow(F&& f) {
  try {
    f();
  } catch (const Error&) {
  }
}

std::size_t illegal_transitions(std::size_t& transitions) {
  const std::set<std::pair<std::string, std::string>> legal{
      {"created", "running"},   {"running", "paused"},    {"paused", "running"}, {"running", "completed"},
      {"running", "cancelled"}, {"running", "failed"},    {"paused", "cancelled"}};
  std::mt19937_64 rng(10000);
  std::size_t illegal = 0;
  for (int seq = 0; seq < 10000; ++seq) {
    Harness h;
    auto spec = sync_spec(2, 2);
    const auto id = h.orch->create_task(spec, encode_payload(ModelVector(ModelVector::Zero(2))));
    for (int step = 0; step < 12; ++step) {
      swallow([&] {
        switch (rng() % 6) {
          case 0: h.orch->control(id, LifecycleEvent::kPause); break;
          case 1: h.orch->control(id, LifecycleEvent::kResume); break;
          case 2: h.orch->control(id, LifecycleEvent::kCancel); break;
          case 3: h.orch->tick(); break;
          case 4: h.advance(static_cast<std::int64_t>(rng() % 3000)); break;
          default: {
            const auto t = h.join(id, "c" + std::to_string(rng() % 3));
            if (rng() % 2) h.submit(id, t, ModelVector::Zero(2));
          }
        }
      });
    }
    const auto view = h.orch->task_view(id);
    std::string prev = "created";
    for (const auto& t : view["transitions"]) {
      ++transitions;
      if (t["from"] != prev || !legal.count({t["from"], t["to"]})) ++illegal;
      prev = t["to"].get<std::string>();
    }
    if (prev != view["lifecycle"]) ++illegal;
  }
  return illegal;
}

void secure_submit(Harness& h, const std::string& id, const secagg::KeyPair& kp, const std::string& ticket,
                   const ModelVector& x) {
  const auto cfg = h.orch->round_config(id, ticket);
  if (!cfg["ready"].get<bool>()) return;
  secagg::GroupRoster roster;
  for (const auto& r : cfg["roster"]) {
    roster.members.push_back({r["participant_index"].get<std::uint64_t>(), "",
                              crypto::key_from(crypto::from_base64(r["public_key_b64"].get<std::string>()))});
  }
  const auto me = cfg["participant_index"].get<std::uint64_t>();
  const QuantParams qp{cfg["secagg"]["clip_range"].get<double>(), cfg["secagg"]["bits"].get<int>(),
                       cfg["secagg"]["group_max"].get<std::uint32_t>()};
  const auto seeds = secagg::derive_group_seeds(kp, me, roster, id, cfg["round"].get<std::uint32_t>());
  h.orch->submit_update(id, ticket, encode_payload(secagg::apply_masks(quantize(x, qp), me, roster.size(), seeds)),
                        {});
}

// Kills k of n clients at a random protocol step; once deadlines pass the task
// must be completed (after retries) or failed, never still running.
std::size_t hung_dropout_trials(int trials) {
  std::mt19937_64 rng(4242);
  std::size_t hung = 0;
  for (int trial = 0; trial < trials; ++trial) {
    Harness h;
    const std::size_t n = 4 + rng() % 9;
    auto spec = sync_spec(n, 1);
    spec.secagg.enabled = rng() % 2;
    spec.vg_size = 2 + rng() % (n / 2 - 1);
    const auto id = h.orch->create_task(spec, encode_payload(ModelVector(ModelVector::Zero(2))));
    h.orch->tick();
    const std::size_t k = rng() % (n + 1);
    for (int attempt = 0; attempt < 3 && h.lifecycle(id) == "running"; ++attempt) {
      std::vector<secagg::KeyPair> kps;
      std::vector<std::string> tickets;
      for (std::size_t i = 0; i < n; ++i) {
        kps.push_back(secagg::generate_keypair());
        std::string t;
        swallow([&] { t = h.join(id, "c" + std::to_string(i), kps.back().public_key); });
        tickets.push_back(t);
      }
      std::vector<int> dies_after(n, 3);
      for (std::size_t i = 0; i < k; ++i) dies_after[rng() % n] = static_cast<int>(rng() % 2);
      for (std::size_t i = 0; i < n; ++i) {
        if (dies_after[i] >= 1 && !tickets[i].empty()) swallow([&] { h.orch->round_config(id, tickets[i]); });
      }
      for (std::size_t i = 0; i < n; ++i) {
        if (dies_after[i] < 3 || tickets[i].empty()) continue;
        swallow([&] {
          if (h.orch->status(id, tickets[i])["instruction"] != "proceed") return;
          if (spec.secagg.enabled) {
            secure_submit(h, id, kps[i], tickets[i], ModelVector::Ones(2));
          } else {
            h.submit(id, tickets[i], ModelVector::Ones(2));
          }
        });
      }
      for (int step = 0; step < 4; ++step) h.advance(1000);
    }
    const auto state = h.lifecycle(id);
    hung += !(state == "completed" || state == "failed") || (k == 0 && state != "completed");
  }
  return hung;
}

std::map<std::string, Bytes> dump(const KeyValueStore& s) {
  std::map<std::string, Bytes> out;
  for (const auto& k : s.list("")) out[k] = *s.get(k);
  return out;
}

bool snapshot_round_trip() {
  Harness h;
  auto spec = sync_spec(2, 3);
  spec.dp = {privacy::DpMode::kLocal, 0.5, 0.08, 1e-5, 100};
  const auto id = h.orch->create_task(spec, encode_payload(ModelVector(ModelVector::Zero(3))));
  h.orch->tick();
  for (int r = 0; r < 2; ++r) {
    const auto a = h.join(id, "a");
    const auto b = h.join(id, "b");
    *h.now += 37;
    h.submit(id, a, ModelVector::Constant(3, 0.1 * (r + 1)));
    h.submit(id, b, ModelVector::Constant(3, 0.3));
  }
  auto paused = sync_spec(4, 1);
  paused.task_name = "paused";
  const auto id2 = h.orch->create_task(paused, encode_payload(ModelVector(ModelVector::Zero(3))));
  h.orch->tick();
  h.orch->control(id2, LifecycleEvent::kPause);

  MemoryStore first;
  h.orch->snapshot(first);
  OrchestratorConfig cfg;
  auto n = h.now;
  cfg.clock = [n] { return n->load(); };
  cfg.store = h.store;
  Orchestrator restored(cfg);
  restored.restore();
  MemoryStore second;
  restored.snapshot(second);
  return dump(first) == dump(second) && dump(first) == dump(*h.store) &&
         restored.metrics(id) == h.orch->metrics(id) && restored.task_view(id2)["lifecycle"] == "paused";
}

Verdict lifecycle_suite() {
  std::size_t transitions = 0;
  const auto illegal = illegal_transitions(transitions);
  const auto hung = hung_dropout_trials(200);
  const bool snap = snapshot_round_trip();
  return {illegal == 0 && transitions > 0 && hung == 0 && snap,
          std::to_string(illegal) + " illegal of " + std::to_string(transitions) +
              " transitions over 10^4 sequences; " + std::to_string(hung) +
              " hung/unresolved of 200 dropout trials; snapshot/restore " + (snap ? "byte-identical" : "DIFFERS")};
}

Verdict headless() {
  ServerConfig sc;
  sc.port = 0;
  sc.threads = 4;
  sc.admin_key = "k";
  Server server(std::move(sc));
  server.start();
  httplib::Client c(server.base_url());
  const auto health = c.Get("/healthz");
  const auto ui = c.Get("/ui/");
  const auto list = c.Get("/admin/v1/tasks", {{"X-Florinet-Key", "k"}});
  const bool ok = health && health->status == 200 && ui && ui->status == 200 && list && list->status == 200;
  c.stop();
  server.stop();
  return {ok, std::string("no dashboard assets: health, admin API and /ui/ placeholder ") +
                  (ok ? "respond 200" : "FAILED") + "; every check above ran without a dashboard"};
}

}  // namespace
}  // namespace florinet

int main() {
  spdlog::set_level(spdlog::level::warn);
  using florinet::Verdict;
  const std::vector<std::pair<std::string, std::function<Verdict()>>> checks{
      {"secagg-cancellation", florinet::sa_cancellation},
      {"kdf-fixture", florinet::kdf_fixture},
      {"dummy-task", florinet::dummy_task},
      {"scaling-sweep", florinet::scaling_sweep},
      {"convergence", florinet::convergence},
      {"dp-direction", florinet::dp_direction},
      {"async-vs-sync", florinet::async_vs_sync},
      {"accountant-oracles", florinet::accountant},
      {"lifecycle-properties", florinet::lifecycle_suite},
      {"headless", florinet::headless},
  };
  int failures = 0;
  for (const auto& [name, fn] : checks) {
    Verdict v;
    const auto t0 = florinet::Clk::now();
    try {
      v = fn();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    failures += !v.pass;
    std::cout << (v.pass ? "PASS " : "FAIL ") << name << ": " << v.detail << " ["
              << florinet::fmt(florinet::seconds_since(t0), 3) << " s]" << std::endl;
  }
  std::cout << (failures ? "ACCEPTANCE FAILED: " + std::to_string(failures) + " criteria" : "ACCEPTANCE PASSED")
            << std::endl;
  return failures;
}
