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

#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <map>
#include <random>
#include <set>

#include "florinet/codec.hpp"
#include "florinet/secagg.hpp"

namespace florinet {
namespace {

using std::chrono::milliseconds;

struct FakeClock {
  std::shared_ptr<std::atomic<std::int64_t>> now = std::make_shared<std::atomic<std::int64_t>>(1'000'000);
  Clock fn() const {
    auto n = now;
    return [n] { return n->load(); };
  }
  void advance(std::int64_t ms) { *now += ms; }
};

ModelVector Zeros(Eigen::Index n) { return ModelVector::Zero(n); }

TaskSpec SyncSpec(std::uint64_t cpr = 2, std::uint64_t rounds = 1) {
  TaskSpec s;
  s.task_name = "t";
  s.app_name = "app";
  s.workflow_name = "wf";
  s.clients_per_round = cpr;
  s.total_rounds = rounds;
  s.over_provision = 1.0;
  s.seed = 7;
  s.timeouts = {milliseconds(1000), milliseconds(500), milliseconds(2000)};
  return s;
}

ClientInfo Client(const std::string& id) {
  ClientInfo c;
  c.client_id = id;
  c.app_name = "app";
  c.workflow_name = "wf";
  return c;
}

struct Harness {
  FakeClock clock;
  std::shared_ptr<MemoryStore> store = std::make_shared<MemoryStore>();
  std::unique_ptr<Orchestrator> orch;

  explicit Harness(VerifierRegistry verifiers = default_verifiers()) {
    OrchestratorConfig cfg;
    cfg.clock = clock.fn();
    cfg.store = store;
    cfg.verifiers = std::move(verifiers);
    crypto::Key32 key{};
    key.fill(9);
    cfg.ticket_key = key;
    orch = std::make_unique<Orchestrator>(cfg);
  }

  std::string create(const TaskSpec& s, Eigen::Index len = 3) {
    auto id = orch->create_task(s, encode_payload(Zeros(len)));
    orch->tick();
    return id;
  }

  std::string join(const std::string& task, const std::string& client,
                   const crypto::Key32& pk = {}) {
    return orch->register_client(task, Client(client), pk);
  }

  void submit(const std::string& task, const std::string& ticket, const ModelVector& d,
              std::optional<double> loss = std::nullopt) {
    ClientMetrics m;
    m.loss = loss;
    orch->submit_update(task, ticket, encode_payload(d), m);
  }

  std::string lifecycle(const std::string& task) {
    return orch->task_view(task)["lifecycle"].get<std::string>();
  }

  ModelVector current_model(const std::string& task) {
    const auto v = orch->task_view(task)["model_version"].get<std::uint64_t>();
    return decode_model(orch->model(task, v));
  }

  json instruction(const std::string& task, const std::string& ticket) {
    return orch->status(task, ticket)["instruction"];
  }
};

std::string ErrorCode(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return "";
}

// ---- spec ------------------------------------------------------------------

TEST(TaskSpecTest, MinimalSyncSpecIsCreated) {
  FakeClock clock;
  OrchestratorConfig cfg;
  cfg.clock = clock.fn();
  Orchestrator orch(cfg);
  const auto id = orch.create_task(SyncSpec(2, 1), encode_payload(Zeros(3)));
  EXPECT_EQ(orch.task_view(id)["lifecycle"], "created");
  orch.tick();
  EXPECT_EQ(orch.task_view(id)["lifecycle"], "running");
}

TEST(TaskSpecTest, AsyncWithSecaggRejected) {
  auto s = SyncSpec(32);
  s.mode = TaskMode::kAsync;
  s.async_buffer_size = 32;
  s.secagg.enabled = true;
  try {
    s.validate();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "invalid_spec");
    EXPECT_STREQ(e.what(), "async excludes pairwise secagg");
  }
}

TEST(TaskSpecTest, SpamExperimentParametersAccepted) {
  auto s = SyncSpec(32, 10);
  s.dp.mode = privacy::DpMode::kLocal;
  s.dp.clip_norm = 0.5;
  s.dp.noise_multiplier = 0.08;
  EXPECT_NO_THROW(s.validate());
  Harness h;
  EXPECT_NO_THROW(h.create(s));
}

TEST(TaskSpecTest, SecaggGroupBounds) {
  auto s = SyncSpec(4);
  s.secagg.enabled = true;
  s.vg_size = 1;
  EXPECT_EQ(ErrorCode([&] { s.validate(); }), "invalid_spec");
  s.vg_size = 5;
  EXPECT_EQ(ErrorCode([&] { s.validate(); }), "invalid_spec");
  s.vg_size = 4;
  EXPECT_NO_THROW(s.validate());
  s.secagg.bits = 30;  // 30 + 2 headroom bits > 32
  EXPECT_EQ(ErrorCode([&] { s.validate(); }), "invalid_spec");
}

TEST(TaskSpecTest, JsonRoundTripAndUnknownFields) {
  auto s = SyncSpec(8, 3);
  s.secagg = {true, 2.0, 12};
  s.vg_size = 4;
  s.dp = {privacy::DpMode::kGlobal, 0.5, 1.1, 1e-6, 1000};
  s.selection_criteria["os"] = Predicate{"eq", "android"};
  s.selection_criteria["version"] = Predicate{"gte", 12};
  const json j = s;
  EXPECT_EQ(j.get<TaskSpec>(), s);
  EXPECT_EQ(json(j.get<TaskSpec>()).dump(), j.dump());

  json bad = j;
  bad["clients_per_rounds"] = 3;
  EXPECT_EQ(ErrorCode([&] { (void)bad.get<TaskSpec>(); }), "invalid_spec");
  json shorthand = {{"task_name", "a"}, {"app_name", "b"}, {"workflow_name", "c"},
                    {"selection_criteria", {{"os", "ios"}}}};
  const auto parsed = shorthand.get<TaskSpec>();
  EXPECT_EQ(parsed.selection_criteria.at("os").op, "eq");
  EXPECT_EQ(parsed.over_provision, 1.2);
}

TEST(PredicateTest, Operators) {
  EXPECT_TRUE((Predicate{"eq", "android"}.matches("android")));
  EXPECT_FALSE((Predicate{"eq", "android"}.matches("ios")));
  EXPECT_FALSE((Predicate{"eq", "android"}.matches(std::nullopt)));
  EXPECT_TRUE((Predicate{"ne", "android"}.matches(std::nullopt)));
  EXPECT_TRUE((Predicate{"in", json::array({"a", "b"})}.matches("b")));
  EXPECT_TRUE((Predicate{"gte", 12}.matches("12")));
  EXPECT_TRUE((Predicate{"gt", 9}.matches("10")));  // numeric, not lexicographic
  EXPECT_TRUE((Predicate{"lt", "b"}.matches("a")));
  EXPECT_TRUE((Predicate{"exists", true}.matches("")));
  EXPECT_FALSE((Predicate{"exists", true}.matches(std::nullopt)));
}

// ---- lifecycle -------------------------------------------------------------

TEST(LifecycleTest, EdgesAreExactlyTheDocumentedGraph) {
  using L = Lifecycle;
  using E = LifecycleEvent;
  const std::set<std::pair<L, L>> legal{{L::kCreated, L::kRunning},   {L::kRunning, L::kPaused},
                                        {L::kPaused, L::kRunning},    {L::kRunning, L::kCompleted},
                                        {L::kRunning, L::kCancelled}, {L::kRunning, L::kFailed},
                                        {L::kPaused, L::kCancelled}};
  std::set<std::pair<L, L>> seen;
  for (auto from : {L::kCreated, L::kRunning, L::kPaused, L::kCompleted, L::kCancelled, L::kFailed}) {
    for (auto e : {E::kStart, E::kPause, E::kResume, E::kCancel, E::kComplete, E::kFail}) {
      if (auto to = next_state(from, e)) seen.insert({from, *to});
    }
  }
  EXPECT_EQ(seen, legal);
}

TEST(LifecycleTest, ErrorsNameTheProblem) {
  EXPECT_EQ(ErrorCode([] { transition(Lifecycle::kCompleted, LifecycleEvent::kPause); }), "terminal");
  EXPECT_EQ(ErrorCode([] { transition(Lifecycle::kRunning, LifecycleEvent::kResume); }),
            "illegal_transition");
}

TEST(LifecycleTest, RandomSequencesOnLiveTasks) {
  // 10^4 random operator/clock sequences against real tasks; every observed
  // lifecycle change must be a legal edge and rejected actions leave the
  // state untouched.
  std::mt19937_64 rng(2024);
  const std::vector<std::string> actions{"pause", "resume", "cancel", "tick", "join", "advance"};
  std::set<std::pair<std::string, std::string>> legal{
      {"created", "running"},   {"running", "paused"},   {"paused", "running"},
      {"running", "completed"}, {"running", "cancelled"}, {"running", "failed"},
      {"paused", "cancelled"}};
  std::size_t illegal = 0, transitions = 0;
  for (int seq = 0; seq < 10000; ++seq) {
    Harness h;
    auto spec = SyncSpec(2, 2);
    spec.task_name = "t" + std::to_string(seq);
    spec.retry_limit = 1;
    const auto id = h.orch->create_task(spec, encode_payload(Zeros(2)));
    std::string prev = "created";
    for (int step = 0; step < 12; ++step) {
      const auto& a = actions[rng() % actions.size()];
      try {
        if (a == "tick") {
          h.orch->tick();
        } else if (a == "advance") {
          h.clock.advance(static_cast<std::int64_t>(rng() % 3000));
          h.orch->tick();
        } else if (a == "join") {
          const auto t = h.join(id, "c" + std::to_string(rng() % 3));
          if (rng() % 2) h.submit(id, t, Zeros(2));
        } else {
          h.orch->control(id, *control_action_from(a));
        }
      } catch (const Error& e) {
        (void)e;
      }
    }
    const auto view = h.orch->task_view(id);
    for (const auto& t : view["transitions"]) {
      ++transitions;
      if (t["from"] != prev || !legal.count({t["from"], t["to"]})) ++illegal;
      prev = t["to"].get<std::string>();
    }
    if (prev != view["lifecycle"]) ++illegal;
  }
  EXPECT_EQ(illegal, 0u);
  EXPECT_GT(transitions, 20000u);
}

TEST(ControlTest, PauseResumeCancel) {
  Harness h;
  const auto id = h.create(SyncSpec());
  EXPECT_EQ(h.orch->control(id, LifecycleEvent::kPause), Lifecycle::kPaused);
  EXPECT_EQ(h.lifecycle(id), "paused");
  EXPECT_EQ(h.orch->control(id, LifecycleEvent::kResume), Lifecycle::kRunning);
  EXPECT_EQ(h.orch->control(id, LifecycleEvent::kCancel), Lifecycle::kCancelled);
  EXPECT_EQ(ErrorCode([&] { h.orch->control(id, LifecycleEvent::kPause); }), "terminal");
}

TEST(ControlTest, CompletedTaskCannotBePaused) {
  Harness h;
  const auto id = h.create(SyncSpec(1, 1));
  h.submit(id, h.join(id, "a"), Zeros(3));
  EXPECT_EQ(h.lifecycle(id), "completed");
  EXPECT_EQ(ErrorCode([&] { h.orch->control(id, LifecycleEvent::kPause); }), "terminal");
}

TEST(ControlTest, PauseFreezesDeadlines) {
  Harness h;
  const auto id = h.create(SyncSpec(2));
  const auto a = h.join(id, "a");
  const auto b = h.join(id, "b");
  const auto upload_before = h.orch->round_config(id, a)["deadlines"]["upload_ms"].get<std::int64_t>();
  h.clock.advance(1500);
  h.orch->control(id, LifecycleEvent::kPause);
  EXPECT_EQ(ErrorCode([&] { h.submit(id, a, Zeros(3)); }), "paused");
  h.clock.advance(10'000);  // far beyond the 2 s upload window
  h.orch->tick();
  h.orch->control(id, LifecycleEvent::kResume);
  const auto upload_after = h.orch->round_config(id, a)["deadlines"]["upload_ms"].get<std::int64_t>();
  EXPECT_EQ(upload_after - upload_before, 10'000);
  h.submit(id, a, Zeros(3));
  h.submit(id, b, Zeros(3));
  EXPECT_EQ(h.lifecycle(id), "completed");
}

// ---- advertise / register --------------------------------------------------

TEST(AdvertiseTest, MatchingCriteriaAndLifecycle) {
  Harness h;
  auto spec = SyncSpec();
  spec.selection_criteria["os"] = Predicate{"eq", "android"};
  const auto id = h.create(spec);
  auto android = Client("a");
  android.metadata["os"] = "android";
  auto ios = Client("b");
  ios.metadata["os"] = "ios";
  auto other = Client("c");
  other.app_name = "other";
  ASSERT_EQ(h.orch->advertise(android).size(), 1u);
  EXPECT_EQ(h.orch->advertise(android)[0].task_id, id);
  EXPECT_TRUE(h.orch->advertise(ios).empty());
  EXPECT_TRUE(h.orch->advertise(other).empty());
  h.orch->control(id, LifecycleEvent::kPause);
  EXPECT_TRUE(h.orch->advertise(android).empty());
  EXPECT_EQ(ErrorCode([&] { h.orch->register_client(id, android, {}); }), "paused");
}

TEST(RegisterTest, StaticAllowlistAttestation) {
  auto verifiers = default_verifiers();
  verifiers["allowlist"] = std::make_shared<StaticAllowlistVerifier>(std::set<std::string>{"tok"});
  Harness h(verifiers);
  auto spec = SyncSpec();
  spec.attestation = "allowlist";
  const auto id = h.create(spec);
  auto good = Client("a");
  good.attestation = "tok";
  EXPECT_FALSE(h.orch->register_client(id, good, {}).empty());
  EXPECT_EQ(ErrorCode([&] { h.orch->register_client(id, Client("b"), {}); }), "attestation");
}

TEST(RegisterTest, HmacAttestation) {
  const Bytes key{1, 2, 3, 4};
  auto verifiers = default_verifiers();
  verifiers["hmac"] = std::make_shared<HmacTokenVerifier>(key);
  Harness h(verifiers);
  auto spec = SyncSpec();
  spec.attestation = "hmac";
  const auto id = h.create(spec);
  auto c = Client("dev-1");
  c.attestation = hmac_attestation_token(key, "dev-1");
  EXPECT_NO_THROW(h.orch->register_client(id, c, {}));
  auto forged = Client("dev-2");
  forged.attestation = c.attestation;
  EXPECT_EQ(ErrorCode([&] { h.orch->register_client(id, forged, {}); }), "attestation");
}

TEST(RegisterTest, PoolClosesAndDuplicatesRejected) {
  Harness h;
  const auto id = h.create(SyncSpec(2));
  h.join(id, "a");
  EXPECT_EQ(ErrorCode([&] { h.join(id, "a"); }), "already_registered");
  h.join(id, "b");
  EXPECT_EQ(ErrorCode([&] { h.join(id, "c"); }), "round_full");
}

TEST(TicketTest, ForgedAndCrossTaskTicketsRejected) {
  Harness h;
  const auto id = h.create(SyncSpec(2));
  auto t = h.join(id, "a");
  auto forged = t;
  forged.back() = forged.back() == 'A' ? 'B' : 'A';
  EXPECT_EQ(ErrorCode([&] { h.orch->round_config(id, forged); }), "bad_ticket");
  auto spec2 = SyncSpec(2);
  spec2.task_name = "other";
  const auto id2 = h.create(spec2);
  EXPECT_EQ(ErrorCode([&] { h.orch->round_config(id2, t); }), "bad_ticket");
  EXPECT_EQ(ErrorCode([&] { h.orch->round_config(id, "garbage"); }), "bad_ticket");

  crypto::Key32 key{};
  key.fill(3);
  TicketClaims c{"tabc", 4, 1, 9, 12345, "client.with.dots"};
  EXPECT_EQ(verify_ticket(issue_ticket(c, key), key), c);
}

// ---- selection -------------------------------------------------------------

std::vector<std::size_t> OracleSample(std::size_t n, std::size_t k, std::uint64_t seed,
                                      std::uint64_t round, std::uint32_t attempt) {
  // Written independently from the library: explicit 128-bit-free rejection
  // bound and a partial shuffle over a std::vector.
  std::seed_seq seq{static_cast<std::uint32_t>(seed & 0xffffffffu),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(round & 0xffffffffu),
                    static_cast<std::uint32_t>(round >> 32), attempt};
  std::mt19937_64 gen(seq);
  std::vector<std::size_t> a(n);
  std::iota(a.begin(), a.end(), 0);
  for (std::size_t i = 0; i < k; ++i) {
    const std::uint64_t range = n - i;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                (std::numeric_limits<std::uint64_t>::max() % range + 1) % range;
    std::uint64_t r;
    do {
      r = gen();
    } while (r > limit);
    std::swap(a[i], a[i + r % range]);
  }
  return {a.begin(), a.begin() + static_cast<std::ptrdiff_t>(k)};
}

TEST(SelectionTest, MatchesSeededSamplerOracle) {
  for (std::uint64_t seed : {0ull, 1ull, 42ull, 0xdeadbeefcafeull}) {
    for (std::uint32_t attempt : {0u, 2u}) {
      EXPECT_EQ(select_cohort(100, 32, seed, 3, attempt), OracleSample(100, 32, seed, 3, attempt));
    }
  }
  EXPECT_EQ(select_cohort(5, 5, 1, 0, 0).size(), 5u);
  EXPECT_EQ(ErrorCode([] { select_cohort(3, 4, 1, 0, 0); }), "invalid_argument");
}

TEST(SelectionTest, OrchestratorCohortMatchesOracleOnSortedPool) {
  Harness h;
  auto spec = SyncSpec(32, 1);
  spec.over_provision = 100.0 / 32.0;
  spec.seed = 77;
  const auto id = h.create(spec);
  std::vector<std::string> names;
  std::map<std::string, std::string> tickets;
  for (int i = 0; i < 100; ++i) names.push_back("client-" + std::to_string(1000 + (i * 37) % 100));
  for (const auto& n : names) tickets[n] = h.join(id, n);  // registered in scrambled order
  std::vector<std::string> sorted(names);
  std::sort(sorted.begin(), sorted.end());
  std::set<std::string> expected;
  for (auto i : OracleSample(100, 32, 77, 0, 0)) expected.insert(sorted[i]);
  std::set<std::string> got;
  for (const auto& [n, t] : tickets) {
    if (h.instruction(id, t) == "proceed") got.insert(n);
  }
  EXPECT_EQ(got, expected);
}

TEST(SelectionTest, UniformFrequency) {
  std::vector<int> hits(100, 0);
  const int trials = 10000;
  for (int t = 0; t < trials; ++t) {
    for (auto i : select_cohort(100, 32, 12345, static_cast<std::uint64_t>(t), 0)) ++hits[i];
  }
  for (int c : hits) EXPECT_NEAR(c / static_cast<double>(trials), 0.32, 0.02);
}

TEST(SelectionTest, PartitionDropsSingletonRemainder) {
  EXPECT_EQ(partition_sizes(32, 8), (std::vector<std::size_t>{8, 8, 8, 8}));
  EXPECT_EQ(partition_sizes(10, 4), (std::vector<std::size_t>{4, 4, 2}));
  EXPECT_EQ(partition_sizes(9, 4), (std::vector<std::size_t>{4, 4}));
}

// ---- sync rounds -----------------------------------------------------------

TEST(SyncRoundTest, AllReportAdvancesAndUpdatesModel) {
  Harness h;
  const auto id = h.create(SyncSpec(2, 2));
  auto a = h.join(id, "a");
  auto b = h.join(id, "b");
  h.submit(id, a, (ModelVector(3) << 1, 2, 3).finished(), 0.5);
  EXPECT_EQ(h.instruction(id, a), "submitted");
  h.submit(id, b, (ModelVector(3) << 3, 2, 1).finished(), 1.5);
  EXPECT_EQ(h.instruction(id, a), "done");
  EXPECT_EQ(h.current_model(id), (ModelVector(3) << 2, 2, 2).finished());
  const auto m = h.orch->metrics(id)["rounds"];
  ASSERT_EQ(m.size(), 1u);
  EXPECT_EQ(m[0]["mean_loss"].get<double>(), 1.0);
  EXPECT_EQ(m[0]["clients_reported"], 2);
  EXPECT_EQ(m[0]["model_version"], 1);
  EXPECT_EQ(h.orch->task_view(id)["round"], 1);
  EXPECT_EQ(ErrorCode([&] { h.submit(id, a, Zeros(3)); }), "late");
}

TEST(SyncRoundTest, MetricsSeries) {
  Harness h;
  const auto id = h.create(SyncSpec(3, 2));
  EXPECT_TRUE(h.orch->metrics(id)["rounds"].empty());
  std::vector<double> losses{0.3, 0.9, 2.7};
  std::vector<std::string> ts;
  for (int i = 0; i < 3; ++i) ts.push_back(h.join(id, "c" + std::to_string(i)));
  h.clock.advance(250);
  for (int i = 0; i < 3; ++i) h.submit(id, ts[i], Zeros(3), losses[i]);
  const auto m = h.orch->metrics(id)["rounds"];
  ASSERT_EQ(m.size(), 1u);
  EXPECT_GT(m[0]["duration_ms"].get<double>(), 0.0);
  EXPECT_DOUBLE_EQ(m[0]["mean_loss"].get<double>(), (0.3 + 0.9 + 2.7) / 3.0);
}

TEST(SyncRoundTest, DuplicateAndLateRejected) {
  Harness h;
  const auto id = h.create(SyncSpec(2));
  auto a = h.join(id, "a");
  auto b = h.join(id, "b");
  h.submit(id, a, Zeros(3));
  EXPECT_EQ(ErrorCode([&] { h.submit(id, a, Zeros(3)); }), "duplicate");
  h.clock.advance(2001);
  EXPECT_EQ(ErrorCode([&] { h.submit(id, b, Zeros(3)); }), "late");
  // The partial plaintext group still aggregates.
  EXPECT_EQ(h.orch->task_view(id)["lifecycle"], "completed");
  EXPECT_EQ(h.orch->metrics(id)["rounds"][0]["clients_dropped"], 1);
}

TEST(SyncRoundTest, RejectsWrongPayloads) {
  Harness h;
  const auto id = h.create(SyncSpec(2));
  auto a = h.join(id, "a");
  h.join(id, "b");
  EXPECT_EQ(ErrorCode([&] { h.submit(id, a, Zeros(4)); }), "length_mismatch");
  EXPECT_EQ(ErrorCode([&] { h.orch->submit_update(id, a, Bytes{1, 2, 3}, {}); }), "bad_magic");
}

TEST(SyncRoundTest, RegistrationWindowExtendsWhenShort) {
  Harness h;
  const auto id = h.create(SyncSpec(3));
  h.join(id, "a");
  h.clock.advance(1500);
  h.orch->tick();
  EXPECT_EQ(h.orch->task_view(id)["phase"], "selecting");
  h.join(id, "b");
  h.join(id, "c");
  EXPECT_EQ(h.orch->task_view(id)["phase"], "collecting");
}

TEST(SyncRoundTest, OverProvisionedPoolSelectsAtDeadline) {
  Harness h;
  auto spec = SyncSpec(2);
  spec.over_provision = 2.0;
  const auto id = h.create(spec);
  auto a = h.join(id, "a");
  h.join(id, "b");
  h.join(id, "c");
  EXPECT_EQ(h.instruction(id, a), "wait");
  h.clock.advance(1000);
  h.orch->tick();
  EXPECT_EQ(h.orch->task_view(id)["participants"]["in_progress"], 2);
  EXPECT_EQ(h.orch->task_view(id)["phase"], "collecting");
}

TEST(SyncRoundTest, GlobalDpAddsNoiseOnce) {
  Harness h;
  auto spec = SyncSpec(2);
  spec.dp = {privacy::DpMode::kGlobal, 1.0, 1.0, 1e-5, std::nullopt};
  const auto id = h.create(spec);
  auto a = h.join(id, "a");
  auto b = h.join(id, "b");
  h.submit(id, a, Zeros(3));
  h.submit(id, b, Zeros(3));
  const auto m = h.current_model(id);
  EXPECT_GT(m.norm(), 0.0);
  const auto p = h.orch->privacy_report(id);
  EXPECT_EQ(p["steps"], 1);
  EXPECT_NEAR(p["epsilon"].get<double>(), privacy::epsilon({1, 1.0, 1.0}, 1e-5).epsilon, 1e-12);
}

TEST(SyncRoundTest, ExternalAggregatorFailureFailsTask) {
  Harness h;
  auto spec = SyncSpec(1);
  spec.strategy.kind = aggregation::StrategyKind::kExternal;
  spec.strategy.command = {"sh", "-c", "echo boom >&2; exit 3"};
  const auto id = h.create(spec);
  h.submit(id, h.join(id, "a"), Zeros(3));
  const auto v = h.orch->task_view(id);
  EXPECT_EQ(v["lifecycle"], "failed");
  EXPECT_NE(v["diagnostic"].get<std::string>().find("aggregator_failed"), std::string::npos);
  EXPECT_NE(v["diagnostic"].get<std::string>().find("boom"), std::string::npos);
}

TEST(SyncRoundTest, DuplicateTaskNameRejected) {
  Harness h;
  h.create(SyncSpec());
  EXPECT_EQ(ErrorCode([&] { h.create(SyncSpec()); }), "duplicate_task");
}

// ---- secure aggregation rounds ---------------------------------------------

struct SaClient {
  std::string name;
  secagg::KeyPair kp = secagg::generate_keypair();
  std::string ticket;
};

void SaSubmit(Harness& h, const std::string& id, const SaClient& c, const ModelVector& x) {
  const auto cfg = h.orch->round_config(id, c.ticket);
  ASSERT_TRUE(cfg["ready"].get<bool>());
  secagg::GroupRoster roster;
  for (const auto& r : cfg["roster"]) {
    roster.members.push_back({r["participant_index"].get<std::uint64_t>(), "",
                              crypto::key_from(crypto::from_base64(r["public_key_b64"].get<std::string>()))});
  }
  const auto me = cfg["participant_index"].get<std::uint64_t>();
  const QuantParams qp{cfg["secagg"]["clip_range"].get<double>(), cfg["secagg"]["bits"].get<int>(),
                       cfg["secagg"]["group_max"].get<std::uint32_t>()};
  const auto seeds = secagg::derive_group_seeds(c.kp, me, roster, id, cfg["round"].get<std::uint32_t>());
  const auto masked = secagg::apply_masks(quantize(x, qp), me, roster.members.size(), seeds);
  h.orch->submit_update(id, c.ticket, encode_payload(masked), {});
}

TEST(SecureRoundTest, TwoGroupsAggregateWithinCodecTolerance) {
  Harness h;
  auto spec = SyncSpec(8, 1);
  spec.secagg = {true, 2.0, 16};
  spec.vg_size = 4;
  const auto id = h.create(spec, 5);
  std::vector<SaClient> cs(8);
  for (int i = 0; i < 8; ++i) {
    cs[i].name = "c" + std::to_string(i);
    cs[i].ticket = h.join(id, cs[i].name, cs[i].kp.public_key);
  }
  // Roster withheld until everyone in the group has checked in.
  EXPECT_FALSE(h.orch->round_config(id, cs[0].ticket)["ready"].get<bool>());
  EXPECT_TRUE(h.orch->round_config(id, cs[0].ticket)["roster"].empty());
  for (auto& c : cs) h.orch->round_config(id, c.ticket);
  EXPECT_EQ(h.orch->task_view(id)["phase"], "collecting");
  for (auto& c : cs) SaSubmit(h, id, c, ModelVector::Ones(5));
  EXPECT_EQ(h.lifecycle(id), "completed");
  const auto m = h.current_model(id);
  for (Eigen::Index i = 0; i < 5; ++i) EXPECT_NEAR(m[i], 1.0, 2.0 * 2.0 / 65535.0);
}

TEST(SecureRoundTest, MissingKeyDissolvesGroupThenRetries) {
  Harness h;
  auto spec = SyncSpec(4, 1);
  spec.secagg = {true, 1.0, 8};
  spec.vg_size = 2;
  spec.retry_limit = 3;
  const auto id2 = h.create(spec);
  std::vector<SaClient> cs(4);
  for (int i = 0; i < 4; ++i) cs[i].ticket = h.join(id2, "c" + std::to_string(i), cs[i].kp.public_key);
  for (int i = 1; i < 4; ++i) h.orch->round_config(id2, cs[i].ticket);
  h.clock.advance(501);
  h.orch->tick();
  int regroup = 0;
  for (int i = 0; i < 4; ++i) regroup += h.instruction(id2, cs[i].ticket) == "regroup";
  EXPECT_EQ(regroup, 2);
  // The surviving group submits; the round completes without the dissolved one.
  for (int i = 1; i < 4; ++i) {
    if (h.instruction(id2, cs[i].ticket) == "proceed") SaSubmit(h, id2, cs[i], ModelVector::Ones(3));
  }
  EXPECT_EQ(h.lifecycle(id2), "completed");
  const auto m = h.orch->metrics(id2)["rounds"][0];
  EXPECT_EQ(m["groups_discarded"], 1);
  EXPECT_EQ(m["clients_reported"], 2);
  EXPECT_EQ(ErrorCode([&] { h.orch->round_config(id2, cs[0].ticket); }), "terminal");
}

TEST(SecureRoundTest, AllGroupsDiscardedRetriesThenFails) {
  Harness h;
  auto spec = SyncSpec(2, 1);
  spec.secagg = {true, 1.0, 8};
  spec.vg_size = 2;
  const auto id = h.create(spec);
  for (std::uint32_t attempt = 0; attempt <= spec.retry_limit; ++attempt) {
    SaClient a, b;
    a.ticket = h.join(id, "a", a.kp.public_key);
    b.ticket = h.join(id, "b", b.kp.public_key);
    h.orch->round_config(id, a.ticket);
    h.orch->round_config(id, b.ticket);
    SaSubmit(h, id, a, ModelVector::Ones(3));  // b drops out after key exchange
    h.clock.advance(2001);
    h.orch->tick();
    EXPECT_EQ(h.instruction(id, a.ticket), attempt < spec.retry_limit ? "stale" : "abort");
  }
  const auto v = h.orch->task_view(id);
  EXPECT_EQ(v["lifecycle"], "failed");
  EXPECT_EQ(h.orch->metrics(id)["rounds"].size(), 4u);
}

TEST(DropoutTest, RandomKillsAlwaysResolve) {
  // Kill k of n clients at a random protocol step; the round must settle to
  // completed, a retry, or failed once deadlines pass. Never left hanging.
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 60; ++trial) {
    Harness h;
    const std::size_t n = 4 + rng() % 9;
    auto spec = SyncSpec(n, 1);
    spec.retry_limit = 1;
    spec.secagg.enabled = rng() % 2;
    spec.vg_size = 2 + rng() % (n / 2 - 1);
    const auto id = h.create(spec, 2);
    const std::size_t k = rng() % (n + 1);
    for (int attempt = 0; attempt < 3 && h.lifecycle(id) == "running"; ++attempt) {
      std::vector<SaClient> cs(n);
      for (std::size_t i = 0; i < n; ++i) {
        cs[i].name = "c" + std::to_string(i);
        cs[i].ticket = h.join(id, cs[i].name, cs[i].kp.public_key);
      }
      std::vector<int> dies_after(n, 3);  // 3 = survives
      for (std::size_t i = 0; i < k; ++i) dies_after[rng() % n] = static_cast<int>(rng() % 2);
      for (std::size_t i = 0; i < n; ++i) {
        if (dies_after[i] >= 1) ErrorCode([&] { h.orch->round_config(id, cs[i].ticket); });
      }
      for (std::size_t i = 0; i < n; ++i) {
        if (dies_after[i] < 3) continue;
        if (h.instruction(id, cs[i].ticket) != "proceed") continue;
        if (spec.secagg.enabled) {
          if (h.orch->round_config(id, cs[i].ticket)["ready"].get<bool>()) {
            SaSubmit(h, id, cs[i], ModelVector::Ones(2));
          }
        } else {
          h.submit(id, cs[i].ticket, ModelVector::Ones(2));
        }
      }
      for (int step = 0; step < 4; ++step) {
        h.clock.advance(1000);
        h.orch->tick();
      }
    }
    const auto state = h.lifecycle(id);
    EXPECT_TRUE(state == "completed" || state == "failed") << "trial " << trial << " " << state;
    if (k == 0) EXPECT_EQ(state, "completed");
  }
}

// ---- async -----------------------------------------------------------------

TEST(AsyncTest, TenFlushesGiveTenVersions) {
  Harness h;
  auto spec = SyncSpec(32, 10);
  spec.mode = TaskMode::kAsync;
  spec.async_buffer_size = 32;
  const auto id = h.create(spec, 4);
  int submitted = 0;
  for (int i = 0; h.lifecycle(id) == "running"; ++i) {
    const auto t = h.join(id, "c" + std::to_string(i % 40));
    h.submit(id, t, ModelVector::Constant(4, 1.0));
    ++submitted;
  }
  EXPECT_EQ(submitted, 320);
  EXPECT_EQ(h.orch->task_view(id)["model_version"], 10);
  EXPECT_EQ(h.orch->metrics(id)["rounds"].size(), 10u);
  EXPECT_EQ(h.current_model(id), ModelVector::Constant(4, 10.0));
}

TEST(AsyncTest, InFlightCapAndStalenessDiscount) {
  Harness h;
  auto spec = SyncSpec(2, 2);
  spec.mode = TaskMode::kAsync;
  spec.async_buffer_size = 1;
  spec.staleness_discount = true;
  const auto id = h.create(spec, 1);
  const auto a = h.join(id, "a");
  const auto b = h.join(id, "b");
  EXPECT_EQ(ErrorCode([&] { h.join(id, "c"); }), "round_full");
  EXPECT_EQ(ErrorCode([&] { h.join(id, "a"); }), "already_registered");
  h.submit(id, a, ModelVector::Constant(1, 1.0));  // fresh: weight 1
  EXPECT_EQ(h.instruction(id, a), "done");
  h.submit(id, b, ModelVector::Constant(1, 1.0));  // one version stale: weight 1/2
  EXPECT_EQ(h.current_model(id)[0], 1.5);
  EXPECT_EQ(h.lifecycle(id), "completed");
}

TEST(AsyncTest, ExpiredTicketsFreeSlots) {
  Harness h;
  auto spec = SyncSpec(1, 1);
  spec.mode = TaskMode::kAsync;
  spec.async_buffer_size = 1;
  const auto id = h.create(spec, 1);
  const auto a = h.join(id, "a");
  EXPECT_EQ(ErrorCode([&] { h.join(id, "b"); }), "round_full");
  h.clock.advance(2001);
  h.orch->tick();
  EXPECT_EQ(ErrorCode([&] { h.submit(id, a, Zeros(1)); }), "expired_ticket");
  EXPECT_NO_THROW(h.join(id, "b"));
}

// ---- persistence -----------------------------------------------------------

std::map<std::string, Bytes> Dump(const KeyValueStore& s) {
  std::map<std::string, Bytes> out;
  for (const auto& k : s.list("")) out[k] = *s.get(k);
  return out;
}

TEST(PersistenceTest, SnapshotRestoreSnapshotIsByteIdentical) {
  Harness h;
  auto spec = SyncSpec(2, 3);
  spec.dp = {privacy::DpMode::kLocal, 0.5, 0.08, 1e-5, 100};
  const auto id = h.create(spec);
  for (int r = 0; r < 2; ++r) {
    auto a = h.join(id, "a");
    auto b = h.join(id, "b");
    h.clock.advance(37);
    h.submit(id, a, ModelVector::Constant(3, 0.1 * (r + 1)), 0.25);
    h.submit(id, b, ModelVector::Constant(3, 0.3), 0.5);
  }
  auto spec2 = SyncSpec(4, 1);
  spec2.task_name = "paused";
  const auto id2 = h.create(spec2);
  h.clock.advance(10);
  h.orch->control(id2, LifecycleEvent::kPause);

  MemoryStore first;
  h.orch->snapshot(first);
  EXPECT_EQ(Dump(first), Dump(*h.store));

  OrchestratorConfig cfg;
  cfg.clock = h.clock.fn();
  cfg.store = h.store;
  Orchestrator restored(cfg);
  restored.restore();
  MemoryStore second;
  restored.snapshot(second);
  EXPECT_EQ(Dump(first), Dump(second));
  EXPECT_EQ(restored.task_view(id)["round"], 2);
  EXPECT_EQ(restored.task_view(id)["phase"], "selecting");
  EXPECT_EQ(restored.task_view(id2)["lifecycle"], "paused");
  EXPECT_EQ(restored.metrics(id), h.orch->metrics(id));
}

TEST(PersistenceTest, RestartMidRoundRestartsFromSelecting) {
  Harness h;
  const auto id = h.create(SyncSpec(2, 1));
  auto a = h.join(id, "a");
  h.join(id, "b");
  h.submit(id, a, Zeros(3));
  OrchestratorConfig cfg;
  cfg.clock = h.clock.fn();
  cfg.store = h.store;
  Orchestrator restored(cfg);
  restored.restore();
  EXPECT_EQ(restored.task_view(id)["phase"], "selecting");
  EXPECT_EQ(restored.task_view(id)["participants"]["submitted"], 0);
  EXPECT_EQ(ErrorCode([&] { restored.submit_update(id, a, encode_payload(Zeros(3)), {}); }),
            "bad_ticket");
  EXPECT_NO_THROW(restored.register_client(id, Client("a"), {}));
}

TEST(PersistenceTest, CorruptBlobMarksTaskFailed) {
  Harness h;
  const auto id = h.create(SyncSpec(1, 2));
  h.submit(id, h.join(id, "a"), ModelVector::Ones(3));
  auto blob = *h.store->get("tasks/" + id + "/models/v1.bin");
  blob.resize(blob.size() - 3);
  h.store->put("tasks/" + id + "/models/v1.bin", blob);

  const auto id2 = h.create([] {
    auto s = SyncSpec(1, 1);
    s.task_name = "garbled";
    return s;
  }());
  h.store->put("tasks/" + id2 + "/state.json", view_of("{not json"));

  OrchestratorConfig cfg;
  cfg.clock = h.clock.fn();
  cfg.store = h.store;
  Orchestrator restored(cfg);
  restored.restore();
  const auto v = restored.task_view(id);
  EXPECT_EQ(v["lifecycle"], "failed");
  EXPECT_NE(v["diagnostic"].get<std::string>().find("truncated"), std::string::npos);
  EXPECT_EQ(restored.task_view(id2)["lifecycle"], "failed");
  EXPECT_NE(restored.task_view(id2)["diagnostic"].get<std::string>().find("corrupt_state"),
            std::string::npos);
  EXPECT_EQ(restored.task_ids().size(), 2u);
}

TEST(PersistenceTest, FileStoreLayout) {
  char tmpl[] = "/tmp/florinet-store-XXXXXX";
  ASSERT_NE(mkdtemp(tmpl), nullptr);
  const std::filesystem::path root(tmpl);
  {
    OrchestratorConfig cfg;
    cfg.store = std::make_shared<FileStore>(root);
    Orchestrator orch(cfg);
    const auto id = orch.create_task(SyncSpec(1, 1), encode_payload(Zeros(2)));
    orch.tick();
    orch.submit_update(id, orch.register_client(id, Client("a"), {}),
                       encode_payload(ModelVector(ModelVector::Ones(2))), {});
    for (const auto* leaf : {"spec.json", "state.json", "metrics.jsonl", "models/v0.bin", "models/v1.bin"}) {
      EXPECT_TRUE(std::filesystem::is_regular_file(root / "tasks" / id / leaf)) << leaf;
    }
  }
  std::filesystem::remove_all(root);
}

}  // namespace
}  // namespace florinet
