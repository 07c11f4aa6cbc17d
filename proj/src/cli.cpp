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

#include "florinet/cli.hpp"

#include <CLI11.hpp>
#include <pthread.h>
#include <spdlog/spdlog.h>

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "florinet/admin_client.hpp"
#include "florinet/fileio.hpp"
#include "florinet/server.hpp"
#include "florinet/simulator.hpp"

namespace florinet::cli {
namespace {

constexpr int kOk = 0;
constexpr int kApiError = 1;
constexpr int kUsage = 2;

std::string env_or(const char* name, std::string fallback) {
  const char* v = std::getenv(name);
  return v && *v ? std::string(v) : fallback;
}

std::string cell(const json& v) {
  if (v.is_null()) return "-";
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_float()) {
    std::ostringstream s;
    s << std::setprecision(6) << v.get<double>();
    return s.str();
  }
  return v.dump();
}

void print_table(std::ostream& out, const std::vector<std::string>& header,
                 const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width(header.size());
  for (std::size_t i = 0; i < header.size(); ++i) width[i] = header[i].size();
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size() && i < width.size(); ++i) width[i] = std::max(width[i], r[i].size());
  }
  auto line = [&](const std::vector<std::string>& r) {
    for (std::size_t i = 0; i < header.size(); ++i) {
      const auto& v = i < r.size() ? r[i] : std::string();
      out << v;
      if (i + 1 < header.size()) out << std::string(width[i] - v.size() + 2, ' ');
    }
    out << '\n';
  };
  line(header);
  for (const auto& r : rows) line(r);
}

void print_csv(std::ostream& out, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
  auto line = [&](const std::vector<std::string>& r) {
    for (std::size_t i = 0; i < r.size(); ++i) out << (i ? "," : "") << (r[i] == "-" ? "" : r[i]);
    out << '\n';
  };
  line(header);
  for (const auto& r : rows) line(r);
}

/// Accepts an encoded model payload or a JSON array of numbers.
Bytes load_model(const std::string& path) {
  const auto bytes = read_file(path);
  if (bytes.size() >= 4 && std::equal(bytes.begin(), bytes.begin() + 4, "FLPV")) return bytes;
  try {
    const auto values = json::parse(to_string(bytes)).get<std::vector<double>>();
    return encode_payload(ModelVector(Eigen::Map<const ModelVector>(values.data(),
                                                                    static_cast<Eigen::Index>(values.size()))));
  } catch (const json::exception&) {
    throw Error("bad_request", path + ": expected an encoded model or a JSON array of numbers");
  }
}

std::vector<std::string> metric_header(const json& rounds, std::vector<std::string>& eval_keys) {
  std::set<std::string> keys;
  for (const auto& r : rounds) {
    if (auto it = r.find("eval"); it != r.end() && it->is_object()) {
      for (const auto& [k, _] : it->items()) keys.insert(k);
    }
  }
  eval_keys.assign(keys.begin(), keys.end());
  std::vector<std::string> h{"round", "attempt", "status", "duration_ms", "selected", "reported",
                             "dropped", "mean_loss", "epsilon"};
  for (const auto& k : eval_keys) h.push_back("eval_" + k);
  return h;
}

struct Options {
  std::string endpoint;
  std::string admin_key;
  bool json_out = false;
  std::string log_level = "warn";
};

struct SimOptions {
  std::size_t n = 32;
  std::size_t len = 5;
  bool secagg = false;
  std::uint64_t vg = 8;
  int bits = 16;
  double clip_range = 2.0;
  std::uint64_t seed = 1;
  std::uint64_t rounds = 10;
  std::string dp = "off";
  double clip_norm = 0.5;
  double noise = 0.08;
  bool async = false;
  std::uint64_t buffer = 32;
  int straggler_ms = 0;
  std::vector<std::size_t> ns{32, 64, 128, 256, 512, 1024};
  std::string out_dir;
  bool external = false;
};

void write_result(const std::string& dir, const std::string& name, const std::string& content) {
  if (dir.empty()) return;
  std::filesystem::create_directories(dir);
  write_file(std::filesystem::path(dir) / name, view_of(content));
}

int serve(const ServerConfig& base, const std::string& bind, std::ostream& out) {
  ServerConfig sc = base;
  if (!bind.empty()) {
    const auto colon = bind.rfind(':');
    if (colon == std::string::npos) throw Error("usage", "--bind expects host:port");
    sc.host = bind.substr(0, colon);
    sc.port = std::stoi(bind.substr(colon + 1));
  }
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);
  Server server(sc);
  server.start();
  out << "florinet serving on " << server.base_url() << std::endl;
  int sig = 0;
  sigwait(&set, &sig);
  spdlog::info("signal {}; shutting down", sig);
  server.stop();
  return kOk;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"florinet: federated learning orchestration, client simulation and administration"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand; inherited by every subcommand below
  Options o;
  o.endpoint = env_or("FLORINET_ENDPOINT", "http://127.0.0.1:8080");
  o.admin_key = env_or("FLORINET_ADMIN_KEY", "");
  app.add_option("--endpoint", o.endpoint, "Server URL (FLORINET_ENDPOINT)");
  app.add_option("--admin-key", o.admin_key, "Admin API key (FLORINET_ADMIN_KEY)");
  app.add_flag("--json", o.json_out, "Print raw API responses");
  app.add_option("--log-level", o.log_level, "trace, debug, info, warn, error")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));

  // task ...
  auto* task = app.add_subcommand("task", "Create, inspect and control tasks");
  task->require_subcommand(1);
  std::string spec_path, model_path, task_id;
  auto* create = task->add_subcommand("create", "Create a task from a spec file and an initial model");
  create->add_option("--spec", spec_path, "TaskSpec JSON file")->required()->check(CLI::ExistingFile);
  create->add_option("--model", model_path, "Encoded model or JSON array")->required()->check(CLI::ExistingFile);
  auto* list = task->add_subcommand("list", "List tasks");
  auto add_id = [&](CLI::App* c) {
    c->add_option("id", task_id, "Task id")->required();
    return c;
  };
  auto* show = add_id(task->add_subcommand("show", "Show one task"));
  auto* pause = add_id(task->add_subcommand("pause", "Pause a running task"));
  auto* resume = add_id(task->add_subcommand("resume", "Resume a paused task"));
  auto* cancel = add_id(task->add_subcommand("cancel", "Cancel a task"));
  bool csv = false;
  auto* metrics = add_id(task->add_subcommand("metrics", "Per-round metrics"));
  metrics->add_flag("--csv", csv, "CSV instead of a table");
  auto* privacy = add_id(task->add_subcommand("privacy", "Privacy accountant report"));

  // sim ...
  auto* sim = app.add_subcommand("sim", "Run simulated clients");
  sim->require_subcommand(1);
  SimOptions so;
  auto common = [&](CLI::App* c) {
    c->add_option("--seed", so.seed, "Seed");
    c->add_option("--out", so.out_dir, "Directory for JSON and CSV reports");
    c->add_flag("--external", so.external, "Use --endpoint instead of an in-process server");
  };
  auto* dummy = sim->add_subcommand("dummy", "All-ones task, one round");
  dummy->add_option("-n,--clients", so.n, "Client count")->check(CLI::PositiveNumber);
  dummy->add_option("--len", so.len, "Vector length")->check(CLI::PositiveNumber);
  dummy->add_flag("--secagg", so.secagg, "Secure aggregation");
  dummy->add_option("--vg", so.vg, "Virtual group size");
  dummy->add_option("--bits", so.bits, "Quantization bits");
  dummy->add_option("--clip-range", so.clip_range, "Quantization clip range");
  common(dummy);
  auto* train = sim->add_subcommand("train", "Synthetic logistic-regression task");
  train->add_option("-n,--clients", so.n, "Clients (and clients per round)")->check(CLI::PositiveNumber);
  train->add_option("--rounds", so.rounds, "Rounds (flushes in async mode)")->check(CLI::PositiveNumber);
  train->add_option("--dp", so.dp, "off, local or global")->check(CLI::IsMember({"off", "local", "global"}));
  train->add_option("--clip-norm", so.clip_norm, "DP clip norm C");
  train->add_option("--noise", so.noise, "DP noise multiplier");
  train->add_flag("--async", so.async, "Buffered asynchronous aggregation");
  train->add_option("--buffer", so.buffer, "Async buffer size K");
  train->add_option("--straggler-ms", so.straggler_ms, "Max injected training delay")->check(CLI::NonNegativeNumber);
  common(train);
  auto* sweep = sim->add_subcommand("sweep", "Dummy task for each client count");
  sweep->add_option("--ns", so.ns, "Client counts")->delimiter(',');
  sweep->add_flag("--secagg", so.secagg, "Secure aggregation");
  common(sweep);

  // serve
  auto* srv = app.add_subcommand("serve", "Run the orchestration server");
  ServerConfig sc;
  std::string bind = "127.0.0.1:8080";
  std::string data_root, ui_dir;
  srv->add_option("--bind", bind, "host:port");
  srv->add_option("--data-root", data_root, "Persistence directory (in-memory when absent)");
  srv->add_option("--client-key", sc.client_key, "Client API key");
  srv->add_option("--ui-dir", ui_dir, "Dashboard assets served under /ui/");
  srv->add_option("--threads", sc.threads, "HTTP worker threads")->check(CLI::PositiveNumber);

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const CLI::App* sub = &app;
    for (auto* s = sub; s; ) {
      const auto subs = s->get_subcommands();
      if (subs.empty()) break;
      sub = s = subs.front();
    }
    err << sub->help();
    return kUsage;
  }
  spdlog::set_level(spdlog::level::from_str(o.log_level));

  try {
    if (srv->parsed()) {
      sc.admin_key = o.admin_key;
      sc.data_root = data_root;
      sc.ui_dir = ui_dir;
      return serve(sc, bind, out);
    }

    if (sim->parsed()) {
      const std::string endpoint = so.external ? o.endpoint : "";
      if (dummy->parsed() || sweep->parsed()) {
        sim::DummyOptions d;
        d.secagg = so.secagg;
        d.vg_size = so.vg;
        d.bits = so.bits;
        d.clip_range = so.clip_range;
        d.seed = so.seed;
        d.endpoint = endpoint;
        d.admin_key = o.admin_key;
        if (dummy->parsed()) {
          const auto r = sim::run_dummy(so.n, so.len, d);
          const auto j = r.to_json();
          write_result(so.out_dir, "dummy.json", j.dump(2) + "\n");
          if (o.json_out) {
            out << j.dump(2) << "\n";
          } else {
            out << "task " << r.task_id << " " << r.lifecycle << "\n";
            out << "aggregate mean: " << cell(j["aggregate"]) << "\n";
            if (!r.rounds.empty()) out << "iteration duration: " << r.rounds.back().duration_ms << " ms\n";
          }
          return r.lifecycle == "completed" ? kOk : kApiError;
        }
        const auto rows = sim::scaling_sweep(so.ns, d);
        const auto text = sim::sweep_csv(rows);
        write_result(so.out_dir, "sweep.csv", text);
        if (o.json_out) {
          json j = json::array();
          for (const auto& r : rows) {
            j.push_back({{"n", r.n},
                         {"duration_ms", r.duration_ms ? json(*r.duration_ms) : json(nullptr)},
                         {"wall_ms", r.wall_ms},
                         {"error", r.error}});
          }
          out << j.dump(2) << "\n";
        } else {
          out << text;
        }
        for (const auto& r : rows) {
          if (!r.error.empty()) return kApiError;
        }
        return kOk;
      }
      sim::SimConfig cfg;
      cfg.n_clients = so.n;
      cfg.trainer = sim::TrainerKind::kLogistic;
      cfg.seed = so.seed;
      cfg.blobs.seed = so.seed;
      cfg.endpoint = endpoint;
      cfg.admin_key = o.admin_key;
      cfg.straggler_max = std::chrono::milliseconds(so.straggler_ms);
      cfg.ramp = std::chrono::milliseconds(5);
      cfg.task = sim::training_task(so.n, so.rounds);
      cfg.task.dp.mode = privacy::dp_mode_from(so.dp);
      cfg.task.dp.clip_norm = so.clip_norm;
      cfg.task.dp.noise_multiplier = so.noise;
      if (so.async) {
        cfg.task.mode = TaskMode::kAsync;
        cfg.task.async_buffer_size = so.buffer;
      }
      const auto r = sim::run_training(cfg);
      const auto j = r.to_json();
      write_result(so.out_dir, "train.json", j.dump(2) + "\n");
      if (o.json_out) {
        out << j.dump(2) << "\n";
      } else {
        std::vector<std::vector<std::string>> rows;
        for (const auto& p : j["rounds"]) {
          rows.push_back({cell(p["round"]), cell(p["status"]), cell(p["duration_ms"]),
                          cell(p["clients_reported"]), cell(p["mean_loss"]), cell(p["accuracy"]),
                          cell(p["epsilon"])});
        }
        print_table(out, {"round", "status", "duration_ms", "reported", "mean_loss", "accuracy", "epsilon"}, rows);
        out << "final accuracy: " << cell(j["final_accuracy"]) << (r.diverged ? " (diverged)" : "") << "\n";
      }
      return r.lifecycle == "completed" ? kOk : kApiError;
    }

    AdminClient admin(o.endpoint, o.admin_key);
    auto emit = [&](const json& j) { out << j.dump(2) << "\n"; };
    if (create->parsed()) {
      json spec;
      try {
        spec = json::parse(to_string(read_file(spec_path)));
      } catch (const json::exception& e) {
        throw Error("invalid_spec", spec_path + ": " + e.what());
      }
      const auto id = admin.create_task(spec, load_model(model_path));
      if (o.json_out) {
        emit({{"task_id", id}});
      } else {
        out << id << "\n";
      }
      return kOk;
    }
    if (list->parsed()) {
      const auto j = admin.list_tasks();
      if (o.json_out) return emit(j), kOk;
      std::vector<std::vector<std::string>> rows;
      for (const auto& t : j.at("tasks")) {
        rows.push_back({cell(t["task_id"]), cell(t["task_name"]), cell(t["mode"]), cell(t["lifecycle"]),
                        cell(t["phase"]), cell(t["round"]) + "/" + cell(t["total_rounds"]), cell(t["clients"])});
      }
      print_table(out, {"ID", "NAME", "MODE", "LIFECYCLE", "PHASE", "ROUND", "CLIENTS"}, rows);
      return kOk;
    }
    if (show->parsed()) {
      const auto j = admin.task(task_id);
      if (o.json_out) return emit(j), kOk;
      std::vector<std::vector<std::string>> rows;
      for (const char* k : {"task_id", "task_name", "app_name", "workflow_name", "mode", "lifecycle", "phase",
                            "round", "total_rounds", "attempt", "clients_per_round", "clients", "model_version",
                            "model_length", "diagnostic"}) {
        rows.push_back({k, cell(j.value(k, json(nullptr)))});
      }
      rows.push_back({"participants", j["participants"].dump()});
      rows.push_back({"epsilon", cell(j["privacy"]["epsilon"])});
      print_table(out, {"FIELD", "VALUE"}, rows);
      out << "\nspec:\n" << j["spec"].dump(2) << "\n";
      return kOk;
    }
    for (auto* c : {pause, resume, cancel}) {
      if (c->parsed()) {
        const auto j = admin.control(task_id, c->get_name());
        if (o.json_out) return emit(j), kOk;
        out << task_id << " " << j.at("lifecycle").get<std::string>() << "\n";
        return kOk;
      }
    }
    if (metrics->parsed()) {
      const auto j = admin.metrics(task_id);
      if (o.json_out) return emit(j), kOk;
      std::vector<std::string> eval_keys;
      const auto header = metric_header(j.at("rounds"), eval_keys);
      std::vector<std::vector<std::string>> rows;
      for (const auto& r : j.at("rounds")) {
        std::vector<std::string> row{cell(r["round"]), cell(r["attempt"]), cell(r["status"]),
                                     cell(r["duration_ms"]), cell(r["clients_selected"]),
                                     cell(r["clients_reported"]), cell(r["clients_dropped"]),
                                     cell(r["mean_loss"]), cell(r["epsilon"])};
        for (const auto& k : eval_keys) {
          row.push_back(r.contains("eval") && r["eval"].contains(k) ? cell(r["eval"][k]) : "-");
        }
        rows.push_back(std::move(row));
      }
      if (csv) {
        print_csv(out, header, rows);
      } else {
        print_table(out, header, rows);
      }
      return kOk;
    }
    if (privacy->parsed()) {
      const auto j = admin.privacy(task_id);
      if (o.json_out) return emit(j), kOk;
      std::vector<std::vector<std::string>> rows;
      for (const auto& [k, v] : j.items()) rows.push_back({k, cell(v)});
      print_table(out, {"FIELD", "VALUE"}, rows);
      return kOk;
    }
  } catch (const Error& e) {
    if (e.code() == "usage") {
      err << "error: " << e.what() << "\n";
      return kUsage;
    }
    if (o.json_out) {
      err << json{{"code", e.code()}, {"message", e.what()}, {"retryable", e.retryable()}}.dump() << "\n";
    } else {
      err << "error: " << e.code() << ": " << e.what() << "\n";
    }
    return kApiError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kApiError;
  }
  err << app.help();
  return kUsage;
}

}  // namespace florinet::cli
