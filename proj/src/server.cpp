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

#include "florinet/server.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include <charconv>
#include <map>

#include "florinet/crypto.hpp"
#include "florinet/error.hpp"

namespace florinet {
namespace {

constexpr const char* kJson = "application/json";

const std::map<std::string, int>& status_table() {
  static const std::map<std::string, int> table = [] {
    std::map<std::string, int> t;
    for (const auto* c : {"bad_request", "invalid_spec", "invalid_params", "invalid_argument",
                          "invalid_client", "bad_key", "non_finite", "bad_magic",
                          "version_mismatch", "bad_header", "empty", "truncated", "trailing_bytes",
                          "element_range", "bad_kind", "wrong_kind", "length_mismatch",
                          "params_mismatch", "protocol_error", "empty_aggregate",
                          "headroom_exceeded"}) {
      t[c] = 400;
    }
    for (const auto* c : {"unauthorized", "bad_ticket"}) t[c] = 401;
    for (const auto* c : {"attestation", "round_full", "not_eligible"}) t[c] = 403;
    t["not_found"] = 404;
    for (const auto* c : {"duplicate", "duplicate_task", "late", "terminal", "illegal_transition",
                          "not_selected", "already_registered", "not_collecting", "paused"}) {
      t[c] = 409;
    }
    for (const auto* c : {"regroup", "stale_ticket", "expired_ticket"}) t[c] = 410;
    t["payload_too_large"] = 413;
    return t;
  }();
  return table;
}

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), kJson);
}

void send_error(httplib::Response& res, const std::string& code, const std::string& message,
                bool retryable) {
  send_json(res, http_status_for(code),
            {{"code", code}, {"message", message}, {"retryable", retryable}});
}

template <typename Fn>
void guarded(httplib::Response& res, Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    send_error(res, e.code(), e.what(), e.retryable());
  } catch (const json::exception& e) {
    send_error(res, "bad_request", std::string("malformed JSON: ") + e.what(), false);
  } catch (const std::exception& e) {
    spdlog::error("internal error: {}", e.what());
    send_error(res, "internal", e.what(), true);
  }
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) throw Error("bad_request", "request body must be JSON");
  try {
    return json::parse(req.body);
  } catch (const json::exception& e) {
    throw Error("bad_request", std::string("malformed JSON: ") + e.what());
  }
}

std::string require_param(const httplib::Request& req, const char* name) {
  if (!req.has_param(name)) throw Error("bad_request", std::string("missing query parameter ") + name);
  return req.get_param_value(name);
}

std::uint64_t parse_u64(const std::string& s, const char* what) {
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || p != s.data() + s.size()) {
    throw Error("bad_request", std::string(what) + " must be a non-negative integer");
  }
  return v;
}

std::optional<Instruction> instruction_from(const std::string& s) {
  for (auto i : {Instruction::kWait, Instruction::kProceed, Instruction::kNotSelected,
                 Instruction::kRegroup, Instruction::kSubmitted, Instruction::kDone,
                 Instruction::kAbort, Instruction::kStale}) {
    if (to_string(i) == s) return i;
  }
  throw Error("bad_request", "unknown instruction '" + s + "'");
}

constexpr const char* kPlaceholderUi = R"(<!doctype html>
<html><head><meta charset="utf-8"><title>florinet</title></head>
<body><h1>florinet</h1>
<p>The dashboard assets are not installed on this server. Start the server with
<code>--ui-dir</code> pointing at a dashboard build, or use the admin API directly:
<code>/admin/v1/tasks</code>.</p></body></html>
)";

}  // namespace

int http_status_for(const std::string& code) {
  const auto& t = status_table();
  auto it = t.find(code);
  return it == t.end() ? 500 : it->second;
}

Server::Server(ServerConfig config) : config_(std::move(config)) {
  if (!config_.data_root.empty()) {
    config_.orchestrator.store = std::make_shared<FileStore>(config_.data_root);
  }
  orch_ = std::make_unique<Orchestrator>(config_.orchestrator);
  if (!config_.data_root.empty()) orch_->restore();
  http_ = std::make_unique<httplib::Server>();
  const auto threads = std::max<std::size_t>(config_.threads, 2);
  http_->new_task_queue = [threads] { return new httplib::ThreadPool(threads); };
  http_->set_keep_alive_max_count(1u << 20);
  http_->set_keep_alive_timeout(static_cast<time_t>(config_.keep_alive_timeout.count()));
  http_->set_read_timeout(std::chrono::seconds(60));
  http_->set_write_timeout(std::chrono::seconds(60));
  http_->set_payload_max_length(config_.max_payload_bytes);
  install_routes();
}

Server::~Server() { stop(); }

std::string Server::base_url() const {
  return "http://" + config_.host + ":" + std::to_string(port_);
}

void Server::install_routes() {
  auto& s = *http_;
  auto* orch = orch_.get();
  const auto admin_key = config_.admin_key;
  const auto client_key = config_.client_key;
  const auto max_wait = config_.max_wait;

  s.set_pre_routing_handler([admin_key, client_key](const httplib::Request& req,
                                                    httplib::Response& res) {
    const bool admin = req.path.starts_with("/admin/");
    const bool client = req.path.starts_with("/v1/");
    if (!admin && !client) return httplib::Server::HandlerResponse::Unhandled;
    const auto key = req.get_header_value("X-Florinet-Key");
    const bool ok = admin ? (admin_key.empty() || key == admin_key)
                          : (client_key.empty() || key == client_key ||
                             (!admin_key.empty() && key == admin_key));
    if (ok) return httplib::Server::HandlerResponse::Unhandled;
    send_error(res, "unauthorized", "missing or wrong X-Florinet-Key", false);
    return httplib::Server::HandlerResponse::Handled;
  });

  s.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
    if (!res.body.empty()) return;
    if (res.status == 404) {
      send_error(res, "not_found", "no route for " + req.method + " " + req.path, false);
    } else if (res.status == 413) {
      send_error(res, "payload_too_large", "request body too large", false);
    } else {
      send_json(res, res.status,
                {{"code", "http_" + std::to_string(res.status)},
                 {"message", httplib::status_message(res.status)},
                 {"retryable", res.status >= 500}});
    }
  });

  s.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string what = "unknown error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      what = e.what();
    } catch (...) {
    }
    send_error(res, "internal", what, true);
  });

  s.set_logger([](const httplib::Request& req, const httplib::Response& res) {
    spdlog::debug("{} {} -> {}", req.method, req.path, res.status);
  });

  s.Get("/healthz", [](const httplib::Request&, httplib::Response& res) {
    send_json(res, 200, {{"status", "ok"}});
  });

  auto wait_of = [max_wait](const httplib::Request& req) {
    if (!req.has_param("wait_ms")) return std::chrono::milliseconds(0);
    const auto ms = parse_u64(req.get_param_value("wait_ms"), "wait_ms");
    return std::min(std::chrono::milliseconds(static_cast<std::int64_t>(std::min<std::uint64_t>(ms, 1u << 30))),
                    max_wait);
  };

  // ---- client API ----------------------------------------------------------

  s.Post("/v1/advertise", [orch](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto body = parse_body(req);
      const auto client = body.at("client_info").get<ClientInfo>();
      json offers = json::array();
      for (const auto& o : orch->advertise(client)) {
        offers.push_back({{"task_id", o.task_id}, {"round", o.round}});
      }
      send_json(res, 200, {{"offers", offers}});
    });
  });

  s.Post("/v1/tasks/:id/register", [orch](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto body = parse_body(req);
      const auto client = body.at("client_info").get<ClientInfo>();
      const auto pk = crypto::key_from(crypto::from_base64(body.at("public_key_b64").get<std::string>()));
      const auto ticket = orch->register_client(req.path_params.at("id"), client, pk);
      send_json(res, 200, {{"ticket", ticket}});
    });
  });

  s.Get("/v1/tasks/:id/round-config", [orch, wait_of](const httplib::Request& req,
                                                      httplib::Response& res) {
    guarded(res, [&] {
      send_json(res, 200,
                orch->round_config(req.path_params.at("id"), require_param(req, "ticket"), wait_of(req)));
    });
  });

  auto model_handler = [orch](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto version = parse_u64(req.path_params.at("version"), "version");
      const auto blob = orch->model(req.path_params.at("id"), version);
      res.status = 200;
      res.set_content(std::string(blob.begin(), blob.end()), "application/octet-stream");
    });
  };
  s.Get("/v1/tasks/:id/model/:version", model_handler);
  s.Get("/admin/v1/tasks/:id/model/:version", model_handler);

  s.Post("/v1/tasks/:id/update", [orch](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      ClientMetrics metrics;
      if (req.has_header("X-Florinet-Metrics")) {
        const auto raw = crypto::from_base64(req.get_header_value("X-Florinet-Metrics"));
        try {
          metrics = json::parse(raw.begin(), raw.end()).get<ClientMetrics>();
        } catch (const json::exception& e) {
          throw Error("bad_request", std::string("malformed X-Florinet-Metrics: ") + e.what());
        }
      }
      orch->submit_update(req.path_params.at("id"), require_param(req, "ticket"), view_of(req.body),
                          metrics);
      send_json(res, 200, {{"accepted", true}});
    });
  });

  s.Get("/v1/tasks/:id/status", [orch, wait_of](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      std::optional<Instruction> wait_while;
      if (req.has_param("wait_while")) wait_while = instruction_from(req.get_param_value("wait_while"));
      send_json(res, 200,
                orch->status(req.path_params.at("id"), require_param(req, "ticket"), wait_of(req),
                             wait_while));
    });
  });

  // ---- admin API -----------------------------------------------------------

  s.Post("/admin/v1/tasks", [orch](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      if (!req.is_multipart_form_data() || !req.has_file("spec") || !req.has_file("model")) {
        throw Error("bad_request", "expected multipart form with 'spec' and 'model' parts");
      }
      json spec_json;
      try {
        spec_json = json::parse(req.get_file_value("spec").content);
      } catch (const json::exception& e) {
        throw Error("invalid_spec", std::string("spec is not JSON: ") + e.what());
      }
      const auto spec = spec_json.get<TaskSpec>();
      const auto id = orch->create_task(spec, view_of(req.get_file_value("model").content));
      spdlog::info("created task {} ({}/{}/{})", id, spec.app_name, spec.workflow_name, spec.task_name);
      send_json(res, 201, {{"task_id", id}});
    });
  });

  s.Get("/admin/v1/tasks", [orch](const httplib::Request&, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, {{"tasks", orch->list_tasks()}}); });
  });

  s.Get("/admin/v1/tasks/:id", [orch](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, orch->task_view(req.path_params.at("id"))); });
  });

  s.Get("/admin/v1/tasks/:id/metrics", [orch](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, orch->metrics(req.path_params.at("id"))); });
  });

  s.Get("/admin/v1/tasks/:id/privacy", [orch](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] { send_json(res, 200, orch->privacy_report(req.path_params.at("id"))); });
  });

  s.Post("/admin/v1/tasks/:id/:action", [orch](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const auto& action = req.path_params.at("action");
      const auto event = control_action_from(action);
      if (!event) throw Error("not_found", "unknown action '" + action + "'");
      const auto state = orch->control(req.path_params.at("id"), *event);
      spdlog::info("task {}: {} -> {}", req.path_params.at("id"), action, to_string(state));
      send_json(res, 200, {{"lifecycle", to_string(state)}});
    });
  });

  // ---- dashboard assets ----------------------------------------------------

  bool mounted = false;
  if (!config_.ui_dir.empty()) {
    mounted = s.set_mount_point("/ui", config_.ui_dir.string());
    if (!mounted) spdlog::warn("ui dir {} not found; serving placeholder", config_.ui_dir.string());
  }
  if (!mounted) {
    auto placeholder = [](const httplib::Request&, httplib::Response& res) {
      res.status = 200;
      res.set_content(kPlaceholderUi, "text/html; charset=utf-8");
    };
    s.Get("/ui", placeholder);
    s.Get("/ui/", placeholder);
    s.Get("/ui/index.html", placeholder);
  } else {
    s.Get("/ui", [](const httplib::Request&, httplib::Response& res) { res.set_redirect("/ui/"); });
  }
}

int Server::start() {
  if (running_) return port_;
  if (config_.port == 0) {
    port_ = http_->bind_to_any_port(config_.host);
  } else {
    port_ = http_->bind_to_port(config_.host, config_.port) ? config_.port : -1;
  }
  if (port_ <= 0) {
    throw Error("bind_failed", "cannot bind " + config_.host + ":" + std::to_string(config_.port));
  }
  running_ = true;
  listener_ = std::thread([this] { http_->listen_after_bind(); });
  ticker_ = std::thread([this] {
    while (running_) {
      orch_->tick();
      std::this_thread::sleep_for(config_.tick_interval);
    }
  });
  http_->wait_until_ready();
  spdlog::info("florinet listening on {}", base_url());
  return port_;
}

void Server::wait() {
  while (running_ && !stopped_) std::this_thread::sleep_for(std::chrono::milliseconds(50));
}

void Server::stop() {
  if (stopped_.exchange(true)) return;
  orch_->shutdown();
  running_ = false;
  if (http_) http_->stop();
  if (listener_.joinable()) listener_.join();
  if (ticker_.joinable()) ticker_.join();
  if (!config_.data_root.empty()) {
    try {
      orch_->snapshot(*std::make_shared<FileStore>(config_.data_root));
    } catch (const std::exception& e) {
      spdlog::error("final snapshot failed: {}", e.what());
    }
  }
}

}  // namespace florinet
