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

#ifndef FLORINET_SERVER_HPP_
#define FLORINET_SERVER_HPP_

#include <chrono>
#include <filesystem>
#include <memory>
#include <string>
#include <thread>

#include "florinet/orchestrator.hpp"

namespace httplib {
class Server;
}

namespace florinet {

struct ServerConfig {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks an ephemeral port
  /// Empty keys disable the corresponding check.
  std::string admin_key;
  std::string client_key;
  /// FileStore root; in-memory persistence when empty.
  std::filesystem::path data_root;
  /// Dashboard assets served under /ui/; a placeholder page when empty.
  std::filesystem::path ui_dir;
  /// Worker threads. Each kept-alive connection and each long-poll holds
  /// one, so size this above the expected concurrent client count.
  std::size_t threads = 256;
  std::chrono::milliseconds tick_interval{20};
  std::chrono::milliseconds max_wait{30000};
  std::chrono::seconds keep_alive_timeout{5};
  std::size_t max_payload_bytes = 256u << 20;
  OrchestratorConfig orchestrator;
};

/// HTTP status for an error code; 500 for unknown codes.
int http_status_for(const std::string& code);

/// The REST binding of the orchestrator.
class Server {
 public:
  explicit Server(ServerConfig config);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds and starts serving on background threads; returns the bound port.
  /// Throws Error("bind_failed").
  int start();
  /// Blocks until stop() is called from another thread.
  void wait();
  /// Stops accepting, wakes long-polls, drains in-flight requests, and
  /// snapshots state. Idempotent.
  void stop();

  int port() const { return port_; }
  std::string base_url() const;
  Orchestrator& orchestrator() { return *orch_; }

 private:
  void install_routes();

  ServerConfig config_;
  std::unique_ptr<Orchestrator> orch_;
  std::unique_ptr<httplib::Server> http_;
  std::thread listener_;
  std::thread ticker_;
  std::atomic<bool> running_{false};
  std::atomic<bool> stopped_{false};
  int port_ = 0;
};

}  // namespace florinet

#endif  // FLORINET_SERVER_HPP_
