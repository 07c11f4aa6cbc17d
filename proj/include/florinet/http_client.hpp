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

#ifndef FLORINET_HTTP_CLIENT_HPP_
#define FLORINET_HTTP_CLIENT_HPP_

#include <chrono>
#include <json.hpp>
#include <map>
#include <memory>
#include <string>

#include "florinet/codec.hpp"
#include "florinet/error.hpp"

namespace httplib {
class Client;
}

namespace florinet {

using nlohmann::json;

/// A non-2xx response, carrying the server's error envelope.
class ApiError : public Error {
 public:
  ApiError(int status, std::string code, const std::string& message, bool retryable)
      : Error(std::move(code), message, retryable), status_(status) {}
  int status() const noexcept { return status_; }

 private:
  int status_;
};

struct FilePart {
  std::string name;
  std::string filename;
  std::string content;
  std::string content_type;
};

/// Blocking JSON/binary client for one endpoint. Not thread-safe; use one
/// instance per thread. Transport failures throw Error("network", ..., true).
class ApiClient {
 public:
  ApiClient(const std::string& endpoint, std::string api_key,
            std::chrono::milliseconds timeout = std::chrono::seconds(60));
  ~ApiClient();
  ApiClient(ApiClient&&) noexcept;
  ApiClient& operator=(ApiClient&&) noexcept;

  json get_json(const std::string& path);
  json post_json(const std::string& path, const json& body);
  json post_empty(const std::string& path);
  Bytes get_bytes(const std::string& path);
  json post_bytes(const std::string& path, ByteView body,
                  const std::map<std::string, std::string>& headers = {});
  json post_multipart(const std::string& path, const std::vector<FilePart>& parts);

  const std::string& endpoint() const { return endpoint_; }

 private:
  std::string endpoint_;
  std::string api_key_;
  std::unique_ptr<httplib::Client> http_;
};

/// Percent-encodes a query parameter value.
std::string url_encode(std::string_view s);

}  // namespace florinet

#endif  // FLORINET_HTTP_CLIENT_HPP_
