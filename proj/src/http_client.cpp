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

#include "florinet/http_client.hpp"

#include <httplib.h>

#include <cctype>

namespace florinet {
namespace {

[[noreturn]] void throw_envelope(const httplib::Result& r) {
  const int status = r->status;
  try {
    const auto j = json::parse(r->body);
    throw ApiError(status, j.at("code").get<std::string>(), j.value("message", ""),
                   j.value("retryable", false));
  } catch (const json::exception&) {
    throw ApiError(status, "http_" + std::to_string(status), r->body, status >= 500);
  }
}

const httplib::Result& checked(const httplib::Result& r, const std::string& what) {
  if (!r) {
    throw Error("network", what + ": " + httplib::to_string(r.error()), true);
  }
  if (r->status < 200 || r->status >= 300) throw_envelope(r);
  return r;
}

json body_json(const httplib::Result& r) {
  try {
    return json::parse(r->body);
  } catch (const json::exception& e) {
    throw Error("bad_response", std::string("response is not JSON: ") + e.what());
  }
}

}  // namespace

ApiClient::ApiClient(const std::string& endpoint, std::string api_key,
                     std::chrono::milliseconds timeout)
    : endpoint_(endpoint), api_key_(std::move(api_key)) {
  if (!endpoint_.starts_with("http://")) {
    throw Error("invalid_argument", "endpoint must look like http://host:port, got '" + endpoint_ + "'");
  }
  while (endpoint_.ends_with("/")) endpoint_.pop_back();
  http_ = std::make_unique<httplib::Client>(endpoint_);
  if (!http_->is_valid()) throw Error("invalid_argument", "bad endpoint '" + endpoint_ + "'");
  http_->set_keep_alive(true);
  http_->set_connection_timeout(std::chrono::seconds(10));
  http_->set_read_timeout(timeout);
  http_->set_write_timeout(timeout);
  if (!api_key_.empty()) http_->set_default_headers({{"X-Florinet-Key", api_key_}});
}

ApiClient::~ApiClient() = default;
ApiClient::ApiClient(ApiClient&&) noexcept = default;
ApiClient& ApiClient::operator=(ApiClient&&) noexcept = default;

json ApiClient::get_json(const std::string& path) {
  return body_json(checked(http_->Get(path), "GET " + path));
}

json ApiClient::post_json(const std::string& path, const json& body) {
  return body_json(checked(http_->Post(path, body.dump(), "application/json"), "POST " + path));
}

json ApiClient::post_empty(const std::string& path) {
  return body_json(checked(http_->Post(path), "POST " + path));
}

Bytes ApiClient::get_bytes(const std::string& path) {
  const auto r = http_->Get(path);
  checked(r, "GET " + path);
  return Bytes(r->body.begin(), r->body.end());
}

json ApiClient::post_bytes(const std::string& path, ByteView body,
                           const std::map<std::string, std::string>& headers) {
  httplib::Headers h;
  for (const auto& [k, v] : headers) h.emplace(k, v);
  return body_json(checked(http_->Post(path, h, reinterpret_cast<const char*>(body.data()), body.size(),
                                       "application/octet-stream"),
                           "POST " + path));
}

json ApiClient::post_multipart(const std::string& path, const std::vector<FilePart>& parts) {
  httplib::MultipartFormDataItems items;
  for (const auto& p : parts) items.push_back({p.name, p.content, p.filename, p.content_type});
  return body_json(checked(http_->Post(path, items), "POST " + path));
}

std::string url_encode(std::string_view s) {
  static const char* hex = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : s) {
    if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~') {
      out += static_cast<char>(c);
    } else {
      out += '%';
      out += hex[c >> 4];
      out += hex[c & 15];
    }
  }
  return out;
}

}  // namespace florinet
