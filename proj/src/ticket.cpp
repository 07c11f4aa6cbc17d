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

#include "florinet/ticket.hpp"

#include <charconv>
#include <vector>

#include "florinet/codec.hpp"
#include "florinet/error.hpp"

namespace florinet {
namespace {

std::string body_of(const TicketClaims& c) {
  return c.task_id + "." + std::to_string(c.round) + "." + std::to_string(c.attempt) + "." +
         std::to_string(c.slot) + "." + std::to_string(c.expiry_ms) + "." +
         crypto::to_base64url(view_of(c.client_id));
}

std::string mac_of(const std::string& body, const crypto::Key32& key) {
  const std::string message = "florinet-ticket-v1|" + body;
  return crypto::to_base64url(crypto::hmac_sha256(key, view_of(message)));
}

template <typename T>
T parse_int(std::string_view s) {
  T v{};
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || s.empty()) {
    throw Error("bad_ticket", "malformed ticket");
  }
  return v;
}

}  // namespace

std::string issue_ticket(const TicketClaims& claims, const crypto::Key32& key) {
  if (claims.task_id.empty() || claims.task_id.find('.') != std::string::npos) {
    throw Error("invalid_argument", "task id must be non-empty and dot-free");
  }
  const auto body = body_of(claims);
  return body + "." + mac_of(body, key);
}

TicketClaims verify_ticket(std::string_view token, const crypto::Key32& key) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const auto dot = token.find('.', start);
    parts.push_back(token.substr(start, dot == std::string_view::npos ? dot : dot - start));
    if (dot == std::string_view::npos) break;
    start = dot + 1;
  }
  if (parts.size() != 7 || parts[0].empty()) throw Error("bad_ticket", "malformed ticket");

  const auto sep = token.rfind('.');
  const std::string body(token.substr(0, sep));
  const auto expected = mac_of(body, key);
  if (!crypto::constant_time_equal(view_of(expected), view_of(parts[6]))) {
    throw Error("bad_ticket", "ticket signature mismatch");
  }
  TicketClaims c;
  c.task_id = std::string(parts[0]);
  c.round = parse_int<std::uint64_t>(parts[1]);
  c.attempt = parse_int<std::uint32_t>(parts[2]);
  c.slot = parse_int<std::uint64_t>(parts[3]);
  c.expiry_ms = parse_int<std::int64_t>(parts[4]);
  try {
    c.client_id = to_string(crypto::from_base64url(parts[5]));
  } catch (const Error&) {
    throw Error("bad_ticket", "malformed ticket");
  }
  return c;
}

}  // namespace florinet
