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

#ifndef FLORINET_TICKET_HPP_
#define FLORINET_TICKET_HPP_

#include <cstdint>
#include <string>
#include <string_view>

#include "florinet/crypto.hpp"

namespace florinet {

/// What a registration ticket binds. The group and participant index are
/// looked up from the slot, since they are only fixed at selection time.
struct TicketClaims {
  std::string task_id;
  std::uint64_t round = 0;
  std::uint32_t attempt = 0;
  std::uint64_t slot = 0;
  std::int64_t expiry_ms = 0;  // task active-clock time
  std::string client_id;

  bool operator==(const TicketClaims&) const = default;
};

/// "<task>.<round>.<attempt>.<slot>.<expiry>.<b64url client>.<b64url mac>"
std::string issue_ticket(const TicketClaims& claims, const crypto::Key32& key);

/// Throws Error("bad_ticket") on malformed input or a MAC mismatch.
/// Expiry is the caller's concern because it depends on the task clock.
TicketClaims verify_ticket(std::string_view token, const crypto::Key32& key);

}  // namespace florinet

#endif  // FLORINET_TICKET_HPP_
