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

#include "florinet/attestation.hpp"

#include "florinet/crypto.hpp"
#include "florinet/error.hpp"

namespace florinet {

bool StaticAllowlistVerifier::verify(const ClientInfo& client) const {
  return !client.attestation.empty() && tokens_.count(client.attestation) > 0;
}

HmacTokenVerifier::HmacTokenVerifier(Bytes key) : key_(std::move(key)) {
  if (key_.empty()) throw Error("invalid_argument", "hmac attestation key must be non-empty");
}

bool HmacTokenVerifier::verify(const ClientInfo& client) const {
  if (client.attestation.empty()) return false;
  const auto expected = hmac_attestation_token(key_, client.client_id);
  return crypto::constant_time_equal(view_of(expected), view_of(client.attestation));
}

std::string hmac_attestation_token(ByteView key, const std::string& client_id) {
  const auto mac = crypto::hmac_sha256(key, view_of(client_id));
  return crypto::to_hex(mac);
}

VerifierRegistry default_verifiers() {
  VerifierRegistry r;
  r["none"] = std::make_shared<AllowAllVerifier>();
  return r;
}

}  // namespace florinet
