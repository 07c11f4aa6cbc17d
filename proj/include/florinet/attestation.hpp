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

#ifndef FLORINET_ATTESTATION_HPP_
#define FLORINET_ATTESTATION_HPP_

#include <map>
#include <memory>
#include <set>
#include <string>

#include "florinet/codec.hpp"
#include "florinet/task.hpp"

namespace florinet {

/// Decides whether a device's attestation evidence admits it to a task.
/// Evidence is opaque; verifiers for real platform verdicts plug in here.
class AttestationVerifier {
 public:
  virtual ~AttestationVerifier() = default;
  virtual bool verify(const ClientInfo& client) const = 0;
};

class AllowAllVerifier final : public AttestationVerifier {
 public:
  bool verify(const ClientInfo&) const override { return true; }
};

/// Accepts evidence equal to one of a fixed set of tokens.
class StaticAllowlistVerifier final : public AttestationVerifier {
 public:
  explicit StaticAllowlistVerifier(std::set<std::string> tokens) : tokens_(std::move(tokens)) {}
  bool verify(const ClientInfo& client) const override;

 private:
  std::set<std::string> tokens_;
};

/// Accepts evidence equal to hex(HMAC-SHA256(key, client_id)).
class HmacTokenVerifier final : public AttestationVerifier {
 public:
  explicit HmacTokenVerifier(Bytes key);
  bool verify(const ClientInfo& client) const override;

 private:
  Bytes key_;
};

std::string hmac_attestation_token(ByteView key, const std::string& client_id);

/// Verifiers by the name a TaskSpec's `attestation` field refers to.
/// "none" is always registered and admits everyone.
using VerifierRegistry = std::map<std::string, std::shared_ptr<const AttestationVerifier>>;

VerifierRegistry default_verifiers();

}  // namespace florinet

#endif  // FLORINET_ATTESTATION_HPP_
