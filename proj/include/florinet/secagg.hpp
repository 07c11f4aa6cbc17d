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

#ifndef FLORINET_SECAGG_HPP_
#define FLORINET_SECAGG_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "florinet/codec.hpp"
#include "florinet/crypto.hpp"

// Pairwise-masking secure aggregation within one virtual group.
//
// Member i uploads y_i = x_i + sum_{v > i} s_{i,v} - sum_{v < i} s_{v,i} (mod M),
// so the masks cancel in sum_i y_i. Only 32-byte seeds are ever shared between
// modules; masks are re-expanded on demand.
namespace florinet::secagg {

using crypto::Key32;

inline constexpr std::string_view kMaskInfo = "florinet-mask-v1";

struct KeyPair {
  Key32 private_key;
  Key32 public_key;
};

KeyPair generate_keypair(const Key32& entropy);
KeyPair generate_keypair();

struct MaskSeed {
  Key32 seed;
  std::uint64_t id_lo = 0;
  std::uint64_t id_hi = 0;
  std::uint32_t round = 0;

  bool operator==(const MaskSeed&) const = default;
};

/// seed = HKDF-SHA256(X25519(own, peer), salt = task_id,
///                    info = "florinet-mask-v1" | LE32(round) | LE64(lo) | LE64(hi))
MaskSeed derive_mask_seed(const KeyPair& own, const Key32& peer_public, std::string_view task_id,
                          std::uint32_t round, std::uint64_t id_lo, std::uint64_t id_hi);

struct MaskVector {
  ModularVector values;
  QuantParams params;
};

/// Counter-mode SHA-256 stream; element j is the low b bits of LE64 word j.
MaskVector expand_mask(const MaskSeed& seed, Eigen::Index length, const QuantParams& params);

struct RosterEntry {
  std::uint64_t participant_index = 0;
  std::string client_id;
  Key32 public_key{};
};

struct GroupRoster {
  std::vector<RosterEntry> members;

  std::size_t size() const { return members.size(); }
  /// Indices must be exactly 0..n-1 and 2 <= n <= group_max.
  void validate(std::uint32_t group_max) const;
};

struct PeerSeed {
  std::uint64_t peer_index = 0;
  MaskSeed seed;
};

/// One seed per other roster member: n - 1 key agreements.
std::vector<PeerSeed> derive_group_seeds(const KeyPair& own, std::uint64_t own_index,
                                          const GroupRoster& roster, std::string_view task_id,
                                          std::uint32_t round);

QuantizedVector apply_masks(const QuantizedVector& x, std::uint64_t own_index,
                            std::size_t group_size, std::span<const PeerSeed> seeds);

/// Element-wise sum modulo M.
QuantizedVector aggregate_masked(std::span<const QuantizedVector> ys);

/// Modular in-place add; used by the streaming accumulator.
void add_assign_mod(ModularVector& acc, const ModularVector& y, const QuantParams& p);

/// Number of seed derivations performed on the calling thread.
std::uint64_t kdf_invocations();

}  // namespace florinet::secagg

#endif  // FLORINET_SECAGG_HPP_
