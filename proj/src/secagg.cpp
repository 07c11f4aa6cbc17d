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

#include "florinet/secagg.hpp"

#include <sodium.h>

#include <algorithm>

namespace florinet::secagg {
namespace {

thread_local std::uint64_t g_kdf_invocations = 0;

void put_le(Bytes& out, std::uint64_t v, int n) {
  for (int i = 0; i < n; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void check_shape(const QuantizedVector& a, const QuantizedVector& b) {
  if (!(a.params == b.params)) throw Error("params_mismatch", "quantization parameters differ");
  if (a.size() != b.size()) throw Error("length_mismatch", "vector lengths differ");
}

}  // namespace

KeyPair generate_keypair(const Key32& entropy) {
  return KeyPair{entropy, crypto::x25519_base(entropy)};
}

KeyPair generate_keypair() { return generate_keypair(crypto::random_key()); }

MaskSeed derive_mask_seed(const KeyPair& own, const Key32& peer_public, std::string_view task_id,
                          std::uint32_t round, std::uint64_t id_lo, std::uint64_t id_hi) {
  if (id_lo >= id_hi) throw Error("invalid_pair", "pair indices must satisfy id_lo < id_hi");
  ++g_kdf_invocations;
  Key32 shared = crypto::x25519(own.private_key, peer_public);

  Bytes info(kMaskInfo.begin(), kMaskInfo.end());
  put_le(info, round, 4);
  put_le(info, id_lo, 8);
  put_le(info, id_hi, 8);
  const Bytes okm = crypto::hkdf_sha256(shared, view_of(task_id), info, 32);
  sodium_memzero(shared.data(), shared.size());

  MaskSeed out{crypto::key_from(okm), id_lo, id_hi, round};
  return out;
}

MaskVector expand_mask(const MaskSeed& seed, Eigen::Index length, const QuantParams& params) {
  if (length <= 0) throw Error("invalid_argument", "mask length must be positive");
  params.validate();
  const std::uint64_t mask = params.modulus_mask();
  MaskVector out{ModularVector(length), params};

  std::array<std::uint8_t, 40> block_input;
  std::copy(seed.seed.begin(), seed.seed.end(), block_input.begin());
  crypto::Digest block{};
  std::size_t offset = 32;  // bytes consumed from the current block
  std::uint64_t counter = 0;
  std::array<std::uint8_t, 8> word{};
  for (Eigen::Index j = 0; j < length; ++j) {
    for (std::size_t k = 0; k < 8; ++k) {
      if (offset == 32) {
        for (int i = 0; i < 8; ++i) block_input[32 + i] = static_cast<std::uint8_t>(counter >> (8 * i));
        block = crypto::sha256(block_input);
        ++counter;
        offset = 0;
      }
      word[k] = block[offset++];
    }
    std::uint64_t w = 0;
    for (int i = 0; i < 8; ++i) w |= std::uint64_t{word[i]} << (8 * i);
    out.values(j) = static_cast<std::uint32_t>(w & mask);
  }
  return out;
}

void GroupRoster::validate(std::uint32_t group_max) const {
  const std::size_t n = members.size();
  if (n < 2 || n > group_max) throw Error("invalid_roster", "group size out of range");
  std::vector<bool> seen(n, false);
  for (const auto& m : members) {
    if (m.participant_index >= n || seen[m.participant_index]) {
      throw Error("invalid_roster", "participant indices must be unique and dense");
    }
    seen[m.participant_index] = true;
  }
}

std::vector<PeerSeed> derive_group_seeds(const KeyPair& own, std::uint64_t own_index,
                                          const GroupRoster& roster, std::string_view task_id,
                                          std::uint32_t round) {
  std::vector<PeerSeed> seeds;
  seeds.reserve(roster.size());
  for (const auto& m : roster.members) {
    if (m.participant_index == own_index) continue;
    const auto lo = std::min(own_index, m.participant_index);
    const auto hi = std::max(own_index, m.participant_index);
    seeds.push_back({m.participant_index,
                     derive_mask_seed(own, m.public_key, task_id, round, lo, hi)});
  }
  return seeds;
}

void add_assign_mod(ModularVector& acc, const ModularVector& y, const QuantParams& p) {
  const std::uint64_t mask = p.modulus_mask();
  for (Eigen::Index i = 0; i < acc.size(); ++i) {
    acc(i) = static_cast<std::uint32_t>((std::uint64_t{acc(i)} + y(i)) & mask);
  }
}

QuantizedVector apply_masks(const QuantizedVector& x, std::uint64_t own_index,
                            std::size_t group_size, std::span<const PeerSeed> seeds) {
  if (own_index >= std::max<std::size_t>(group_size, 1)) {
    throw Error("incomplete_pairing", "own index outside the group");
  }
  std::vector<bool> seen(group_size, false);
  for (const auto& s : seeds) {
    if (s.peer_index >= group_size || s.peer_index == own_index || seen[s.peer_index]) {
      throw Error("incomplete_pairing", "incomplete pairing");
    }
    if (s.seed.id_lo != std::min(own_index, s.peer_index) ||
        s.seed.id_hi != std::max(own_index, s.peer_index)) {
      throw Error("incomplete_pairing", "seed does not belong to this pair");
    }
    seen[s.peer_index] = true;
  }
  if (seeds.size() + 1 != group_size) throw Error("incomplete_pairing", "incomplete pairing");

  const auto& p = x.params;
  const std::uint64_t mask = p.modulus_mask();
  std::vector<std::uint64_t> acc(x.values.data(), x.values.data() + x.size());
  for (const auto& s : seeds) {
    const MaskVector m = expand_mask(s.seed, x.size(), p);
    const bool add = s.peer_index > own_index;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      acc[i] = add ? (acc[i] + m.values(i)) & mask : (acc[i] + p.modulus() - m.values(i)) & mask;
    }
  }
  QuantizedVector y{ModularVector(x.size()), p};
  for (Eigen::Index i = 0; i < x.size(); ++i) y.values(i) = static_cast<std::uint32_t>(acc[i]);
  return y;
}

QuantizedVector aggregate_masked(std::span<const QuantizedVector> ys) {
  if (ys.empty()) throw Error("empty_aggregate", "no submissions");
  QuantizedVector sum{ModularVector::Zero(ys.front().size()), ys.front().params};
  for (const auto& y : ys) {
    check_shape(sum, y);
    add_assign_mod(sum.values, y.values, sum.params);
  }
  return sum;
}

std::uint64_t kdf_invocations() { return g_kdf_invocations; }

}  // namespace florinet::secagg
