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

#ifndef FLORINET_CRYPTO_HPP_
#define FLORINET_CRYPTO_HPP_

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

#include "florinet/codec.hpp"

// Thin wrappers over libsodium primitives plus RFC 5869 HKDF.
namespace florinet::crypto {

using Key32 = std::array<std::uint8_t, 32>;
using Digest = std::array<std::uint8_t, 32>;

/// Idempotent; called lazily by every entry point.
void ensure_init();

Digest sha256(ByteView data);
Digest hmac_sha256(ByteView key, ByteView message);
Bytes hkdf_sha256(ByteView ikm, ByteView salt, ByteView info, std::size_t length);

Key32 x25519_base(const Key32& scalar);
/// Throws Error("degenerate_key") when the shared point is all zeros.
Key32 x25519(const Key32& scalar, const Key32& point);

void random_bytes(std::span<std::uint8_t> out);
Key32 random_key();

bool constant_time_equal(ByteView a, ByteView b);

std::string to_hex(ByteView b);
Bytes from_hex(std::string_view hex);
std::string to_base64(ByteView b);
Bytes from_base64(std::string_view text);
std::string to_base64url(ByteView b);
Bytes from_base64url(std::string_view text);

Key32 key_from(ByteView b);

}  // namespace florinet::crypto

#endif  // FLORINET_CRYPTO_HPP_
