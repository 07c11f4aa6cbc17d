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

#include "florinet/crypto.hpp"

#include <sodium.h>

#include <algorithm>
#include <cstring>
#include <mutex>

namespace florinet::crypto {

void ensure_init() {
  static std::once_flag once;
  std::call_once(once, [] {
    if (sodium_init() < 0) throw Error("crypto_init", "libsodium initialisation failed");
  });
}

Digest sha256(ByteView data) {
  ensure_init();
  Digest out;
  crypto_hash_sha256(out.data(), data.data(), data.size());
  return out;
}

Digest hmac_sha256(ByteView key, ByteView message) {
  ensure_init();
  crypto_auth_hmacsha256_state st;
  crypto_auth_hmacsha256_init(&st, key.data(), key.size());
  crypto_auth_hmacsha256_update(&st, message.data(), message.size());
  Digest out;
  crypto_auth_hmacsha256_final(&st, out.data());
  return out;
}

Bytes hkdf_sha256(ByteView ikm, ByteView salt, ByteView info, std::size_t length) {
  if (length > 255 * 32) throw Error("invalid_argument", "HKDF output too long");
  // Extract. An absent salt is HashLen zero bytes.
  const std::array<std::uint8_t, 32> zero_salt{};
  const Digest prk = salt.empty() ? hmac_sha256(zero_salt, ikm) : hmac_sha256(salt, ikm);

  // Expand: T(i) = HMAC(PRK, T(i-1) | info | i).
  Bytes okm;
  okm.reserve(length);
  Bytes block;
  for (std::uint8_t i = 1; okm.size() < length; ++i) {
    Bytes msg(block);
    msg.insert(msg.end(), info.begin(), info.end());
    msg.push_back(i);
    const Digest t = hmac_sha256(prk, msg);
    block.assign(t.begin(), t.end());
    const std::size_t take = std::min<std::size_t>(32, length - okm.size());
    okm.insert(okm.end(), t.begin(), t.begin() + take);
  }
  sodium_memzero(block.data(), block.size());
  return okm;
}

Key32 x25519_base(const Key32& scalar) {
  ensure_init();
  Key32 out;
  crypto_scalarmult_curve25519_base(out.data(), scalar.data());
  return out;
}

Key32 x25519(const Key32& scalar, const Key32& point) {
  ensure_init();
  Key32 out;
  if (crypto_scalarmult_curve25519(out.data(), scalar.data(), point.data()) != 0) {
    throw Error("degenerate_key", "degenerate key");
  }
  return out;
}

void random_bytes(std::span<std::uint8_t> out) {
  ensure_init();
  randombytes_buf(out.data(), out.size());
}

Key32 random_key() {
  Key32 k;
  random_bytes(k);
  return k;
}

bool constant_time_equal(ByteView a, ByteView b) {
  ensure_init();
  return a.size() == b.size() && sodium_memcmp(a.data(), b.data(), a.size()) == 0;
}

std::string to_hex(ByteView b) {
  std::string out(b.size() * 2 + 1, '\0');
  sodium_bin2hex(out.data(), out.size(), b.data(), b.size());
  out.pop_back();
  return out;
}

Bytes from_hex(std::string_view hex) {
  Bytes out(hex.size() / 2);
  std::size_t len = 0;
  const char* end = nullptr;
  if (hex.size() % 2 != 0 ||
      sodium_hex2bin(out.data(), out.size(), hex.data(), hex.size(), nullptr, &len, &end) != 0 ||
      len != out.size()) {
    throw Error("bad_encoding", "invalid hex string");
  }
  return out;
}

namespace {

std::string encode64(ByteView b, int variant) {
  ensure_init();
  std::string out(sodium_base64_encoded_len(b.size(), variant), '\0');
  sodium_bin2base64(out.data(), out.size(), b.data(), b.size(), variant);
  out.resize(std::strlen(out.c_str()));
  return out;
}

Bytes decode64(std::string_view text, int variant) {
  ensure_init();
  Bytes out(text.size() * 3 / 4 + 3);
  std::size_t len = 0;
  const char* end = nullptr;
  if (sodium_base642bin(out.data(), out.size(), text.data(), text.size(), nullptr, &len, &end,
                        variant) != 0 ||
      end != text.data() + text.size()) {
    throw Error("bad_encoding", "invalid base64 string");
  }
  out.resize(len);
  return out;
}

}  // namespace

std::string to_base64(ByteView b) { return encode64(b, sodium_base64_VARIANT_ORIGINAL); }
Bytes from_base64(std::string_view t) { return decode64(t, sodium_base64_VARIANT_ORIGINAL); }
std::string to_base64url(ByteView b) {
  return encode64(b, sodium_base64_VARIANT_URLSAFE_NO_PADDING);
}
Bytes from_base64url(std::string_view t) {
  return decode64(t, sodium_base64_VARIANT_URLSAFE_NO_PADDING);
}

Key32 key_from(ByteView b) {
  if (b.size() != 32) throw Error("bad_key", "expected a 32-byte key");
  Key32 k;
  std::copy(b.begin(), b.end(), k.begin());
  return k;
}

}  // namespace florinet::crypto
