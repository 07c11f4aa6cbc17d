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

#ifndef FLORINET_CODEC_HPP_
#define FLORINET_CODEC_HPP_

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <span>
#include <variant>
#include <vector>

#include "florinet/error.hpp"

namespace florinet {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

/// Flat parameter vector or pseudo-gradient.
using ModelVector = Eigen::VectorXd;
/// Integers modulo 2^b, b <= 32.
using ModularVector = Eigen::Matrix<std::uint32_t, Eigen::Dynamic, 1>;

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (!std::isfinite(static_cast<double>(v(i)))) return false;
  }
  return true;
}

template <typename Derived>
void require_finite(const Eigen::MatrixBase<Derived>& v) {
  if (!all_finite(v)) throw Error("non_finite", "non-finite value");
}

/// Quantization layout shared by every member of a virtual group.
///
/// Values are clamped to [-clip_range, clip_range] and mapped onto
/// [0, 2^bits - 1]. The modulus carries ceil(log2(group_max)) headroom bits so
/// a sum of up to group_max quantized vectors never wraps.
struct QuantParams {
  double clip_range = 1.0;
  int bits = 16;
  std::uint32_t group_max = 1;

  int headroom_bits() const;
  int modulus_bits() const { return bits + headroom_bits(); }
  std::uint64_t modulus() const { return std::uint64_t{1} << modulus_bits(); }
  std::uint64_t modulus_mask() const { return modulus() - 1; }
  std::uint64_t levels() const { return (std::uint64_t{1} << bits) - 1; }

  /// Throws Error("invalid_params") unless r > 0, 1 <= B <= 24, g >= 1, b <= 32.
  void validate() const;

  bool operator==(const QuantParams&) const = default;
};

struct QuantizedVector {
  ModularVector values;
  QuantParams params;

  Eigen::Index size() const { return values.size(); }
  bool operator==(const QuantizedVector& other) const {
    return params == other.params && values.size() == other.values.size() &&
           values == other.values;
  }
};

QuantizedVector quantize(const Eigen::Ref<const ModelVector>& v, const QuantParams& p);

/// Mean of the n vectors whose quantized sum is `sum`.
ModelVector dequantize_mean(const QuantizedVector& sum, std::size_t n);

ModelVector clamp(const Eigen::Ref<const ModelVector>& v, double r);

// Binary payload, little-endian:
//   "FLPV" | u8 version=1 | u8 kind | u16 reserved=0 | u32 length
//   kind 0: length x f64
//   kind 1: f64 r | u8 B | u32 g_max | length x u32
inline constexpr std::uint8_t kPayloadVersion = 1;

enum class PayloadKind : std::uint8_t { kFloat = 0, kQuantized = 1 };

using Payload = std::variant<ModelVector, QuantizedVector>;

Bytes encode_payload(const ModelVector& v);
Bytes encode_payload(const QuantizedVector& v);
Bytes encode_payload(const Payload& p);
Payload decode_payload(ByteView bytes);

/// Decodes and requires the float kind.
ModelVector decode_model(ByteView bytes);
/// Decodes and requires the quantized kind.
QuantizedVector decode_quantized(ByteView bytes);

inline ByteView view_of(std::string_view s) {
  return {reinterpret_cast<const std::uint8_t*>(s.data()), s.size()};
}
inline std::string to_string(ByteView b) {
  return {reinterpret_cast<const char*>(b.data()), b.size()};
}

}  // namespace florinet

#endif  // FLORINET_CODEC_HPP_
