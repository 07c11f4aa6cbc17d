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

#include "florinet/codec.hpp"

#include <algorithm>
#include <bit>
#include <cfenv>
#include <cstring>

namespace florinet {
namespace {

constexpr std::uint8_t kMagic[4] = {'F', 'L', 'P', 'V'};
constexpr std::size_t kHeaderSize = 12;
constexpr std::size_t kQuantHeaderSize = 13;

class Writer {
 public:
  explicit Writer(std::size_t reserve) { out_.reserve(reserve); }

  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v), 8); }
  Bytes take() { return std::move(out_); }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  Bytes out_;
};

class Reader {
 public:
  explicit Reader(ByteView in) : in_(in) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  double f64() { return std::bit_cast<double>(get(8)); }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  std::uint64_t get(int n) {
    if (remaining() < static_cast<std::size_t>(n)) throw Error("truncated", "truncated payload");
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= std::uint64_t{in_[pos_ + i]} << (8 * i);
    pos_ += n;
    return v;
  }
  ByteView in_;
  std::size_t pos_ = 0;
};

void write_header(Writer& w, PayloadKind kind, std::size_t length) {
  for (auto c : kMagic) w.u8(c);
  w.u8(kPayloadVersion);
  w.u8(static_cast<std::uint8_t>(kind));
  w.u16(0);
  w.u32(static_cast<std::uint32_t>(length));
}

}  // namespace

int QuantParams::headroom_bits() const {
  return group_max <= 1 ? 0 : std::bit_width(group_max - 1);
}

void QuantParams::validate() const {
  if (!(clip_range > 0.0) || !std::isfinite(clip_range)) {
    throw Error("invalid_params", "clip range must be positive and finite");
  }
  if (bits < 1 || bits > 24) throw Error("invalid_params", "bits must lie in [1, 24]");
  if (group_max < 1) throw Error("invalid_params", "group_max must be at least 1");
  if (modulus_bits() > 32) throw Error("invalid_params", "modulus exceeds 32 bits");
}

ModelVector clamp(const Eigen::Ref<const ModelVector>& v, double r) {
  return v.cwiseMax(-r).cwiseMin(r);
}

QuantizedVector quantize(const Eigen::Ref<const ModelVector>& v, const QuantParams& p) {
  p.validate();
  require_finite(v);
  const double r = p.clip_range;
  const double scale = static_cast<double>(p.levels()) / (2.0 * r);
  const int saved = std::fegetround();
  std::fesetround(FE_TONEAREST);
  QuantizedVector out{ModularVector(v.size()), p};
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double x = std::clamp(v(i), -r, r);
    out.values(i) = static_cast<std::uint32_t>(std::nearbyint((x + r) * scale));
  }
  std::fesetround(saved);
  return out;
}

ModelVector dequantize_mean(const QuantizedVector& sum, std::size_t n) {
  const QuantParams& p = sum.params;
  p.validate();
  if (n == 0) throw Error("empty_aggregate", "empty aggregate");
  if (n > p.group_max) throw Error("headroom_exceeded", "headroom exceeded");
  const double r = p.clip_range;
  const double step = 2.0 * r / static_cast<double>(p.levels());
  const double count = static_cast<double>(n);
  return sum.values.cast<double>().unaryExpr([&](double s) { return (s / count) * step - r; });
}

Bytes encode_payload(const ModelVector& v) {
  Writer w(kHeaderSize + 8 * static_cast<std::size_t>(v.size()));
  write_header(w, PayloadKind::kFloat, static_cast<std::size_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) w.f64(v(i));
  return w.take();
}

Bytes encode_payload(const QuantizedVector& v) {
  v.params.validate();
  Writer w(kHeaderSize + kQuantHeaderSize + 4 * static_cast<std::size_t>(v.size()));
  write_header(w, PayloadKind::kQuantized, static_cast<std::size_t>(v.size()));
  w.f64(v.params.clip_range);
  w.u8(static_cast<std::uint8_t>(v.params.bits));
  w.u32(v.params.group_max);
  for (Eigen::Index i = 0; i < v.size(); ++i) w.u32(v.values(i));
  return w.take();
}

Bytes encode_payload(const Payload& p) {
  return std::visit([](const auto& v) { return encode_payload(v); }, p);
}

Payload decode_payload(ByteView bytes) {
  Reader r(bytes);
  for (auto c : kMagic) {
    if (r.u8() != c) throw Error("bad_magic", "bad magic");
  }
  if (r.u8() != kPayloadVersion) throw Error("version_mismatch", "unsupported payload version");
  const std::uint8_t kind = r.u8();
  if (r.u16() != 0) throw Error("bad_header", "reserved field must be zero");
  const std::uint32_t length = r.u32();
  if (length == 0) throw Error("empty", "payload has no elements");

  if (kind == static_cast<std::uint8_t>(PayloadKind::kFloat)) {
    if (r.remaining() < 8 * std::size_t{length}) throw Error("truncated", "truncated payload body");
    ModelVector v(length);
    for (std::uint32_t i = 0; i < length; ++i) v(i) = r.f64();
    if (r.remaining() != 0) throw Error("trailing_bytes", "bytes after payload body");
    require_finite(v);
    return v;
  }
  if (kind == static_cast<std::uint8_t>(PayloadKind::kQuantized)) {
    QuantParams p;
    p.clip_range = r.f64();
    p.bits = r.u8();
    p.group_max = r.u32();
    p.validate();
    if (r.remaining() < 4 * std::size_t{length}) throw Error("truncated", "truncated payload body");
    QuantizedVector q{ModularVector(length), p};
    const std::uint64_t m = p.modulus();
    for (std::uint32_t i = 0; i < length; ++i) {
      const std::uint32_t e = r.u32();
      if (e >= m) throw Error("element_range", "element not below modulus");
      q.values(i) = e;
    }
    if (r.remaining() != 0) throw Error("trailing_bytes", "bytes after payload body");
    return q;
  }
  throw Error("bad_kind", "unknown payload kind");
}

ModelVector decode_model(ByteView bytes) {
  auto p = decode_payload(bytes);
  if (auto* v = std::get_if<ModelVector>(&p)) return std::move(*v);
  throw Error("wrong_kind", "expected a float payload");
}

QuantizedVector decode_quantized(ByteView bytes) {
  auto p = decode_payload(bytes);
  if (auto* v = std::get_if<QuantizedVector>(&p)) return std::move(*v);
  throw Error("wrong_kind", "expected a quantized payload");
}

}  // namespace florinet
