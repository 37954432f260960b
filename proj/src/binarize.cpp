/*
 * Copyright 2026 The wsrnet Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "binarize.hpp"

#include <bit>
#include <cmath>
#include <cstring>

WSR_NS_BEGIN

Tensor sign_ste(const Tensor& x, Real slope) {
  Tensor out(x.shape());
  auto xv = x.data();
  auto ov = out.data();
  for (std::size_t i = 0; i < xv.size(); ++i) ov[i] = xv[i] >= 0 ? Real(1) : Real(-1);
  if (Tape* tape = tape_for({&x})) {
    tape->record(out, {x}, [xn = x.node(), on = out.node(), slope] {
      auto& g = xn->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) {
        const Real t = std::tanh(slope * xn->value[i]);
        g[i] += on->grad[i] * slope * (Real(1) - t * t);
      }
    });
  }
  return out;
}

namespace {

template <typename T>
BinaryDescriptor pack_any(std::span<const T> d) {
  WSR_REQUIRE(d.size() == static_cast<std::size_t>(kDescriptorDim),
              "pack_bits expects a 512-d descriptor, got " + std::to_string(d.size()));
  BinaryDescriptor out{};
  for (int i = 0; i < kDescriptorDim; ++i)
    if (d[static_cast<std::size_t>(i)] >= 0) out[static_cast<std::size_t>(i / 8)] |= std::uint8_t(1u << (i % 8));
  return out;
}

}  // namespace

BinaryDescriptor pack_bits(std::span<const Real> descriptor) { return pack_any(descriptor); }

BinaryDescriptor pack_bits_f32(std::span<const float> descriptor) { return pack_any(descriptor); }

std::vector<Real> unpack_bits(const BinaryDescriptor& bits) {
  std::vector<Real> out(kDescriptorDim);
  for (int i = 0; i < kDescriptorDim; ++i)
    out[static_cast<std::size_t>(i)] = (bits[static_cast<std::size_t>(i / 8)] >> (i % 8)) & 1u ? Real(1) : Real(-1);
  return out;
}

int hamming(const BinaryDescriptor& a, const BinaryDescriptor& b) {
  int agree = 0;
  for (int w = 0; w < kBinaryBytes / 8; ++w) {
    std::uint64_t wa, wb;
    std::memcpy(&wa, a.data() + 8 * w, 8);
    std::memcpy(&wb, b.data() + 8 * w, 8);
    agree += std::popcount(~(wa ^ wb));
  }
  return kDescriptorDim - agree;
}

int binary_dot(const BinaryDescriptor& a, const BinaryDescriptor& b) { return kDescriptorDim - 2 * hamming(a, b); }

double binary_cosine(const BinaryDescriptor& a, const BinaryDescriptor& b) {
  return static_cast<double>(binary_dot(a, b)) / kDescriptorDim;
}

double binary_cosine(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b, int bits) {
  WSR_REQUIRE(bits >= 1 && a.size() == b.size() && a.size() * 8 >= static_cast<std::size_t>(bits),
              "binary_cosine: width mismatch");
  int differ = 0;
  for (int i = 0; i < bits; ++i) {
    const auto byte = static_cast<std::size_t>(i / 8);
    differ += ((~(a[byte] ^ b[byte]) >> (i % 8)) & 1u) ? 0 : 1;
  }
  return static_cast<double>(bits - 2 * differ) / bits;
}

WSR_NS_END
