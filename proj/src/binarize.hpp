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

#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "tensor.hpp"

WSR_NS_BEGIN

inline constexpr int kBinaryBytes = kDescriptorDim / 8;

/// 512 sign bits; bit i lives in bit (i mod 8) of byte i / 8.
using BinaryDescriptor = std::array<std::uint8_t, kBinaryBytes>;

/// Forward: sign with sign(0) = +1. Backward: upstream * slope * (1 - tanh^2(slope * x)).
Tensor sign_ste(const Tensor& x, Real slope = Real(1));

BinaryDescriptor pack_bits(std::span<const Real> descriptor);
/// Also accepts float input when Real is double.
BinaryDescriptor pack_bits_f32(std::span<const float> descriptor);
std::vector<Real> unpack_bits(const BinaryDescriptor& bits);

/// Number of differing sign bits.
int hamming(const BinaryDescriptor& a, const BinaryDescriptor& b);
/// Dot product of the two +/-1 vectors: 512 - 2 * hamming.
int binary_dot(const BinaryDescriptor& a, const BinaryDescriptor& b);
/// Cosine of the two +/-1 vectors, computed with XNOR and popcount.
double binary_cosine(const BinaryDescriptor& a, const BinaryDescriptor& b);
/// Same for any width: (bits - 2 * hamming) / bits over the first `bits` bits.
double binary_cosine(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b, int bits);

WSR_NS_END
