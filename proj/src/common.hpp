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

#include <stdexcept>
#include <string>

// The core is compiled twice: once with 32-bit reals for training and
// inference, once with 64-bit reals (WSR_DOUBLE) for gradient checks and
// oracle comparisons. Each build lives in its own inline namespace so both
// can be linked into the same test binary.
#if defined(WSR_DOUBLE)
#define WSR_NS_BEGIN namespace wsr { inline namespace f64 {
#define WSR_NS_END } }
#else
#define WSR_NS_BEGIN namespace wsr { inline namespace f32 {
#define WSR_NS_END } }
#endif

WSR_NS_BEGIN

#if defined(WSR_DOUBLE)
using Real = double;
#else
using Real = float;
#endif

/// Descriptor width shared by the visual encoder, the character encoder and
/// the decoder's initial hidden state.
inline constexpr int kDescriptorDim = 512;

/// Caller broke a documented precondition (shape mismatch, bad argument).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Bad input data: malformed files, unknown symbols, missing images.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite loss, infeasible alignment in a training batch, divergence.
class NumericalFault : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

[[noreturn]] inline void contract_fail(const std::string& what) {
  throw ContractViolation(what);
}

#define WSR_REQUIRE(cond, msg)                 \
  do {                                         \
    if (!(cond)) ::wsr::contract_fail(msg);    \
  } while (0)

WSR_NS_END
