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
#include <string>
#include <vector>

#include "optim.hpp"
#include "tensor.hpp"

WSR_NS_BEGIN

struct BackboneConfig {
  std::array<int, 4> layers{1, 2, 4, 4};
  std::array<int, 4> kernels{7, 3, 3, 3};
  std::array<int, 4> depths{64, 64, 128, 128};
  std::array<bool, 4> pool_after{true, true, true, false};
  /// Divides every depth; 1 gives the full-width network.
  int scale = 4;
  double dropout = 0.2;
  double bn_momentum = 0.1;

  int depth(int stack) const { return std::max(1, depths[static_cast<std::size_t>(stack)] / scale); }
  /// Width reduction factor from image to feature sequence.
  int width_stride() const;
};

/// Batch norm with its affine parameters and running statistics.
struct BatchNormLayer {
  Tensor gamma;
  Tensor beta;
  BatchNormStats stats;

  static BatchNormLayer create(ParamStore& store, const std::string& name, ParamGroup group, int channels);
  Tensor forward(const Tensor& x, bool train, double momentum) const;
};

/// Pre-activation residual block: x + conv(dropout(relu(bn(x)))), with a
/// 1x1 projection on the skip path when the depth changes.
struct ResidualBlock {
  BatchNormLayer bn;
  Tensor conv;
  Tensor projection;  ///< undefined when in == out
  int pad = 1;
};

Tensor residual_block(const Tensor& x, const ResidualBlock& block, bool train, double dropout,
                      double bn_momentum, Rng& rng);

class Backbone {
 public:
  Backbone(const BackboneConfig& config, ParamStore& store, Rng& init_rng);

  /// images [N x 1 x H x W] -> features [N x D x W/8], column-max reduced.
  Tensor forward(const Tensor& images, bool train, Rng& rng) const;

  /// Same, but also returns the 2-d map before the column-wise reduction.
  Tensor feature_map(const Tensor& images, bool train, Rng& rng) const;

  int output_depth() const { return config_.depth(3); }
  const BackboneConfig& config() const { return config_; }
  std::vector<std::vector<ResidualBlock>>& stacks() { return stacks_; }

 private:
  BackboneConfig config_;
  Tensor conv1_weight_;
  Tensor conv1_bias_;
  std::vector<std::vector<ResidualBlock>> stacks_;  // stacks 2..4
  BatchNormLayer out_bn_;
};

WSR_NS_END
