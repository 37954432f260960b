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

#include <span>
#include <string>
#include <vector>

#include "backbone.hpp"
#include "data.hpp"
#include "optim.hpp"
#include "tensor.hpp"

WSR_NS_BEGIN

/// A target that cannot be aligned to the available frames.
class InfeasibleAlignment : public NumericalFault {
 public:
  InfeasibleAlignment(const std::string& what, int sample) : NumericalFault(what), sample_(sample) {}
  int sample() const { return sample_; }

 private:
  int sample_;
};

/// Non-recurrent recognition head: three width-7 1-d convolutions with
/// BN/ReLU/dropout between them, the last projecting to n_classes.
class CtcHead {
 public:
  CtcHead(int depth, int num_classes, int kernel, double dropout, double bn_momentum,
          ParamStore& store, Rng& init_rng);

  /// features [N x D x W] -> log-probabilities [N x W x n_classes].
  Tensor forward(const Tensor& features, bool train, Rng& rng) const;

  int num_classes() const { return num_classes_; }

 private:
  int num_classes_;
  double dropout_;
  double bn_momentum_;
  Tensor conv_[3];
  Tensor bias_[3];
  BatchNormLayer bn_[2];
};

/// Frames of one sample: T rows of n_classes log-probabilities.
struct FrameLogProbs {
  std::span<const Real> values;
  int frames = 0;
  int classes = 0;
  int blank = Charset::kBlank;

  Real at(int t, int k) const { return values[static_cast<std::size_t>(t) * classes + k]; }
};

/// Sample n of a [N x T x C] log-probability tensor.
FrameLogProbs frame_log_probs(const Tensor& log_probs, int n, int blank = Charset::kBlank);

/// Frames needed to emit `target`: its length plus one blank per adjacent repeat.
int ctc_min_frames(std::span<const int> target);

struct CtcResult {
  double loss = 0;        ///< -log p(target | frames); +inf when infeasible
  bool feasible = true;
};

/// Log-space forward-backward over the blank-extended target. When `grad` is
/// non-null it receives d(loss)/d(log_probs) (T x C, overwritten).
CtcResult ctc_nll(const FrameLogProbs& lp, std::span<const int> target, std::vector<double>* grad = nullptr);

/// log p(labels | frames) summed over all alignments; -inf when infeasible.
double ctc_log_prob(const FrameLogProbs& lp, std::span<const int> labels);

/// Batch CTC loss: mean of per-sample negative log-likelihoods. Throws
/// InfeasibleAlignment naming the first sample that cannot be aligned.
Tensor ctc_loss(const Tensor& log_probs, const std::vector<std::vector<int>>& targets,
                int blank = Charset::kBlank);

/// Best-path labels: per-frame argmax, repeats collapsed, blanks removed.
std::vector<int> ctc_greedy_labels(const FrameLogProbs& lp);
std::string greedy_decode(const FrameLogProbs& lp, const Charset& charset);

/// Prefix beam search with per-prefix blank/non-blank probabilities. The
/// surviving prefixes and the best-path labeling are rescored with the exact
/// forward probability and the most probable one is returned.
std::vector<int> ctc_prefix_beam_labels(const FrameLogProbs& lp, int width);
std::string prefix_beam_decode(const FrameLogProbs& lp, int width, const Charset& charset);

WSR_NS_END
