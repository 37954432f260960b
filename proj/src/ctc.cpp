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

#include "ctc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

WSR_NS_BEGIN

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(-std::abs(a - b)));
}

}  // namespace

CtcHead::CtcHead(int depth, int num_classes, int kernel, double dropout, double bn_momentum,
                 ParamStore& store, Rng& init_rng)
    : num_classes_(num_classes), dropout_(dropout), bn_momentum_(bn_momentum) {
  WSR_REQUIRE(kernel % 2 == 1, "CTC head kernel must be odd");
  const int outs[3] = {depth, depth, num_classes};
  for (int i = 0; i < 3; ++i) {
    const std::string name = "ctc.conv" + std::to_string(i + 1);
    conv_[i] = store.add(name + ".weight", ParamGroup::CtcHead, Shape{outs[i], depth, kernel},
                         kaiming_normal(static_cast<std::size_t>(outs[i]) * depth * kernel, depth * kernel, init_rng));
    bias_[i] = store.add(name + ".bias", ParamGroup::CtcHead, Shape{outs[i]}, std::vector<Real>(outs[i], 0));
    if (i < 2) bn_[i] = BatchNormLayer::create(store, "ctc.bn" + std::to_string(i + 1), ParamGroup::CtcHead, depth);
  }
}

Tensor CtcHead::forward(const Tensor& features, bool train, Rng& rng) const {
  Tensor h = features;
  for (int i = 0; i < 2; ++i) {
    h = conv1d(h, conv_[i], bias_[i]);
    h = bn_[i].forward(h, train, bn_momentum_);
    h = relu(h);
    h = dropout(h, static_cast<Real>(dropout_), train, rng);
  }
  h = conv1d(h, conv_[2], bias_[2]);
  return log_softmax(transpose12(h));
}

FrameLogProbs frame_log_probs(const Tensor& log_probs, int n, int blank) {
  WSR_REQUIRE(log_probs.rank() == 3, "expected [N x T x C] log-probabilities");
  const int t = log_probs.dim(1), c = log_probs.dim(2);
  WSR_REQUIRE(n >= 0 && n < log_probs.dim(0), "sample index out of range");
  const std::size_t stride = static_cast<std::size_t>(t) * c;
  return FrameLogProbs{log_probs.data().subspan(static_cast<std::size_t>(n) * stride, stride), t, c, blank};
}

int ctc_min_frames(std::span<const int> target) {
  int n = static_cast<int>(target.size());
  for (std::size_t i = 1; i < target.size(); ++i)
    if (target[i] == target[i - 1]) ++n;
  return n;
}

CtcResult ctc_nll(const FrameLogProbs& lp, std::span<const int> target, std::vector<double>* grad) {
  const int T = lp.frames, C = lp.classes;
  for (int k : target) {
    WSR_REQUIRE(k >= 0 && k < C, "CTC target index out of range");
    WSR_REQUIRE(k != lp.blank, "CTC target must not contain the blank");
  }
  if (grad != nullptr) grad->assign(static_cast<std::size_t>(T) * C, 0.0);
  if (ctc_min_frames(target) > T) return {std::numeric_limits<double>::infinity(), false};

  const int L = static_cast<int>(target.size());
  const int S = 2 * L + 1;
  auto label = [&](int s) { return (s % 2 == 0) ? lp.blank : target[static_cast<std::size_t>(s / 2)]; };
  // A transition s-2 -> s skips a blank unless it would merge a repeat.
  auto can_skip = [&](int s) { return s >= 2 && label(s) != lp.blank && label(s) != label(s - 2); };

  std::vector<double> alpha(static_cast<std::size_t>(T) * S, kNegInf);
  auto A = [&](int t, int s) -> double& { return alpha[static_cast<std::size_t>(t) * S + s]; };
  A(0, 0) = lp.at(0, label(0));
  if (S > 1) A(0, 1) = lp.at(0, label(1));
  for (int t = 1; t < T; ++t) {
    for (int s = 0; s < S; ++s) {
      double a = A(t - 1, s);
      if (s >= 1) a = log_add(a, A(t - 1, s - 1));
      if (can_skip(s)) a = log_add(a, A(t - 1, s - 2));
      A(t, s) = a == kNegInf ? kNegInf : a + lp.at(t, label(s));
    }
  }
  double logp = A(T - 1, S - 1);
  if (S > 1) logp = log_add(logp, A(T - 1, S - 2));
  if (logp == kNegInf) return {std::numeric_limits<double>::infinity(), false};

  if (grad != nullptr) {
    // beta(t, s): log-probability of the suffix after frame t given state s at t.
    std::vector<double> beta(static_cast<std::size_t>(T) * S, kNegInf);
    auto B = [&](int t, int s) -> double& { return beta[static_cast<std::size_t>(t) * S + s]; };
    B(T - 1, S - 1) = 0.0;
    if (S > 1) B(T - 1, S - 2) = 0.0;
    for (int t = T - 2; t >= 0; --t) {
      for (int s = 0; s < S; ++s) {
        double b = B(t + 1, s) + lp.at(t + 1, label(s));
        if (s + 1 < S) b = log_add(b, B(t + 1, s + 1) + lp.at(t + 1, label(s + 1)));
        if (s + 2 < S && can_skip(s + 2)) b = log_add(b, B(t + 1, s + 2) + lp.at(t + 1, label(s + 2)));
        B(t, s) = b;
      }
    }
    for (int t = 0; t < T; ++t)
      for (int s = 0; s < S; ++s) {
        const double occ = A(t, s) + B(t, s);
        if (occ == kNegInf) continue;
        (*grad)[static_cast<std::size_t>(t) * C + label(s)] -= std::exp(occ - logp);
      }
  }
  return {-logp, true};
}

double ctc_log_prob(const FrameLogProbs& lp, std::span<const int> labels) {
  const CtcResult r = ctc_nll(lp, labels);
  return r.feasible ? -r.loss : kNegInf;
}

Tensor ctc_loss(const Tensor& log_probs, const std::vector<std::vector<int>>& targets, int blank) {
  WSR_REQUIRE(log_probs.rank() == 3, "ctc_loss expects [N x T x C] log-probabilities");
  const int n = log_probs.dim(0), t = log_probs.dim(1), c = log_probs.dim(2);
  WSR_REQUIRE(static_cast<int>(targets.size()) == n, "ctc_loss: one target per sample");
  std::vector<Real> grads(log_probs.numel());
  double total = 0;
  std::vector<double> g;
  for (int i = 0; i < n; ++i) {
    const CtcResult r = ctc_nll(frame_log_probs(log_probs, i, blank), targets[i], &g);
    if (!r.feasible) {
      throw InfeasibleAlignment("infeasible CTC alignment for sample " + std::to_string(i) + ": target needs " +
                                    std::to_string(ctc_min_frames(targets[i])) + " frames, have " +
                                    std::to_string(t),
                                i);
    }
    total += r.loss;
    const std::size_t off = static_cast<std::size_t>(i) * t * c;
    for (std::size_t k = 0; k < g.size(); ++k) grads[off + k] = static_cast<Real>(g[k] / n);
  }
  Tensor out = Tensor::scalar(static_cast<Real>(total / n));
  if (Tape* tape = tape_for({&log_probs})) {
    tape->record(out, {log_probs}, [ln = log_probs.node(), on = out.node(), grads = std::move(grads)] {
      auto& gl = ln->grad_buffer();
      const Real up = on->grad[0];
      for (std::size_t k = 0; k < grads.size(); ++k) gl[k] += up * grads[k];
    });
  }
  return out;
}

std::vector<int> ctc_greedy_labels(const FrameLogProbs& lp) {
  std::vector<int> out;
  int prev = -1;
  for (int t = 0; t < lp.frames; ++t) {
    int best = 0;
    for (int k = 1; k < lp.classes; ++k)
      if (lp.at(t, k) > lp.at(t, best)) best = k;
    if (best != prev && best != lp.blank) out.push_back(best);
    prev = best;
  }
  return out;
}

std::string greedy_decode(const FrameLogProbs& lp, const Charset& charset) {
  const auto labels = ctc_greedy_labels(lp);
  return charset.decode(labels);
}

std::vector<int> ctc_prefix_beam_labels(const FrameLogProbs& lp, int width) {
  WSR_REQUIRE(width >= 1, "beam width must be >= 1");
  struct Score {
    double blank = kNegInf;
    double non_blank = kNegInf;
    double total() const { return log_add(blank, non_blank); }
  };
  using Beams = std::map<std::vector<int>, Score>;
  Beams beams;
  beams[{}] = Score{0.0, kNegInf};

  auto prune = [width](const Beams& all) {
    std::vector<std::pair<std::vector<int>, Score>> v(all.begin(), all.end());
    // Map order is lexicographic, so the stable sort breaks ties by prefix.
    std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.second.total() > b.second.total(); });
    if (static_cast<int>(v.size()) > width) v.resize(static_cast<std::size_t>(width));
    return v;
  };

  for (int t = 0; t < lp.frames; ++t) {
    Beams next;
    for (const auto& [prefix, sc] : beams) {
      const double total = sc.total();
      Score& same = next[prefix];
      same.blank = log_add(same.blank, total + lp.at(t, lp.blank));
      for (int k = 0; k < lp.classes; ++k) {
        if (k == lp.blank) continue;
        const double p = lp.at(t, k);
        std::vector<int> extended = prefix;
        extended.push_back(k);
        Score& ext = next[extended];
        if (!prefix.empty() && prefix.back() == k) {
          ext.non_blank = log_add(ext.non_blank, sc.blank + p);
          Score& stay = next[prefix];
          stay.non_blank = log_add(stay.non_blank, sc.non_blank + p);
        } else {
          ext.non_blank = log_add(ext.non_blank, total + p);
        }
      }
    }
    beams.clear();
    for (auto& [prefix, sc] : prune(next)) beams.emplace(std::move(prefix), sc);
  }

  std::vector<std::vector<int>> candidates;
  for (auto& [prefix, sc] : prune(beams)) candidates.push_back(prefix);
  candidates.push_back(ctc_greedy_labels(lp));
  std::vector<int> best;
  double best_lp = kNegInf;
  bool first = true;
  for (const auto& c : candidates) {
    const double l = ctc_log_prob(lp, c);
    if (first || l > best_lp) {
      best = c;
      best_lp = l;
      first = false;
    }
  }
  return best;
}

std::string prefix_beam_decode(const FrameLogProbs& lp, int width, const Charset& charset) {
  const auto labels = ctc_prefix_beam_labels(lp, width);
  return charset.decode(labels);
}

WSR_NS_END
