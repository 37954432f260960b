// Copyright 2026 The wsrnet Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Oracle checks in 64-bit reals: brute-force CTC, finite differences, exact
// invariants, storage arithmetic and metric properties.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "backbone.hpp"
#include "binarize.hpp"
#include "charenc.hpp"
#include "criteria.hpp"
#include "ctc.hpp"
#include "eval.hpp"
#include "seq2seq.hpp"
#include "spotting.hpp"
#include "tensor.hpp"

static_assert(sizeof(wsr::Real) == 8, "oracles run in 64-bit reals");

namespace acceptance {
namespace {

using namespace wsr;

std::string fmt(const char* f, double v) {
  char buf[96];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<Real> random_values(std::size_t n, Rng& rng, double scale = 1.0) {
  std::vector<Real> v(n);
  for (auto& x : v) x = static_cast<Real>(rng.normal() * scale);
  return v;
}

/// Values bounded away from zero, so kinks at 0 are never crossed.
std::vector<Real> off_zero_values(std::size_t n, Rng& rng) {
  std::vector<Real> v(n);
  for (auto& x : v) x = static_cast<Real>((rng.bernoulli(0.5) ? 1 : -1) * (0.05 + rng.uniform()));
  return v;
}

/// Distinct values with gaps far above the finite-difference step, so max
/// selections never flip.
std::vector<Real> distinct_values(std::size_t n, Rng& rng) {
  std::vector<Real> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = static_cast<Real>(0.01 * static_cast<double>(i) - 0.005 * n);
  rng.shuffle(v);
  return v;
}

// ---------------------------------------------------------------------------
// CTC brute force

std::vector<int> collapse(const std::vector<int>& path) {
  std::vector<int> out;
  int prev = -1;
  for (int k : path) {
    if (k != prev && k != 0) out.push_back(k);
    prev = k;
  }
  return out;
}

double enumerated_log_prob(const std::vector<Real>& lp, int frames, int classes, const std::vector<int>& target) {
  std::vector<int> path(static_cast<std::size_t>(frames), 0);
  double total = 0;
  while (true) {
    if (collapse(path) == target) {
      double s = 0;
      for (int t = 0; t < frames; ++t) s += lp[static_cast<std::size_t>(t * classes + path[static_cast<std::size_t>(t)])];
      total += std::exp(s);
    }
    int t = 0;
    while (t < frames && ++path[static_cast<std::size_t>(t)] == classes) path[static_cast<std::size_t>(t++)] = 0;
    if (t == frames) break;
  }
  return std::log(total);
}

// ---------------------------------------------------------------------------
// Finite differences

struct GradCase {
  std::string name;
  std::vector<Tensor> inputs;
  std::function<Tensor()> loss;
  std::size_t coords_per_input = 24;
};

constexpr double kStep = 1e-5;
constexpr double kGradFloor = 1e-6;

/// Largest |analytic - numeric| / max(|analytic|, |numeric|, floor) over a
/// sample of coordinates of every input.
double max_relative_error(GradCase& c, Rng& rng) {
  for (auto& in : c.inputs) {
    in.set_requires_grad(true);
    in.zero_grad();
  }
  {
    Tape tape;
    TapeScope scope(tape);
    const Tensor out = c.loss();
    tape.backward(out);
  }
  double worst = 0;
  NoGradScope no_grad;
  for (auto& in : c.inputs) {
    const std::size_t n = in.numel();
    std::vector<std::size_t> coords(n);
    std::iota(coords.begin(), coords.end(), 0);
    if (n > c.coords_per_input) {
      rng.shuffle(coords);
      coords.resize(c.coords_per_input);
    }
    for (std::size_t k : coords) {
      Real& x = in.data()[k];
      const Real saved = x;
      x = saved + static_cast<Real>(kStep);
      const double up = c.loss().item();
      x = saved - static_cast<Real>(kStep);
      const double down = c.loss().item();
      x = saved;
      const double numeric = (up - down) / (2 * kStep);
      const double analytic = in.has_grad() ? in.grad()[k] : 0.0;
      const double denom = std::max({std::abs(analytic), std::abs(numeric), kGradFloor});
      worst = std::max(worst, std::abs(analytic - numeric) / denom);
    }
  }
  return worst;
}

/// Random projection to a scalar of order one, keeping finite-difference
/// roundoff small against the gradients being checked.
Tensor weighted(const Tensor& t, std::uint64_t seed) {
  Rng rng(seed);
  const auto w = random_values(t.numel(), rng, 1.0 / std::sqrt(static_cast<double>(t.numel())));
  return weighted_sum(t, w);
}

std::vector<GradCase> gradient_cases(Rng& rng) {
  std::vector<GradCase> cases;
  auto T = [&rng](Shape s) { return Tensor(s, random_values(shape_numel(s), rng)); };

  {
    Tensor a = T({3, 4}), b = T({3, 4});
    cases.push_back({"add", {a, b}, [=] { return weighted(add(a, b), 1); }});
    cases.push_back({"sub", {a, b}, [=] { return weighted(sub(a, b), 2); }});
    cases.push_back({"mul", {a, b}, [=] { return weighted(mul(a, b), 3); }});
    cases.push_back({"scale", {a}, [=] { return weighted(scale(a, Real(-1.7)), 4); }});
    cases.push_back({"affine", {a}, [=] { return weighted(affine(a, Real(0.3), Real(2)), 5); }});
    cases.push_back({"tanh", {a}, [=] { return weighted(wsr::tanh(a), 6); }});
    cases.push_back({"sigmoid", {a}, [=] { return weighted(sigmoid(a), 7); }});
    cases.push_back({"sum", {a}, [=] { return mul(sum(a), sum(a)); }});
    cases.push_back({"mean", {a}, [=] { return mul(mean(a), sum(a)); }});
    cases.push_back({"softmax", {a}, [=] { return weighted(softmax(a), 8); }});
    cases.push_back({"log_softmax", {a}, [=] { return weighted(log_softmax(a), 9); }});
    const std::vector<int> picks{1, 3, 0};
    cases.push_back({"cross_entropy", {a}, [=] { return scale(sum(gather_last(log_softmax(a), picks)), Real(-1)); }});
    const std::vector<Real> rs{0.5, -2.0, 1.5};
    cases.push_back({"row_scale", {a}, [=] { return weighted(row_scale(a, rs), 10); }});
    cases.push_back({"slice_last", {a}, [=] { return weighted(slice_last(a, 1, 3), 11); }});
    cases.push_back({"concat_last", {a, b}, [=] { return weighted(concat_last({a, b, a}), 12); }});
    cases.push_back({"reshape", {a}, [=] { return weighted(reshape(a, {2, 6}), 13); }});
    cases.push_back({"cosine_distance_rows", {a, b}, [=] { return weighted(cosine_distance_rows(a, b), 14); }});
  }
  {
    Tensor r(Shape{3, 5}, off_zero_values(15, rng));
    cases.push_back({"relu", {r}, [=] { return weighted(relu(r), 15); }});
    Tensor bias = T({5});
    cases.push_back({"add_bias", {r, bias}, [=] { return weighted(add_bias(r, bias), 16); }});
    Tensor m = T({5, 4}), w = T({2, 5}), wb = T({2});
    cases.push_back({"matmul", {r, m}, [=] { return weighted(matmul(r, m), 17); }});
    cases.push_back({"linear", {r, w, wb}, [=] { return weighted(linear(r, w, wb), 18); }});
    Tensor table = T({6, 3});
    const std::vector<int> idx{5, 0, 2, 5};
    cases.push_back({"embedding", {table}, [=] { return weighted(embedding(table, idx), 19); }});
  }
  {
    Tensor x = T({2, 3, 4});
    cases.push_back({"transpose12", {x}, [=] { return weighted(transpose12(x), 20); }});
    cases.push_back({"time_step", {x}, [=] { return weighted(time_step(x, 2), 21); }});
    Tensor s0 = T({2, 4}), s1 = T({2, 4});
    cases.push_back({"stack_time", {s0, s1}, [=] { return weighted(stack_time({s0, s1, s0}), 22); }});
    cases.push_back({"dropout", {x}, [=] {
                       Rng mask(99);
                       return weighted(dropout(x, Real(0.3), true, mask), 23);
                     }});
  }
  {
    Tensor x = T({2, 3, 7}), w = T({4, 3, 5}), b = T({4});
    cases.push_back({"conv1d", {x, w, b}, [=] { return weighted(conv1d(x, w, b), 24); }});
    Tensor img = T({2, 2, 5, 6}), k = T({3, 2, 3, 3}), kb = T({3});
    cases.push_back({"conv2d", {img, k, kb}, [=] { return weighted(conv2d(img, k, kb, 1, 1, 1), 25); }});
    cases.push_back({"conv2d_stride2", {img, k, kb}, [=] { return weighted(conv2d(img, k, kb, 2, 1, 0), 26); }});
    Tensor pool(Shape{2, 2, 4, 6}, distinct_values(96, rng));
    cases.push_back({"maxpool2d", {pool}, [=] { return weighted(maxpool2d(pool), 27); }});
    cases.push_back({"max_over_height", {pool}, [=] { return weighted(max_over_height(pool), 28); }});
    Tensor bx = T({3, 2, 4}), gamma = T({2}), beta = T({2});
    auto stats = std::make_shared<BatchNormStats>(BatchNormStats{Tensor(Shape{2}), Tensor(Shape{2}, Real(1))});
    cases.push_back({"batch_norm", {bx, gamma, beta}, [=] {
                       return weighted(batch_norm(bx, gamma, beta, *stats, true), 29);
                     }});
  }
  {
    Tensor x = T({2, 3}), h = T({2, 4});
    auto store = std::make_shared<ParamStore>();
    Rng init(5);
    const GruParams p = GruParams::create(*store, "gru", ParamGroup::Encoder, 3, 4, init);
    std::vector<Tensor> ins{x, h};
    for (const auto& e : store->params()) ins.push_back(e.tensor);
    cases.push_back({"gru_cell", ins, [=] { return weighted(gru_cell(x, h, p), 30); }});
  }
  {
    Tensor logits = T({2, 5, 4});
    const std::vector<std::vector<int>> targets{{1, 2}, {3, 3}};
    cases.push_back({"ctc_loss", {logits}, [=] { return ctc_loss(log_softmax(logits), targets); }});
  }
  {
    // The sign forward has no useful finite difference; the straight-through
    // backward is checked against the surrogate tanh(slope * x).
    Tensor x = T({3, 4});
    const Real slope = Real(1.5);
    GradCase c{"sign_ste", {x}, {}};
    c.loss = [x, slope] {
      if (active_tape() != nullptr) return weighted(sign_ste(x, slope), 31);
      return weighted(wsr::tanh(scale(x, slope)), 31);
    };
    cases.push_back(c);
  }
  {
    auto store = std::make_shared<ParamStore>();
    Rng init(11);
    BackboneConfig bc;
    bc.scale = 16;
    bc.dropout = 0;
    auto backbone = std::make_shared<Backbone>(bc, *store, init);
    Tensor img(Shape{2, 1, 16, 16}, random_values(512, rng));
    std::vector<Tensor> ins{img};
    for (const auto& e : store->params()) ins.push_back(e.tensor);
    cases.push_back({"backbone", ins, [=] {
                       Rng r(3);
                       return weighted(backbone->forward(img, true, r), 32);
                     }, 6});
  }
  {
    // Reduced recognizer: features -> encoder -> decoder -> s2s_loss.
    auto store = std::make_shared<ParamStore>();
    Rng init(13);
    auto encoder = std::make_shared<Encoder>(3, EncoderConfig{4, 2}, *store, init);
    auto decoder = std::make_shared<Decoder>(6, DecoderConfig{4, 8}, *store, init);
    Tensor feats = T({2, 3, 5});
    const std::vector<std::vector<int>> targets{{2, 3, 4}, {5}};
    std::vector<Tensor> ins{feats};
    for (const auto& e : store->params()) ins.push_back(e.tensor);
    cases.push_back({"s2s_loss", ins, [=] {
                       Rng tf(1);
                       return s2s_loss(*decoder, encoder->forward(feats), targets, 1.0, tf);
                     }, 8});
  }
  {
    auto store = std::make_shared<ParamStore>();
    Rng init(17);
    auto charenc = std::make_shared<CharEncoder>(6, CharEncoderConfig{3, 4}, *store, init);
    const std::vector<std::vector<int>> words{{2, 3, 4}, {5}};
    std::vector<Tensor> ins;
    for (const auto& e : store->params()) ins.push_back(e.tensor);
    cases.push_back({"char_encoder", ins, [=] { return weighted(charenc->forward(words), 33); }, 8});
  }
  return cases;
}

// ---------------------------------------------------------------------------
// Independent metric oracles

int wagner_fischer(const std::string& a, const std::string& b) {
  std::vector<std::vector<int>> d(a.size() + 1, std::vector<int>(b.size() + 1));
  for (std::size_t i = 0; i <= a.size(); ++i) d[i][0] = static_cast<int>(i);
  for (std::size_t j = 0; j <= b.size(); ++j) d[0][j] = static_cast<int>(j);
  for (std::size_t i = 1; i <= a.size(); ++i)
    for (std::size_t j = 1; j <= b.size(); ++j)
      d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
  return d[a.size()][b.size()];
}

std::string random_word(Rng& rng, std::size_t max_len) {
  std::string s(rng.below(max_len + 1), 'a');
  for (auto& c : s) c = static_cast<char>('a' + rng.below(3));
  return s;
}

/// AP from an explicit precision/recall table.
double tabulated_ap(const std::vector<bool>& rel, std::size_t total) {
  double ap = 0, prev_recall = 0;
  std::size_t hits = 0;
  for (std::size_t k = 0; k < rel.size(); ++k) {
    hits += rel[k] ? 1 : 0;
    const double precision = static_cast<double>(hits) / static_cast<double>(k + 1);
    const double recall = static_cast<double>(hits) / static_cast<double>(total);
    ap += precision * (recall - prev_recall);
    prev_recall = recall;
  }
  return ap;
}

std::size_t index_formula(const SpotIndex& index) {
  std::size_t n = 4 + 2 + 1 + 4 + 4;
  for (const auto& r : index.records)
    n += 4 + 2 + r.transcript.size() + (index.has_float ? 512 * sizeof(float) : 0) + (index.has_binary ? 64 : 0);
  return n;
}

}  // namespace

Outcome combine(const std::vector<Outcome>& parts) {
  Outcome out{true, ""};
  for (const auto& p : parts) {
    out.pass = out.pass && p.pass;
    if (!p.detail.empty()) out.detail += (out.detail.empty() ? "" : "; ") + p.detail;
  }
  return out;
}

Outcome ctc_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(20260101);
  double worst = 0;
  int instances = 0;
  while (instances < 1000) {
    const int frames = 1 + static_cast<int>(rng.below(6));
    const int classes = 2 + static_cast<int>(rng.below(3));
    std::vector<int> target(rng.below(4));
    for (auto& k : target) k = 1 + static_cast<int>(rng.below(static_cast<std::size_t>(classes - 1)));
    if (ctc_min_frames(target) > frames) continue;
    std::vector<Real> lp(static_cast<std::size_t>(frames * classes));
    for (int t = 0; t < frames; ++t) {
      double z = 0;
      std::vector<double> logits(static_cast<std::size_t>(classes));
      for (auto& l : logits) {
        l = 2 * rng.normal();
        z += std::exp(l);
      }
      for (int k = 0; k < classes; ++k)
        lp[static_cast<std::size_t>(t * classes + k)] = logits[static_cast<std::size_t>(k)] - std::log(z);
    }
    const FrameLogProbs f{lp, frames, classes, 0};
    const double expected = -enumerated_log_prob(lp, frames, classes, target);
    worst = std::max(worst, std::abs(ctc_nll(f, target).loss - expected));
    ++instances;
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-6 && secs < 10.0,
          std::to_string(instances) + " instances" + fmt(", max |diff| %.3g", worst) + fmt(", %.2fs", secs)};
}

Outcome gradient_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(77);
  auto cases = gradient_cases(rng);
  double worst = 0;
  std::string worst_name, failed;
  for (auto& c : cases) {
    const double e = max_relative_error(c, rng);
    if (e > worst) {
      worst = e;
      worst_name = c.name;
    }
    if (e > 1e-4) failed += (failed.empty() ? "" : ",") + c.name;
  }
  const double secs = seconds_since(t0);
  std::string detail = std::to_string(cases.size()) + " ops, max rel err " + fmt("%.3g", worst) + " (" + worst_name +
                       ")" + fmt(", %.1fs", secs);
  if (!failed.empty()) detail += ", failing: " + failed;
  return {failed.empty() && secs < 120.0, detail};
}

Outcome equality_invariants() {
  std::vector<Outcome> parts;
  Rng rng(4242);
  ParamStore store;
  Rng init(8);
  const int classes = 9;
  Decoder decoder(classes, DecoderConfig{16, 12}, store, init);
  // Sharpen the random decoder so decoding terminates at varied lengths.
  for (auto& v : decoder.out_weight().data()) v *= Real(8);

  {
    int mismatches = 0;
    double worst = 0;
    for (int trial = 0; trial < 40; ++trial) {
      Tensor x(Shape{1, kDescriptorDim}, random_values(kDescriptorDim, rng, 0.5));
      const auto g = decode_greedy(decoder, x, 12);
      const auto b = decode_beam(decoder, x, 1, 12);
      if (g.labels != b.labels) ++mismatches;
      worst = std::max(worst, std::abs(g.log_prob - b.log_prob));
    }
    parts.push_back({mismatches == 0 && worst <= 1e-6,
                     "beam(1)=greedy: " + std::to_string(mismatches) + " label mismatches" + fmt(", max dlogp %.3g", worst)});
  }
  std::vector<std::vector<int>> queries;
  for (int q = 0; q < 24; ++q) {
    std::vector<int> w(1 + rng.below(5));
    for (auto& k : w) k = 2 + static_cast<int>(rng.below(3));  // small alphabet: shared prefixes
    queries.push_back(w);
  }
  Tensor xs(Shape{5, kDescriptorDim}, random_values(5 * kDescriptorDim, rng, 0.5));
  {
    double worst = 0;
    NoGradScope no_grad;
    for (int i = 0; i < 5; ++i) {
      Tensor row(Shape{1, kDescriptorDim},
                 std::vector<Real>(xs.data().begin() + i * kDescriptorDim, xs.data().begin() + (i + 1) * kDescriptorDim));
      for (const auto& q : queries) {
        Rng unused(0);
        const double loss = s2s_loss(decoder, row, {q}, 1.0, unused).item();
        worst = std::max(worst, std::abs(loss - forced_align_score(decoder, row, q)));
      }
    }
    parts.push_back({worst <= 1e-6, fmt("FA=s2s_loss(tf=1): max diff %.3g", worst)});
  }
  {
    NoGradScope no_grad;
    const QueryTrie trie(queries);
    std::size_t steps = 0;
    const auto scores = trie_forced_align(decoder, xs, trie, &steps);
    double worst = 0;
    std::size_t naive_steps = 0;
    for (int i = 0; i < 5; ++i) {
      Tensor row(Shape{1, kDescriptorDim},
                 std::vector<Real>(xs.data().begin() + i * kDescriptorDim, xs.data().begin() + (i + 1) * kDescriptorDim));
      for (std::size_t q = 0; q < queries.size(); ++q) {
        worst = std::max(worst, std::abs(scores[static_cast<std::size_t>(i)][q] - forced_align_score(decoder, row, queries[q])));
        if (i == 0) naive_steps += queries[q].size() + 1;
      }
    }
    parts.push_back({worst <= 1e-6 && steps <= naive_steps,
                     fmt("trie FA=naive FA: max diff %.3g", worst) + ", steps " + std::to_string(steps) + " vs " +
                         std::to_string(naive_steps)});
  }
  {
    int bad = 0;
    double worst = 0;
    for (int trial = 0; trial < 2000; ++trial) {
      const auto a = random_values(kDescriptorDim, rng), b = random_values(kDescriptorDim, rng);
      int dot = 0;
      double fa = 0, fb = 0, fab = 0;
      for (int k = 0; k < kDescriptorDim; ++k) {
        const int sa = a[k] >= 0 ? 1 : -1, sb = b[k] >= 0 ? 1 : -1;
        dot += sa * sb;
        fab += sa * sb;
        fa += sa * sa;
        fb += sb * sb;
      }
      const auto pa = pack_bits(a), pb = pack_bits(b);
      if (binary_dot(pa, pb) != dot || binary_cosine(pa, pb) * kDescriptorDim != static_cast<double>(dot)) ++bad;
      worst = std::max(worst, std::abs(binary_cosine(pa, pb) - fab / (std::sqrt(fa) * std::sqrt(fb))));
    }
    parts.push_back({bad == 0 && worst <= 1e-12,
                     "binary cosine: " + std::to_string(bad) + " integer mismatches" + fmt(", max float diff %.3g", worst)});
  }
  {
    double worst = 0;
    for (const Real slope : {Real(1), Real(0.5), Real(3)}) {
      Tensor x(Shape{64}, random_values(64, rng, 2.0));
      x.set_requires_grad(true);
      Tape tape;
      {
        TapeScope scope(tape);
        tape.backward(sum(sign_ste(x, slope)));
      }
      for (int k = 0; k < 64; ++k) {
        const double t = std::tanh(static_cast<double>(slope) * x[static_cast<std::size_t>(k)]);
        worst = std::max(worst, std::abs(x.grad()[static_cast<std::size_t>(k)] - slope * (1 - t * t)));
      }
    }
    parts.push_back({worst <= 1e-12, fmt("STE backward: max diff %.3g", worst)});
  }
  {
    int bad = 0;
    for (int trial = 0; trial < 500; ++trial) {
      auto v = random_values(kDescriptorDim, rng);
      v[rng.below(kDescriptorDim)] = 0;
      const auto bits = pack_bits(v);
      const auto back = unpack_bits(bits);
      for (int k = 0; k < kDescriptorDim; ++k)
        if (back[static_cast<std::size_t>(k)] != (v[static_cast<std::size_t>(k)] >= 0 ? 1 : -1)) ++bad;
      BinaryDescriptor raw;
      for (auto& byte : raw) byte = static_cast<std::uint8_t>(rng.below(256));
      if (pack_bits(unpack_bits(raw)) != raw) ++bad;
    }
    parts.push_back({bad == 0, "pack/unpack: " + std::to_string(bad) + " mismatches"});
  }
  return combine(parts);
}

Outcome storage_arithmetic(const std::string& work_dir) {
  std::vector<Outcome> parts;
  Rng rng(88);
  const auto desc = random_values(kDescriptorDim, rng);
  std::vector<float> as_float(desc.begin(), desc.end());
  parts.push_back({sizeof(BinaryDescriptor) == 64 && pack_bits(desc).size() == 64 &&
                       as_float.size() * sizeof(float) == 2048,
                   "binary " + std::to_string(sizeof(BinaryDescriptor)) + " B, float " +
                       std::to_string(as_float.size() * sizeof(float)) + " B"});

  std::filesystem::create_directories(work_dir);
  int bad = 0, files = 0;
  for (int trial = 0; trial < 60; ++trial) {
    SpotIndex index;
    const int flags = 1 + trial % 3;
    index.has_float = (flags & 1) != 0;
    index.has_binary = (flags & 2) != 0;
    index.fingerprint = static_cast<std::uint32_t>(rng.next());
    const std::size_t n = rng.below(40);
    for (std::size_t i = 0; i < n; ++i) {
      IndexRecord r;
      r.id = static_cast<std::uint32_t>(i);
      r.transcript = random_word(rng, 12);
      const auto v = random_values(kDescriptorDim, rng);
      if (index.has_float) r.descriptor.assign(v.begin(), v.end());
      if (index.has_binary) r.bits = pack_bits(v);
      index.records.push_back(r);
    }
    const std::string path = work_dir + "/storage_" + std::to_string(trial) + ".idx";
    save_index(index, path);
    ++files;
    const auto on_disk = std::filesystem::file_size(path);
    if (on_disk != index_formula(index) || on_disk != index.file_size()) ++bad;
  }
  parts.push_back({bad == 0, std::to_string(files) + " index files, " + std::to_string(bad) + " size mismatches"});

  SpotIndex one;
  one.records.push_back({0, "", std::vector<float>(as_float), pack_bits(desc)});
  one.has_binary = false;
  const auto float_size = serialize_index(one).size();
  one.has_float = false;
  one.has_binary = true;
  const auto binary_size = serialize_index(one).size();
  const auto overhead = SpotIndex::kHeaderBytes + 6;
  parts.push_back({float_size - overhead == 32 * (binary_size - overhead),
                   "per-record payload " + std::to_string(float_size - overhead) + " vs " +
                       std::to_string(binary_size - overhead) + " B"});
  return combine(parts);
}

Outcome metric_oracles() {
  std::vector<Outcome> parts;
  Rng rng(99);
  {
    int bad = 0;
    for (int i = 0; i < 10000; ++i) {
      const auto a = random_word(rng, 8), b = random_word(rng, 8), c = random_word(rng, 8);
      const int ab = edit_distance(a, b), ba = edit_distance(b, a);
      const int ac = edit_distance(a, c), cb = edit_distance(c, b);
      const int lo = static_cast<int>(std::max(a.size(), b.size()) - std::min(a.size(), b.size()));
      const int hi = static_cast<int>(std::max(a.size(), b.size()));
      if (ab != wagner_fischer(a, b) || ab != ba || (ab == 0) != (a == b) || ab > ac + cb || ab < lo || ab > hi ||
          edit_distance(a, a) != 0)
        ++bad;
    }
    parts.push_back({bad == 0, "edit distance: 10000 pairs, " + std::to_string(bad) + " violations"});
  }
  {
    int bad = 0, rankings = 0;
    std::vector<ApQuery> batch;
    std::vector<double> batch_ap;
    for (std::size_t n = 1; n <= 10; ++n) {
      for (std::uint32_t mask = 0; mask < (1u << n); ++mask) {
        std::vector<bool> rel(n);
        std::size_t hits = 0;
        for (std::size_t k = 0; k < n; ++k) {
          rel[k] = ((mask >> k) & 1u) != 0;
          hits += rel[k] ? 1 : 0;
        }
        for (std::size_t missing : {0, 1, 3}) {
          const std::size_t total = hits + missing;
          if (total == 0) continue;
          ++rankings;
          const double expected = tabulated_ap(rel, total);
          if (std::abs(average_precision(rel, total) - expected) > 1e-12) ++bad;
          if (std::abs(mean_ap({{rel, total}}) - expected) > 1e-12) ++bad;
          if (rankings % 7 == 0) {
            batch.push_back({rel, total});
            batch_ap.push_back(expected);
          }
        }
      }
    }
    batch.push_back({{false, false}, 0});  // no relevant items: not judged
    const double mean = std::accumulate(batch_ap.begin(), batch_ap.end(), 0.0) / static_cast<double>(batch_ap.size());
    if (std::abs(mean_ap(batch) - mean) > 1e-12) ++bad;
    parts.push_back({bad == 0, "mean_ap: " + std::to_string(rankings) + " rankings, " + std::to_string(bad) + " mismatches"});
  }
  {
    std::vector<double> d;
    for (int i = 0; i < 5000; ++i) d.push_back(static_cast<double>(rng.below(9)) / 8.0);
    std::vector<double> scaled(d);
    for (auto& v : scaled) v *= 1.37;
    const double same = kl_from_distances(d, d), proportional = kl_from_distances(d, scaled);

    const int n = 40, dim = 16;
    std::vector<float> desc(static_cast<std::size_t>(n * dim)), bigger;
    for (auto& v : desc) v = static_cast<float>(rng.normal());
    bigger = desc;
    for (auto& v : bigger) v *= 4.0f;
    std::vector<std::string> words;
    for (int i = 0; i < n; ++i) words.push_back(random_word(rng, 5) + "x");
    const double invariance = std::abs(kl_statistic(desc, dim, words) - kl_statistic(bigger, dim, words));
    parts.push_back({same <= 1e-6 && proportional <= 1e-6 && invariance <= 1e-9,
                     fmt("KL identical %.3g", same) + fmt(", proportional %.3g", proportional) +
                         fmt(", scaling change %.3g", invariance)});
  }
  return combine(parts);
}

}  // namespace acceptance
