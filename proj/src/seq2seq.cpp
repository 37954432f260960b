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

#include "seq2seq.hpp"

#include <algorithm>
#include <map>

WSR_NS_BEGIN

GruParams GruParams::create(ParamStore& store, const std::string& name, ParamGroup group, int input,
                            int hidden, Rng& init_rng) {
  GruParams p;
  p.input = input;
  p.hidden = hidden;
  const std::size_t h = static_cast<std::size_t>(hidden);
  p.w_in = store.add(name + ".w_in", group, Shape{3 * hidden, input}, uniform_fan_in(3 * h * input, hidden, init_rng));
  p.bias = store.add(name + ".bias", group, Shape{3 * hidden}, uniform_fan_in(3 * h, hidden, init_rng));
  p.u_rz = store.add(name + ".u_rz", group, Shape{2 * hidden, hidden}, uniform_fan_in(2 * h * h, hidden, init_rng));
  p.u_h = store.add(name + ".u_h", group, Shape{hidden, hidden}, uniform_fan_in(h * h, hidden, init_rng));
  return p;
}

Tensor gru_step(const Tensor& x_proj, const Tensor& h, const GruParams& p) {
  const int H = p.hidden;
  WSR_REQUIRE(x_proj.dim(-1) == 3 * H && h.dim(-1) == H, "gru_step: dimension mismatch");
  Tensor hrz = linear(h, p.u_rz);
  Tensor r = sigmoid(add(slice_last(x_proj, 0, H), slice_last(hrz, 0, H)));
  Tensor z = sigmoid(add(slice_last(x_proj, H, 2 * H), slice_last(hrz, H, 2 * H)));
  Tensor n = tanh(add(slice_last(x_proj, 2 * H, 3 * H), linear(mul(r, h), p.u_h)));
  // (1 - z) * n + z * h == n + z * (h - n)
  return add(n, mul(z, sub(h, n)));
}

Tensor gru_cell(const Tensor& x, const Tensor& h, const GruParams& p) {
  WSR_REQUIRE(x.dim(-1) == p.input, "gru_cell: input width mismatch");
  return gru_step(linear(x, p.w_in, p.bias), h, p);
}

// ---------------------------------------------------------------------------

Encoder::Encoder(int input_dim, const EncoderConfig& config, ParamStore& store, Rng& init_rng) : config_(config) {
  WSR_REQUIRE(config.layers >= 1 && config.hidden >= 1, "encoder needs >= 1 layer and hidden size");
  int in = input_dim;
  for (int l = 0; l < config.layers; ++l) {
    const std::string base = "encoder.layer" + std::to_string(l);
    forward_.push_back(GruParams::create(store, base + ".fwd", ParamGroup::Encoder, in, config.hidden, init_rng));
    backward_.push_back(GruParams::create(store, base + ".bwd", ParamGroup::Encoder, in, config.hidden, init_rng));
    in = 2 * config.hidden;
  }
  const int cat = 2 * config.layers * config.hidden;
  proj_w_ = store.add("encoder.proj.weight", ParamGroup::Encoder, Shape{kDescriptorDim, cat},
                      uniform_fan_in(static_cast<std::size_t>(kDescriptorDim) * cat, cat, init_rng));
  proj_b_ = store.add("encoder.proj.bias", ParamGroup::Encoder, Shape{kDescriptorDim},
                      std::vector<Real>(kDescriptorDim, 0));
}

Tensor Encoder::forward(const Tensor& features) const {
  WSR_REQUIRE(features.rank() == 3, "encoder expects [N x D x W] features");
  const int n = features.dim(0), steps = features.dim(2), H = config_.hidden;
  Tensor seq = transpose12(features);
  std::vector<Tensor> finals;
  for (int l = 0; l < config_.layers; ++l) {
    Tensor zero(Shape{n, H});
    Tensor pf = linear(seq, forward_[l].w_in, forward_[l].bias);
    Tensor pb = linear(seq, backward_[l].w_in, backward_[l].bias);
    std::vector<Tensor> outs_f(static_cast<std::size_t>(steps)), outs_b(static_cast<std::size_t>(steps));
    Tensor h = zero;
    for (int t = 0; t < steps; ++t) {
      h = gru_step(time_step(pf, t), h, forward_[l]);
      outs_f[static_cast<std::size_t>(t)] = h;
    }
    finals.push_back(h);
    h = zero;
    for (int t = steps - 1; t >= 0; --t) {
      h = gru_step(time_step(pb, t), h, backward_[l]);
      outs_b[static_cast<std::size_t>(t)] = h;
    }
    finals.push_back(h);
    if (l + 1 < config_.layers) seq = concat_last({stack_time(outs_f), stack_time(outs_b)});
  }
  return linear(concat_last(finals), proj_w_, proj_b_);
}

// ---------------------------------------------------------------------------

Decoder::Decoder(int num_classes, const DecoderConfig& config, ParamStore& store, Rng& init_rng)
    : num_classes_(num_classes), config_(config) {
  embed_ = store.add("decoder.embed", ParamGroup::Decoder, Shape{num_classes, config.embed},
                     kaiming_normal(static_cast<std::size_t>(num_classes) * config.embed, config.embed, init_rng));
  gru_ = GruParams::create(store, "decoder.gru", ParamGroup::Decoder, config.embed, kDescriptorDim, init_rng);
  out_w_ = store.add("decoder.out.weight", ParamGroup::Decoder, Shape{num_classes, kDescriptorDim},
                     uniform_fan_in(static_cast<std::size_t>(num_classes) * kDescriptorDim, kDescriptorDim, init_rng));
  out_b_ = store.add("decoder.out.bias", ParamGroup::Decoder, Shape{num_classes}, std::vector<Real>(num_classes, 0));
}

Decoder::Step Decoder::step(std::span<const int> prev, const Tensor& hidden) const {
  WSR_REQUIRE(hidden.rank() == 2 && hidden.dim(1) == kDescriptorDim &&
                  hidden.dim(0) == static_cast<int>(prev.size()),
              "decoder step: expected [B x 512] hidden with B previous tokens");
  Tensor e = embedding(embed_, prev);
  Tensor h = gru_cell(e, hidden, gru_);
  return {log_softmax(linear(h, out_w_, out_b_)), h};
}

int argmax_token(const Tensor& log_probs, int row) {
  const int c = log_probs.dim(1);
  const Real* p = log_probs.data().data() + static_cast<std::size_t>(row) * c;
  int best = Charset::kSpace;
  for (int k = Charset::kSpace + 1; k < c; ++k)
    if (p[k] > p[best]) best = k;
  return best;
}

namespace {

Tensor as_rows(const Tensor& x) {
  if (x.rank() == 1) return reshape(x, Shape{1, x.dim(0)});
  return x;
}

void check_tokens(std::span<const int> tokens, int classes) {
  for (int t : tokens)
    WSR_REQUIRE(t >= 2 && t < classes, "character index outside the decoder's charset");
}

}  // namespace

Tensor s2s_loss(const Decoder& decoder, const Tensor& x, const std::vector<std::vector<int>>& targets,
                double teacher_forcing, Rng& rng) {
  const Tensor xs = as_rows(x);
  const int b = xs.dim(0);
  WSR_REQUIRE(static_cast<int>(targets.size()) == b, "s2s_loss: one target per descriptor");
  int max_steps = 0;
  for (const auto& t : targets) {
    check_tokens(t, decoder.num_classes());
    max_steps = std::max(max_steps, static_cast<int>(t.size()) + 1);
  }
  std::vector<int> prev(static_cast<std::size_t>(b), Charset::kSpace);
  std::vector<int> tgt(static_cast<std::size_t>(b));
  std::vector<Real> w(static_cast<std::size_t>(b));
  Tensor h = xs;
  Tensor total;
  for (int i = 1; i <= max_steps; ++i) {
    Decoder::Step st = decoder.step(prev, h);
    for (int r = 0; r < b; ++r) {
      const auto& t = targets[static_cast<std::size_t>(r)];
      const int steps = static_cast<int>(t.size()) + 1;
      tgt[r] = i <= static_cast<int>(t.size()) ? t[static_cast<std::size_t>(i - 1)] : Charset::kSpace;
      w[r] = i <= steps ? static_cast<Real>(-1.0 / (static_cast<double>(steps) * b)) : Real(0);
    }
    Tensor term = weighted_sum(gather_last(st.log_probs, tgt), w);
    total = total.defined() ? add(total, term) : term;
    for (int r = 0; r < b; ++r) {
      const int steps = static_cast<int>(targets[static_cast<std::size_t>(r)].size()) + 1;
      if (i >= steps) {
        prev[r] = Charset::kSpace;
      } else if (teacher_forcing >= 1.0 || (teacher_forcing > 0.0 && rng.bernoulli(teacher_forcing))) {
        prev[r] = tgt[r];
      } else {
        prev[r] = argmax_token(st.log_probs, r);
      }
    }
    h = st.hidden;
  }
  return total;
}

double forced_align_score(const Decoder& decoder, const Tensor& x, std::span<const int> query) {
  WSR_REQUIRE(!query.empty(), "forced alignment needs a non-empty query");
  check_tokens(query, decoder.num_classes());
  Tensor h = as_rows(x);
  WSR_REQUIRE(h.dim(0) == 1, "forced_align_score scores one descriptor");
  int prev = Charset::kSpace;
  double acc = 0;
  const int steps = static_cast<int>(query.size()) + 1;
  for (int i = 1; i <= steps; ++i) {
    Decoder::Step st = decoder.step(std::span<const int>(&prev, 1), h);
    const int target = i <= static_cast<int>(query.size()) ? query[static_cast<std::size_t>(i - 1)] : Charset::kSpace;
    acc -= st.log_probs.data()[static_cast<std::size_t>(target)];
    prev = target;
    h = st.hidden;
  }
  return acc / steps;
}

DecodeResult decode_greedy(const Decoder& decoder, const Tensor& x, int max_len) {
  Tensor h = as_rows(x);
  WSR_REQUIRE(h.dim(0) == 1, "decode_greedy decodes one descriptor");
  DecodeResult res;
  res.terminated = false;
  int prev = Charset::kSpace;
  for (int i = 0; i < max_len; ++i) {
    Decoder::Step st = decoder.step(std::span<const int>(&prev, 1), h);
    const int tok = argmax_token(st.log_probs, 0);
    res.log_prob += st.log_probs.data()[static_cast<std::size_t>(tok)];
    if (tok == Charset::kSpace) {
      res.terminated = true;
      break;
    }
    res.labels.push_back(tok);
    prev = tok;
    h = st.hidden;
  }
  return res;
}

std::vector<DecodeResult> decode_greedy_batch(const Decoder& decoder, const Tensor& x, int max_len) {
  const Tensor xs = as_rows(x);
  const int b = xs.dim(0);
  std::vector<DecodeResult> out(static_cast<std::size_t>(b));
  for (auto& r : out) r.terminated = false;
  std::vector<int> prev(static_cast<std::size_t>(b), Charset::kSpace);
  std::vector<bool> done(static_cast<std::size_t>(b), false);
  Tensor h = xs;
  int live = b;
  for (int i = 0; i < max_len && live > 0; ++i) {
    Decoder::Step st = decoder.step(prev, h);
    for (int r = 0; r < b; ++r) {
      if (done[r]) continue;
      const int tok = argmax_token(st.log_probs, r);
      out[r].log_prob += st.log_probs.data()[static_cast<std::size_t>(r) * decoder.num_classes() + tok];
      if (tok == Charset::kSpace) {
        out[r].terminated = true;
        done[r] = true;
        --live;
      } else {
        out[r].labels.push_back(tok);
        prev[r] = tok;
      }
    }
    h = st.hidden;
  }
  return out;
}

DecodeResult decode_beam(const Decoder& decoder, const Tensor& x, int width, int max_len) {
  WSR_REQUIRE(width >= 1, "beam width must be >= 1");
  const Tensor x0 = as_rows(x);
  WSR_REQUIRE(x0.dim(0) == 1, "decode_beam decodes one descriptor");
  const int c = decoder.num_classes();

  struct Hyp {
    std::vector<int> labels;
    double score = 0;
    int last = Charset::kSpace;
    std::vector<Real> hidden;
  };
  std::vector<Hyp> live(1);
  live[0].hidden.assign(x0.data().begin(), x0.data().end());
  std::vector<Hyp> finished;

  for (int step = 0; step < max_len && !live.empty(); ++step) {
    const int nl = static_cast<int>(live.size());
    Tensor h(Shape{nl, kDescriptorDim});
    std::vector<int> prev(static_cast<std::size_t>(nl));
    for (int i = 0; i < nl; ++i) {
      std::copy(live[i].hidden.begin(), live[i].hidden.end(), h.data().begin() + static_cast<std::ptrdiff_t>(i) * kDescriptorDim);
      prev[i] = live[i].last;
    }
    Decoder::Step st = decoder.step(prev, h);

    struct Cand {
      double score;
      int beam;
      int token;
    };
    std::vector<Cand> cands;
    for (int i = 0; i < nl; ++i) {
      const Real* lp = st.log_probs.data().data() + static_cast<std::size_t>(i) * c;
      std::vector<int> toks;
      for (int k = Charset::kSpace; k < c; ++k) toks.push_back(k);
      std::stable_sort(toks.begin(), toks.end(), [lp](int a, int b) { return lp[a] > lp[b]; });
      if (static_cast<int>(toks.size()) > width) toks.resize(static_cast<std::size_t>(width));
      for (int k : toks) cands.push_back({live[i].score + lp[k], i, k});
    }
    std::stable_sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) { return a.score > b.score; });
    if (static_cast<int>(cands.size()) > width) cands.resize(static_cast<std::size_t>(width));

    std::vector<Hyp> next;
    for (const Cand& cd : cands) {
      Hyp hyp;
      hyp.labels = live[cd.beam].labels;
      hyp.score = cd.score;
      if (cd.token == Charset::kSpace) {
        finished.push_back(std::move(hyp));
        continue;
      }
      hyp.labels.push_back(cd.token);
      hyp.last = cd.token;
      const Real* hp = st.hidden.data().data() + static_cast<std::size_t>(cd.beam) * kDescriptorDim;
      hyp.hidden.assign(hp, hp + kDescriptorDim);
      next.push_back(std::move(hyp));
    }
    live = std::move(next);
    if (!finished.empty() && !live.empty()) {
      double best_done = finished.front().score;
      for (const auto& f : finished) best_done = std::max(best_done, f.score);
      double best_live = live.front().score;
      for (const auto& l : live) best_live = std::max(best_live, l.score);
      // Log-probabilities only decrease, so no live beam can overtake.
      if (best_done >= best_live) break;
    }
  }

  DecodeResult res;
  const std::vector<Hyp>& pool = finished.empty() ? live : finished;
  if (pool.empty()) {
    res.terminated = false;
    return res;
  }
  const Hyp* best = &pool.front();
  for (const auto& hyp : pool)
    if (hyp.score > best->score) best = &hyp;
  res.labels = best->labels;
  res.log_prob = best->score;
  res.terminated = !finished.empty();
  return res;
}

// ---------------------------------------------------------------------------

QueryTrie::QueryTrie(const std::vector<std::vector<int>>& queries) {
  nodes_.emplace_back();
  levels_.push_back({0});
  for (std::size_t q = 0; q < queries.size(); ++q) {
    WSR_REQUIRE(!queries[q].empty(), "trie queries must be non-empty");
    int cur = 0;
    for (int sym : queries[q]) {
      int next = -1;
      for (int child : nodes_[static_cast<std::size_t>(cur)].children)
        if (nodes_[static_cast<std::size_t>(child)].symbol == sym) next = child;
      if (next < 0) {
        Node n;
        n.symbol = sym;
        n.parent = cur;
        n.depth = nodes_[static_cast<std::size_t>(cur)].depth + 1;
        next = static_cast<int>(nodes_.size());
        nodes_[static_cast<std::size_t>(cur)].children.push_back(next);
        if (static_cast<int>(levels_.size()) <= n.depth) levels_.emplace_back();
        levels_[static_cast<std::size_t>(n.depth)].push_back(next);
        nodes_.push_back(std::move(n));
      }
      cur = next;
    }
    nodes_[static_cast<std::size_t>(cur)].terminal_queries.push_back(static_cast<int>(q));
  }
  query_count_ = queries.size();
}

std::vector<std::vector<double>> trie_forced_align(const Decoder& decoder, const Tensor& x, const QueryTrie& trie,
                                                   std::size_t* steps) {
  const Tensor xs = as_rows(x);
  const int n_total = xs.dim(0);
  const int c = decoder.num_classes();
  const auto& nodes = trie.nodes();
  std::vector<std::vector<double>> scores(static_cast<std::size_t>(n_total),
                                          std::vector<double>(trie.query_count(), 0.0));
  if (steps != nullptr) *steps = nodes.size();
  for (const auto& node : nodes)
    if (node.symbol != Charset::kSpace) WSR_REQUIRE(node.symbol >= 2 && node.symbol < c, "trie symbol outside charset");

  constexpr int kChunk = 64;
  for (int start = 0; start < n_total; start += kChunk) {
    const int n = std::min(kChunk, n_total - start);
    // Per-node state for the previous level: row offset in prev_hidden/prev_lp.
    std::map<int, int> prev_pos;
    Tensor prev_hidden, prev_lp;
    std::vector<double> cost_prev;

    for (std::size_t d = 0; d < trie.levels().size(); ++d) {
      const auto& level = trie.levels()[d];
      const int rows = static_cast<int>(level.size()) * n;
      Tensor h(Shape{rows, kDescriptorDim});
      std::vector<int> prev(static_cast<std::size_t>(rows));
      std::vector<double> cost(static_cast<std::size_t>(rows), 0.0);
      for (std::size_t li = 0; li < level.size(); ++li) {
        const auto& node = nodes[static_cast<std::size_t>(level[li])];
        for (int r = 0; r < n; ++r) {
          const std::size_t row = li * n + r;
          const Real* src;
          if (d == 0) {
            src = xs.data().data() + static_cast<std::size_t>(start + r) * kDescriptorDim;
          } else {
            const std::size_t prow = static_cast<std::size_t>(prev_pos.at(node.parent)) * n + r;
            src = prev_hidden.data().data() + prow * kDescriptorDim;
            cost[row] = cost_prev[prow] - prev_lp.data()[prow * c + node.symbol];
          }
          std::copy_n(src, kDescriptorDim, h.data().begin() + static_cast<std::ptrdiff_t>(row) * kDescriptorDim);
          prev[row] = node.symbol;
        }
      }
      Decoder::Step st = decoder.step(prev, h);
      prev_pos.clear();
      for (std::size_t li = 0; li < level.size(); ++li) {
        const auto& node = nodes[static_cast<std::size_t>(level[li])];
        prev_pos[level[li]] = static_cast<int>(li);
        for (int q : node.terminal_queries) {
          for (int r = 0; r < n; ++r) {
            const std::size_t row = li * n + r;
            const double total = cost[row] - st.log_probs.data()[row * c + Charset::kSpace];
            scores[static_cast<std::size_t>(start + r)][static_cast<std::size_t>(q)] = total / (node.depth + 1);
          }
        }
      }
      prev_hidden = st.hidden;
      prev_lp = st.log_probs;
      cost_prev = std::move(cost);
    }
  }
  return scores;
}

WSR_NS_END
