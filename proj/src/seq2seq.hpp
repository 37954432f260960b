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
#include <utility>
#include <vector>

#include "data.hpp"
#include "optim.hpp"
#include "tensor.hpp"

WSR_NS_BEGIN

/// GRU weights. Gate order in the stacked input weight is r, z, h.
struct GruParams {
  Tensor w_in;  ///< [3H x in]
  Tensor bias;  ///< [3H]
  Tensor u_rz;  ///< [2H x H]
  Tensor u_h;   ///< [H x H]
  int input = 0;
  int hidden = 0;

  static GruParams create(ParamStore& store, const std::string& name, ParamGroup group, int input,
                          int hidden, Rng& init_rng);
};

/// r = s(W_r x + U_r h + b_r), z = s(W_z x + U_z h + b_z),
/// n = tanh(W_h x + U_h (r * h) + b_h), h' = (1 - z) * n + z * h.
Tensor gru_cell(const Tensor& x, const Tensor& h, const GruParams& p);
/// Same cell with the input projection W x + b precomputed ([B x 3H]).
Tensor gru_step(const Tensor& x_proj, const Tensor& h, const GruParams& p);

struct EncoderConfig {
  int hidden = 256;
  int layers = 3;
};

/// Stacked bidirectional GRU. The final hidden states of both directions of
/// every layer are concatenated and linearly compressed to the descriptor.
class Encoder {
 public:
  Encoder(int input_dim, const EncoderConfig& config, ParamStore& store, Rng& init_rng);

  /// features [N x D x W] -> descriptors [N x 512].
  Tensor forward(const Tensor& features) const;

  const EncoderConfig& config() const { return config_; }

 private:
  EncoderConfig config_;
  std::vector<GruParams> forward_;
  std::vector<GruParams> backward_;
  Tensor proj_w_;
  Tensor proj_b_;
};

struct DecoderConfig {
  int embed = 128;
  int max_len = 32;
};

/// Unidirectional single-layer GRU whose initial state is the descriptor.
class Decoder {
 public:
  Decoder(int num_classes, const DecoderConfig& config, ParamStore& store, Rng& init_rng);

  struct Step {
    Tensor log_probs;  ///< [B x C]
    Tensor hidden;     ///< [B x 512]
  };
  /// Feeds previous tokens with hidden states [B x 512].
  Step step(std::span<const int> prev, const Tensor& hidden) const;

  int num_classes() const { return num_classes_; }
  const DecoderConfig& config() const { return config_; }

  /// Output layer, exposed for tests that pin the decoder's predictions.
  Tensor& out_weight() { return out_w_; }
  Tensor& out_bias() { return out_b_; }

 private:
  int num_classes_;
  DecoderConfig config_;
  Tensor embed_;
  GruParams gru_;
  Tensor out_w_;
  Tensor out_b_;
};

/// Index of the best non-blank class in row r of [B x C] log-probabilities.
int argmax_token(const Tensor& log_probs, int row);

/// Mean per-character cross-entropy of decoding `targets` (character indices,
/// SP excluded) from descriptors x [B x 512], including the terminal SP
/// prediction; averaged over the batch. At every step after the first, each
/// sample is fed the ground-truth previous character with probability
/// `teacher_forcing`, otherwise its own previous argmax.
Tensor s2s_loss(const Decoder& decoder, const Tensor& x, const std::vector<std::vector<int>>& targets,
                double teacher_forcing, Rng& rng);

/// Mean cross-entropy of the query under full teacher forcing, terminal SP
/// included; lower is a better match. x is one descriptor [1 x 512] or [512].
double forced_align_score(const Decoder& decoder, const Tensor& x, std::span<const int> query);

struct DecodeResult {
  std::vector<int> labels;
  bool terminated = true;  ///< false when max_len was hit without SP
  double log_prob = 0;
};

DecodeResult decode_greedy(const Decoder& decoder, const Tensor& x, int max_len);
/// Greedy decoding of every row of x [B x 512] in one batched pass.
std::vector<DecodeResult> decode_greedy_batch(const Decoder& decoder, const Tensor& x, int max_len);
/// Beam search over live hypotheses ranked by summed log-probability.
DecodeResult decode_beam(const Decoder& decoder, const Tensor& x, int width, int max_len);

/// Character trie over a query set; node 0 is the root (the initial SP).
class QueryTrie {
 public:
  struct Node {
    int symbol = Charset::kSpace;
    int parent = -1;
    int depth = 0;
    std::vector<int> children;
    std::vector<int> terminal_queries;
  };

  explicit QueryTrie(const std::vector<std::vector<int>>& queries);

  const std::vector<Node>& nodes() const { return nodes_; }
  std::size_t query_count() const { return query_count_; }
  /// Node ids grouped by depth, breadth-first.
  const std::vector<std::vector<int>>& levels() const { return levels_; }

 private:
  std::vector<Node> nodes_;
  std::vector<std::vector<int>> levels_;
  std::size_t query_count_ = 0;
};

/// Forced-alignment scores of every query against every descriptor row of x
/// [N x 512] -> N x Q, walking the trie level by level so each node's decoder
/// step is computed once and shared by all queries below it. `steps`, if
/// given, receives the number of decoder steps per descriptor.
std::vector<std::vector<double>> trie_forced_align(const Decoder& decoder, const Tensor& x,
                                                   const QueryTrie& trie, std::size_t* steps = nullptr);

WSR_NS_END
