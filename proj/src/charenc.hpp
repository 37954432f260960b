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

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "data.hpp"
#include "optim.hpp"
#include "seq2seq.hpp"
#include "tensor.hpp"

WSR_NS_BEGIN

struct CharEncoderConfig {
  int embed = 128;
  int hidden = 512;
};

/// Maps a character string into the descriptor space: embedded characters
/// through a single-layer GRU, last hidden state through a linear layer.
class CharEncoder {
 public:
  CharEncoder(int num_classes, const CharEncoderConfig& config, ParamStore& store, Rng& init_rng);

  /// Character index sequences (no SP) -> [B x 512].
  Tensor forward(const std::vector<std::vector<int>>& words) const;

  const CharEncoderConfig& config() const { return config_; }

 private:
  int num_classes_;
  CharEncoderConfig config_;
  Tensor embed_;
  GruParams gru_;
  Tensor proj_w_;
  Tensor proj_b_;
};

struct AutoencoderLoss {
  Tensor total;    ///< s2s + cosine
  Tensor s2s;
  Tensor cosine;   ///< batch mean of 1 - cos(x_enc, x_cenc)
  int zero_norm_rows = 0;
  std::vector<int> selected_visual;  ///< per-sample draw b
};

/// Per sample, b ~ Bernoulli(0.5) picks x_enc (b = 1) or x_cenc (b = 0) as the
/// decoder's initial state; the cosine term couples the two encoders. When
/// `forced_choice` is set every sample uses that b and no draw is made.
AutoencoderLoss mixed_autoencoder_loss(const Decoder& decoder, const Tensor& x_enc, const Tensor& x_cenc,
                                       const std::vector<std::vector<int>>& targets, double teacher_forcing,
                                       Rng& rng, std::optional<int> forced_choice = std::nullopt);

/// Word frequency list for implicit language-model fine-tuning.
class WordCorpus {
 public:
  struct Entry {
    std::string word;
    std::uint64_t count;
  };

  WordCorpus() = default;
  explicit WordCorpus(std::vector<Entry> entries);

  /// `word\tcount` lines, normalized to `charset`; unusable lines are skipped
  /// and counted.
  static WordCorpus load(const std::string& path, const Charset& charset);

  const std::vector<Entry>& entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }
  std::size_t skipped() const { return skipped_; }
  double probability(std::size_t i) const;

  /// Index drawn with probability proportional to its count.
  std::size_t sample(Rng& rng) const;

 private:
  std::vector<Entry> entries_;
  std::vector<std::uint64_t> cumulative_;
  std::size_t skipped_ = 0;
};

/// Separate optimizer for the corpus fine-tuning path.
struct CorpusTuner {
  AdamState adam;
  int batch_size = 32;
  double grad_clip = 5.0;
};

/// One update of the character encoder and decoder on corpus words with full
/// teacher forcing. Returns the loss, or nullopt for an empty corpus.
std::optional<double> corpus_finetune_step(const CharEncoder& charenc, const Decoder& decoder,
                                           const Charset& charset, ParamStore& store, const WordCorpus& corpus,
                                           CorpusTuner& tuner, double lr, Rng& rng);

WSR_NS_END
