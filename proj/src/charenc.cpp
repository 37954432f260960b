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

#include "charenc.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <sstream>

WSR_NS_BEGIN

CharEncoder::CharEncoder(int num_classes, const CharEncoderConfig& config, ParamStore& store, Rng& init_rng)
    : num_classes_(num_classes), config_(config) {
  embed_ = store.add("charenc.embed", ParamGroup::CharEncoder, Shape{num_classes, config.embed},
                     kaiming_normal(static_cast<std::size_t>(num_classes) * config.embed, config.embed, init_rng));
  gru_ = GruParams::create(store, "charenc.gru", ParamGroup::CharEncoder, config.embed, config.hidden, init_rng);
  proj_w_ = store.add("charenc.proj.weight", ParamGroup::CharEncoder, Shape{kDescriptorDim, config.hidden},
                      uniform_fan_in(static_cast<std::size_t>(kDescriptorDim) * config.hidden, config.hidden,
                                     init_rng));
  proj_b_ = store.add("charenc.proj.bias", ParamGroup::CharEncoder, Shape{kDescriptorDim},
                      std::vector<Real>(kDescriptorDim, 0));
}

Tensor CharEncoder::forward(const std::vector<std::vector<int>>& words) const {
  WSR_REQUIRE(!words.empty(), "char encoder needs at least one word");
  const int b = static_cast<int>(words.size());
  std::size_t steps = 0;
  for (const auto& w : words) {
    WSR_REQUIRE(!w.empty(), "char encoder input must be non-empty");
    for (int k : w) WSR_REQUIRE(k >= 2 && k < num_classes_, "character index outside the charset");
    steps = std::max(steps, w.size());
  }
  Tensor h(Shape{b, config_.hidden});
  std::vector<int> tokens(static_cast<std::size_t>(b));
  std::vector<Real> active(static_cast<std::size_t>(b));
  for (std::size_t t = 0; t < steps; ++t) {
    bool ragged = false;
    for (int r = 0; r < b; ++r) {
      const bool on = t < words[r].size();
      tokens[r] = on ? words[r][t] : Charset::kSpace;
      active[r] = on ? Real(1) : Real(0);
      ragged = ragged || !on;
    }
    Tensor cand = gru_cell(embedding(embed_, tokens), h, gru_);
    // Finished words keep their last state.
    h = ragged ? add(h, row_scale(sub(cand, h), active)) : cand;
  }
  return linear(h, proj_w_, proj_b_);
}

AutoencoderLoss mixed_autoencoder_loss(const Decoder& decoder, const Tensor& x_enc, const Tensor& x_cenc,
                                       const std::vector<std::vector<int>>& targets, double teacher_forcing,
                                       Rng& rng, std::optional<int> forced_choice) {
  WSR_REQUIRE(x_enc.shape() == x_cenc.shape() && x_enc.rank() == 2, "autoencoder loss: descriptor shapes differ");
  const int b = x_enc.dim(0);
  AutoencoderLoss out;
  std::vector<Real> pick_enc(static_cast<std::size_t>(b)), pick_cenc(static_cast<std::size_t>(b));
  for (int r = 0; r < b; ++r) {
    const int choice = forced_choice ? *forced_choice : (rng.bernoulli(0.5) ? 1 : 0);
    out.selected_visual.push_back(choice);
    pick_enc[r] = static_cast<Real>(choice);
    pick_cenc[r] = static_cast<Real>(1 - choice);
  }
  Tensor mixed = add(row_scale(x_enc, pick_enc), row_scale(x_cenc, pick_cenc));
  out.s2s = s2s_loss(decoder, mixed, targets, teacher_forcing, rng);
  out.cosine = mean(cosine_distance_rows(x_enc, x_cenc, &out.zero_norm_rows));
  out.total = add(out.s2s, out.cosine);
  return out;
}

// ---------------------------------------------------------------------------

WordCorpus::WordCorpus(std::vector<Entry> entries) : entries_(std::move(entries)) {
  std::uint64_t acc = 0;
  for (const auto& e : entries_) {
    WSR_REQUIRE(e.count >= 1, "corpus counts must be >= 1");
    acc += e.count;
    cumulative_.push_back(acc);
  }
}

WordCorpus WordCorpus::load(const std::string& path, const Charset& charset) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus file: " + path);
  std::vector<Entry> entries;
  std::size_t skipped = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      ++skipped;
      continue;
    }
    const auto word = charset.normalize(line.substr(0, tab));
    std::uint64_t count = 0;
    try {
      std::size_t used = 0;
      const std::string num = line.substr(tab + 1);
      const long long v = std::stoll(num, &used);
      if (used != num.size() || v < 1) throw std::invalid_argument("count");
      count = static_cast<std::uint64_t>(v);
    } catch (const std::exception&) {
      ++skipped;
      continue;
    }
    if (!word) {
      ++skipped;
      continue;
    }
    entries.push_back({*word, count});
  }
  WordCorpus corpus(std::move(entries));
  corpus.skipped_ = skipped;
  return corpus;
}

double WordCorpus::probability(std::size_t i) const {
  return static_cast<double>(entries_.at(i).count) / static_cast<double>(cumulative_.back());
}

std::size_t WordCorpus::sample(Rng& rng) const {
  WSR_REQUIRE(!entries_.empty(), "cannot sample from an empty corpus");
  const auto total = cumulative_.back();
  const auto ticket = static_cast<std::uint64_t>(rng.uniform() * static_cast<double>(total));
  return static_cast<std::size_t>(std::upper_bound(cumulative_.begin(), cumulative_.end(), ticket) -
                                  cumulative_.begin());
}

std::optional<double> corpus_finetune_step(const CharEncoder& charenc, const Decoder& decoder,
                                           const Charset& charset, ParamStore& store, const WordCorpus& corpus,
                                           CorpusTuner& tuner, double lr, Rng& rng) {
  if (corpus.empty()) {
    std::cerr << "warning: empty corpus, language-model step skipped\n";
    return std::nullopt;
  }
  std::vector<std::vector<int>> words;
  for (int i = 0; i < tuner.batch_size; ++i) words.push_back(charset.encode(corpus.entries()[corpus.sample(rng)].word));

  std::vector<ParamStore::Entry> trained;
  for (const auto& e : store.params())
    if (e.group == ParamGroup::CharEncoder || e.group == ParamGroup::Decoder) trained.push_back(e);
  for (auto& e : trained) e.tensor.zero_grad();

  Tape tape;
  double value = 0;
  {
    TapeScope scope(tape);
    Tensor loss = s2s_loss(decoder, charenc.forward(words), words, 1.0, rng);
    value = loss.item();
    if (!std::isfinite(value)) throw NumericalFault("non-finite language-model loss");
    tape.backward(loss);
  }
  if (tuner.grad_clip > 0) clip_grad_norm(trained, tuner.grad_clip);
  adam_step(trained, tuner.adam, lr);
  return value;
}

WSR_NS_END
