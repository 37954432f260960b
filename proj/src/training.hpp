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

#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "charenc.hpp"
#include "model.hpp"

WSR_NS_BEGIN

struct LossParts {
  Tensor total;
  double ctc = 0;
  double s2s = 0;     ///< plain or autoencoder form, before lambda
  double cosine = 0;  ///< autoencoder coupling term, 0 when inactive
};

/// L = L_ctc + lambda * L_s2s, where L_s2s becomes the mixed autoencoder loss
/// when `autoencoder` is on. `branches` = ctc or s2s keeps a single term.
/// An infeasible CTC target aborts with InfeasibleAlignment naming the sample.
LossParts multitask_loss(const WsrNet& model, const Tensor& images, const std::vector<std::vector<int>>& targets,
                         Rng& rng);

/// Parameter groups updated under the model's current configuration.
std::vector<ParamStore::Entry> trained_parameters(const WsrNet& model);

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0;
  double val_cer = 0;
  double val_wer = 0;
  double lr = 0;
};

/// `epoch\ttrain_loss\tval_cer\tval_wer\tlr`
std::string format_metrics(const EpochMetrics& m);

struct TrainOptions {
  const WordCorpus* corpus = nullptr;  ///< required when lm is enabled
  std::ostream* progress = nullptr;
};

struct TrainResult {
  std::vector<EpochMetrics> metrics;
  int best_epoch = -1;
};

/// Seeded epoch loop: shuffle, augment, multitask loss, backward, clip, Adam at
/// the cosine rate, optional corpus step; validation after every epoch. The
/// model ends up holding the best-validation parameters.
TrainResult train(WsrNet& model, const std::vector<WordSample>& train_set, const std::vector<WordSample>& val_set,
                  const TrainOptions& options = {});

struct RecognitionScore {
  double cer = 0;
  double wer = 0;
  double accuracy() const { return 100.0 - wer; }
};

RecognitionScore evaluate_recognition(const WsrNet& model, const std::vector<WordSample>& samples, Branch branch,
                                      Decoding decoding, int beam_width, bool sign_descriptors = false);

WSR_NS_END
