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

#include "training.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "binarize.hpp"
#include "eval.hpp"

WSR_NS_BEGIN

LossParts multitask_loss(const WsrNet& model, const Tensor& images, const std::vector<std::vector<int>>& targets,
                         Rng& rng) {
  const RunConfig& cfg = model.config();
  const std::string& branches = cfg.get("branches");
  const bool use_ctc = branches != "s2s";
  const bool use_s2s = branches != "ctc";
  const bool binarize = cfg.get_bool("binarize");
  const auto slope = static_cast<Real>(cfg.get_real("ste_slope"));
  const double tf = cfg.get_real("teacher_forcing");
  const auto lambda = static_cast<Real>(cfg.get_real("lambda"));
  WSR_REQUIRE(lambda >= 0, "lambda must be >= 0");

  LossParts parts;
  Tensor feats = model.backbone().forward(images, true, rng);
  Tensor total;
  if (use_ctc) {
    Tensor lp = model.ctc().forward(feats, true, rng);
    Tensor l_ctc = ctc_loss(lp, targets);
    parts.ctc = l_ctc.item();
    total = l_ctc;
  }
  if (use_s2s) {
    Tensor x = model.encoder().forward(feats);
    Tensor l_s2s;
    if (cfg.get_bool("autoencoder")) {
      Tensor xc = model.charenc().forward(targets);
      // The coupling term compares the real-valued descriptors; the decoder
      // sees the binarized ones when binarization is on.
      AutoencoderLoss ae = mixed_autoencoder_loss(model.decoder(), binarize ? sign_ste(x, slope) : x,
                                                  binarize ? sign_ste(xc, slope) : xc, targets, tf, rng);
      if (binarize) {
        Tensor cos = mean(cosine_distance_rows(x, xc));
        l_s2s = add(ae.s2s, cos);
        parts.cosine = cos.item();
      } else {
        l_s2s = ae.total;
        parts.cosine = ae.cosine.item();
      }
    } else {
      l_s2s = s2s_loss(model.decoder(), binarize ? sign_ste(x, slope) : x, targets, tf, rng);
    }
    parts.s2s = l_s2s.item();
    Tensor weighted = scale(l_s2s, lambda);
    total = total.defined() ? add(total, weighted) : weighted;
  }
  parts.total = total;
  return parts;
}

std::vector<ParamStore::Entry> trained_parameters(const WsrNet& model) {
  const RunConfig& cfg = model.config();
  const std::string& branches = cfg.get("branches");
  const bool use_ctc = branches != "s2s";
  const bool use_s2s = branches != "ctc";
  const bool ae = use_s2s && cfg.get_bool("autoencoder");
  std::vector<ParamStore::Entry> out;
  for (const auto& e : model.store().params()) {
    switch (e.group) {
      case ParamGroup::Backbone: out.push_back(e); break;
      case ParamGroup::CtcHead: if (use_ctc) out.push_back(e); break;
      case ParamGroup::Encoder:
      case ParamGroup::Decoder: if (use_s2s) out.push_back(e); break;
      case ParamGroup::CharEncoder: if (ae) out.push_back(e); break;
    }
  }
  return out;
}

std::string format_metrics(const EpochMetrics& m) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%d\t%.6f\t%.4f\t%.4f\t%.8g", m.epoch, m.train_loss, m.val_cer, m.val_wer, m.lr);
  return buf;
}

RecognitionScore evaluate_recognition(const WsrNet& model, const std::vector<WordSample>& samples, Branch branch,
                                      Decoding decoding, int beam_width, bool sign_descriptors) {
  WSR_REQUIRE(!samples.empty(), "recognition evaluation needs samples");
  std::vector<const Image*> images;
  for (const auto& s : samples) images.push_back(&s.image);
  const auto hyps = model.recognize(images, branch, decoding, beam_width, sign_descriptors);
  std::vector<RecognitionPair> pairs;
  for (std::size_t i = 0; i < samples.size(); ++i) pairs.push_back({hyps[i], samples[i].transcript});
  return {cer(pairs), wer(pairs)};
}

namespace {

struct Validation {
  double cer = std::numeric_limits<double>::quiet_NaN();
  double wer = std::numeric_limits<double>::quiet_NaN();
};

Validation validate(const WsrNet& model, const std::vector<WordSample>& val) {
  if (val.empty()) return {};
  const std::string& branches = model.config().get("branches");
  if (branches == "ctc") {
    const auto s = evaluate_recognition(model, val, Branch::Ctc, Decoding::Greedy, 1);
    return {s.cer, s.wer};
  }
  const auto s2s = evaluate_recognition(model, val, Branch::Seq2Seq, Decoding::Greedy, 1);
  if (branches == "s2s") return {s2s.cer, s2s.wer};
  const auto ctc = evaluate_recognition(model, val, Branch::Ctc, Decoding::Greedy, 1);
  return {(s2s.cer + ctc.cer) / 2, (s2s.wer + ctc.wer) / 2};
}

}  // namespace

TrainResult train(WsrNet& model, const std::vector<WordSample>& train_set, const std::vector<WordSample>& val_set,
                  const TrainOptions& options) {
  const RunConfig& cfg = model.config();
  const int epochs = static_cast<int>(cfg.get_int("epochs"));
  const int batch_size = static_cast<int>(cfg.get_int("batch_size"));
  WSR_REQUIRE(epochs >= 1, "epochs must be >= 1");
  WSR_REQUIRE(batch_size >= 2, "batch_size must be >= 2 (batch norm)");
  WSR_REQUIRE(train_set.size() >= 2, "training needs at least two samples");
  const bool augment = cfg.get_bool("augment");
  const bool lm = cfg.get_bool("lm");
  const double clip = cfg.get_real("grad_clip");
  if (lm) WSR_REQUIRE(options.corpus != nullptr, "lm training needs a corpus");

  AffineRanges ranges;
  ranges.rotation_deg = cfg.get_real("aug_rotation");
  ranges.shear = cfg.get_real("aug_shear");
  ranges.scale_min = cfg.get_real("aug_scale_min");
  ranges.scale_max = cfg.get_real("aug_scale_max");
  ranges.translate_px = cfg.get_real("aug_translate");
  const LrSchedule schedule{cfg.get_real("lr"), epochs, cfg.get_real("lr_min")};

  const Charset& charset = model.charset();
  std::vector<std::vector<int>> targets;
  for (const auto& s : train_set) targets.push_back(charset.encode(s.transcript));
  std::vector<Image> fixed;
  if (!augment)
    for (const auto& s : train_set) fixed.push_back(preprocess(s.image, model.input_height(), model.input_width()));

  Rng rng(static_cast<std::uint64_t>(cfg.get_int("seed")));
  AdamState adam;
  CorpusTuner tuner;
  tuner.batch_size = static_cast<int>(cfg.get_int("lm_batch_size"));
  tuner.grad_clip = clip;
  const auto trained = trained_parameters(model);

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  TrainResult result;
  double best_wer = std::numeric_limits<double>::infinity(), best_cer = best_wer;
  std::vector<std::vector<Real>> best;

  for (int epoch = 0; epoch < epochs; ++epoch) {
    const double lr = cosine_lr(epoch, schedule);
    rng.shuffle(order);
    double loss_sum = 0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(batch_size));
      if (end - start < 2) break;
      std::vector<Image> augmented;
      std::vector<const Image*> images;
      std::vector<std::vector<int>> batch_targets;
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t i = order[k];
        if (augment) {
          augmented.push_back(preprocess(augment_affine(train_set[i].image, rng, ranges), model.input_height(),
                                         model.input_width()));
        }
        batch_targets.push_back(targets[i]);
      }
      for (std::size_t k = start; k < end; ++k) images.push_back(augment ? &augmented[k - start] : &fixed[order[k]]);

      model.store().zero_grad();
      Tape tape;
      double value = 0;
      {
        TapeScope scope(tape);
        LossParts parts;
        try {
          parts = multitask_loss(model, model.image_batch(images), batch_targets, rng);
        } catch (const InfeasibleAlignment& e) {
          throw InfeasibleAlignment("epoch " + std::to_string(epoch) + " batch " + std::to_string(batches) +
                                        ": sample " + train_set[order[start + e.sample()]].id + ": " + e.what(),
                                    e.sample());
        }
        value = parts.total.item();
        if (!std::isfinite(value))
          throw NumericalFault("non-finite loss at epoch " + std::to_string(epoch) + " batch " +
                               std::to_string(batches));
        tape.backward(parts.total);
      }
      if (clip > 0) clip_grad_norm(trained, clip);
      adam_step(trained, adam, lr);
      if (lm)
        corpus_finetune_step(model.charenc(), model.decoder(), charset, model.store(), *options.corpus, tuner,
                             lr * cfg.get_real("lm_lr_factor"), rng);
      loss_sum += value;
      ++batches;
    }

    const Validation v = validate(model, val_set);
    EpochMetrics m{epoch, batches > 0 ? loss_sum / batches : 0.0, v.cer, v.wer, lr};
    result.metrics.push_back(m);
    if (options.progress != nullptr) *options.progress << format_metrics(m) << std::endl;
    const bool better = val_set.empty() || v.wer < best_wer || (v.wer == best_wer && v.cer < best_cer);
    if (better) {
      best_wer = v.wer;
      best_cer = v.cer;
      best = model.snapshot();
      result.best_epoch = epoch;
    }
  }
  model.restore(best);
  model.metadata()["epoch"] = std::to_string(result.best_epoch);
  return result;
}

WSR_NS_END
