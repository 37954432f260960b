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

#include "wsrnet/wsrnet.h"

#include <cstdlib>
#include <cstring>
#include <fstream>
#include <memory>
#include <new>
#include <sstream>

#include "config.hpp"
#include "data.hpp"
#include "eval.hpp"
#include "model.hpp"
#include "spotting.hpp"
#include "synth.hpp"
#include "training.hpp"

struct wsr_config {
  wsr::RunConfig cfg;
};

struct wsr_dataset {
  std::vector<wsr::WordSample> samples;
};

struct wsr_model {
  std::unique_ptr<wsr::WsrNet> net;
};

struct wsr_index {
  wsr::SpotIndex index;
};

namespace {

thread_local std::string g_error;

template <typename F>
wsr_status guarded(F&& body) {
  try {
    body();
    g_error.clear();
    return WSR_OK;
  } catch (const wsr::ContractViolation& e) {
    g_error = e.what();
    return WSR_ERR_USAGE;
  } catch (const wsr::DataError& e) {
    g_error = e.what();
    return WSR_ERR_DATA;
  } catch (const wsr::NumericalFault& e) {
    g_error = e.what();
    return WSR_ERR_NUMERIC;
  } catch (const std::bad_alloc&) {
    g_error = "out of memory";
    return WSR_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_error = e.what();
    return WSR_ERR_INTERNAL;
  }
}

void need(const void* p, const char* what) {
  if (p == nullptr) wsr::contract_fail(std::string(what) + " must not be null");
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

wsr::Backend parse_backend(const char* s) {
  need(s, "backend");
  if (std::strcmp(s, "float") == 0) return wsr::Backend::Float;
  if (std::strcmp(s, "binary") == 0) return wsr::Backend::Binary;
  wsr::contract_fail(std::string("unknown backend '") + s + "' (float|binary)");
}

wsr::Branch parse_branch(const char* s) {
  need(s, "branch");
  if (std::strcmp(s, "ctc") == 0) return wsr::Branch::Ctc;
  if (std::strcmp(s, "seq2seq") == 0) return wsr::Branch::Seq2Seq;
  wsr::contract_fail(std::string("unknown branch '") + s + "' (ctc|seq2seq)");
}

wsr::Decoding parse_decoding(const char* s) {
  need(s, "decoder");
  if (std::strcmp(s, "greedy") == 0) return wsr::Decoding::Greedy;
  if (std::strcmp(s, "beam") == 0) return wsr::Decoding::Beam;
  wsr::contract_fail(std::string("unknown decoder '") + s + "' (greedy|beam)");
}

wsr::CharsetMode parse_mode(const char* s) {
  try {
    return wsr::parse_charset_mode(s == nullptr ? "kws" : s);
  } catch (const wsr::DataError& e) {
    wsr::contract_fail(e.what());
  }
}

std::vector<const wsr::Image*> image_ptrs(const wsr_dataset* d) {
  std::vector<const wsr::Image*> out;
  for (const auto& s : d->samples) out.push_back(&s.image);
  return out;
}

std::string ranking_tsv(const std::vector<wsr::Ranking>& rankings) {
  std::ostringstream out;
  wsr::write_rankings(out, rankings);
  return out.str();
}

}  // namespace

extern "C" {

const char* wsr_last_error(void) { return g_error.c_str(); }

void wsr_string_free(char* s) { std::free(s); }

// ---- configuration ---------------------------------------------------------

wsr_status wsr_config_new(wsr_config** out) {
  return guarded([&] {
    need(out, "out");
    *out = new wsr_config{};
  });
}

wsr_status wsr_config_load(const char* path, wsr_config** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new wsr_config{wsr::RunConfig::load(path)};
  });
}

wsr_status wsr_config_set(wsr_config* config, const char* key, const char* value) {
  return guarded([&] {
    need(config, "config");
    need(key, "key");
    need(value, "value");
    config->cfg.set(key, value);
  });
}

wsr_status wsr_config_get(const wsr_config* config, const char* key, char** value) {
  return guarded([&] {
    need(config, "config");
    need(key, "key");
    need(value, "value");
    *value = dup_string(config->cfg.get(key));
  });
}

wsr_status wsr_config_echo(const wsr_config* config, char** text) {
  return guarded([&] {
    need(config, "config");
    need(text, "text");
    *text = dup_string(config->cfg.echo());
  });
}

wsr_status wsr_config_help(char** text) {
  return guarded([&] {
    need(text, "text");
    *text = dup_string(wsr::RunConfig::help_text());
  });
}

void wsr_config_free(wsr_config* config) { delete config; }

// ---- datasets --------------------------------------------------------------

wsr_status wsr_dataset_load(const char* root, const char* manifest, const char* charset, wsr_dataset** out,
                            char** report) {
  return guarded([&] {
    need(root, "root");
    need(manifest, "manifest");
    need(out, "out");
    const wsr::Charset cs(parse_mode(charset));
    wsr::LoadReport r = wsr::load_dataset(root, manifest, cs);
    if (report != nullptr) {
      std::string text;
      for (const auto& e : r.errors) text += e + "\n";
      if (r.excluded > 0) text += std::to_string(r.excluded) + " samples excluded: empty transcript after normalization\n";
      if (r.samples.empty()) text += "warning: no samples loaded\n";
      *report = dup_string(text);
    }
    *out = new wsr_dataset{std::move(r.samples)};
  });
}

wsr_status wsr_dataset_from_images(const char* const* paths, size_t count, wsr_dataset** out) {
  return guarded([&] {
    need(out, "out");
    if (count > 0) need(paths, "paths");
    auto d = std::make_unique<wsr_dataset>();
    for (size_t i = 0; i < count; ++i) {
      need(paths[i], "path");
      wsr::WordSample s;
      s.id = paths[i];
      s.image = wsr::read_pgm(paths[i]);
      s.split = wsr::Split::Test;
      d->samples.push_back(std::move(s));
    }
    *out = d.release();
  });
}

wsr_status wsr_dataset_synth(const char* vocab_path, int per_word, uint64_t seed, const char* split,
                             const char* charset, wsr_dataset** out) {
  return guarded([&] {
    need(vocab_path, "vocab_path");
    need(out, "out");
    if (per_word < 1) wsr::contract_fail("per_word must be >= 1");
    const wsr::Charset cs(parse_mode(charset));
    std::vector<std::string> vocab;
    for (const auto& w : wsr::read_vocab(vocab_path)) {
      const auto norm = cs.normalize(w);
      if (!norm || *norm != w) throw wsr::DataError("vocabulary word '" + w + "' is not in the " +
                                                    std::string(wsr::charset_mode_name(cs.mode())) + " charset");
      vocab.push_back(*norm);
    }
    wsr::SynthOptions opts;
    try {
      opts.split = wsr::parse_split(split == nullptr ? "train" : split);
    } catch (const wsr::DataError& e) {
      wsr::contract_fail(e.what());
    }
    *out = new wsr_dataset{wsr::synth_generate(vocab, per_word, seed, opts)};
  });
}

wsr_status wsr_dataset_write(const wsr_dataset* dataset, const char* dir) {
  return guarded([&] {
    need(dataset, "dataset");
    need(dir, "dir");
    wsr::write_dataset(dir, dataset->samples);
  });
}

wsr_status wsr_dataset_filter(const wsr_dataset* dataset, const char* split, wsr_dataset** out) {
  return guarded([&] {
    need(dataset, "dataset");
    need(out, "out");
    auto d = std::make_unique<wsr_dataset>();
    if (split == nullptr) {
      d->samples = dataset->samples;
    } else {
      const wsr::Split s = wsr::parse_split(split);
      for (const auto& x : dataset->samples)
        if (x.split == s) d->samples.push_back(x);
    }
    *out = d.release();
  });
}

size_t wsr_dataset_size(const wsr_dataset* dataset) { return dataset == nullptr ? 0 : dataset->samples.size(); }

void wsr_dataset_free(wsr_dataset* dataset) { delete dataset; }

// ---- training --------------------------------------------------------------

wsr_status wsr_train(const wsr_config* config, const wsr_dataset* train, const wsr_dataset* val,
                     const char* base_checkpoint, const char* metrics_path, wsr_model** out) {
  return guarded([&] {
    need(config, "config");
    need(train, "train");
    need(out, "out");
    const wsr::RunConfig& cfg = config->cfg;
    const std::string regime = cfg.get("regime");
    std::unique_ptr<wsr::WsrNet> net;
    if (base_checkpoint != nullptr) {
      if (regime != "fine_tune") wsr::contract_fail("a base checkpoint requires regime = fine_tune");
      net = wsr::WsrNet::load(base_checkpoint);
      std::map<std::string, std::string> base_meta;
      for (const auto& [k, v] : net->metadata()) base_meta["base." + k] = v;
      net->metadata() = base_meta;
      for (const auto& key : wsr::config_keys())
        if (!wsr::is_architecture_key(key.name)) net->set_run_key(key.name, cfg.get(key.name));
    } else {
      if (regime == "fine_tune") wsr::contract_fail("regime fine_tune needs a base checkpoint");
      net = std::make_unique<wsr::WsrNet>(cfg);
    }
    net->metadata()["regime"] = regime;

    wsr::WordCorpus corpus;
    wsr::TrainOptions opts;
    if (net->config().get_bool("lm")) {
      const std::string& path = net->config().get("corpus");
      if (path.empty()) wsr::contract_fail("lm = 1 needs a corpus file");
      corpus = wsr::WordCorpus::load(path, net->charset());
      if (corpus.skipped() > 0)
        std::fprintf(stderr, "warning: %zu corpus lines skipped\n", corpus.skipped());
      opts.corpus = &corpus;
    }
    std::ofstream metrics;
    if (metrics_path != nullptr) {
      metrics.open(metrics_path, std::ios::binary | std::ios::trunc);
      if (!metrics) throw wsr::DataError(std::string("cannot write metrics log ") + metrics_path);
      std::istringstream echo(net->config().echo());
      std::string line;
      while (std::getline(echo, line)) metrics << "# " << line << '\n';
      metrics << "# epoch\ttrain_loss\tval_cer\tval_wer\tlr\n";
      metrics.flush();
      opts.progress = &metrics;
    }
    static const std::vector<wsr::WordSample> kNone;
    wsr::train(*net, train->samples, val == nullptr ? kNone : val->samples, opts);
    *out = new wsr_model{std::move(net)};
  });
}

wsr_status wsr_model_load(const char* path, wsr_model** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new wsr_model{wsr::WsrNet::load(path)};
  });
}

wsr_status wsr_model_save(const wsr_model* model, const char* path) {
  return guarded([&] {
    need(model, "model");
    need(path, "path");
    model->net->save(path);
  });
}

wsr_status wsr_model_config(const wsr_model* model, char** text) {
  return guarded([&] {
    need(model, "model");
    need(text, "text");
    *text = dup_string(model->net->config().echo());
  });
}

wsr_status wsr_model_config_get(const wsr_model* model, const char* key, char** value) {
  return guarded([&] {
    need(model, "model");
    need(key, "key");
    need(value, "value");
    *value = dup_string(model->net->config().get(key));
  });
}

void wsr_model_free(wsr_model* model) { delete model; }

// ---- recognition -----------------------------------------------------------

wsr_status wsr_recognize(const wsr_model* model, const wsr_dataset* dataset, const char* branch, const char* decoder,
                         int beam_width, char** tsv) {
  return guarded([&] {
    need(model, "model");
    need(dataset, "dataset");
    need(tsv, "tsv");
    const auto hyps = model->net->recognize(image_ptrs(dataset), parse_branch(branch), parse_decoding(decoder),
                                            beam_width);
    std::string text;
    for (std::size_t i = 0; i < hyps.size(); ++i) text += dataset->samples[i].id + "\t" + hyps[i] + "\n";
    *tsv = dup_string(text);
  });
}

wsr_status wsr_eval_htr(const wsr_model* model, const wsr_dataset* dataset, const char* branch, const char* decoder,
                        int beam_width, double* cer, double* wer) {
  return guarded([&] {
    need(model, "model");
    need(dataset, "dataset");
    need(cer, "cer");
    need(wer, "wer");
    if (dataset->samples.empty()) throw wsr::DataError("evaluation dataset is empty");
    const auto s = wsr::evaluate_recognition(*model->net, dataset->samples, parse_branch(branch),
                                             parse_decoding(decoder), beam_width);
    *cer = s.cer;
    *wer = s.wer;
  });
}

// ---- spotting --------------------------------------------------------------

wsr_status wsr_index_build(const wsr_model* model, const wsr_dataset* dataset, int flags, wsr_index** out) {
  return guarded([&] {
    need(model, "model");
    need(dataset, "dataset");
    need(out, "out");
    if ((flags & ~(WSR_INDEX_FLOAT | WSR_INDEX_BINARY)) != 0 || flags == 0)
      wsr::contract_fail("index flags must select float and/or binary descriptors");
    *out = new wsr_index{wsr::build_index(*model->net, dataset->samples, (flags & WSR_INDEX_FLOAT) != 0,
                                          (flags & WSR_INDEX_BINARY) != 0)};
  });
}

wsr_status wsr_index_save(const wsr_index* index, const char* path) {
  return guarded([&] {
    need(index, "index");
    need(path, "path");
    wsr::save_index(index->index, path);
  });
}

wsr_status wsr_index_load(const char* path, wsr_index** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = new wsr_index{wsr::load_index(path)};
  });
}

size_t wsr_index_size(const wsr_index* index) { return index == nullptr ? 0 : index->index.records.size(); }

uint64_t wsr_index_file_size(const wsr_index* index) { return index == nullptr ? 0 : index->index.file_size(); }

void wsr_index_free(wsr_index* index) { delete index; }

wsr_status wsr_spot_qbe(const wsr_index* index, uint32_t query_id, const char* backend, int exclude_self, char** tsv) {
  return guarded([&] {
    need(index, "index");
    need(tsv, "tsv");
    *tsv = dup_string(ranking_tsv({wsr::qbe(index->index, query_id, parse_backend(backend), exclude_self != 0)}));
  });
}

wsr_status wsr_spot_qbe_image(const wsr_model* model, const wsr_index* index, const char* pgm_path,
                              const char* backend, char** tsv) {
  return guarded([&] {
    need(model, "model");
    need(index, "index");
    need(pgm_path, "pgm_path");
    need(tsv, "tsv");
    wsr::Ranking r = wsr::qbe_image(*model->net, index->index, wsr::read_pgm(pgm_path), parse_backend(backend));
    r.query_id = pgm_path;
    *tsv = dup_string(ranking_tsv({r}));
  });
}

wsr_status wsr_spot_qbs(const wsr_model* model, const wsr_index* index, const char* const* queries, size_t count,
                        const char* mode, const char* backend, char** tsv) {
  return guarded([&] {
    need(model, "model");
    need(index, "index");
    need(mode, "mode");
    need(tsv, "tsv");
    if (count > 0) need(queries, "queries");
    std::vector<std::string> qs;
    for (size_t i = 0; i < count; ++i) {
      need(queries[i], "query");
      qs.emplace_back(queries[i]);
    }
    const wsr::Backend b = parse_backend(backend);
    std::vector<wsr::Ranking> out;
    if (std::strcmp(mode, "embed") == 0) {
      for (const auto& q : qs) out.push_back(wsr::qbs_embed(*model->net, index->index, q, b));
    } else if (std::strcmp(mode, "fa") == 0) {
      out = wsr::qbs_fa(*model->net, index->index, qs, b);
    } else {
      wsr::contract_fail(std::string("unknown query mode '") + mode + "' (embed|fa)");
    }
    *tsv = dup_string(ranking_tsv(out));
  });
}

wsr_status wsr_eval_kws(const wsr_model* model, const wsr_index* index, const char* kind, const char* backend,
                        double* map, size_t* queries) {
  return guarded([&] {
    need(index, "index");
    need(kind, "kind");
    need(map, "map");
    const wsr::Backend b = parse_backend(backend);
    wsr::KwsReport r;
    if (std::strcmp(kind, "qbe") == 0) {
      r = wsr::evaluate_qbe(index->index, b);
    } else if (std::strcmp(kind, "qbs") == 0) {
      need(model, "model");
      r = wsr::evaluate_qbs_embed(*model->net, index->index, b);
    } else if (std::strcmp(kind, "fa") == 0) {
      need(model, "model");
      r = wsr::evaluate_qbs_fa(*model->net, index->index, b);
    } else {
      wsr::contract_fail(std::string("unknown evaluation kind '") + kind + "' (qbe|qbs|fa)");
    }
    *map = r.map;
    if (queries != nullptr) *queries = r.queries;
  });
}

wsr_status wsr_kl_stat(const wsr_index* index, int bins, int random_baseline, uint64_t seed, double* out) {
  return guarded([&] {
    need(index, "index");
    need(out, "out");
    const auto& recs = index->index.records;
    std::vector<float> desc;
    std::vector<std::string> transcripts;
    wsr::Rng rng(seed);
    for (const auto& r : recs) {
      transcripts.push_back(r.transcript);
      if (random_baseline != 0) {
        for (int k = 0; k < wsr::kDescriptorDim; ++k) desc.push_back(static_cast<float>(rng.normal()));
      } else if (index->index.has_float) {
        desc.insert(desc.end(), r.descriptor.begin(), r.descriptor.end());
      } else {
        for (auto v : wsr::unpack_bits(r.bits)) desc.push_back(static_cast<float>(v));
      }
    }
    wsr::KlOptions opts;
    opts.bins = bins;
    *out = wsr::kl_statistic(desc, wsr::kDescriptorDim, transcripts, opts);
  });
}

wsr_status wsr_edit_distance(const char* a, const char* b, int* out) {
  return guarded([&] {
    need(a, "a");
    need(b, "b");
    need(out, "out");
    *out = wsr::edit_distance(a, b);
  });
}

}  // extern "C"
