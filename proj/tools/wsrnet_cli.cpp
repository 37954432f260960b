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

// Command-line front end. Every operation goes through the C API.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "wsrnet/wsrnet.h"

namespace {

/// Non-zero status from the library, carried to main as the exit code.
struct Failure {
  wsr_status status;
  std::string message;
};

const char* status_name(wsr_status s) {
  switch (s) {
    case WSR_OK: return "ok";
    case WSR_ERR_USAGE: return "usage";
    case WSR_ERR_DATA: return "data";
    case WSR_ERR_NUMERIC: return "numeric";
    default: return "internal";
  }
}

void check(wsr_status s) {
  if (s != WSR_OK) throw Failure{s, wsr_last_error()};
}

[[noreturn]] void usage(const std::string& msg) { throw Failure{WSR_ERR_USAGE, msg}; }

/// Owns a library-allocated string.
std::string take(char* s) {
  std::string out = s == nullptr ? "" : s;
  wsr_string_free(s);
  return out;
}

template <typename T, void (*Free)(T*)>
struct Handle {
  T* ptr = nullptr;
  Handle() = default;
  Handle(const Handle&) = delete;
  Handle& operator=(const Handle&) = delete;
  ~Handle() { Free(ptr); }
  T** out() { return &ptr; }
  T* get() const { return ptr; }
};
using Config = Handle<wsr_config, wsr_config_free>;
using Dataset = Handle<wsr_dataset, wsr_dataset_free>;
using Model = Handle<wsr_model, wsr_model_free>;
using Index = Handle<wsr_index, wsr_index_free>;

std::string commented(const std::string& text) {
  std::istringstream in(text);
  std::string line, out;
  while (std::getline(in, line)) out += "# " + line + "\n";
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Failure{WSR_ERR_DATA, "cannot write " + path};
  out << text;
}

std::string model_key(const Model& m, const char* key) {
  char* v = nullptr;
  check(wsr_model_config_get(m.get(), key, &v));
  return take(v);
}

void load_dir(Dataset& d, const std::string& dir, const std::string& charset, const char* split) {
  Dataset all;
  char* report = nullptr;
  const std::string manifest = dir + "/manifest.tsv";
  check(wsr_dataset_load(dir.c_str(), manifest.c_str(), charset.c_str(), all.out(), &report));
  const std::string r = take(report);
  if (!r.empty()) std::cerr << r;
  check(wsr_dataset_filter(all.get(), split, d.out()));
}

/// Checkpoint path recorded in the sidecar written next to an index.
std::string sidecar_model(const std::string& index_path) {
  std::ifstream in(index_path + ".cfg");
  for (std::string line; std::getline(in, line);)
    if (line.rfind("model = ", 0) == 0) return line.substr(8);
  usage("no --model given and " + index_path + ".cfg names none");
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string config_path, data, val, base, out, metrics, regime;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;
};

void add_train_options(CLI::App* sub, TrainArgs& a, bool base_required) {
  sub->add_option("--config", a.config_path, "key = value config file");
  sub->add_option("--set", a.sets, "config override key=value (repeatable)");
  sub->add_option("--data", a.data, "dataset directory with manifest.tsv (train split)")->required();
  sub->add_option("--val", a.val, "validation dataset directory (val split)");
  sub->add_option("--seed", a.seed, "run seed")->required();
  sub->add_option("--epochs", a.epochs, "override the epochs key");
  sub->add_option("--out", a.out, "output checkpoint")->required();
  sub->add_option("--metrics", a.metrics, "metrics log (default <out>.metrics.tsv)");
  auto* base = sub->add_option("--base", a.base, "base checkpoint");
  if (base_required) base->required();
}

int run_train(TrainArgs& a, const std::vector<std::pair<std::string, std::string>>& forced) {
  Config cfg;
  if (a.config_path.empty()) check(wsr_config_new(cfg.out()));
  else check(wsr_config_load(a.config_path.c_str(), cfg.out()));
  for (const auto& kv : a.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) usage("--set expects key=value, got '" + kv + "'");
    check(wsr_config_set(cfg.get(), kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str()));
  }
  if (!a.regime.empty()) check(wsr_config_set(cfg.get(), "regime", a.regime.c_str()));
  for (const auto& [k, v] : forced) check(wsr_config_set(cfg.get(), k.c_str(), v.c_str()));
  check(wsr_config_set(cfg.get(), "seed", std::to_string(*a.seed).c_str()));
  if (a.epochs) check(wsr_config_set(cfg.get(), "epochs", std::to_string(*a.epochs).c_str()));

  char* charset = nullptr;
  if (!a.base.empty()) {
    Model base;
    check(wsr_model_load(a.base.c_str(), base.out()));
    charset = nullptr;
    check(wsr_model_config_get(base.get(), "charset", &charset));
  } else {
    check(wsr_config_get(cfg.get(), "charset", &charset));
  }
  const std::string cs = take(charset);
  Dataset train, val;
  load_dir(train, a.data, cs, "train");
  if (wsr_dataset_size(train.get()) == 0) throw Failure{WSR_ERR_DATA, "no train-split samples in " + a.data};
  if (!a.val.empty()) load_dir(val, a.val, cs, "val");
  const std::string metrics = a.metrics.empty() ? a.out + ".metrics.tsv" : a.metrics;
  Model model;
  check(wsr_train(cfg.get(), train.get(), a.val.empty() ? nullptr : val.get(), a.base.empty() ? nullptr : a.base.c_str(),
                  metrics.c_str(), model.out()));
  check(wsr_model_save(model.get(), a.out.c_str()));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"wsrnet: handwritten word recognition and keyword spotting"};
  app.require_subcommand(1);
  char* help = nullptr;
  if (wsr_config_help(&help) == WSR_OK) app.footer("\n" + take(help));

  // synth
  std::string vocab, synth_out, split = "train", synth_charset = "kws";
  int per_word = 0;
  std::optional<std::uint64_t> synth_seed;
  auto* synth = app.add_subcommand("synth", "render a synthetic word-image dataset");
  synth->add_option("--vocab", vocab, "one word per line")->required();
  synth->add_option("--per-word", per_word, "renderings per word")->required();
  synth->add_option("--seed", synth_seed, "generator seed")->required();
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--split", split, "split tag")->check(CLI::IsMember({"train", "val", "test"}));
  synth->add_option("--charset", synth_charset, "kws or full")->check(CLI::IsMember({"kws", "full"}));

  // training family
  TrainArgs train_args, ae_args, ste_args;
  auto* train = app.add_subcommand("train", "train a model");
  add_train_options(train, train_args, false);
  train->add_option("--regime", train_args.regime, "scratch or fine_tune")->check(CLI::IsMember({"scratch", "fine_tune"}));
  auto* ae = app.add_subcommand("ae-finetune", "add the character encoder to a trained model and fine-tune");
  add_train_options(ae, ae_args, true);
  auto* ste = app.add_subcommand("ste-retrain", "retrain a model for sign-binarized descriptors");
  add_train_options(ste, ste_args, true);

  // recognition
  std::string model_path, data_dir, branch = "seq2seq", decoder = "greedy", rec_out;
  std::vector<std::string> images;
  int width = 0;
  auto* recognize = app.add_subcommand("recognize", "transcribe word images");
  recognize->add_option("--model", model_path, "checkpoint")->required();
  auto* rec_data = recognize->add_option("--data", data_dir, "dataset directory");
  recognize->add_option("--images", images, "PGM files")->excludes(rec_data);
  recognize->add_option("--branch", branch, "ctc or seq2seq")->check(CLI::IsMember({"ctc", "seq2seq"}));
  recognize->add_option("--decoder", decoder, "greedy or beam")->check(CLI::IsMember({"greedy", "beam"}));
  recognize->add_option("--width", width, "beam width (default: beam_width key)");
  recognize->add_option("--out", rec_out, "output TSV (default stdout)");

  // indexing
  std::string index_out;
  bool only_float = false, only_binary = false;
  auto* index = app.add_subcommand("index", "build a spotting index");
  index->add_option("--model", model_path, "checkpoint")->required();
  index->add_option("--data", data_dir, "dataset directory")->required();
  index->add_option("--out", index_out, "index file")->required();
  index->add_flag("--float-only", only_float, "store float descriptors only");
  index->add_flag("--binary-only", only_binary, "store binary descriptors only");

  // spotting
  std::string index_path, backend = "float", spot_out, mode = "embed", query_image, queries_file;
  std::optional<std::uint32_t> query_id;
  std::vector<std::string> queries;
  bool keep_self = false;
  auto* qbe = app.add_subcommand("spot-qbe", "query by example");
  qbe->add_option("--index", index_path, "index file")->required();
  auto* qid = qbe->add_option("--query-id", query_id, "indexed record id");
  qbe->add_option("--query-image", query_image, "PGM query image (needs --model)")->excludes(qid);
  qbe->add_option("--model", model_path, "checkpoint (default: the model recorded beside the index)");
  qbe->add_option("--backend", backend, "float or binary")->check(CLI::IsMember({"float", "binary"}));
  qbe->add_flag("--keep-self", keep_self, "keep the query record in its ranking");
  qbe->add_option("--out", spot_out, "ranking TSV (default stdout)");

  auto add_qbs = [&](CLI::App* sub, bool with_mode) {
    sub->add_option("--index", index_path, "index file")->required();
    sub->add_option("--model", model_path, "checkpoint (default: the model recorded beside the index)");
    sub->add_option("--query", queries, "query string (repeatable)");
    sub->add_option("--queries", queries_file, "file with one query per line");
    if (with_mode) sub->add_option("--mode", mode, "embed or fa")->check(CLI::IsMember({"embed", "fa"}));
    sub->add_option("--backend", backend, "float or binary")->check(CLI::IsMember({"float", "binary"}));
    sub->add_option("--out", spot_out, "ranking TSV (default stdout)");
  };
  auto* qbs = app.add_subcommand("spot-qbs", "query by string");
  add_qbs(qbs, true);
  auto* fa = app.add_subcommand("spot-fa", "query by string through forced alignment");
  add_qbs(fa, false);

  // evaluation
  std::string kind = "qbe";
  auto* eval_htr = app.add_subcommand("eval-htr", "CER and WER on a labelled dataset");
  eval_htr->add_option("--model", model_path, "checkpoint")->required();
  eval_htr->add_option("--data", data_dir, "dataset directory")->required();
  eval_htr->add_option("--branch", branch, "ctc or seq2seq")->check(CLI::IsMember({"ctc", "seq2seq"}));
  eval_htr->add_option("--decoder", decoder, "greedy or beam")->check(CLI::IsMember({"greedy", "beam"}));
  eval_htr->add_option("--width", width, "beam width (default: beam_width key)");
  auto* eval_kws = app.add_subcommand("eval-kws", "MAP of a spotting mode over the index");
  eval_kws->add_option("--index", index_path, "index file")->required();
  eval_kws->add_option("--model", model_path, "checkpoint for qbs and fa (default: the model recorded beside the index)");
  eval_kws->add_option("--kind", kind, "qbe, qbs or fa")->check(CLI::IsMember({"qbe", "qbs", "fa"}));
  eval_kws->add_option("--backend", backend, "float or binary")->check(CLI::IsMember({"float", "binary"}));

  int bins = 20;
  std::string baseline = "none";
  std::optional<std::uint64_t> kl_seed;
  auto* kl = app.add_subcommand("kl-stat", "edit-distance vs descriptor-distance KL statistic");
  kl->add_option("--index", index_path, "index file")->required();
  kl->add_option("--bins", bins, "histogram bins");
  kl->add_option("--baseline", baseline, "none or random")->check(CLI::IsMember({"none", "random"}));
  kl->add_option("--seed", kl_seed, "seed of the random baseline");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "wsrnet: error: usage: " << e.what() << "\n";
    return WSR_ERR_USAGE;
  }

  try {
    if (synth->parsed()) {
      Dataset d;
      check(wsr_dataset_synth(vocab.c_str(), per_word, *synth_seed, split.c_str(), synth_charset.c_str(), d.out()));
      check(wsr_dataset_write(d.get(), synth_out.c_str()));
      write_text(synth_out + "/synth.cfg", "vocab = " + vocab + "\nper_word = " + std::to_string(per_word) +
                                               "\nseed = " + std::to_string(*synth_seed) + "\nsplit = " + split +
                                               "\ncharset = " + synth_charset + "\n");
      return 0;
    }
    if (train->parsed()) {
      if (!train_args.base.empty() && train_args.regime.empty()) train_args.regime = "fine_tune";
      return run_train(train_args, {});
    }
    if (ae->parsed()) return run_train(ae_args, {{"regime", "fine_tune"}, {"autoencoder", "1"}});
    if (ste->parsed()) return run_train(ste_args, {{"regime", "fine_tune"}, {"autoencoder", "1"}, {"binarize", "1"}});

    const bool needs_model = qbs->parsed() || fa->parsed() || (eval_kws->parsed() && kind != "qbe") ||
                             (qbe->parsed() && !query_image.empty());
    if (model_path.empty() && needs_model) model_path = sidecar_model(index_path);
    Model model;
    if (!model_path.empty()) check(wsr_model_load(model_path.c_str(), model.out()));
    auto beam_width = [&] { return width > 0 ? width : std::stoi(model_key(model, "beam_width")); };

    if (recognize->parsed()) {
      Dataset d;
      if (!data_dir.empty()) {
        load_dir(d, data_dir, model_key(model, "charset"), nullptr);
      } else {
        if (images.empty()) usage("recognize needs --data or --images");
        std::vector<const char*> paths;
        for (const auto& p : images) paths.push_back(p.c_str());
        check(wsr_dataset_from_images(paths.data(), paths.size(), d.out()));
      }
      char* tsv = nullptr;
      check(wsr_recognize(model.get(), d.get(), branch.c_str(), decoder.c_str(), beam_width(), &tsv));
      write_text(rec_out, take(tsv));
      return 0;
    }
    if (index->parsed()) {
      if (only_float && only_binary) usage("--float-only and --binary-only are exclusive");
      Dataset d;
      load_dir(d, data_dir, model_key(model, "charset"), nullptr);
      const int flags = only_float ? WSR_INDEX_FLOAT : only_binary ? WSR_INDEX_BINARY : WSR_INDEX_FLOAT | WSR_INDEX_BINARY;
      Index idx;
      check(wsr_index_build(model.get(), d.get(), flags, idx.out()));
      check(wsr_index_save(idx.get(), index_out.c_str()));
      char* cfg = nullptr;
      check(wsr_model_config(model.get(), &cfg));
      write_text(index_out + ".cfg", "model = " + std::filesystem::absolute(model_path).string() + "\ndata = " +
                                         std::filesystem::absolute(data_dir).string() + "\n" + take(cfg));
      return 0;
    }

    Index idx;
    if (!index_path.empty()) check(wsr_index_load(index_path.c_str(), idx.out()));
    const std::string header = "# index = " + index_path + "\n# backend = " + backend + "\n" +
                               (model_path.empty() ? "" : "# model = " + model_path + "\n");

    if (qbe->parsed()) {
      char* tsv = nullptr;
      if (query_id) {
        check(wsr_spot_qbe(idx.get(), *query_id, backend.c_str(), keep_self ? 0 : 1, &tsv));
      } else {
        if (query_image.empty()) usage("spot-qbe needs --query-id or --query-image");
        check(wsr_spot_qbe_image(model.get(), idx.get(), query_image.c_str(), backend.c_str(), &tsv));
      }
      write_text(spot_out, header + take(tsv));
      return 0;
    }
    if (qbs->parsed() || fa->parsed()) {
      if (!queries_file.empty()) {
        std::ifstream in(queries_file);
        if (!in) throw Failure{WSR_ERR_DATA, "cannot open " + queries_file};
        for (std::string line; std::getline(in, line);)
          if (!line.empty()) queries.push_back(line);
      }
      if (queries.empty()) usage("give --query or --queries");
      std::vector<const char*> qs;
      for (const auto& q : queries) qs.push_back(q.c_str());
      char* tsv = nullptr;
      const std::string m = fa->parsed() ? "fa" : mode;
      check(wsr_spot_qbs(model.get(), idx.get(), qs.data(), qs.size(), m.c_str(), backend.c_str(), &tsv));
      write_text(spot_out, header + "# mode = " + m + "\n" + take(tsv));
      return 0;
    }
    if (eval_htr->parsed()) {
      Dataset d;
      load_dir(d, data_dir, model_key(model, "charset"), nullptr);
      double cer = 0, wer = 0;
      check(wsr_eval_htr(model.get(), d.get(), branch.c_str(), decoder.c_str(), beam_width(), &cer, &wer));
      std::printf("cer\twer\n%.4f\t%.4f\n", cer, wer);
      std::printf("cer = %.4f\nwer = %.4f\nsamples = %zu\nbranch = %s\ndecoder = %s\n", cer, wer,
                  wsr_dataset_size(d.get()), branch.c_str(), decoder.c_str());
      return 0;
    }
    if (eval_kws->parsed()) {
      double map = 0;
      size_t n = 0;
      check(wsr_eval_kws(model.get(), idx.get(), kind.c_str(), backend.c_str(), &map, &n));
      std::printf("map\tqueries\n%.6f\t%zu\n", map, n);
      std::printf("map = %.6f\nqueries = %zu\nkind = %s\nbackend = %s\n", map, n, kind.c_str(), backend.c_str());
      return 0;
    }
    if (kl->parsed()) {
      const bool random = baseline == "random";
      if (random && !kl_seed) usage("--baseline random needs --seed");
      double value = 0;
      check(wsr_kl_stat(idx.get(), bins, random ? 1 : 0, kl_seed.value_or(0), &value));
      std::printf("kl\n%.9g\nkl = %.9g\nbins = %d\nbaseline = %s\n", value, value, bins, baseline.c_str());
      return 0;
    }
  } catch (const Failure& f) {
    std::cerr << "wsrnet: error: " << status_name(f.status) << ": " << f.message << "\n";
    return f.status;
  } catch (const std::exception& e) {
    std::cerr << "wsrnet: error: usage: " << e.what() << "\n";
    return WSR_ERR_USAGE;
  }
  return 0;
}
