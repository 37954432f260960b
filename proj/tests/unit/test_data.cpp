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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include "data.hpp"
#include "synth.hpp"

using namespace wsr;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("wsr_test_data_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

Image ramp(int h, int w) {
  Image img(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) img.at(y, x) = static_cast<float>((y * w + x) % 256) / 255.0f;
  return img;
}

}  // namespace

TEST_CASE("transcript normalization") {
  Charset kws(CharsetMode::Kws);
  CHECK(kws.normalize("Security!") == std::optional<std::string>("security"));
  CHECK(kws.normalize("A1") == std::optional<std::string>("a1"));
  CHECK_FALSE(kws.normalize("...").has_value());
  CHECK(kws.num_classes() == 38);

  Charset full(CharsetMode::Full);
  CHECK(full.normalize("Security!") == std::optional<std::string>("Security!"));
  CHECK(full.num_classes() > kws.num_classes());
  CHECK(full.fingerprint() != kws.fingerprint());
  CHECK(parse_charset_mode(charset_mode_name(CharsetMode::Full)) == CharsetMode::Full);
  CHECK_THROWS_AS(parse_charset_mode("latin"), ContractViolation);
}

TEST_CASE("charset encoding") {
  Charset cs;
  const auto idx = cs.encode("ab9");
  CHECK(idx == std::vector<int>{2, 3, 37});
  CHECK(cs.decode(idx) == "ab9");
  CHECK(cs.decode(std::vector<int>{Charset::kBlank, 2, Charset::kSpace}) == "a");
  CHECK(cs.symbol(Charset::kBlank) == '_');
  CHECK(cs.symbol(Charset::kSpace) == ' ');
  CHECK_THROWS_AS(cs.encode("a!b?"), DataError);
}

TEST_CASE("preprocess fits and pads") {
  const Image same = ramp(64, 256);
  CHECK(preprocess(same) == same);

  Image big(128, 200, 1.0f);
  Image out = preprocess(big);
  REQUIRE(out.height == 64);
  REQUIRE(out.width == 256);
  CHECK(out.at(32, 50) == doctest::Approx(1.0));
  CHECK(out.at(63, 99) == doctest::Approx(1.0));
  CHECK(out.at(32, 100) == 0.0f);
  CHECK(out.at(10, 255) == 0.0f);

  const Image small = ramp(10, 50);
  Image padded = preprocess(small);
  REQUIRE(padded.height == 64);
  REQUIRE(padded.width == 256);
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 50; ++x) CHECK(padded.at(y, x) == small.at(y, x));
  CHECK(padded.at(10, 0) == 0.0f);
  CHECK(padded.at(0, 50) == 0.0f);

  CHECK_THROWS_AS(preprocess(Image()), ContractViolation);
}

TEST_CASE("affine augmentation") {
  const Image img = ramp(20, 40);
  AffineRanges none{0, 0, 1, 1, 0};
  Rng rng(1);
  CHECK(augment_affine(img, rng, none) == img);

  Image blob(21, 41);
  for (int y = 0; y < 21; ++y)
    for (int x = 0; x < 41; ++x) {
      const double r = std::hypot(y - 10.0, (x - 20.0) / 2.0);
      blob.at(y, x) = static_cast<float>(std::max(0.0, 1.0 - r / 8.0));
    }
  AffineParams half_turn;
  half_turn.rotation_rad = std::numbers::pi;
  Image turned = apply_affine(blob, half_turn);
  for (std::size_t i = 0; i < blob.pixels.size(); ++i) CHECK(turned.pixels[i] == doctest::Approx(blob.pixels[i]).epsilon(1e-4));

  Rng a(7), b(7);
  CHECK(augment_affine(img, a, AffineRanges{}) == augment_affine(img, b, AffineRanges{}));
}

TEST_CASE("synthetic words") {
  std::vector<std::string> vocab;
  for (std::string w : {"the", "and", "for", "was", "his", "that", "with", "had", "not", "but"}) vocab.push_back(w);
  for (std::string w : {"her", "you", "she", "which", "from", "they", "all", "were", "him", "one"}) vocab.push_back(w);
  for (std::string w : {"have", "are", "this", "said", "been", "when", "more", "into", "their", "what"}) vocab.push_back(w);
  const auto first = synth_generate(vocab, 80, 42);
  CHECK(first.size() == 2400);
  const auto second = synth_generate(vocab, 80, 42);
  bool same = true;
  for (std::size_t i = 0; i < first.size(); ++i)
    same = same && first[i].image == second[i].image && first[i].transcript == second[i].transcript;
  CHECK(same);
  CHECK(first[0].transcript == "the");
  CHECK(first[80].transcript == "and");

  SynthOptions flat;
  flat.jitter = SynthJitter{0, 0, 0, 0, 0};
  const auto canonical = synth_generate(vocab, 1, 3, flat);
  for (std::size_t i = 0; i < canonical.size(); ++i)
    for (std::size_t j = i + 1; j < canonical.size(); ++j) CHECK(canonical[i].image != canonical[j].image);
  for (const auto& s : canonical) CHECK(s.image.height == 48);
}

TEST_CASE("pgm roundtrip and polarity") {
  const fs::path dir = scratch("pgm");
  Image img(3, 4);
  img.at(0, 0) = 1.0f;
  img.at(2, 3) = 0.5f;
  write_pgm((dir / "a.pgm").string(), img);
  Image back = read_pgm((dir / "a.pgm").string());
  CHECK(back.height == 3);
  CHECK(back.width == 4);
  CHECK(back.at(0, 0) == 1.0f);
  CHECK(back.at(0, 1) == 0.0f);
  CHECK(back.at(2, 3) == doctest::Approx(0.5).epsilon(0.01));

  {
    std::ofstream raw(dir / "white.pgm", std::ios::binary);
    raw << "P5\n2 1\n255\n";
    raw.put(static_cast<char>(255));
    raw.put(static_cast<char>(0));
  }
  Image white = read_pgm((dir / "white.pgm").string());
  CHECK(white.at(0, 0) == 0.0f);
  CHECK(white.at(0, 1) == 1.0f);

  {
    std::ofstream bad(dir / "bad.pgm");
    bad << "P2\n1 1\n255\n0\n";
  }
  CHECK_THROWS_AS(read_pgm((dir / "bad.pgm").string()), DataError);
  fs::remove_all(dir);
}

TEST_CASE("manifest loading") {
  const fs::path dir = scratch("manifest");
  Charset cs;
  {
    std::ofstream empty(dir / "empty.tsv");
  }
  CHECK(load_dataset(dir.string(), (dir / "empty.tsv").string(), cs).samples.empty());

  std::vector<WordSample> samples;
  for (std::string w : {"cat", "Dog", "ant"}) {
    WordSample s;
    s.id = "img/" + w;
    s.transcript = w;
    s.image = ramp(5, 9);
    s.split = w == "ant" ? Split::Test : Split::Train;
    samples.push_back(s);
  }
  write_dataset(dir.string(), samples);
  LoadReport report = load_dataset(dir.string(), (dir / "manifest.tsv").string(), cs);
  REQUIRE(report.samples.size() == 3);
  CHECK(report.errors.empty());
  CHECK(report.samples[1].transcript == "dog");
  CHECK(report.samples[2].split == Split::Test);
  CHECK(report.samples[0].id == "img/cat.pgm");

  // One broken line out of three is far above the 1% tolerance.
  {
    std::ofstream out(dir / "broken.tsv");
    out << "img/cat.pgm\tcat\ttrain\nimg/missing.pgm\tdog\ttrain\nimg/ant.pgm\tant\ttest\n";
  }
  CHECK_THROWS_AS(load_dataset(dir.string(), (dir / "broken.tsv").string(), cs), DataError);

  // One broken line in two hundred is tolerated and reported.
  {
    std::ofstream out(dir / "mostly.tsv");
    for (int i = 0; i < 199; ++i) out << "img/cat.pgm\tcat\ttrain\n";
    out << "img/cat.pgm\tcat\n";
  }
  LoadReport mostly = load_dataset(dir.string(), (dir / "mostly.tsv").string(), cs);
  CHECK(mostly.samples.size() == 199);
  REQUIRE(mostly.errors.size() == 1);
  CHECK(mostly.errors[0].rfind("line 200:", 0) == 0);

  {
    std::ofstream out(dir / "excluded.tsv");
    out << "img/cat.pgm\t...\ttrain\nimg/cat.pgm\tcat\ttrain\n";
  }
  LoadReport ex = load_dataset(dir.string(), (dir / "excluded.tsv").string(), cs);
  CHECK(ex.excluded == 1);
  CHECK(ex.samples.size() == 1);
  CHECK_THROWS_AS(load_dataset(dir.string(), (dir / "nope.tsv").string(), cs), DataError);
  fs::remove_all(dir);
}
