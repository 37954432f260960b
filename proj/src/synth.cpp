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

#include "synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

WSR_NS_BEGIN

std::vector<GlyphStroke> glyph_skeleton(char symbol) {
  // One fixed generator per symbol: two open strokes of three points each.
  Rng rng(0x9E3779B97F4A7C15ull ^ (static_cast<std::uint64_t>(static_cast<unsigned char>(symbol)) * 0xBF58476D1CE4E5B9ull));
  std::vector<GlyphStroke> strokes(2);
  for (auto& s : strokes) {
    for (int i = 0; i < 3; ++i) s.points.emplace_back(rng.uniform(0.05, 0.95), rng.uniform(0.0, 1.0));
  }
  return strokes;
}

namespace {

void draw_segment(Image& img, double x0, double y0, double x1, double y1, double radius) {
  const int xmin = std::max(0, static_cast<int>(std::floor(std::min(x0, x1) - radius - 1)));
  const int xmax = std::min(img.width - 1, static_cast<int>(std::ceil(std::max(x0, x1) + radius + 1)));
  const int ymin = std::max(0, static_cast<int>(std::floor(std::min(y0, y1) - radius - 1)));
  const int ymax = std::min(img.height - 1, static_cast<int>(std::ceil(std::max(y0, y1) + radius + 1)));
  const double dx = x1 - x0, dy = y1 - y0;
  const double len2 = dx * dx + dy * dy;
  for (int y = ymin; y <= ymax; ++y)
    for (int x = xmin; x <= xmax; ++x) {
      double t = len2 > 0 ? ((x - x0) * dx + (y - y0) * dy) / len2 : 0.0;
      t = std::clamp(t, 0.0, 1.0);
      const double px = x0 + t * dx - x, py = y0 + t * dy - y;
      const double d = std::sqrt(px * px + py * py);
      const float ink = static_cast<float>(std::clamp(radius + 0.5 - d, 0.0, 1.0));
      img.at(y, x) = std::max(img.at(y, x), ink);
    }
}

}  // namespace

Image render_word(const std::string& word, const SynthOptions& o, Rng& rng) {
  const int n = static_cast<int>(word.size());
  const int width = std::max(1, o.glyph_width * n + 8);
  Image img(o.height, width);
  const auto& j = o.jitter;
  const double body_top = o.height * 0.25;
  const double body_h = o.height * 0.5;
  const double baseline = rng.uniform(-j.baseline, j.baseline);
  const double slant = rng.uniform(-j.slant, j.slant);
  const double radius = std::max(0.4, (o.stroke_width + rng.uniform(-j.thickness, j.thickness)) / 2.0);
  double cursor = 4.0;
  for (char ch : word) {
    const double gw = o.glyph_width * 0.8;
    for (const auto& stroke : glyph_skeleton(ch)) {
      std::vector<std::pair<double, double>> pts;
      for (auto [ux, uy] : stroke.points) {
        const double y = body_top + baseline + uy * body_h + rng.uniform(-j.wobble, j.wobble);
        double x = cursor + ux * gw + rng.uniform(-j.wobble, j.wobble);
        x += slant * (body_top + body_h - y);
        pts.emplace_back(x, y);
      }
      for (std::size_t k = 1; k < pts.size(); ++k)
        draw_segment(img, pts[k - 1].first, pts[k - 1].second, pts[k].first, pts[k].second, radius);
    }
    cursor += o.glyph_width + rng.uniform(-j.spacing, j.spacing);
  }
  // 8-bit quantization so a PGM roundtrip is exact.
  for (auto& v : img.pixels) v = static_cast<float>(std::lround(v * 255.0f)) / 255.0f;
  return img;
}

std::vector<WordSample> synth_generate(const std::vector<std::string>& vocab, int samples_per_word,
                                       std::uint64_t seed, const SynthOptions& options) {
  WSR_REQUIRE(samples_per_word >= 1, "synth_generate: samples_per_word must be >= 1");
  std::vector<WordSample> out;
  out.reserve(vocab.size() * static_cast<std::size_t>(samples_per_word));
  for (std::size_t w = 0; w < vocab.size(); ++w) {
    WSR_REQUIRE(!vocab[w].empty(), "synth_generate: empty vocabulary word");
    for (int k = 0; k < samples_per_word; ++k) {
      Rng rng(seed * 0x9E3779B97F4A7C15ull + w * 1000003ull + static_cast<std::uint64_t>(k));
      WordSample s;
      char id[64];
      std::snprintf(id, sizeof id, "%s_%04zu_%03d", std::string(split_name(options.split)).c_str(), w, k);
      s.id = id;
      s.transcript = vocab[w];
      s.split = options.split;
      s.image = render_word(vocab[w], options, rng);
      out.push_back(std::move(s));
    }
  }
  return out;
}

std::vector<std::string> read_vocab(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open vocabulary " + path);
  std::vector<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) words.push_back(line);
  }
  return words;
}

void write_dataset(const std::string& dir, const std::vector<WordSample>& samples) {
  std::filesystem::create_directories(dir);
  for (const auto& s : samples) {
    const auto file = std::filesystem::path(dir) / image_file(s.id);
    std::filesystem::create_directories(file.parent_path());
    write_pgm(file.string(), s.image);
  }
  write_manifest((std::filesystem::path(dir) / "manifest.tsv").string(), samples);
}

WSR_NS_END
