// Copyright (c) 2026 the stdnet authors.
// Licensed under the Apache License, Version 2.0 [see LICENSE for details]

#include "stdnet/feature_pyramid.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "stdnet/errors.hpp"

namespace stdnet {

namespace {

int num_blocks(const BackboneConfig& cfg) {
  int n = 0;
  for (int s = cfg.strides.back(); s > 1; s /= 2) ++n;
  return n;
}

}  // namespace

std::vector<std::pair<int, int>> pyramid_shapes(int frame_h, int frame_w,
                                                const BackboneConfig& cfg) {
  std::vector<std::pair<int, int>> shapes;
  int h = frame_h, w = frame_w, stride = 1;
  size_t next = 0;
  while (next < cfg.strides.size()) {
    h = (h + 1) / 2;
    w = (w + 1) / 2;
    stride *= 2;
    if (stride == cfg.strides[next]) {
      shapes.emplace_back(h, w);
      ++next;
    }
  }
  return shapes;
}

void init_backbone_params(ad::ParamStore& params, const BackboneConfig& cfg,
                          Rng& rng) {
  int blocks = num_blocks(cfg);
  int cin = 3;
  for (int i = 0; i < blocks; ++i) {
    int cout = cfg.channels;
    Tensor w({cout, cin, 3, 3});
    double std = std::sqrt(2.0 / (cin * 9));
    for (int64_t j = 0; j < w.size(); ++j) w[j] = std * rng.normal();
    params.create("backbone.conv" + std::to_string(i) + ".w", std::move(w));
    params.create("backbone.conv" + std::to_string(i) + ".b",
                  Tensor::zeros({cout}));
    cin = cout;
  }
}

std::vector<ad::Var> extract_pyramid_vars(ad::Tape& tape, ad::ParamBind& p,
                                          const Image& frame,
                                          const BackboneConfig& cfg) {
  if (frame.h < 2 || frame.w < 2)
    throw InvalidInputError("extract_pyramid: empty frame");
  auto shapes = pyramid_shapes(frame.h, frame.w, cfg);
  for (auto [h, w] : shapes)
    if (h < 2 || w < 2)
      throw InvalidInputError(
          "extract_pyramid: frame " + std::to_string(frame.h) + "x" +
          std::to_string(frame.w) +
          " too small: every pyramid level needs at least 2x2 texels");

  Tensor img({3, frame.h, frame.w});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < frame.h; ++y)
      for (int x = 0; x < frame.w; ++x)
        img.at3(c, y, x) = frame.at(y, x, c) / 255.0;

  ad::Var cur = tape.leaf(std::move(img));
  std::vector<ad::Var> taps;
  int blocks = num_blocks(cfg);
  int stride = 1;
  size_t next = 0;
  for (int i = 0; i < blocks; ++i) {
    std::string base = "backbone.conv" + std::to_string(i);
    cur = tape.relu(tape.conv2d(cur, p(base + ".w"), p(base + ".b"), 2, 1));
    stride *= 2;
    if (next < cfg.strides.size() && stride == cfg.strides[next]) {
      taps.push_back(cur);
      ++next;
    }
  }
  return taps;
}

FeaturePyramid extract_pyramid(const ad::ParamStore& params,
                               const Image& frame, const BackboneConfig& cfg,
                               int frame_index) {
  ad::Tape tape;
  ad::ParamBind bind(tape, params);
  auto taps = extract_pyramid_vars(tape, bind, frame, cfg);
  FeaturePyramid pyr;
  pyr.frame_index = frame_index;
  for (size_t l = 0; l < taps.size(); ++l)
    pyr.levels.push_back(
        FeatureLevel{tape.val(taps[l]), int(l), cfg.strides[l]});
  return pyr;
}

std::pair<double, double> rescale_point(double px, double py, int level_w,
                                        int level_h) {
  if (!(px >= 0.0 && px <= 1.0 && py >= 0.0 && py <= 1.0))
    throw InvalidInputError("rescale_point: point outside [0,1]^2");
  return {px * level_w, py * level_h};
}

std::vector<double> bilinear_sample(const FeatureLevel& level, double x,
                                    double y) {
  int c = level.channels(), h = level.h(), w = level.w();
  std::vector<double> out(size_t(c), 0.0);
  int x0 = int(std::floor(x)), y0 = int(std::floor(y));
  double fx = x - x0, fy = y - y0;
  const double coef[4] = {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy,
                          fx * fy};
  const int cx[4] = {x0, x0 + 1, x0, x0 + 1};
  const int cy[4] = {y0, y0, y0 + 1, y0 + 1};
  for (int corner = 0; corner < 4; ++corner) {
    if (cx[corner] < 0 || cx[corner] >= w || cy[corner] < 0 ||
        cy[corner] >= h)
      continue;  // zero padding
    for (int ch = 0; ch < c; ++ch)
      out[size_t(ch)] += coef[corner] * level.data.at3(ch, cy[corner],
                                                       cx[corner]);
  }
  return out;
}

void dump_pyramid(const FeaturePyramid& pyr, const std::string& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["frame_index"] = pyr.frame_index;
  manifest["levels"] = nlohmann::json::array();
  for (const auto& level : pyr.levels) {
    char name[32];
    std::snprintf(name, sizeof(name), "level%02d.bin", level.level_index);
    std::string path = dir + "/" + name;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write " + path);
    out.write(reinterpret_cast<const char*>(level.data.data()),
              std::streamsize(level.data.size() * sizeof(double)));
    manifest["levels"].push_back(
        {{"file", name},
         {"shape", {level.channels(), level.h(), level.w()}},
         {"stride", level.stride},
         {"dtype", "float64-le"}});
  }
  std::ofstream mf(dir + "/manifest.json");
  if (!mf) throw FormatError("cannot write " + dir + "/manifest.json");
  mf << manifest.dump(2) << "\n";
}

}  // namespace stdnet
