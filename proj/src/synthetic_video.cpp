// Copyright (c) 2026 the stdnet authors.
// Licensed under the Apache License, Version 2.0 [see LICENSE for details]

#include "stdnet/synthetic_video.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>

#include <json.hpp>

#include "stdnet/errors.hpp"
#include "stdnet/rng.hpp"

namespace stdnet {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr uint64_t kObjectStream = 0x0B5EC7;

std::string frame_name(int t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%05d.png", t);
  return buf;
}

std::string obj_dir_name(int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "obj%02d", i);
  return buf;
}

double lane_height(const SceneSpec& s) {
  return double(s.h) / double(s.objects.size());
}

Mask rasterize_shape(ShapeKind kind, double cx, double cy, double w, double h,
                     int img_h, int img_w) {
  Mask m(img_h, img_w);
  int y_lo = std::max(0, int(std::floor(cy - h / 2 - 1)));
  int y_hi = std::min(img_h - 1, int(std::ceil(cy + h / 2 + 1)));
  int x_lo = std::max(0, int(std::floor(cx - w / 2 - 1)));
  int x_hi = std::min(img_w - 1, int(std::ceil(cx + w / 2 + 1)));
  for (int y = y_lo; y <= y_hi; ++y)
    for (int x = x_lo; x <= x_hi; ++x) {
      double px = x + 0.5, py = y + 0.5;
      bool in;
      if (kind == ShapeKind::rectangle) {
        // Half-open so an integer-aligned w x h rectangle covers exactly
        // w*h pixel centers.
        in = px >= cx - w / 2 && px < cx + w / 2 && py >= cy - h / 2 &&
             py < cy + h / 2;
      } else {
        double dx = (px - cx) / (w / 2), dy = (py - cy) / (h / 2);
        in = dx * dx + dy * dy <= 1.0;
      }
      if (in) m.at(y, x) = 1;
    }
  return m;
}

const char* shape_name(ShapeKind k) {
  return k == ShapeKind::rectangle ? "rectangle" : "ellipse";
}

ShapeKind shape_from_name(const std::string& s, const std::string& path) {
  if (s == "rectangle") return ShapeKind::rectangle;
  if (s == "ellipse") return ShapeKind::ellipse;
  throw FormatError("unknown shape '" + s + "' in " + path);
}

}  // namespace

void SceneSpec::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("scene: " + msg); };
  if (h < 8 || w < 8) fail("frame size must be at least 8x8");
  if (t < 2) fail("frame count must be >= 2");
  if (objects.empty() || objects.size() > 8) fail("needs 1 to 8 objects");
  double lane = double(h) / double(objects.size());
  for (size_t i = 0; i < objects.size(); ++i) {
    const ObjectSpec& o = objects[i];
    std::string tag = "object " + std::to_string(i) + ": ";
    if (o.min_size < 4) fail(tag + "min_size must be >= 4");
    if (o.max_size < o.min_size) fail(tag + "max_size must be >= min_size");
    if (o.deform < 0 || o.deform > 0.5) fail(tag + "deform must be in [0,0.5]");
    if (!std::isfinite(o.vx) || !std::isfinite(o.vy))
      fail(tag + "velocity must be finite");
    double eff = o.max_size * (1.0 + o.deform);
    if (eff > w) fail(tag + "max size exceeds frame width");
    if (occlusion) {
      if (eff > h) fail(tag + "max size exceeds frame height");
    } else if (eff > lane - 2.0) {
      fail(tag + "max size does not fit its lane (occlusion off)");
    }
  }
}

SyntheticVideo generate(const SceneSpec& spec) {
  spec.validate();
  int n = int(spec.objects.size());

  struct State {
    double cx0, cy0, w0, h0, period, ph_w, ph_h;
  };
  std::vector<State> st;
  st.reserve(size_t(n));
  for (int i = 0; i < n; ++i) {
    const ObjectSpec& o = spec.objects[size_t(i)];
    Rng rng(Rng::derive(spec.seed, kObjectStream + uint64_t(i)));
    State s;
    s.w0 = rng.uniform(o.min_size, o.max_size);
    s.h0 = rng.uniform(o.min_size, o.max_size);
    s.cx0 = rng.uniform(0.0, double(spec.w));
    s.cy0 = rng.uniform(0.0, double(spec.h));
    s.period = double(rng.uniform_int(8, 24));
    s.ph_w = rng.uniform(0.0, 2 * std::numbers::pi);
    s.ph_h = rng.uniform(0.0, 2 * std::numbers::pi);
    st.push_back(s);
  }

  SyntheticVideo v;
  v.spec = spec;
  v.objects.resize(size_t(n));
  for (int i = 0; i < n; ++i) v.objects[size_t(i)].id = i + 1;

  double lane = lane_height(spec);
  for (int t = 0; t < spec.t; ++t) {
    std::vector<Mask> full;
    full.resize(size_t(n));
    for (int i = 0; i < n; ++i) {
      const ObjectSpec& o = spec.objects[size_t(i)];
      const State& s = st[size_t(i)];
      double wob = 2 * std::numbers::pi * t / s.period;
      double wt = s.w0 * (1.0 + o.deform * std::sin(wob + s.ph_w));
      double ht = s.h0 * (1.0 + o.deform * std::sin(wob + s.ph_h));
      // Quarter-extent margins keep at least half the area visible.
      double cx = std::clamp(s.cx0 + o.vx * t, wt / 4, spec.w - wt / 4);
      double cy;
      if (spec.occlusion) {
        cy = std::clamp(s.cy0 + o.vy * t, ht / 4, spec.h - ht / 4);
      } else {
        cy = std::clamp(s.cy0 + o.vy * t, lane * i + ht / 2,
                        lane * (i + 1) - ht / 2);
      }
      full[size_t(i)] = rasterize_shape(o.shape, cx, cy, wt, ht, spec.h,
                                        spec.w);
      v.objects[size_t(i)].boxes.push_back(tight_box(full[size_t(i)]));
    }

    for (int i = 0; i < n; ++i) {
      Mask vis = full[size_t(i)];
      if (spec.occlusion) {
        // Lower index is in front: subtract every occluder above.
        for (int j = 0; j < i; ++j)
          for (size_t k = 0; k < vis.v.size(); ++k)
            if (full[size_t(j)].v[k]) vis.v[k] = 0;
      }
      v.objects[size_t(i)].masks.push_back(std::move(vis));
    }

    Image frame(spec.h, spec.w);
    for (int y = 0; y < spec.h; ++y) {
      uint8_t bg = uint8_t(40 + (spec.h > 1 ? y * 150 / (spec.h - 1) : 0));
      for (int x = 0; x < spec.w; ++x)
        for (int c = 0; c < 3; ++c) frame.at(y, x, c) = bg;
    }
    for (int i = n - 1; i >= 0; --i) {
      const auto& color = spec.objects[size_t(i)].color;
      const Mask& m = full[size_t(i)];
      for (int y = 0; y < spec.h; ++y)
        for (int x = 0; x < spec.w; ++x)
          if (m.at(y, x))
            for (int c = 0; c < 3; ++c) frame.at(y, x, c) = color[size_t(c)];
    }
    v.frames.push_back(std::move(frame));
  }
  return v;
}

void save_video(const SyntheticVideo& v, const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir + "/frames", ec);
  if (ec) throw FormatError("cannot create directory: " + dir + "/frames");
  for (size_t i = 0; i < v.objects.size(); ++i) {
    std::string od = dir + "/masks/" + obj_dir_name(int(i) + 1);
    fs::create_directories(od, ec);
    if (ec) throw FormatError("cannot create directory: " + od);
  }

  for (int t = 0; t < v.spec.t; ++t)
    write_png(dir + "/frames/" + frame_name(t), v.frames[size_t(t)]);
  for (size_t i = 0; i < v.objects.size(); ++i)
    for (int t = 0; t < v.spec.t; ++t)
      write_png(dir + "/masks/" + obj_dir_name(int(i) + 1) + "/" +
                    frame_name(t),
                v.objects[i].masks[size_t(t)]);

  json ann;
  ann["size"] = {{"h", v.spec.h}, {"w", v.spec.w}};
  ann["frame_count"] = v.spec.t;
  ann["occlusion"] = v.spec.occlusion;
  ann["seed"] = v.spec.seed;
  json objs = json::array();
  for (size_t i = 0; i < v.objects.size(); ++i) {
    const ObjectSpec& o = v.spec.objects[i];
    json boxes = json::array();
    for (const PixelBox& b : v.objects[i].boxes)
      boxes.push_back({b.x0, b.y0, b.x1, b.y1});
    objs.push_back({{"id", v.objects[i].id},
                    {"shape", shape_name(o.shape)},
                    {"color", {o.color[0], o.color[1], o.color[2]}},
                    {"motion",
                     {{"min_size", o.min_size},
                      {"max_size", o.max_size},
                      {"vx", o.vx},
                      {"vy", o.vy},
                      {"deform", o.deform}}},
                    {"boxes", std::move(boxes)}});
  }
  ann["objects"] = std::move(objs);

  std::string apath = dir + "/annotations.json";
  std::ofstream out(apath, std::ios::trunc);
  if (!out) throw FormatError("cannot write " + apath);
  out << ann.dump(2) << "\n";
  if (!out.good()) throw FormatError("write failed: " + apath);
}

SyntheticVideo load_video(const std::string& dir) {
  std::string apath = dir + "/annotations.json";
  std::ifstream in(apath);
  if (!in) throw FormatError("missing annotations file: " + apath);
  json ann;
  try {
    in >> ann;
  } catch (const json::exception& e) {
    throw FormatError("corrupt annotations in " + apath + ": " + e.what());
  }

  SyntheticVideo v;
  try {
    v.spec.h = ann.at("size").at("h").get<int>();
    v.spec.w = ann.at("size").at("w").get<int>();
    v.spec.t = ann.at("frame_count").get<int>();
    v.spec.occlusion = ann.at("occlusion").get<bool>();
    v.spec.seed = ann.at("seed").get<uint64_t>();
    for (const auto& jo : ann.at("objects")) {
      ObjectSpec o;
      o.shape = shape_from_name(jo.at("shape").get<std::string>(), apath);
      auto color = jo.at("color").get<std::vector<int>>();
      if (color.size() != 3)
        throw FormatError("bad color in " + apath);
      for (int c = 0; c < 3; ++c) o.color[size_t(c)] = uint8_t(color[size_t(c)]);
      const json& m = jo.at("motion");
      o.min_size = m.at("min_size").get<double>();
      o.max_size = m.at("max_size").get<double>();
      o.vx = m.at("vx").get<double>();
      o.vy = m.at("vy").get<double>();
      o.deform = m.at("deform").get<double>();
      v.spec.objects.push_back(o);

      ObjectTruth truth;
      truth.id = jo.at("id").get<int>();
      for (const auto& jb : jo.at("boxes")) {
        auto b = jb.get<std::vector<int>>();
        if (b.size() != 4) throw FormatError("bad box in " + apath);
        truth.boxes.push_back(PixelBox{b[0], b[1], b[2], b[3]});
      }
      if (int(truth.boxes.size()) != v.spec.t)
        throw FormatError("wrong box count for object in " + apath);
      v.objects.push_back(std::move(truth));
    }
  } catch (const json::exception& e) {
    throw FormatError("invalid annotations in " + apath + ": " + e.what());
  }

  for (int t = 0; t < v.spec.t; ++t) {
    std::string fpath = dir + "/frames/" + frame_name(t);
    Image img = read_png_image(fpath);
    if (img.h != v.spec.h || img.w != v.spec.w)
      throw FormatError("frame dimension mismatch: " + fpath);
    v.frames.push_back(std::move(img));
  }
  for (size_t i = 0; i < v.objects.size(); ++i) {
    for (int t = 0; t < v.spec.t; ++t) {
      std::string mpath =
          dir + "/masks/" + obj_dir_name(int(i) + 1) + "/" + frame_name(t);
      Mask m = read_png_mask(mpath);
      if (m.h != v.spec.h || m.w != v.spec.w)
        throw FormatError("mask dimension mismatch: " + mpath);
      v.objects[i].masks.push_back(std::move(m));
    }
  }
  return v;
}

SceneSpec default_scene_spec(int h, int w, int t, int n_objects,
                             bool occlusion, uint64_t seed) {
  static constexpr std::array<std::array<uint8_t, 3>, 8> kPalette = {{
      {220, 50, 50},
      {50, 180, 70},
      {60, 90, 220},
      {230, 200, 40},
      {180, 60, 200},
      {40, 200, 210},
      {240, 130, 40},
      {130, 220, 140},
  }};
  SceneSpec s;
  s.h = h;
  s.w = w;
  s.t = t;
  s.occlusion = occlusion;
  s.seed = seed;
  double deform = 0.08;
  double lane = n_objects > 0 ? double(h) / n_objects : double(h);
  double cap = occlusion ? std::min(h, w) / 2.5 : std::min(lane - 3.0, w / 2.5);
  double smax = std::max(5.0, cap / (1.0 + deform));
  double smin = std::max(4.0, 0.6 * smax);
  for (int i = 0; i < n_objects; ++i) {
    ObjectSpec o;
    o.shape = i % 2 == 0 ? ShapeKind::rectangle : ShapeKind::ellipse;
    o.min_size = smin;
    o.max_size = smax;
    o.vx = (i % 2 == 0 ? 1.0 : -1.0) * (1.5 + 0.4 * i);
    o.vy = occlusion ? (i % 2 == 0 ? 0.6 : -0.6) : 0.2;
    o.deform = deform;
    o.color = kPalette[size_t(i) % kPalette.size()];
    s.objects.push_back(o);
  }
  return s;
}

DatasetSpec dataset_spec_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("dataset spec is not valid JSON: ") +
                      e.what());
  }
  static const std::vector<std::string> kKeys = {
      "count", "h", "w", "frames", "objects", "occlusion", "seed"};
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (std::find(kKeys.begin(), kKeys.end(), key) == kKeys.end())
      throw ConfigError("unknown dataset spec key '" + key + "'");
  }
  DatasetSpec ds;
  try {
    if (j.contains("count")) ds.count = j.at("count").get<int>();
    if (j.contains("h")) ds.h = j.at("h").get<int>();
    if (j.contains("w")) ds.w = j.at("w").get<int>();
    if (j.contains("frames")) ds.t = j.at("frames").get<int>();
    if (j.contains("objects")) ds.objects = j.at("objects").get<int>();
    if (j.contains("occlusion")) ds.occlusion = j.at("occlusion").get<bool>();
    if (j.contains("seed")) ds.seed = j.at("seed").get<uint64_t>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid dataset spec value: ") + e.what());
  }
  if (ds.count < 1) throw ConfigError("dataset spec: count must be >= 1");
  // Field-level checks ride on SceneSpec::validate via a probe spec.
  default_scene_spec(ds.h, ds.w, ds.t, ds.objects, ds.occlusion, ds.seed)
      .validate();
  return ds;
}

void generate_dataset(const DatasetSpec& ds, const std::string& out_dir) {
  for (int k = 0; k < ds.count; ++k) {
    SceneSpec spec = default_scene_spec(ds.h, ds.w, ds.t, ds.objects,
                                        ds.occlusion,
                                        Rng::derive(ds.seed, uint64_t(k)));
    char buf[32];
    std::snprintf(buf, sizeof buf, "video_%03d", k);
    save_video(generate(spec), out_dir + "/" + buf);
  }
}

std::vector<std::string> list_videos(const std::string& dataset_dir) {
  std::error_code ec;
  fs::directory_iterator it(dataset_dir, ec);
  if (ec) throw FormatError("cannot open dataset directory: " + dataset_dir);
  std::vector<std::string> out;
  for (const auto& entry : it) {
    if (!entry.is_directory()) continue;
    if (fs::exists(entry.path() / "annotations.json"))
      out.push_back(entry.path().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace stdnet
