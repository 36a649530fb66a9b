// Copyright (c) 2026 the stdnet authors.
// Licensed under the Apache License, Version 2.0 [see LICENSE for details]
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "stdnet/geometry.hpp"
#include "stdnet/image.hpp"

namespace stdnet {

enum class ShapeKind { rectangle, ellipse };

struct ObjectSpec {
  ShapeKind shape = ShapeKind::rectangle;
  double min_size = 12, max_size = 20;  // initial extent range, pixels
  double vx = 2, vy = 0;                // pixels per frame
  double deform = 0.08;                 // sinusoidal size modulation depth
  std::array<uint8_t, 3> color = {220, 50, 50};

  bool operator==(const ObjectSpec&) const = default;
};

struct SceneSpec {
  int h = 96, w = 128, t = 12;
  std::vector<ObjectSpec> objects;
  bool occlusion = false;
  uint64_t seed = 1;

  // Throws ConfigError naming the offending field. When occlusion is off
  // objects live in disjoint horizontal lanes, so every object (at its
  // largest deformation) must fit its h/n lane.
  void validate() const;
  bool operator==(const SceneSpec&) const = default;
};

struct ObjectTruth {
  int id = 0;
  std::vector<Mask> masks;      // visible region per frame
  std::vector<PixelBox> boxes;  // tight box of the full unoccluded shape

  bool operator==(const ObjectTruth&) const = default;
};

struct SyntheticVideo {
  SceneSpec spec;
  std::vector<Image> frames;
  std::vector<ObjectTruth> objects;

  bool operator==(const SyntheticVideo&) const = default;
};

// Linear motion + sinusoidal size deformation, clipped so at least half of
// every object stays in frame; deterministic given spec.seed.
SyntheticVideo generate(const SceneSpec& spec);

// dir/frames/%05d.png, dir/masks/obj%02d/%05d.png, dir/annotations.json.
// load(save(v)) == v; missing or corrupt files raise FormatError naming the
// path.
void save_video(const SyntheticVideo& v, const std::string& dir);
SyntheticVideo load_video(const std::string& dir);

// Toy-experiment spec: n objects with distinct colors, alternating shapes
// and directions, sized to fit their lanes.
SceneSpec default_scene_spec(int h, int w, int t, int n_objects,
                             bool occlusion, uint64_t seed);

// Batch description for the generate command.
struct DatasetSpec {
  int count = 1;
  int h = 96, w = 128, t = 12;
  int objects = 2;
  bool occlusion = false;
  uint64_t seed = 1;
};

// Parses {"count","h","w","frames","objects","occlusion","seed"}; unknown
// keys and invalid values raise ConfigError.
DatasetSpec dataset_spec_from_json_text(const std::string& text);

// Writes out_dir/video_%03d/... with per-video seeds derived from ds.seed.
void generate_dataset(const DatasetSpec& ds, const std::string& out_dir);

// Sorted video subdirectories (those holding annotations.json).
std::vector<std::string> list_videos(const std::string& dataset_dir);

}  // namespace stdnet
