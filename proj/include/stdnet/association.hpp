// Copyright (c) 2026 the stdnet authors.
// Licensed under the Apache License, Version 2.0 [see LICENSE for details]
#pragma once

#include <string>
#include <vector>

#include "stdnet/config.hpp"
#include "stdnet/geometry.hpp"
#include "stdnet/tensor.hpp"

namespace stdnet {

// One thresholded detection handed to the tracker.
struct Detection {
  int frame = 0;
  int query = 0;  // decoder slot it came from
  Box box;
  double score = 0;
  Tensor reid;  // [R]
};

struct TrackPoint {
  int frame = 0;
  Box box;
  double score = 0;
};

enum class TrackState { tentative, confirmed, dead };

struct Track {
  int id = 0;
  std::vector<TrackPoint> entries;  // frames strictly increasing
  Tensor emb;                       // EMA ReID embedding, unit norm
  int hits = 0;
  int misses = 0;  // consecutive
  TrackState state = TrackState::tentative;

  int last_frame() const { return entries.back().frame; }
};

struct Trajectory {
  int id = 0;
  std::vector<TrackPoint> entries;  // ordered by frame, gaps allowed
};

// Tracking-by-detection with constant-position prediction and EMA
// appearance: cost(track, det) = beta*(1-iou) + (1-beta)*(1-cosine), gated,
// solved exactly; ties resolved toward the lowest (track id, det index).
// Single-owner stateful object; one video per instance.
class MultiObjectTracker {
 public:
  explicit MultiObjectTracker(const TrackerConfig& cfg);

  // Feeds one frame's detections; frame must be later than everything seen.
  void observe(int frame, const std::vector<Detection>& dets);

  // Ever-confirmed tracks as trajectories, ordered by id.
  std::vector<Trajectory> finalize() const;

  const std::vector<Track>& tracks() const { return tracks_; }

 private:
  TrackerConfig cfg_;
  std::vector<Track> tracks_;
  int next_id_ = 1;
  int last_frame_ = -1;
  bool any_frame_ = false;
};

// {video_id, trajectories:[{id, entries:[{frame, box:{cx,cy,w,h}, score}]}]}
std::string trajectories_to_json(const std::string& video_id,
                                 const std::vector<Trajectory>& trajs);
std::vector<Trajectory> trajectories_from_json(const std::string& text,
                                               std::string* video_id = nullptr);

}  // namespace stdnet
