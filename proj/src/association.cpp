// Copyright (c) 2026 the stdnet authors.
// Licensed under the Apache License, Version 2.0 [see LICENSE for details]

#include "stdnet/association.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "stdnet/errors.hpp"
#include "stdnet/heads_losses.hpp"

namespace stdnet {

namespace {

// Stands in for "no admissible match" in the padded assignment problem;
// real costs are bounded by 2.
constexpr double kBlocked = 1e6;

Tensor unit(const Tensor& e) {
  double sq = 0;
  for (int64_t i = 0; i < e.size(); ++i) sq += e[i] * e[i];
  double n = std::sqrt(sq);
  Tensor out = e;
  if (n > 1e-12)
    for (int64_t i = 0; i < out.size(); ++i) out[i] /= n;
  return out;
}

double cosine(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b))
    throw InvalidInputError("associate_frame: embedding dim mismatch");
  double dot = 0, na = 0, nb = 0;
  for (int64_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  double denom = std::sqrt(na) * std::sqrt(nb);
  return denom > 1e-12 ? dot / denom : 0.0;
}

}  // namespace

MultiObjectTracker::MultiObjectTracker(const TrackerConfig& cfg) : cfg_(cfg) {
  if (cfg.beta < 0 || cfg.beta > 1)
    throw ConfigError("tracker.beta must be in [0,1]");
  if (cfg.gate < 0) throw ConfigError("tracker.gate must be >= 0");
  if (cfg.min_hits < 1) throw ConfigError("tracker.min_hits must be >= 1");
  if (cfg.max_age < 0) throw ConfigError("tracker.max_age must be >= 0");
  if (cfg.ema_momentum < 0 || cfg.ema_momentum >= 1)
    throw ConfigError("tracker.ema_momentum must be in [0,1)");
  if (cfg.score_thresh < 0 || cfg.score_thresh > 1)
    throw ConfigError("tracker.score_thresh must be in [0,1]");
}

void MultiObjectTracker::observe(int frame, const std::vector<Detection>& dets) {
  if (any_frame_ && frame <= last_frame_)
    throw InvalidInputError("associate_frame: frames must strictly increase");
  for (const Detection& d : dets)
    if (!d.box.valid())
      throw InvalidInputError("associate_frame: invalid detection box");

  // Live tracks in id order (creation order), so the assignment's
  // lexicographic tie-break is by (track id, detection index).
  std::vector<int> live;
  for (size_t i = 0; i < tracks_.size(); ++i)
    if (tracks_[i].state != TrackState::dead) live.push_back(int(i));

  int nt = int(live.size()), nd = int(dets.size());
  std::vector<int> det_of_track(size_t(nt), -1);
  std::vector<char> det_used(size_t(nd), 0);
  if (nt > 0 && nd > 0) {
    // Dummy column per track keeps the padded problem feasible; blocked and
    // dummy entries share kBlocked so gated pairs never win.
    Tensor cost({nt, nd + nt});
    for (int i = 0; i < nt; ++i) {
      const Track& tr = tracks_[size_t(live[size_t(i)])];
      for (int j = 0; j < nd; ++j) {
        double c = cfg_.beta * (1.0 - iou(tr.entries.back().box, dets[size_t(j)].box)) +
                   (1.0 - cfg_.beta) * (1.0 - cosine(tr.emb, dets[size_t(j)].reid));
        cost.at(i, j) = c <= cfg_.gate ? c : kBlocked;
      }
      for (int j = nd; j < nd + nt; ++j) cost.at(i, j) = kBlocked;
    }
    std::vector<int> assign = hungarian_assign(cost);
    for (int i = 0; i < nt; ++i) {
      int j = assign[size_t(i)];
      if (j < nd && cost.at(i, j) < kBlocked / 2) {
        det_of_track[size_t(i)] = j;
        det_used[size_t(j)] = 1;
      }
    }
  }

  for (int i = 0; i < nt; ++i) {
    Track& tr = tracks_[size_t(live[size_t(i)])];
    int j = det_of_track[size_t(i)];
    if (j >= 0) {
      const Detection& d = dets[size_t(j)];
      tr.entries.push_back({frame, d.box, d.score});
      Tensor mix = tr.emb;
      Tensor de = unit(d.reid);
      for (int64_t k = 0; k < mix.size(); ++k)
        mix[k] = cfg_.ema_momentum * mix[k] + (1.0 - cfg_.ema_momentum) * de[k];
      tr.emb = unit(mix);
      tr.hits += 1;
      tr.misses = 0;
      if (tr.state == TrackState::tentative && tr.hits >= cfg_.min_hits)
        tr.state = TrackState::confirmed;
    } else {
      tr.misses += 1;
      if (tr.misses > cfg_.max_age) tr.state = TrackState::dead;
    }
  }

  for (int j = 0; j < nd; ++j) {
    if (det_used[size_t(j)]) continue;
    const Detection& d = dets[size_t(j)];
    if (d.score <= cfg_.score_thresh) continue;
    Track tr;
    tr.id = next_id_++;
    tr.entries.push_back({frame, d.box, d.score});
    tr.emb = unit(d.reid);
    tr.hits = 1;
    tr.state = cfg_.min_hits <= 1 ? TrackState::confirmed
                                  : TrackState::tentative;
    tracks_.push_back(std::move(tr));
  }

  last_frame_ = frame;
  any_frame_ = true;
}

std::vector<Trajectory> MultiObjectTracker::finalize() const {
  std::vector<Trajectory> out;
  for (const Track& tr : tracks_) {
    if (tr.hits < cfg_.min_hits) continue;  // never confirmed
    Trajectory tj;
    tj.id = tr.id;
    tj.entries = tr.entries;
    out.push_back(std::move(tj));
  }
  std::sort(out.begin(), out.end(),
            [](const Trajectory& a, const Trajectory& b) { return a.id < b.id; });
  return out;
}

std::string trajectories_to_json(const std::string& video_id,
                                 const std::vector<Trajectory>& trajs) {
  nlohmann::json doc;
  doc["video_id"] = video_id;
  nlohmann::json arr = nlohmann::json::array();
  for (const Trajectory& tj : trajs) {
    nlohmann::json entries = nlohmann::json::array();
    for (const TrackPoint& e : tj.entries)
      entries.push_back({{"frame", e.frame},
                         {"box",
                          {{"cx", e.box.cx},
                           {"cy", e.box.cy},
                           {"w", e.box.w},
                           {"h", e.box.h}}},
                         {"score", e.score}});
    arr.push_back({{"id", tj.id}, {"entries", std::move(entries)}});
  }
  doc["trajectories"] = std::move(arr);
  return doc.dump(2) + "\n";
}

std::vector<Trajectory> trajectories_from_json(const std::string& text,
                                               std::string* video_id) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
    if (video_id) *video_id = doc.at("video_id").get<std::string>();
    std::vector<Trajectory> out;
    for (const auto& jt : doc.at("trajectories")) {
      Trajectory tj;
      tj.id = jt.at("id").get<int>();
      for (const auto& je : jt.at("entries")) {
        TrackPoint e;
        e.frame = je.at("frame").get<int>();
        const auto& jb = je.at("box");
        e.box = Box{jb.at("cx").get<double>(), jb.at("cy").get<double>(),
                    jb.at("w").get<double>(), jb.at("h").get<double>()};
        e.score = je.at("score").get<double>();
        tj.entries.push_back(e);
      }
      out.push_back(std::move(tj));
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("invalid trajectory JSON: ") + e.what());
  }
}

}  // namespace stdnet
