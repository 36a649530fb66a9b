// Copyright (c) 2026 the stdnet authors.
// Licensed under the Apache License, Version 2.0 [see LICENSE for details]
#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "stdnet/association.hpp"
#include "stdnet/config.hpp"
#include "stdnet/metrics.hpp"
#include "stdnet/model.hpp"
#include "stdnet/segmenter.hpp"
#include "stdnet/synthetic_video.hpp"
#include "stdnet/train.hpp"

namespace stdnet {

// Per-frame detections over a whole video. Each frame is decoded as the
// center of its 2d+1 clip; clips are clamped at the video edges by
// replicating the first/last frame. Frames are processed in parallel up to
// `jobs`, output order is by frame regardless.
std::vector<FrameDetections> detect_video(const STDNet& model,
                                          const std::vector<Image>& frames,
                                          int jobs);

// Detections above score_thresh fed frame-by-frame into the tracker.
std::vector<Trajectory> track_video(const TrackerConfig& cfg,
                                    const std::vector<FrameDetections>& dets);

// Ground-truth boxes as trajectories (track id = object id, score 1).
std::vector<Trajectory> gt_trajectories(const SyntheticVideo& v);

// Visible ground-truth masks keyed by frame, one sequence per object.
std::vector<MaskSequence> gt_mask_sequences(const SyntheticVideo& v);

// One mask per prompt, indexed like `prompts`; calls run concurrently up to
// `jobs` but the output order never depends on completion order.
std::vector<Mask> segment_prompts(const Segmenter& seg,
                                  const std::vector<Image>& frames,
                                  const std::vector<BoxPrompt>& prompts,
                                  int jobs);

// Regroup per-prompt masks into per-track sequences.
std::vector<MaskSequence> masks_by_track(const std::vector<BoxPrompt>& prompts,
                                         const std::vector<Mask>& masks);

// Box-level tracking quality against ground truth: per frame, predicted
// boxes are matched to gt boxes by IoU (Hungarian, matches below min_iou
// dropped). An identity switch is a gt object whose matched track id
// differs from its previously matched one.
struct TrackQuality {
  double mean_iou = 0;  // over kept matches
  int id_switches = 0;
  int matched = 0;   // kept matches
  int total_gt = 0;  // gt boxes over all frames
};
TrackQuality track_quality(const std::vector<Trajectory>& trajs,
                           const SyntheticVideo& gt, double min_iou = 0.1);

struct VideoResult {
  std::string name;
  std::vector<Trajectory> trajs;
  std::vector<MaskSequence> pred;
  EvalReport report;
  TrackQuality quality;
};

struct PipelineResult {
  std::vector<VideoResult> videos;
  EvalReport combined;
};

// detect -> associate -> prompts -> jitter -> segment -> evaluate over every
// video in dataset_dir. model may be null only with prompts_from_gt. When
// out_dir is nonempty, writes per video <name>/trajectories.json, mask PNGs
// under <name>/masks/track%03d/, <name>/report.json, and the combined
// report.json + report.csv at the root; nothing outside out_dir.
PipelineResult run_pipeline(const ExperimentConfig& cfg, const STDNet* model,
                            const std::string& dataset_dir,
                            bool prompts_from_gt, const std::string& out_dir,
                            std::ostream* log);

// Dataset adapters for the trainer.
VideoGt to_train_video(const SyntheticVideo& v);
std::vector<VideoGt> load_train_dataset(const std::string& dir);

// One table row per ablated value: train from scratch with the value
// applied, run the oracle pipeline on eval_dir, keep the dataset means.
// published_jf carries the corresponding full-scale reference number from
// the original experiments (NaN when there is none); those are documented
// context, not targets, and are never compared against.
struct AblationRow {
  std::string value;
  double jf = 0, j_mean = 0, f_mean = 0;
  double published_jf = 0;
};

struct AblationResult {
  std::string axis;  // "d" | "k_inter" | "tcl"
  std::vector<AblationRow> rows;
};

// axis "d": attention.d per value; "k_inter": sampling points per neighbor
// frame, where value 0 disables the temporal branch (d=0) since zero points
// cannot be normalized; "tcl": train.tcl off/on. Unknown axis or value ->
// InvalidInputError.
AblationResult run_ablation(const ExperimentConfig& base,
                            const std::string& axis,
                            const std::vector<std::string>& values,
                            const std::string& train_dir,
                            const std::string& eval_dir,
                            const std::string& out_dir, std::ostream* log);

std::string ablation_to_csv(const AblationResult& r);
// table.csv, plot.csv (x,y pairs) and plot.png under out_dir.
void write_ablation_outputs(const AblationResult& r,
                            const std::string& out_dir);

}  // namespace stdnet
