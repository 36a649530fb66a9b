// Copyright (c) 2026 the stdnet authors.
// Licensed under the Apache License, Version 2.0 [see LICENSE for details]
#pragma once

#include <map>
#include <string>
#include <vector>

#include "stdnet/image.hpp"

namespace stdnet {

// Per-object mask stream; frames without an entry count as empty masks on
// the prediction side and as not-yet-present on the ground-truth side.
struct MaskSequence {
  int id = 0;
  std::map<int, Mask> by_frame;
};

// Pixel IoU; both empty -> 1, exactly one empty -> 0.
double region_j(const Mask& pred, const Mask& gt);

// Harmonic mean of contour precision/recall. Contours are 8-connected inner
// boundaries (out-of-frame counts as background); a contour pixel matches
// when some contour pixel of the other mask lies within tol (Euclidean,
// pixel centers). Both empty -> 1, exactly one empty -> 0.
double boundary_f(const Mask& pred, const Mask& gt, double tol);

// DAVIS convention: ceil(0.8% of the frame diagonal).
double default_boundary_tol(int h, int w);

// Exact squared Euclidean distance transform of the set pixels (1e20 where
// the mask is empty). Exposed for the boundary measure and its tests.
std::vector<double> squared_edt(const Mask& m);

// pred index -> gt index (-1 when unassigned), maximizing the summed
// per-pair (J-mean + F-mean)/2 exactly; deterministic under input
// permutation (sequences are ordered by id first).
std::vector<int> assign_tracks(const std::vector<MaskSequence>& pred,
                               const std::vector<MaskSequence>& gt,
                               double tol);

struct ObjectScore {
  int gt_id = 0;
  int pred_id = -1;  // -1: no prediction assigned
  double j_mean = 0, f_mean = 0, j_recall = 0, f_recall = 0;
};

struct EvalReport {
  std::vector<ObjectScore> objects;
  double j_mean = 0, j_recall = 0, f_mean = 0, f_recall = 0, jf = 0;
};

// Per matched pair, frame scores are averaged over gt-present frames;
// recall counts frames scoring > 0.5; dataset numbers are means over gt
// objects; jf = (j_mean + f_mean)/2.
EvalReport evaluate(const std::vector<MaskSequence>& pred,
                    const std::vector<MaskSequence>& gt, double tol);

// Re-means the union of the reports' per-object rows (multi-video runs).
EvalReport combine_reports(const std::vector<EvalReport>& reports);

std::string report_to_json(const EvalReport& r);
// Header J&F,J-Mean,J-Recall,F-Mean,F-Recall plus one row of dataset means.
std::string report_to_csv(const EvalReport& r);

}  // namespace stdnet
