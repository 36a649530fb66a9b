// Copyright (c) 2026 the stdnet authors.
// Licensed under the Apache License, Version 2.0 [see LICENSE for details]
#pragma once

#include <cstdint>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "stdnet/model.hpp"

namespace stdnet {

// One video with aligned per-frame ground truth (normalized boxes, ids).
struct VideoGt {
  std::vector<Image> frames;
  std::vector<FrameGt> gt;
};

struct StepStats {
  int64_t step = 0;
  double total = 0, cls = 0, box = 0, cl = 0;
};

// Adam owner: single writer of the model parameters. Clip sampling is
// derived per step index from the config seed, so identical seeds give
// identical loss curves and resuming does not replay or skip clips.
class Trainer {
 public:
  explicit Trainer(STDNet& net) : net_(&net) {}

  int64_t step_count() const { return t_; }
  // Restores optimizer moments + step counter saved under "opt." names.
  void resume_from(const Checkpoint& ck);
  // config + current params + optimizer moments + step counter.
  Checkpoint make_checkpoint() const;

  // Runs from the current step to config().train.steps. Appends one JSON
  // line per step to `log` when non-null. Throws NumericError (with the
  // component values) on a non-finite loss.
  std::vector<StepStats> run(const std::vector<VideoGt>& dataset,
                             std::ostream* log);

  // Single optimization step on an explicit clip.
  StepStats step_clip(const std::vector<Image>& frames,
                      const std::vector<FrameGt>& gt);

 private:
  void apply_grads(std::map<std::string, Tensor>& grads);

  STDNet* net_;
  std::map<std::string, Tensor> m_, v_;
  int64_t t_ = 0;
};

// Overwrites the model's parameters with the checkpoint's (shapes must
// match; missing tensors are a FormatError).
void restore_params(STDNet& net, const Checkpoint& ck);

}  // namespace stdnet
