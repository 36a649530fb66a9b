// Copyright (c) 2026 the stdnet authors.
// Licensed under the Apache License, Version 2.0 [see LICENSE for details]
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "stdnet/autodiff.hpp"
#include "stdnet/config.hpp"
#include "stdnet/geometry.hpp"
#include "stdnet/heads_losses.hpp"
#include "stdnet/image.hpp"
#include "stdnet/tensor.hpp"

namespace stdnet {

struct LossParts {
  ad::Var total;
  ad::Var cls;
  ad::Var box;
  ad::Var cl;
};

// One frame's decoded query set in plain tensors (inference path).
struct FrameDetections {
  int frame = 0;
  std::vector<Box> boxes;
  std::vector<double> scores;  // objectness probabilities
  Tensor reid;                 // [Q, reid_dim], unit rows
};

// Backbone + encoder + decoder wired together; owns the parameter store.
class STDNet {
 public:
  explicit STDNet(ExperimentConfig cfg);

  // Fresh parameters from the config seed.
  void init_params();
  ad::ParamStore& params() { return params_; }
  const ad::ParamStore& params() const { return params_; }
  const ExperimentConfig& config() const { return cfg_; }
  int clip_len() const { return 2 * cfg_.attention.d + 1; }

  // Training objective on one clip of 2d+1 frames with aligned ground
  // truth. Binds parameters into the caller's tape so gradients can be read
  // back through `bind`. tcl toggles the temporal contrastive term.
  LossParts clip_loss(ad::Tape& tape, ad::ParamBind& bind,
                      const std::vector<Image>& frames,
                      const std::vector<FrameGt>& gt, bool tcl) const;

  // Decode the center frame of one clip; center_frame only labels the
  // output.
  FrameDetections infer_center(const std::vector<Image>& frames,
                               int center_frame) const;

 private:
  ExperimentConfig cfg_;
  ad::ParamStore params_;
};

// Self-describing checkpoint: magic + JSON header (config snapshot, step,
// tensor directory) + raw little-endian float64 payload. `tensors` carries
// the parameters and, on resume, the optimizer moments under "opt.".
struct Checkpoint {
  ExperimentConfig config;
  int64_t step = 0;
  std::map<std::string, Tensor> tensors;
};

void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace stdnet
