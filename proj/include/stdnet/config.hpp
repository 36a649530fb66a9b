// Copyright (c) 2026 the stdnet authors.
// Licensed under the Apache License, Version 2.0 [see LICENSE for details]
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace stdnet {

// All tunables live here. Defaults follow the published settings where the
// source states them (d = 3, k_inter = 4, lr = 1e-4) and the adopted
// detection framework's conventions elsewhere; everything is overridable via
// JSON config file, STDNET_* environment variables, and CLI flags, in
// ascending precedence.

struct BackboneConfig {
  int channels = 64;                     // pyramid channel width C
  std::vector<int> strides = {8, 16, 32};  // one entry per level, doubling
};

struct AttentionConfig {
  int heads = 8;
  int k_intra = 4;  // sampling points per level, spatial branch
  int k_inter = 4;  // sampling points per level per neighbor frame
  int d = 3;        // bidirectional temporal window radius
  int n_layers = 2;
  int ffn_hidden = 256;
  int fusion_hidden = 16;
};

struct DecoderConfig {
  int queries = 100;
  int n_layers = 2;
  int k_points = 4;  // cross-attention sampling points per level
  int reid_dim = 32;
};

struct LossConfig {
  double tau = 0.1;  // InfoNCE temperature
  double lambda_cls = 2.0;
  double lambda_l1 = 5.0;
  double lambda_giou = 2.0;
  double focal_alpha = 0.25;  // negative disables alpha weighting
  double focal_gamma = 2.0;
};

struct TrackerConfig {
  double score_thresh = 0.5;
  double beta = 0.5;  // cost mix: beta*(1-iou) + (1-beta)*(1-cosine)
  double gate = 0.8;  // max admissible match cost
  int min_hits = 2;
  int max_age = 10;
  double ema_momentum = 0.9;
};

struct TrainConfig {
  int steps = 500;
  bool tcl = true;  // temporal contrastive loss on/off (ablation axis)
  double lr = 1e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double grad_clip = 0.0;  // global-norm clip, 0 disables
  int log_every = 10;
};

struct SegmenterConfig {
  std::string backend = "oracle";  // "oracle" or "remote:URL"
  double jitter = 0.0;             // box noise scale, normalized units
  int retries = 3;
  int timeout_ms = 5000;
  int resize_shorter = 0;  // resize frame before remote call, 0 = off
};

struct ExperimentConfig {
  uint64_t seed = 1;
  int jobs = 1;
  BackboneConfig backbone;
  AttentionConfig attention;
  DecoderConfig decoder;
  LossConfig loss;
  TrackerConfig tracker;
  TrainConfig train;
  SegmenterConfig segmenter;

  int levels() const { return int(backbone.strides.size()); }
  // Throws ConfigError on any inconsistency (the CLI maps that to exit 3).
  void validate() const;
};

// JSON round-trip. Loading rejects unknown keys and validates.
ExperimentConfig config_from_json_text(const std::string& text);
ExperimentConfig load_config(const std::string& path);
std::string config_to_json_text(const ExperimentConfig& cfg);

// STDNET_* environment overrides (e.g. STDNET_TRAIN_LR=1e-3 sets train.lr),
// applied between file values and CLI flags.
void apply_env_overrides(ExperimentConfig& cfg);

}  // namespace stdnet
