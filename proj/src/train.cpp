// Copyright (c) 2026 the stdnet authors.
// Licensed under the Apache License, Version 2.0 [see LICENSE for details]

#include "stdnet/train.hpp"

#include <cmath>

#include <json.hpp>

#include "stdnet/errors.hpp"
#include "stdnet/rng.hpp"

namespace stdnet {

namespace {
constexpr uint64_t kClipStream = 0xDA7A;
}

void Trainer::resume_from(const Checkpoint& ck) {
  t_ = ck.step;
  m_.clear();
  v_.clear();
  for (const auto& [name, tensor] : net_->params().all()) {
    auto im = ck.tensors.find("opt.m." + name);
    auto iv = ck.tensors.find("opt.v." + name);
    if (im == ck.tensors.end() || iv == ck.tensors.end())
      throw FormatError("checkpoint lacks optimizer state for '" + name + "'");
    if (!im->second.same_shape(tensor) || !iv->second.same_shape(tensor))
      throw FormatError("optimizer state shape mismatch for '" + name + "'");
    m_.emplace(name, im->second);
    v_.emplace(name, iv->second);
  }
}

Checkpoint Trainer::make_checkpoint() const {
  Checkpoint ck;
  ck.config = net_->config();
  ck.step = t_;
  for (const auto& [name, tensor] : net_->params().all()) {
    ck.tensors.emplace(name, tensor);
    auto im = m_.find(name);
    auto iv = v_.find(name);
    ck.tensors.emplace("opt.m." + name, im != m_.end()
                                            ? im->second
                                            : Tensor::zeros(tensor.shape()));
    ck.tensors.emplace("opt.v." + name, iv != v_.end()
                                            ? iv->second
                                            : Tensor::zeros(tensor.shape()));
  }
  return ck;
}

StepStats Trainer::step_clip(const std::vector<Image>& frames,
                             const std::vector<FrameGt>& gt) {
  const TrainConfig& tc = net_->config().train;
  ad::Tape tape;
  ad::ParamBind bind(tape, net_->params());
  LossParts parts = net_->clip_loss(tape, bind, frames, gt, tc.tcl);

  StepStats st;
  st.step = t_ + 1;
  st.total = tape.val(parts.total)[0];
  st.cls = tape.val(parts.cls)[0];
  st.box = tape.val(parts.box)[0];
  st.cl = tape.val(parts.cl)[0];
  if (!std::isfinite(st.total))
    throw NumericError("train step " + std::to_string(st.step) +
                       ": non-finite loss (cls=" + std::to_string(st.cls) +
                       ", box=" + std::to_string(st.box) +
                       ", cl=" + std::to_string(st.cl) + ")");

  tape.backward(parts.total);
  std::map<std::string, Tensor> grads;
  for (const auto& [name, var] : bind.bound()) grads[name] = tape.grad(var);
  apply_grads(grads);
  ++t_;
  return st;
}

void Trainer::apply_grads(std::map<std::string, Tensor>& grads) {
  const TrainConfig& tc = net_->config().train;

  if (tc.grad_clip > 0) {
    double sq = 0;
    for (const auto& [name, g] : grads)
      for (int64_t i = 0; i < g.size(); ++i) sq += g[i] * g[i];
    double norm = std::sqrt(sq);
    if (norm > tc.grad_clip) {
      double scale = tc.grad_clip / norm;
      for (auto& [name, g] : grads)
        for (int64_t i = 0; i < g.size(); ++i) g[i] *= scale;
    }
  }

  int64_t t = t_ + 1;
  double bc1 = 1.0 - std::pow(tc.adam_beta1, double(t));
  double bc2 = 1.0 - std::pow(tc.adam_beta2, double(t));
  for (auto& [name, param] : net_->params().all()) {
    auto gi = grads.find(name);
    Tensor& m = m_.try_emplace(name, Tensor::zeros(param.shape())).first->second;
    Tensor& v = v_.try_emplace(name, Tensor::zeros(param.shape())).first->second;
    for (int64_t i = 0; i < param.size(); ++i) {
      double g = gi != grads.end() ? gi->second[i] : 0.0;
      m[i] = tc.adam_beta1 * m[i] + (1.0 - tc.adam_beta1) * g;
      v[i] = tc.adam_beta2 * v[i] + (1.0 - tc.adam_beta2) * g * g;
      double mh = m[i] / bc1;
      double vh = v[i] / bc2;
      param[i] -= tc.lr * mh / (std::sqrt(vh) + tc.adam_eps);
    }
  }
}

std::vector<StepStats> Trainer::run(const std::vector<VideoGt>& dataset,
                                    std::ostream* log) {
  const ExperimentConfig& cfg = net_->config();
  int d = cfg.attention.d;
  int clip = 2 * d + 1;
  if (dataset.empty()) throw InvalidInputError("train: empty dataset");
  for (const VideoGt& v : dataset) {
    if (int(v.frames.size()) < clip)
      throw InvalidInputError("train: video shorter than the 2d+1 clip");
    if (v.frames.size() != v.gt.size())
      throw InvalidInputError("train: frames/gt length mismatch");
  }

  std::vector<StepStats> stats;
  while (t_ < cfg.train.steps) {
    Rng rng(Rng::derive(cfg.seed, kClipStream ^ uint64_t(t_)));
    const VideoGt& vid = dataset[size_t(
        rng.uniform_int(0, int(dataset.size()) - 1))];
    int t_max = int(vid.frames.size()) - 1 - d;
    int center = rng.uniform_int(d, t_max);
    std::vector<Image> frames(vid.frames.begin() + (center - d),
                              vid.frames.begin() + (center + d + 1));
    std::vector<FrameGt> gt(vid.gt.begin() + (center - d),
                            vid.gt.begin() + (center + d + 1));
    StepStats st = step_clip(frames, gt);
    if (log) {
      nlohmann::json line = {{"step", st.step},
                             {"total", st.total},
                             {"cls", st.cls},
                             {"box", st.box},
                             {"cl", st.cl},
                             {"lambda_cls", cfg.loss.lambda_cls},
                             {"lambda_l1", cfg.loss.lambda_l1},
                             {"lambda_giou", cfg.loss.lambda_giou},
                             {"lr", cfg.train.lr}};
      (*log) << line.dump() << '\n';
    }
    stats.push_back(st);
  }
  return stats;
}

void restore_params(STDNet& net, const Checkpoint& ck) {
  for (auto& [name, tensor] : net.params().all()) {
    auto it = ck.tensors.find(name);
    if (it == ck.tensors.end())
      throw FormatError("checkpoint missing tensor '" + name + "'");
    if (!it->second.same_shape(tensor))
      throw FormatError("checkpoint tensor shape mismatch for '" + name + "'");
    tensor = it->second;
  }
}

}  // namespace stdnet
