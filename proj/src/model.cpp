// Copyright (c) 2026 the stdnet authors.
// Licensed under the Apache License, Version 2.0 [see LICENSE for details]

#include "stdnet/model.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <utility>

#include <json.hpp>

#include "stdnet/errors.hpp"
#include "stdnet/feature_pyramid.hpp"
#include "stdnet/rng.hpp"
#include "stdnet/std_attention.hpp"

namespace stdnet {

namespace {

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

constexpr char kMagic[8] = {'S', 'T', 'D', 'N', 'E', 'T', 'C', 'K'};
constexpr uint64_t kInitStream = 0xB0;

}  // namespace

STDNet::STDNet(ExperimentConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
}

void STDNet::init_params() {
  params_ = ad::ParamStore();
  Rng rng(Rng::derive(cfg_.seed, kInitStream));
  init_backbone_params(params_, cfg_.backbone, rng);
  init_encoder_params(params_, cfg_.attention, cfg_.backbone.channels,
                      cfg_.levels(), rng);
  init_decoder_params(params_, cfg_.decoder, cfg_.backbone.channels,
                      cfg_.levels(), cfg_.attention.heads, rng);
}

LossParts STDNet::clip_loss(ad::Tape& tape, ad::ParamBind& p,
                            const std::vector<Image>& frames,
                            const std::vector<FrameGt>& gt, bool tcl) const {
  int f_count = clip_len();
  if (int(frames.size()) != f_count || int(gt.size()) != f_count)
    throw InvalidInputError("clip_loss: clip needs 2d+1 frames with gt");

  std::vector<std::vector<ad::Var>> clip_levels;
  clip_levels.reserve(frames.size());
  for (const Image& im : frames)
    clip_levels.push_back(extract_pyramid_vars(tape, p, im, cfg_.backbone));
  EncoderOut enc = encoder_forward(tape, p, clip_levels, cfg_.attention,
                                   cfg_.backbone.channels);

  const LossConfig& lc = cfg_.loss;
  std::vector<DecodeOut> dec;
  std::vector<MatchResult> matches;
  for (int f = 0; f < f_count; ++f) {
    dec.push_back(decode_frame(tape, p, enc.e[size_t(f)], enc.geometry,
                               cfg_.decoder, cfg_.attention.heads));
    matches.push_back(hungarian_match(tape.val(dec.back().logits),
                                      tape.val(dec.back().boxes),
                                      gt[size_t(f)], lc));
  }

  std::vector<ad::Var> cls_terms, box_terms;
  for (int f = 0; f < f_count; ++f) {
    const std::vector<int>& m = matches[size_t(f)].gt_to_query;
    Tensor targets = Tensor::zeros({cfg_.decoder.queries});
    for (int qi : m) targets[qi] = 1.0;
    cls_terms.push_back(tape.focal_loss_binary(
        dec[size_t(f)].logits, targets, lc.focal_alpha, lc.focal_gamma));
    int n = int(m.size());
    if (n == 0) continue;
    Tensor gtb({n, 4});
    for (int i = 0; i < n; ++i) {
      const Box& b = gt[size_t(f)].boxes[size_t(i)];
      gtb.at(i, 0) = b.cx;
      gtb.at(i, 1) = b.cy;
      gtb.at(i, 2) = b.w;
      gtb.at(i, 3) = b.h;
    }
    ad::Var pred = tape.gather_rows(dec[size_t(f)].boxes, m);
    box_terms.push_back(box_loss_pairs(tape, pred, tape.leaf(std::move(gtb)),
                                       lc.lambda_l1, lc.lambda_giou));
  }

  auto avg = [&](const std::vector<ad::Var>& xs) -> ad::Var {
    if (xs.empty()) return tape.leaf(Tensor::scalar(0.0));
    ad::Var s = xs[0];
    for (size_t i = 1; i < xs.size(); ++i) s = tape.add(s, xs[i]);
    return tape.affine(s, 1.0 / double(xs.size()), 0.0);
  };

  // Contrastive term over adjacent frame pairs. Positives pair the queries
  // matched to the same gt identity; the denominator holds the next frame's
  // embeddings at every query matched in either frame.
  std::vector<ad::Var> cl_terms;
  if (tcl) {
    for (int f = 0; f + 1 < f_count; ++f) {
      std::map<int, int> q_cur, q_nxt;
      for (size_t i = 0; i < matches[size_t(f)].gt_to_query.size(); ++i)
        q_cur[gt[size_t(f)].ids[i]] = matches[size_t(f)].gt_to_query[i];
      for (size_t i = 0; i < matches[size_t(f) + 1].gt_to_query.size(); ++i)
        q_nxt[gt[size_t(f) + 1].ids[i]] = matches[size_t(f) + 1].gt_to_query[i];
      std::set<int> den_set;
      for (const auto& [id, qi] : q_cur) den_set.insert(qi);
      for (const auto& [id, qi] : q_nxt) den_set.insert(qi);
      std::vector<int> den(den_set.begin(), den_set.end());
      std::map<int, int> pos_of;
      for (size_t i = 0; i < den.size(); ++i) pos_of[den[i]] = int(i);
      std::vector<int> anchors, pidx;
      for (const auto& [id, qc] : q_cur) {
        auto it = q_nxt.find(id);
        if (it == q_nxt.end()) continue;
        anchors.push_back(qc);
        pidx.push_back(pos_of[it->second]);
      }
      if (anchors.empty()) continue;
      ad::Var a = tape.gather_rows(dec[size_t(f)].reid, anchors);
      ad::Var dn = tape.gather_rows(dec[size_t(f) + 1].reid, den);
      cl_terms.push_back(infonce_loss(tape, a, dn, pidx, lc.tau));
    }
  }

  LossParts parts;
  parts.cls = avg(cls_terms);
  parts.box = avg(box_terms);
  parts.cl = avg(cl_terms);
  parts.total = total_loss(tape, parts.cls, parts.box, parts.cl,
                           lc.lambda_cls);
  return parts;
}

FrameDetections STDNet::infer_center(const std::vector<Image>& frames,
                                     int center_frame) const {
  if (int(frames.size()) != clip_len())
    throw InvalidInputError("infer_center: clip needs 2d+1 frames");
  ad::Tape tape;
  ad::ParamBind p(tape, params_);
  std::vector<std::vector<ad::Var>> clip_levels;
  clip_levels.reserve(frames.size());
  for (const Image& im : frames)
    clip_levels.push_back(extract_pyramid_vars(tape, p, im, cfg_.backbone));
  EncoderOut enc = encoder_forward(tape, p, clip_levels, cfg_.attention,
                                   cfg_.backbone.channels);
  DecodeOut out =
      decode_frame(tape, p, enc.e[size_t(cfg_.attention.d)], enc.geometry,
                   cfg_.decoder, cfg_.attention.heads);

  FrameDetections det;
  det.frame = center_frame;
  const Tensor& lg = tape.val(out.logits);
  const Tensor& bx = tape.val(out.boxes);
  det.reid = tape.val(out.reid);
  det.boxes.reserve(size_t(cfg_.decoder.queries));
  det.scores.reserve(size_t(cfg_.decoder.queries));
  for (int q = 0; q < cfg_.decoder.queries; ++q) {
    det.scores.push_back(stable_sigmoid(lg[q]));
    det.boxes.push_back(
        Box{bx.at(q, 0), bx.at(q, 1), bx.at(q, 2), bx.at(q, 3)});
  }
  return det;
}

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  nlohmann::json hdr;
  hdr["version"] = 1;
  hdr["step"] = ck.step;
  hdr["config"] = nlohmann::json::parse(config_to_json_text(ck.config));
  nlohmann::json dir = nlohmann::json::array();
  int64_t offset = 0;
  for (const auto& [name, t] : ck.tensors) {
    std::vector<int> shape;
    for (int i = 0; i < t.ndim(); ++i) shape.push_back(t.dim(i));
    dir.push_back({{"name", name}, {"shape", shape}, {"offset", offset}});
    offset += t.size() * 8;
  }
  hdr["tensors"] = std::move(dir);
  std::string htext = hdr.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open checkpoint for writing: " + path);
  out.write(kMagic, 8);
  uint64_t hlen = htext.size();
  out.write(reinterpret_cast<const char*>(&hlen), 8);
  out.write(htext.data(), std::streamsize(htext.size()));
  for (const auto& [name, t] : ck.tensors)
    out.write(reinterpret_cast<const char*>(t.data()),
              std::streamsize(t.size() * 8));
  out.flush();
  if (!out) throw FormatError("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::string(magic, 8) != std::string(kMagic, 8))
    throw FormatError("not a checkpoint file: " + path);
  uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), 8);
  if (!in || hlen == 0 || hlen > (uint64_t(1) << 30))
    throw FormatError("corrupt checkpoint header length: " + path);
  std::string htext(hlen, '\0');
  in.read(htext.data(), std::streamsize(hlen));
  if (!in) throw FormatError("truncated checkpoint header: " + path);

  nlohmann::json hdr;
  try {
    hdr = nlohmann::json::parse(htext);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("corrupt checkpoint header in " + path + ": " +
                      e.what());
  }
  Checkpoint ck;
  try {
    if (hdr.at("version").get<int>() != 1)
      throw FormatError("unsupported checkpoint version in " + path);
    ck.step = hdr.at("step").get<int64_t>();
    ck.config = config_from_json_text(hdr.at("config").dump());
    for (const auto& entry : hdr.at("tensors")) {
      std::string name = entry.at("name").get<std::string>();
      std::vector<int> shape = entry.at("shape").get<std::vector<int>>();
      Tensor t(shape);
      in.read(reinterpret_cast<char*>(t.data()),
              std::streamsize(t.size() * 8));
      if (!in)
        throw FormatError("truncated checkpoint payload for tensor '" + name +
                          "' in " + path);
      ck.tensors.emplace(std::move(name), std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("invalid checkpoint header in " + path + ": " +
                      e.what());
  }
  return ck;
}

}  // namespace stdnet
