// Copyright (c) 2026 the stdnet authors.
// Licensed under the Apache License, Version 2.0 [see LICENSE for details]
#include "stdnet/segmenter.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "stdnet/base64.hpp"
#include "stdnet/errors.hpp"
#include "stdnet/rle.hpp"
#include "stdnet/rng.hpp"

namespace stdnet {

namespace {

constexpr uint64_t kJitterStream = 0x9177E6;

int nearest(int dst, int dst_n, int src_n) {
  int s = int(double(dst) * src_n / dst_n + 0.5 * src_n / dst_n);
  return std::clamp(s, 0, src_n - 1);
}

Image resize_image(const Image& src, int oh, int ow) {
  Image out(oh, ow);
  for (int y = 0; y < oh; ++y) {
    int sy = nearest(y, oh, src.h);
    for (int x = 0; x < ow; ++x) {
      int sx = nearest(x, ow, src.w);
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = src.at(sy, sx, c);
    }
  }
  return out;
}

Mask resize_mask(const Mask& src, int oh, int ow) {
  Mask out(oh, ow);
  for (int y = 0; y < oh; ++y) {
    int sy = nearest(y, oh, src.h);
    for (int x = 0; x < ow; ++x) {
      out.at(y, x) = src.at(sy, nearest(x, ow, src.w));
    }
  }
  return out;
}

Mask parse_mask_response(const std::string& body, int h, int w) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("segment response is not JSON: ") +
                        e.what());
  }
  try {
    const auto& m = j.at("mask");
    const auto& size = m.at("size");
    if (!size.is_array() || size.size() != 2) {
      throw ProtocolError("segment response: mask.size must be [h, w]");
    }
    int mh = size[0].get<int>(), mw = size[1].get<int>();
    if (mh != h || mw != w) {
      throw ProtocolError("segment response: mask is " + std::to_string(mh) +
                          "x" + std::to_string(mw) + ", image is " +
                          std::to_string(h) + "x" + std::to_string(w));
    }
    std::vector<int64_t> counts = m.at("counts").get<std::vector<int64_t>>();
    if (!j.at("score").is_number()) {
      throw ProtocolError("segment response: score must be a number");
    }
    try {
      return rle_decode(counts, h, w);
    } catch (const InvalidInputError& e) {
      throw ProtocolError(std::string("segment response: bad RLE: ") +
                          e.what());
    }
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("segment response missing field: ") +
                        e.what());
  }
}

}  // namespace

std::vector<BoxPrompt> prompts_from_trajectories(
    const std::vector<Trajectory>& trajs) {
  std::vector<BoxPrompt> out;
  for (const Trajectory& t : trajs) {
    for (const TrackPoint& p : t.entries) {
      if (!p.box.valid()) {
        throw InvalidInputError("prompts_from_trajectories: invalid box in "
                                "track " + std::to_string(t.id) + " frame " +
                                std::to_string(p.frame));
      }
      out.push_back({p.frame, t.id, p.box});
    }
  }
  std::sort(out.begin(), out.end(), [](const BoxPrompt& a, const BoxPrompt& b) {
    return a.frame != b.frame ? a.frame < b.frame : a.id < b.id;
  });
  for (size_t i = 1; i < out.size(); ++i) {
    if (out[i].frame == out[i - 1].frame && out[i].id == out[i - 1].id) {
      throw InvalidInputError(
          "prompts_from_trajectories: duplicate prompt for frame " +
          std::to_string(out[i].frame) + " id " + std::to_string(out[i].id));
    }
  }
  return out;
}

Mask oracle_segment(const Mask& gt_mask, const Box& prompt) {
  Mask box_mask =
      rasterize_box(box_to_pixels(prompt, gt_mask.h, gt_mask.w), gt_mask.h,
                    gt_mask.w);
  Mask out(gt_mask.h, gt_mask.w);
  for (size_t i = 0; i < out.v.size(); ++i) {
    out.v[i] = uint8_t(gt_mask.v[i] & box_mask.v[i]);
  }
  return out;
}

std::vector<BoxPrompt> jitter_prompts(const std::vector<BoxPrompt>& prompts,
                                      double sigma, uint64_t seed) {
  if (!(sigma >= 0) || !std::isfinite(sigma)) {
    throw InvalidInputError("jitter_prompts: sigma must be finite and >= 0");
  }
  if (sigma == 0.0) return prompts;
  Rng rng(Rng::derive(seed, kJitterStream));
  std::vector<BoxPrompt> out = prompts;
  for (BoxPrompt& p : out) {
    Box b = p.box;
    b.cx = std::clamp(b.cx + rng.normal(0, sigma), 0.0, 1.0);
    b.cy = std::clamp(b.cy + rng.normal(0, sigma), 0.0, 1.0);
    b.w = b.w * std::exp(rng.normal(0, sigma));
    b.h = b.h * std::exp(rng.normal(0, sigma));
    p.box = b.clipped_to_unit();  // nonempty: the center is inside the frame
  }
  return out;
}

Mask remote_segment(const std::string& url, const Image& image,
                    const Box& box, int retries, int timeout_ms) {
  if (retries < 0) throw InvalidInputError("remote_segment: retries < 0");
  if (timeout_ms <= 0) throw InvalidInputError("remote_segment: timeout <= 0");
  if (!box.valid()) throw InvalidInputError("remote_segment: invalid box");
  if (image.h <= 0 || image.w <= 0) {
    throw InvalidInputError("remote_segment: empty image");
  }

  auto c = box.corners();
  nlohmann::json req = {
      {"image", base64_encode(encode_png(image))},
      {"box", {c[0] * image.w, c[1] * image.h, c[2] * image.w,
               c[3] * image.h}}};
  std::string body = req.dump();

  std::string last_err;
  int last_status = 0;
  for (int attempt = 0; attempt <= retries; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(25));
    }
    httplib::Client cli(url);
    cli.set_connection_timeout(0, timeout_ms * 1000);
    cli.set_read_timeout(timeout_ms / 1000, (timeout_ms % 1000) * 1000);
    cli.set_write_timeout(timeout_ms / 1000, (timeout_ms % 1000) * 1000);
    httplib::Result res = cli.Post("/segment", body, "application/json");
    if (!res) {
      last_err = httplib::to_string(res.error());
      last_status = 0;
      continue;  // transport failure: retry
    }
    if (res->status >= 500) {
      last_err = "status " + std::to_string(res->status);
      last_status = res->status;
      continue;  // server-side failure: retry
    }
    if (res->status < 200 || res->status >= 300) {
      throw ServiceError(res->status,
                         "segment: " + url + " answered status " +
                             std::to_string(res->status));
    }
    return parse_mask_response(res->body, image.h, image.w);
  }
  std::string msg = "segment: POST " + url + "/segment failed after " +
                    std::to_string(retries + 1) + " attempts (" + last_err +
                    ")";
  if (last_status >= 500) throw ServiceError(last_status, msg);
  throw TransportError(msg);
}

Mask OracleSegmenter::segment(const Image& image,
                              const BoxPrompt& prompt) const {
  const SyntheticVideo& v = *gt_;
  if (prompt.frame < 0 || prompt.frame >= int(v.frames.size())) {
    throw InvalidInputError("oracle: prompt frame " +
                            std::to_string(prompt.frame) + " out of range");
  }
  if (image.h != v.spec.h || image.w != v.spec.w) {
    throw InvalidInputError("oracle: image size differs from the video");
  }
  const Mask* best = nullptr;
  double best_iou = 0.0;
  for (const ObjectTruth& obj : v.objects) {
    const Mask& m = obj.masks[size_t(prompt.frame)];
    PixelBox tb = tight_box(m);
    if (!tb.valid()) continue;  // not visible this frame
    double ov = iou(box_from_pixels(tb, m.h, m.w), prompt.box);
    if (ov > best_iou) {
      best_iou = ov;
      best = &m;
    }
  }
  if (best == nullptr) return Mask(image.h, image.w);
  return oracle_segment(*best, prompt.box);
}

RemoteSegmenter::RemoteSegmenter(std::string url, int retries, int timeout_ms,
                                 int resize_shorter)
    : url_(std::move(url)),
      retries_(retries),
      timeout_ms_(timeout_ms),
      resize_shorter_(resize_shorter) {
  if (url_.empty()) throw ConfigError("segmenter: empty remote URL");
}

Mask RemoteSegmenter::segment(const Image& image,
                              const BoxPrompt& prompt) const {
  int shorter = std::min(image.h, image.w);
  if (resize_shorter_ <= 0 || shorter == resize_shorter_) {
    return remote_segment(url_, image, prompt.box, retries_, timeout_ms_);
  }
  // The box is normalized, so only the raster needs rescaling.
  double s = double(resize_shorter_) / shorter;
  int oh = std::max(1, int(std::lround(image.h * s)));
  int ow = std::max(1, int(std::lround(image.w * s)));
  if (image.h < image.w) {
    oh = resize_shorter_;
  } else {
    ow = resize_shorter_;
  }
  Mask small = remote_segment(url_, resize_image(image, oh, ow), prompt.box,
                              retries_, timeout_ms_);
  return resize_mask(small, image.h, image.w);
}

std::unique_ptr<Segmenter> make_segmenter(const SegmenterConfig& cfg,
                                          const SyntheticVideo* gt) {
  if (cfg.backend == "oracle") {
    if (gt == nullptr) {
      throw ConfigError("segmenter: oracle backend needs ground truth");
    }
    return std::make_unique<OracleSegmenter>(*gt);
  }
  const std::string prefix = "remote:";
  if (cfg.backend.rfind(prefix, 0) == 0) {
    return std::make_unique<RemoteSegmenter>(cfg.backend.substr(prefix.size()),
                                             cfg.retries, cfg.timeout_ms,
                                             cfg.resize_shorter);
  }
  throw ConfigError("segmenter: unknown backend '" + cfg.backend + "'");
}

}  // namespace stdnet
