// Copyright (c) 2026 the stdnet authors.
// Licensed under the Apache License, Version 2.0 [see LICENSE for details]
#pragma once

#include <memory>
#include <string>
#include <vector>

#include "stdnet/association.hpp"
#include "stdnet/config.hpp"
#include "stdnet/geometry.hpp"
#include "stdnet/image.hpp"
#include "stdnet/synthetic_video.hpp"

namespace stdnet {

struct BoxPrompt {
  int frame = 0;
  int id = 0;
  Box box;  // normalized center-size
};

// One prompt per observed (trajectory, frame), (frame, id)-lexicographic.
// Duplicate (frame, id) pairs or invalid boxes are rejected.
std::vector<BoxPrompt> prompts_from_trajectories(
    const std::vector<Trajectory>& trajs);

// Ground truth clipped to the rasterized prompt box: a perfect box returns
// the whole object, an undersized one truncates it.
Mask oracle_segment(const Mask& gt_mask, const Box& prompt);

// Center += N(0, sigma), sizes *= exp(N(0, sigma)) per axis, center clamped
// into the frame and the box clipped to it. sigma = 0 returns the input
// untouched; output is deterministic given (prompts, sigma, seed).
std::vector<BoxPrompt> jitter_prompts(const std::vector<BoxPrompt>& prompts,
                                      double sigma, uint64_t seed);

// POST {image: base64 PNG, box: [x0,y0,x1,y1] pixel corners} to
// url + "/segment"; expects {mask: {size: [h,w], counts: [...]}, score}.
// Transport failures and 5xx answers are retried `retries` times, then
// TransportError / ServiceError; other non-2xx fail immediately; malformed
// payloads raise ProtocolError. The mask always matches the image size.
Mask remote_segment(const std::string& url, const Image& image,
                    const Box& box, int retries, int timeout_ms);

// Prompt-level backend the pipeline iterates over. Implementations are
// stateless across calls and safe to invoke from multiple threads.
class Segmenter {
 public:
  virtual ~Segmenter() = default;
  virtual Mask segment(const Image& image, const BoxPrompt& prompt) const = 0;
};

// Stands in for a promptable segmentation model: the prompted object is
// resolved against the ground-truth video by best box IoU with the per-frame
// tight boxes (ties to the lowest object index), then that object's visible
// mask is clipped to the prompt box. No overlap at all yields an empty mask.
class OracleSegmenter : public Segmenter {
 public:
  explicit OracleSegmenter(const SyntheticVideo& gt) : gt_(&gt) {}
  Mask segment(const Image& image, const BoxPrompt& prompt) const override;

 private:
  const SyntheticVideo* gt_;
};

class RemoteSegmenter : public Segmenter {
 public:
  RemoteSegmenter(std::string url, int retries, int timeout_ms,
                  int resize_shorter);
  Mask segment(const Image& image, const BoxPrompt& prompt) const override;

 private:
  std::string url_;
  int retries_, timeout_ms_, resize_shorter_;
};

// "oracle" needs gt; "remote:URL" strips the prefix and ignores gt.
std::unique_ptr<Segmenter> make_segmenter(const SegmenterConfig& cfg,
                                          const SyntheticVideo* gt);

}  // namespace stdnet
