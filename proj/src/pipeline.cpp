// Copyright (c) 2026 the stdnet authors.
// Licensed under the Apache License, Version 2.0 [see LICENSE for details]
#include "stdnet/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <thread>

#include <nlohmann/json.hpp>

#include "stdnet/errors.hpp"
#include "stdnet/rng.hpp"

namespace stdnet {

namespace fs = std::filesystem;

namespace {

constexpr uint64_t kVideoJitterStream = 0x71E0;

// Index-ordered results, so output never depends on completion order.
void parallel_for(int n, int jobs, const std::function<void(int)>& fn) {
  jobs = std::clamp(jobs, 1, std::max(1, n));
  if (jobs == 1 || n <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr err;
  std::mutex err_mu;
  std::vector<std::thread> pool;
  pool.reserve(size_t(jobs));
  for (int w = 0; w < jobs; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        int i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lk(err_mu);
          if (!err) err = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

void ensure_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) {
    throw FormatError("pipeline: cannot create " + p.string() + ": " +
                      ec.message());
  }
}

void write_text(const fs::path& p, const std::string& text) {
  FILE* f = std::fopen(p.string().c_str(), "wb");
  if (!f) throw FormatError("pipeline: cannot write " + p.string());
  size_t n = std::fwrite(text.data(), 1, text.size(), f);
  std::fclose(f);
  if (n != text.size()) {
    throw FormatError("pipeline: short write to " + p.string());
  }
}

int parse_int_value(const std::string& s, const std::string& axis) {
  try {
    size_t pos = 0;
    int v = std::stoi(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw InvalidInputError("ablate: bad value '" + s + "' for axis " + axis);
  }
}

// Full-scale reference numbers from the original experiments, surfaced in
// the tables as context only — desk-scale runs are never compared to them.
double published_reference(const std::string& axis, const std::string& value) {
  static const std::map<std::string, double> kRefs = {
      {"d:0", 78.8},       {"d:1", 79.7},       {"d:2", 80.4},
      {"d:3", 80.9},       {"d:4", 81.1},       {"k_inter:0", 78.8},
      {"k_inter:1", 79.3}, {"k_inter:2", 79.9}, {"k_inter:3", 80.4},
      {"k_inter:4", 80.9}, {"k_inter:5", 81.0}, {"k_inter:6", 80.8},
      {"tcl:off", 78.1},   {"tcl:on", 79.1},
  };
  auto it = kRefs.find(axis + ":" + value);
  if (it == kRefs.end()) return std::numeric_limits<double>::quiet_NaN();
  return it->second;
}

// --- tiny raster plot -------------------------------------------------------

void fill_rect(Image& img, int x0, int y0, int x1, int y1, uint8_t r,
               uint8_t g, uint8_t b) {
  x0 = std::max(x0, 0);
  y0 = std::max(y0, 0);
  x1 = std::min(x1, img.w);
  y1 = std::min(y1, img.h);
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) {
      img.at(y, x, 0) = r;
      img.at(y, x, 1) = g;
      img.at(y, x, 2) = b;
    }
  }
}

void draw_line(Image& img, double x0, double y0, double x1, double y1,
               uint8_t r, uint8_t g, uint8_t b) {
  int n = int(std::max(std::abs(x1 - x0), std::abs(y1 - y0))) + 1;
  for (int i = 0; i <= n; ++i) {
    double t = double(i) / n;
    int x = int(std::lround(x0 + (x1 - x0) * t));
    int y = int(std::lround(y0 + (y1 - y0) * t));
    fill_rect(img, x, y, x + 1, y + 1, r, g, b);
  }
}

// 3x5 bitmaps for digits plus '.' and '-'; enough for tick labels.
constexpr uint8_t kGlyphs[12][5] = {
    {0b111, 0b101, 0b101, 0b101, 0b111}, {0b010, 0b110, 0b010, 0b010, 0b111},
    {0b111, 0b001, 0b111, 0b100, 0b111}, {0b111, 0b001, 0b011, 0b001, 0b111},
    {0b101, 0b101, 0b111, 0b001, 0b001}, {0b111, 0b100, 0b111, 0b001, 0b111},
    {0b111, 0b100, 0b111, 0b101, 0b111}, {0b111, 0b001, 0b001, 0b001, 0b001},
    {0b111, 0b101, 0b111, 0b101, 0b111}, {0b111, 0b101, 0b111, 0b001, 0b111},
    {0b000, 0b000, 0b000, 0b000, 0b010}, {0b000, 0b000, 0b111, 0b000, 0b000},
};

int glyph_index(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c == '.') return 10;
  if (c == '-') return 11;
  return -1;
}

void draw_text(Image& img, int x, int y, const std::string& s, int scale) {
  for (char c : s) {
    int gi = glyph_index(c);
    if (gi >= 0) {
      for (int row = 0; row < 5; ++row) {
        for (int col = 0; col < 3; ++col) {
          if ((kGlyphs[gi][row] >> (2 - col)) & 1) {
            fill_rect(img, x + col * scale, y + row * scale,
                      x + (col + 1) * scale, y + (row + 1) * scale, 0, 0, 0);
          }
        }
      }
    }
    x += 4 * scale;
  }
}

std::string fmt_tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

Image render_plot(std::vector<double> xs, std::vector<double> ys) {
  const int w = 640, h = 400, ml = 78, mr = 24, mt = 24, mb = 48;
  Image img(h, w);
  std::fill(img.rgb.begin(), img.rgb.end(), uint8_t(255));

  std::vector<size_t> order(xs.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return xs[a] < xs[b]; });

  double xmin = *std::min_element(xs.begin(), xs.end());
  double xmax = *std::max_element(xs.begin(), xs.end());
  double ymin = *std::min_element(ys.begin(), ys.end());
  double ymax = *std::max_element(ys.begin(), ys.end());
  if (xmax - xmin < 1e-12) {
    xmin -= 0.5;
    xmax += 0.5;
  }
  double pad = std::max(0.02, 0.08 * (ymax - ymin));
  ymin -= pad;
  ymax += pad;

  auto px = [&](double x) {
    return ml + (x - xmin) / (xmax - xmin) * (w - ml - mr);
  };
  auto py = [&](double y) {
    return h - mb - (y - ymin) / (ymax - ymin) * (h - mt - mb);
  };

  draw_line(img, ml, mt, ml, h - mb, 0, 0, 0);
  draw_line(img, ml, h - mb, w - mr, h - mb, 0, 0, 0);

  for (int i = 0; i <= 4; ++i) {
    double y = ymin + (ymax - ymin) * i / 4.0;
    int yy = int(std::lround(py(y)));
    draw_line(img, ml - 5, yy, ml, yy, 0, 0, 0);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3f", y);
    std::string label(buf);
    draw_text(img, ml - 9 - int(label.size()) * 8, yy - 5, label, 2);
  }
  for (double x : xs) {
    int xx = int(std::lround(px(x)));
    draw_line(img, xx, h - mb, xx, h - mb + 5, 0, 0, 0);
    std::string label = fmt_tick(x);
    draw_text(img, xx - int(label.size()) * 4, h - mb + 9, label, 2);
  }

  for (size_t i = 1; i < order.size(); ++i) {
    draw_line(img, px(xs[order[i - 1]]), py(ys[order[i - 1]]),
              px(xs[order[i]]), py(ys[order[i]]), 30, 60, 170);
  }
  for (size_t i = 0; i < xs.size(); ++i) {
    int xx = int(std::lround(px(xs[i]))), yy = int(std::lround(py(ys[i])));
    fill_rect(img, xx - 3, yy - 3, xx + 4, yy + 4, 30, 60, 170);
  }
  return img;
}

}  // namespace

std::vector<FrameDetections> detect_video(const STDNet& model,
                                          const std::vector<Image>& frames,
                                          int jobs) {
  int t_total = int(frames.size());
  if (t_total == 0) throw InvalidInputError("detect_video: no frames");
  int d = model.config().attention.d;
  std::vector<FrameDetections> out;
  out.resize(size_t(t_total));
  parallel_for(t_total, jobs, [&](int t) {
    std::vector<Image> clip;
    clip.reserve(size_t(2 * d + 1));
    for (int i = -d; i <= d; ++i) {
      clip.push_back(frames[size_t(std::clamp(t + i, 0, t_total - 1))]);
    }
    out[size_t(t)] = model.infer_center(clip, t);
  });
  return out;
}

std::vector<Trajectory> track_video(const TrackerConfig& cfg,
                                    const std::vector<FrameDetections>& dets) {
  MultiObjectTracker mot(cfg);
  for (const FrameDetections& fd : dets) {
    std::vector<Detection> keep;
    int q_total = int(fd.scores.size());
    for (int q = 0; q < q_total; ++q) {
      if (fd.scores[size_t(q)] < cfg.score_thresh) continue;
      int dim = fd.reid.cols();
      Tensor emb({dim});
      for (int c = 0; c < dim; ++c) emb.data()[c] = fd.reid.at(q, c);
      keep.push_back(
          {fd.frame, q, fd.boxes[size_t(q)], fd.scores[size_t(q)], emb});
    }
    mot.observe(fd.frame, keep);
  }
  return mot.finalize();
}

std::vector<Trajectory> gt_trajectories(const SyntheticVideo& v) {
  std::vector<Trajectory> out;
  for (const ObjectTruth& obj : v.objects) {
    Trajectory t;
    t.id = obj.id;
    for (size_t f = 0; f < obj.boxes.size(); ++f) {
      t.entries.push_back(
          {int(f), box_from_pixels(obj.boxes[f], v.spec.h, v.spec.w), 1.0});
    }
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<MaskSequence> gt_mask_sequences(const SyntheticVideo& v) {
  std::vector<MaskSequence> out;
  for (const ObjectTruth& obj : v.objects) {
    MaskSequence seq;
    seq.id = obj.id;
    for (size_t f = 0; f < obj.masks.size(); ++f) {
      seq.by_frame[int(f)] = obj.masks[f];
    }
    out.push_back(std::move(seq));
  }
  return out;
}

std::vector<Mask> segment_prompts(const Segmenter& seg,
                                  const std::vector<Image>& frames,
                                  const std::vector<BoxPrompt>& prompts,
                                  int jobs) {
  std::vector<Mask> out(prompts.size());
  parallel_for(int(prompts.size()), jobs, [&](int i) {
    const BoxPrompt& p = prompts[size_t(i)];
    if (p.frame < 0 || p.frame >= int(frames.size())) {
      throw InvalidInputError("segment_prompts: prompt frame " +
                              std::to_string(p.frame) + " out of range");
    }
    out[size_t(i)] = seg.segment(frames[size_t(p.frame)], p);
  });
  return out;
}

std::vector<MaskSequence> masks_by_track(const std::vector<BoxPrompt>& prompts,
                                         const std::vector<Mask>& masks) {
  if (prompts.size() != masks.size()) {
    throw InvalidInputError("masks_by_track: prompts/masks length mismatch");
  }
  std::map<int, MaskSequence> by_id;
  for (size_t i = 0; i < prompts.size(); ++i) {
    MaskSequence& seq = by_id[prompts[i].id];
    seq.id = prompts[i].id;
    seq.by_frame[prompts[i].frame] = masks[i];
  }
  std::vector<MaskSequence> out;
  out.reserve(by_id.size());
  for (auto& [id, seq] : by_id) out.push_back(std::move(seq));
  return out;
}

TrackQuality track_quality(const std::vector<Trajectory>& trajs,
                           const SyntheticVideo& gt, double min_iou) {
  std::map<int, std::vector<std::pair<int, Box>>> pred_by_frame;
  for (const Trajectory& t : trajs) {
    for (const TrackPoint& p : t.entries) {
      pred_by_frame[p.frame].push_back({t.id, p.box});
    }
  }

  TrackQuality q;
  double iou_sum = 0;
  std::map<int, int> last_track;  // gt object -> last matched track id
  for (int f = 0; f < gt.spec.t; ++f) {
    std::vector<Box> gt_boxes;
    for (const ObjectTruth& obj : gt.objects) {
      gt_boxes.push_back(box_from_pixels(obj.boxes[size_t(f)], gt.spec.h,
                                         gt.spec.w));
    }
    int ng = int(gt_boxes.size());
    q.total_gt += ng;
    auto it = pred_by_frame.find(f);
    if (it == pred_by_frame.end() || it->second.empty()) continue;
    const auto& preds = it->second;
    int np = int(preds.size());

    bool pred_rows = np <= ng;
    int nr = pred_rows ? np : ng, nc = pred_rows ? ng : np;
    Tensor cost({nr, nc});
    for (int r = 0; r < nr; ++r) {
      for (int c = 0; c < nc; ++c) {
        int pi = pred_rows ? r : c, gi = pred_rows ? c : r;
        cost.at(r, c) = 1.0 - iou(preds[size_t(pi)].second,
                                  gt_boxes[size_t(gi)]);
      }
    }
    std::vector<int> a = hungarian_assign(cost);
    for (int r = 0; r < nr; ++r) {
      int pi = pred_rows ? r : a[size_t(r)];
      int gi = pred_rows ? a[size_t(r)] : r;
      double ov = iou(preds[size_t(pi)].second, gt_boxes[size_t(gi)]);
      if (ov <= min_iou) continue;
      ++q.matched;
      iou_sum += ov;
      int obj_id = gt.objects[size_t(gi)].id;
      int track = preds[size_t(pi)].first;
      auto lt = last_track.find(obj_id);
      if (lt != last_track.end() && lt->second != track) ++q.id_switches;
      last_track[obj_id] = track;
    }
  }
  if (q.matched > 0) q.mean_iou = iou_sum / q.matched;
  return q;
}

VideoGt to_train_video(const SyntheticVideo& v) {
  VideoGt out;
  out.frames = v.frames;
  out.gt.resize(size_t(v.spec.t));
  for (int f = 0; f < v.spec.t; ++f) {
    for (const ObjectTruth& obj : v.objects) {
      out.gt[size_t(f)].boxes.push_back(
          box_from_pixels(obj.boxes[size_t(f)], v.spec.h, v.spec.w));
      out.gt[size_t(f)].ids.push_back(obj.id);
    }
  }
  return out;
}

std::vector<VideoGt> load_train_dataset(const std::string& dir) {
  std::vector<VideoGt> out;
  for (const std::string& vdir : list_videos(dir)) {
    out.push_back(to_train_video(load_video(vdir)));
  }
  if (out.empty()) throw FormatError("no videos under " + dir);
  return out;
}

PipelineResult run_pipeline(const ExperimentConfig& cfg, const STDNet* model,
                            const std::string& dataset_dir,
                            bool prompts_from_gt, const std::string& out_dir,
                            std::ostream* log) {
  if (!prompts_from_gt && model == nullptr) {
    throw InvalidInputError("pipeline: need a model unless prompts come "
                            "from ground truth");
  }
  std::vector<std::string> dirs = list_videos(dataset_dir);
  if (dirs.empty()) throw FormatError("pipeline: no videos under " +
                                      dataset_dir);
  if (!out_dir.empty()) ensure_dir(out_dir);

  PipelineResult res;
  std::vector<EvalReport> reports;
  for (size_t vi = 0; vi < dirs.size(); ++vi) {
    SyntheticVideo video = load_video(dirs[vi]);
    std::string name = fs::path(dirs[vi]).filename().string();

    VideoResult vr;
    vr.name = name;
    vr.trajs = prompts_from_gt
                   ? gt_trajectories(video)
                   : track_video(cfg.tracker,
                                 detect_video(*model, video.frames, cfg.jobs));

    std::vector<BoxPrompt> prompts = prompts_from_trajectories(vr.trajs);
    prompts = jitter_prompts(prompts, cfg.segmenter.jitter,
                             Rng::derive(cfg.seed, kVideoJitterStream + vi));
    std::unique_ptr<Segmenter> seg = make_segmenter(cfg.segmenter, &video);
    std::vector<Mask> masks =
        segment_prompts(*seg, video.frames, prompts, cfg.jobs);
    vr.pred = masks_by_track(prompts, masks);
    vr.report = evaluate(vr.pred, gt_mask_sequences(video),
                         default_boundary_tol(video.spec.h, video.spec.w));
    vr.quality = track_quality(vr.trajs, video);

    if (!out_dir.empty()) {
      fs::path vdir = fs::path(out_dir) / name;
      ensure_dir(vdir);
      write_text(vdir / "trajectories.json",
                 trajectories_to_json(name, vr.trajs));
      write_text(vdir / "report.json", report_to_json(vr.report));
      for (size_t i = 0; i < prompts.size(); ++i) {
        char sub[32], file[32];
        std::snprintf(sub, sizeof(sub), "track%03d", prompts[i].id);
        std::snprintf(file, sizeof(file), "%05d.png", prompts[i].frame);
        fs::path mdir = vdir / "masks" / sub;
        ensure_dir(mdir);
        write_png((mdir / file).string(), masks[i]);
      }
    }
    if (log) {
      nlohmann::json line = {{"video", name},
                             {"jf", vr.report.jf},
                             {"j_mean", vr.report.j_mean},
                             {"f_mean", vr.report.f_mean},
                             {"tracks", vr.trajs.size()},
                             {"mean_iou", vr.quality.mean_iou},
                             {"id_switches", vr.quality.id_switches}};
      (*log) << line.dump() << "\n";
    }
    reports.push_back(vr.report);
    res.videos.push_back(std::move(vr));
  }
  res.combined = combine_reports(reports);
  if (!out_dir.empty()) {
    write_text(fs::path(out_dir) / "report.json",
               report_to_json(res.combined));
    write_text(fs::path(out_dir) / "report.csv", report_to_csv(res.combined));
  }
  return res;
}

AblationResult run_ablation(const ExperimentConfig& base,
                            const std::string& axis,
                            const std::vector<std::string>& values,
                            const std::string& train_dir,
                            const std::string& eval_dir,
                            const std::string& out_dir, std::ostream* log) {
  if (axis != "d" && axis != "k_inter" && axis != "tcl") {
    throw InvalidInputError("ablate: unknown axis '" + axis + "'");
  }
  if (values.empty()) throw InvalidInputError("ablate: no values given");
  std::vector<VideoGt> train_data = load_train_dataset(train_dir);

  AblationResult res;
  res.axis = axis;
  for (const std::string& value : values) {
    ExperimentConfig cfg = base;
    if (axis == "d") {
      cfg.attention.d = parse_int_value(value, axis);
    } else if (axis == "k_inter") {
      int k = parse_int_value(value, axis);
      if (k == 0) {
        cfg.attention.d = 0;  // zero sampling points = no temporal branch
      } else {
        cfg.attention.k_inter = k;
      }
    } else {
      if (value != "off" && value != "on") {
        throw InvalidInputError("ablate: tcl value must be off or on, got '" +
                                value + "'");
      }
      cfg.train.tcl = value == "on";
    }
    cfg.validate();

    STDNet model(cfg);
    model.init_params();
    Trainer trainer(model);
    trainer.run(train_data, log);

    std::string run_dir;
    if (!out_dir.empty()) {
      run_dir = (fs::path(out_dir) / (axis + "=" + value)).string();
      ensure_dir(run_dir);
      save_checkpoint((fs::path(run_dir) / "checkpoint.bin").string(),
                      trainer.make_checkpoint());
    }
    PipelineResult pr =
        run_pipeline(cfg, &model, eval_dir, false, run_dir, log);

    AblationRow row;
    row.value = value;
    row.jf = pr.combined.jf;
    row.j_mean = pr.combined.j_mean;
    row.f_mean = pr.combined.f_mean;
    row.published_jf = published_reference(axis, value);
    res.rows.push_back(row);
    if (log) {
      nlohmann::json line = {{"axis", axis}, {"value", value},
                             {"jf", row.jf}};
      (*log) << line.dump() << "\n";
    }
  }
  if (!out_dir.empty()) write_ablation_outputs(res, out_dir);
  return res;
}

std::string ablation_to_csv(const AblationResult& r) {
  std::string out = r.axis + ",J&F,J-Mean,F-Mean,Reference-J&F(non-target)\n";
  for (const AblationRow& row : r.rows) {
    char buf[128];
    if (std::isnan(row.published_jf)) {
      std::snprintf(buf, sizeof(buf), "%s,%.4f,%.4f,%.4f,\n",
                    row.value.c_str(), row.jf, row.j_mean, row.f_mean);
    } else {
      std::snprintf(buf, sizeof(buf), "%s,%.4f,%.4f,%.4f,%.1f\n",
                    row.value.c_str(), row.jf, row.j_mean, row.f_mean,
                    row.published_jf);
    }
    out += buf;
  }
  return out;
}

void write_ablation_outputs(const AblationResult& r,
                            const std::string& out_dir) {
  ensure_dir(out_dir);
  write_text(fs::path(out_dir) / "table.csv", ablation_to_csv(r));

  std::vector<double> xs, ys;
  std::string plot_csv = r.axis + ",jf\n";
  for (const AblationRow& row : r.rows) {
    double x;
    if (r.axis == "tcl") {
      x = row.value == "on" ? 1.0 : 0.0;
    } else {
      x = double(parse_int_value(row.value, r.axis));
    }
    xs.push_back(x);
    ys.push_back(row.jf);
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%g,%.6f\n", x, row.jf);
    plot_csv += buf;
  }
  write_text(fs::path(out_dir) / "plot.csv", plot_csv);
  write_png((fs::path(out_dir) / "plot.png").string(), render_plot(xs, ys));
}

}  // namespace stdnet
