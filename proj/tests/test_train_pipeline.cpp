// Copyright (c) 2026 the stdnet authors.
// Licensed under the Apache License, Version 2.0 [see LICENSE for details]
//
// Trainer, checkpointing, and the detect->track->segment->evaluate pipeline
// on desk-scale synthetic datasets. Determinism claims are checked bitwise:
// identical seeds must reproduce identical parameters and reports.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "stdnet/errors.hpp"
#include "stdnet/pipeline.hpp"
#include "stdnet/segstub.hpp"

using namespace stdnet;
namespace fs = std::filesystem;

namespace {

// Small enough that a train step takes milliseconds: 16x16 frames, two
// pyramid levels (4x4 and 2x2), one encoder/decoder layer, six queries.
ExperimentConfig tiny_cfg(int steps) {
  ExperimentConfig cfg;
  cfg.seed = 7;
  cfg.jobs = 2;
  cfg.backbone.channels = 16;
  cfg.backbone.strides = {4, 8};
  cfg.attention.heads = 4;
  cfg.attention.k_intra = 2;
  cfg.attention.k_inter = 2;
  cfg.attention.d = 1;
  cfg.attention.n_layers = 1;
  cfg.attention.ffn_hidden = 32;
  cfg.attention.fusion_hidden = 8;
  cfg.decoder.queries = 6;
  cfg.decoder.n_layers = 1;
  cfg.decoder.k_points = 2;
  cfg.decoder.reid_dim = 8;
  cfg.train.steps = steps;
  cfg.train.lr = 1e-3;
  cfg.train.log_every = 1;
  cfg.validate();
  return cfg;
}

SceneSpec train_scene(uint64_t seed) {
  SceneSpec s;
  s.h = 16;
  s.w = 16;
  s.t = 4;
  s.occlusion = false;
  s.seed = seed;
  ObjectSpec o;
  o.shape = ShapeKind::rectangle;
  o.min_size = 5;
  o.max_size = 6;
  o.vx = 1.5;
  o.vy = 0;
  o.deform = 0.1;
  o.color = {220, 60, 40};
  s.objects = {o};
  s.validate();
  return s;
}

SceneSpec eval_scene(uint64_t seed) {
  SceneSpec s;
  s.h = 24;
  s.w = 24;
  s.t = 5;
  s.occlusion = false;
  s.seed = seed;
  ObjectSpec a;
  a.shape = ShapeKind::rectangle;
  a.min_size = 5;
  a.max_size = 7;
  a.vx = 1.2;
  a.vy = 0;
  a.deform = 0.1;
  a.color = {220, 60, 40};
  ObjectSpec b = a;
  b.shape = ShapeKind::ellipse;
  b.vx = -1.0;
  b.color = {40, 90, 220};
  s.objects = {a, b};
  s.validate();
  return s;
}

std::string temp_dir(const std::string& tag) {
  std::string tmpl = "/tmp/stdnet_" + tag + "_XXXXXX";
  std::vector<char> buf(tmpl.begin(), tmpl.end());
  buf.push_back('\0');
  char* got = mkdtemp(buf.data());
  REQUIRE(got != nullptr);
  return std::string(got);
}

// Writes each scene as <dir>/video_00i so list_videos finds them in order.
std::string write_dataset(const std::string& tag,
                          const std::vector<SceneSpec>& scenes) {
  std::string dir = temp_dir(tag);
  for (size_t i = 0; i < scenes.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "video_%03d", int(i));
    save_video(generate(scenes[i]), dir + "/" + name);
  }
  return dir;
}

std::vector<VideoGt> train_videos(std::initializer_list<uint64_t> seeds) {
  std::vector<VideoGt> out;
  for (uint64_t s : seeds) out.push_back(to_train_video(generate(train_scene(s))));
  return out;
}

bool params_equal(const ad::ParamStore& a, const ad::ParamStore& b) {
  if (a.all().size() != b.all().size()) return false;
  auto ib = b.all().begin();
  for (const auto& [name, t] : a.all()) {
    if (ib->first != name || !ib->second.same_shape(t)) return false;
    for (int64_t i = 0; i < t.size(); ++i)
      if (t[i] != ib->second[i]) return false;
    ++ib;
  }
  return true;
}

// Detections rebuilt from ground truth: every object reported with score 0.9
// and a one-hot appearance embedding keyed by its index.
std::vector<FrameDetections> gt_fed_detections(const SyntheticVideo& v) {
  int n = int(v.objects.size());
  std::vector<FrameDetections> out;
  for (int f = 0; f < v.spec.t; ++f) {
    FrameDetections fd;
    fd.frame = f;
    fd.reid = Tensor::zeros({n, 4});
    for (int i = 0; i < n; ++i) {
      fd.boxes.push_back(
          box_from_pixels(v.objects[size_t(i)].boxes[size_t(f)], v.spec.h,
                          v.spec.w));
      fd.scores.push_back(0.9);
      fd.reid.at(i, i) = 1.0;
    }
    out.push_back(std::move(fd));
  }
  return out;
}

bool detections_equal(const std::vector<FrameDetections>& a,
                      const std::vector<FrameDetections>& b) {
  if (a.size() != b.size()) return false;
  for (size_t i = 0; i < a.size(); ++i) {
    if (a[i].frame != b[i].frame) return false;
    if (a[i].scores != b[i].scores) return false;
    if (a[i].boxes.size() != b[i].boxes.size()) return false;
    for (size_t q = 0; q < a[i].boxes.size(); ++q) {
      const Box &x = a[i].boxes[q], &y = b[i].boxes[q];
      if (x.cx != y.cx || x.cy != y.cy || x.w != y.w || x.h != y.h)
        return false;
    }
    if (!a[i].reid.same_shape(b[i].reid)) return false;
    for (int64_t k = 0; k < a[i].reid.size(); ++k)
      if (a[i].reid[k] != b[i].reid[k]) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("checkpoints round-trip through save and load") {
  ExperimentConfig cfg = tiny_cfg(2);
  STDNet net(cfg);
  net.init_params();
  Trainer tr(net);
  std::vector<VideoGt> data = train_videos({3, 4});

  std::ostringstream log;
  std::vector<StepStats> stats = tr.run(data, &log);
  REQUIRE(stats.size() == 2);
  CHECK(stats[0].step == 1);
  CHECK(stats[1].step == 2);
  for (const StepStats& st : stats) {
    CHECK(std::isfinite(st.total));
    CHECK(st.total >= 0.0);
  }
  // one JSON line per step with the documented keys
  std::istringstream lines(log.str());
  std::string line;
  int n_lines = 0;
  while (std::getline(lines, line)) {
    nlohmann::json j = nlohmann::json::parse(line);
    CHECK(j.at("step").get<int64_t>() == n_lines + 1);
    CHECK(j.contains("total"));
    CHECK(j.contains("cls"));
    CHECK(j.contains("box"));
    CHECK(j.contains("cl"));
    ++n_lines;
  }
  CHECK(n_lines == 2);

  Checkpoint ck = tr.make_checkpoint();
  CHECK(ck.step == 2);
  // params + two optimizer moments per tensor
  CHECK(ck.tensors.size() == 3 * net.params().all().size());

  std::string dir = temp_dir("ck");
  std::string path = dir + "/ck.bin";
  save_checkpoint(path, ck);
  Checkpoint ck2 = load_checkpoint(path);
  CHECK(ck2.step == ck.step);
  CHECK(config_to_json_text(ck2.config) == config_to_json_text(ck.config));
  REQUIRE(ck2.tensors.size() == ck.tensors.size());
  for (const auto& [name, t] : ck.tensors) {
    auto it = ck2.tensors.find(name);
    REQUIRE(it != ck2.tensors.end());
    REQUIRE(it->second.same_shape(t));
    for (int64_t i = 0; i < t.size(); ++i) CHECK(it->second[i] == t[i]);
  }

  STDNet net2(cfg);
  net2.init_params();
  restore_params(net2, ck2);
  CHECK(params_equal(net.params(), net2.params()));
  Trainer tr2(net2);
  tr2.resume_from(ck2);
  CHECK(tr2.step_count() == 2);
  fs::remove_all(dir);
}

TEST_CASE("checkpoint loading rejects missing and corrupt files") {
  std::string dir = temp_dir("ckerr");
  CHECK_THROWS_AS(load_checkpoint(dir + "/absent.bin"), FormatError);

  {
    std::ofstream f(dir + "/junk.bin", std::ios::binary);
    f << "definitely not a checkpoint";
  }
  CHECK_THROWS_AS(load_checkpoint(dir + "/junk.bin"), FormatError);

  ExperimentConfig cfg = tiny_cfg(1);
  STDNet net(cfg);
  net.init_params();
  Trainer tr(net);
  Checkpoint ck = tr.make_checkpoint();
  std::string path = dir + "/ok.bin";
  save_checkpoint(path, ck);

  // cut the payload in half: the tensor directory promises more bytes
  {
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
    bytes.resize(bytes.size() / 2);
    std::ofstream out(dir + "/cut.bin", std::ios::binary);
    out.write(bytes.data(), std::streamsize(bytes.size()));
  }
  CHECK_THROWS_AS(load_checkpoint(dir + "/cut.bin"), FormatError);

  // restore_params wants every parameter present with its exact shape
  Checkpoint missing = ck;
  missing.tensors.erase(missing.tensors.find("dec.tgt.w") != missing.tensors.end()
                            ? "dec.tgt.w"
                            : missing.tensors.begin()->first);
  CHECK_THROWS_AS(restore_params(net, missing), FormatError);

  Checkpoint wrong = ck;
  std::string first = net.params().all().begin()->first;
  wrong.tensors[first] = Tensor::zeros({1});
  CHECK_THROWS_AS(restore_params(net, wrong), FormatError);

  // resume_from needs the optimizer moments, not just the parameters
  Checkpoint no_opt = ck;
  for (auto it = no_opt.tensors.begin(); it != no_opt.tensors.end();) {
    if (it->first.rfind("opt.", 0) == 0)
      it = no_opt.tensors.erase(it);
    else
      ++it;
  }
  CHECK_THROWS_AS(tr.resume_from(no_opt), FormatError);
  fs::remove_all(dir);
}

TEST_CASE("training is bitwise deterministic for a fixed seed") {
  ExperimentConfig cfg = tiny_cfg(3);
  std::vector<VideoGt> data = train_videos({3, 4});

  STDNet a(cfg), b(cfg);
  a.init_params();
  b.init_params();
  CHECK(params_equal(a.params(), b.params()));

  Trainer ta(a), tb(b);
  std::vector<StepStats> sa = ta.run(data, nullptr);
  std::vector<StepStats> sb = tb.run(data, nullptr);
  REQUIRE(sa.size() == sb.size());
  for (size_t i = 0; i < sa.size(); ++i) {
    CHECK(sa[i].total == sb[i].total);
    CHECK(sa[i].cls == sb[i].cls);
    CHECK(sa[i].box == sb[i].box);
    CHECK(sa[i].cl == sb[i].cl);
  }
  CHECK(params_equal(a.params(), b.params()));

  // a different seed must move the parameters differently
  ExperimentConfig other = cfg;
  other.seed = 8;
  STDNet c(other);
  c.init_params();
  CHECK(!params_equal(a.params(), c.params()));
}

TEST_CASE("resuming from a checkpoint matches an uninterrupted run") {
  std::vector<VideoGt> data = train_videos({3, 4});

  STDNet full(tiny_cfg(5));
  full.init_params();
  Trainer tf(full);
  std::vector<StepStats> ref = tf.run(data, nullptr);
  REQUIRE(ref.size() == 5);

  STDNet half(tiny_cfg(3));
  half.init_params();
  Trainer th(half);
  th.run(data, nullptr);
  Checkpoint ck = th.make_checkpoint();
  CHECK(ck.step == 3);

  STDNet resumed(tiny_cfg(5));
  resumed.init_params();
  restore_params(resumed, ck);
  Trainer tr(resumed);
  tr.resume_from(ck);
  CHECK(tr.step_count() == 3);
  std::vector<StepStats> tail = tr.run(data, nullptr);
  REQUIRE(tail.size() == 2);
  CHECK(tail[0].step == 4);
  CHECK(tail[1].step == 5);
  CHECK(tail[0].total == ref[3].total);
  CHECK(tail[1].total == ref[4].total);
  CHECK(params_equal(full.params(), resumed.params()));
}

TEST_CASE("the trainer validates its dataset") {
  STDNet net(tiny_cfg(1));
  net.init_params();
  Trainer tr(net);
  CHECK_THROWS_AS(tr.run({}, nullptr), InvalidInputError);

  // d=1 needs 3-frame clips; a 2-frame video cannot supply one
  SceneSpec s = train_scene(5);
  s.t = 2;
  std::vector<VideoGt> shorts = {to_train_video(generate(s))};
  CHECK_THROWS_AS(tr.run(shorts, nullptr), InvalidInputError);

  std::vector<VideoGt> broken = train_videos({3});
  broken[0].gt.pop_back();
  CHECK_THROWS_AS(tr.run(broken, nullptr), InvalidInputError);
}

TEST_CASE("ground-truth adapters expose boxes, masks, and training pairs") {
  SyntheticVideo v = generate(eval_scene(11));
  REQUIRE(v.objects.size() == 2);

  std::vector<Trajectory> trajs = gt_trajectories(v);
  REQUIRE(trajs.size() == 2);
  for (size_t i = 0; i < trajs.size(); ++i) {
    CHECK(trajs[i].id == v.objects[i].id);
    REQUIRE(int(trajs[i].entries.size()) == v.spec.t);
    for (int f = 0; f < v.spec.t; ++f) {
      const TrackPoint& p = trajs[i].entries[size_t(f)];
      CHECK(p.frame == f);
      CHECK(p.score == 1.0);
      Box want = box_from_pixels(v.objects[i].boxes[size_t(f)], v.spec.h,
                                 v.spec.w);
      CHECK(p.box.cx == want.cx);
      CHECK(p.box.cy == want.cy);
      CHECK(p.box.w == want.w);
      CHECK(p.box.h == want.h);
    }
  }

  std::vector<MaskSequence> seqs = gt_mask_sequences(v);
  REQUIRE(seqs.size() == 2);
  for (size_t i = 0; i < seqs.size(); ++i) {
    CHECK(seqs[i].id == v.objects[i].id);
    REQUIRE(int(seqs[i].by_frame.size()) == v.spec.t);
    for (int f = 0; f < v.spec.t; ++f)
      CHECK(seqs[i].by_frame.at(f) == v.objects[i].masks[size_t(f)]);
  }

  VideoGt tv = to_train_video(v);
  REQUIRE(int(tv.frames.size()) == v.spec.t);
  REQUIRE(int(tv.gt.size()) == v.spec.t);
  for (int f = 0; f < v.spec.t; ++f) {
    REQUIRE(tv.gt[size_t(f)].boxes.size() == 2);
    CHECK(tv.gt[size_t(f)].ids ==
          std::vector<int>({v.objects[0].id, v.objects[1].id}));
  }

  std::string ds = write_dataset("adapt", {eval_scene(11), eval_scene(12)});
  std::vector<VideoGt> loaded = load_train_dataset(ds);
  CHECK(loaded.size() == 2);
  CHECK(loaded[0].frames == tv.frames);

  std::string empty = temp_dir("emptyds");
  CHECK_THROWS_AS(load_train_dataset(empty), FormatError);
  fs::remove_all(ds);
  fs::remove_all(empty);
}

TEST_CASE("ground-truth detections track cleanly through the associator") {
  SyntheticVideo v = generate(eval_scene(13));
  TrackerConfig tc;  // defaults: thresh .5, min_hits 2
  std::vector<Trajectory> trajs = track_video(tc, gt_fed_detections(v));
  REQUIRE(trajs.size() == 2);
  for (const Trajectory& t : trajs) {
    REQUIRE(int(t.entries.size()) == v.spec.t);
    for (int f = 0; f < v.spec.t; ++f) CHECK(t.entries[size_t(f)].frame == f);
  }

  TrackQuality q = track_quality(trajs, v);
  CHECK(q.total_gt == 2 * v.spec.t);
  CHECK(q.matched == 2 * v.spec.t);
  CHECK(q.id_switches == 0);
  CHECK(q.mean_iou == doctest::Approx(1.0).epsilon(1e-12));

  // swapping which track carries which object mid-video is two switches
  std::vector<Trajectory> swapped = gt_trajectories(v);
  for (int f = 3; f < v.spec.t; ++f)
    std::swap(swapped[0].entries[size_t(f)].box,
              swapped[1].entries[size_t(f)].box);
  TrackQuality qs = track_quality(swapped, v);
  CHECK(qs.id_switches == 2);
  CHECK(qs.matched == 2 * v.spec.t);
}

TEST_CASE("an untrained detector yields calibrated negatives over a video") {
  ExperimentConfig cfg = tiny_cfg(1);
  STDNet net(cfg);
  net.init_params();
  SyntheticVideo v = generate(train_scene(17));

  std::vector<FrameDetections> dets = detect_video(net, v.frames, 1);
  REQUIRE(int(dets.size()) == v.spec.t);
  for (int f = 0; f < v.spec.t; ++f) {
    const FrameDetections& fd = dets[size_t(f)];
    CHECK(fd.frame == f);
    REQUIRE(int(fd.scores.size()) == cfg.decoder.queries);
    REQUIRE(int(fd.boxes.size()) == cfg.decoder.queries);
    CHECK(fd.reid.rows() == cfg.decoder.queries);
    CHECK(fd.reid.cols() == cfg.decoder.reid_dim);
    for (int q = 0; q < cfg.decoder.queries; ++q) {
      // fresh classifier bias pins objectness near 1%
      CHECK(fd.scores[size_t(q)] > 0.0);
      CHECK(fd.scores[size_t(q)] < 0.05);
      CHECK(fd.boxes[size_t(q)].valid());
      double nrm = 0;
      for (int c = 0; c < cfg.decoder.reid_dim; ++c)
        nrm += fd.reid.at(q, c) * fd.reid.at(q, c);
      CHECK(std::sqrt(nrm) == doctest::Approx(1.0).epsilon(1e-6));
    }
  }

  // worker count must not leak into the output
  CHECK(detections_equal(dets, detect_video(net, v.frames, 3)));
  CHECK_THROWS_AS(detect_video(net, {}, 1), InvalidInputError);

  // sub-threshold scores: the tracker births nothing
  CHECK(track_video(TrackerConfig{}, dets).empty());
}

TEST_CASE("segment_prompts keeps prompt order and propagates worker errors") {
  SyntheticVideo v = generate(eval_scene(19));
  OracleSegmenter seg(v);
  std::vector<BoxPrompt> prompts;
  for (int f = 0; f < 2; ++f)
    for (size_t i = 0; i < v.objects.size(); ++i)
      prompts.push_back({f, v.objects[i].id,
                         box_from_pixels(v.objects[i].boxes[size_t(f)],
                                         v.spec.h, v.spec.w)});

  std::vector<Mask> masks = segment_prompts(seg, v.frames, prompts, 2);
  REQUIRE(masks.size() == prompts.size());
  for (size_t i = 0; i < prompts.size(); ++i)
    CHECK(masks[i] == seg.segment(v.frames[size_t(prompts[i].frame)],
                                  prompts[i]));

  std::vector<BoxPrompt> bad = prompts;
  bad[1].frame = 99;
  CHECK_THROWS_AS(segment_prompts(seg, v.frames, bad, 2), InvalidInputError);

  std::vector<MaskSequence> by_track = masks_by_track(prompts, masks);
  REQUIRE(by_track.size() == 2);
  CHECK(by_track[0].id < by_track[1].id);
  CHECK(by_track[0].by_frame.size() == 2);
  CHECK(by_track[1].by_frame.size() == 2);
  masks.pop_back();
  CHECK_THROWS_AS(masks_by_track(prompts, masks), InvalidInputError);
}

TEST_CASE("the oracle pipeline on ground-truth prompts scores perfectly") {
  std::string ds = write_dataset("oracle", {eval_scene(21), eval_scene(22)});
  std::string out = temp_dir("oracle_out");
  ExperimentConfig cfg = tiny_cfg(1);

  std::ostringstream log;
  PipelineResult res = run_pipeline(cfg, nullptr, ds, true, out, &log);
  REQUIRE(res.videos.size() == 2);
  CHECK(res.videos[0].name == "video_000");
  CHECK(res.videos[1].name == "video_001");
  for (const VideoResult& vr : res.videos) {
    CHECK(vr.report.jf == 1.0);
    CHECK(vr.report.j_mean == 1.0);
    CHECK(vr.report.f_mean == 1.0);
    CHECK(vr.quality.id_switches == 0);
    CHECK(vr.quality.mean_iou == doctest::Approx(1.0).epsilon(1e-12));
    for (const ObjectScore& os : vr.report.objects)
      CHECK(os.pred_id == os.gt_id);
  }
  CHECK(res.combined.jf == 1.0);
  CHECK(res.combined.objects.size() == 4);

  int log_lines = 0;
  std::istringstream lines(log.str());
  std::string line;
  while (std::getline(lines, line)) {
    nlohmann::json j = nlohmann::json::parse(line);
    CHECK(j.at("jf").get<double>() == 1.0);
    ++log_lines;
  }
  CHECK(log_lines == 2);

  // artifact tree under out_dir
  CHECK(fs::exists(out + "/report.json"));
  CHECK(fs::exists(out + "/report.csv"));
  CHECK(fs::exists(out + "/video_000/trajectories.json"));
  CHECK(fs::exists(out + "/video_000/report.json"));
  CHECK(fs::exists(out + "/video_001/report.json"));
  {
    std::ifstream f(out + "/report.csv");
    std::string header;
    std::getline(f, header);
    CHECK(header == "J&F,J-Mean,J-Recall,F-Mean,F-Recall");
  }
  // the saved trajectories parse back to the ground-truth tracks
  {
    std::ifstream f(out + "/video_000/trajectories.json");
    std::string text((std::istreambuf_iterator<char>(f)),
                     std::istreambuf_iterator<char>());
    std::string vid;
    std::vector<Trajectory> back = trajectories_from_json(text, &vid);
    CHECK(vid == "video_000");
    CHECK(back.size() == 2);
  }
  // oracle masks written per track: intersection of gt with its tight box
  // is the gt mask itself, so the png round-trips the ground truth
  SyntheticVideo v0 = load_video(ds + "/video_000");
  char mask_path[256];
  std::snprintf(mask_path, sizeof(mask_path),
                "%s/video_000/masks/track%03d/00000.png", out.c_str(),
                v0.objects[0].id);
  REQUIRE(fs::exists(mask_path));
  CHECK(read_png_mask(mask_path) == v0.objects[0].masks[0]);

  // bitwise reruns: fresh output dir, then more workers
  PipelineResult res2 = run_pipeline(cfg, nullptr, ds, true, "", nullptr);
  CHECK(res2.combined.jf == res.combined.jf);
  CHECK(res2.combined.j_mean == res.combined.j_mean);
  ExperimentConfig wide = cfg;
  wide.jobs = 4;
  PipelineResult res4 = run_pipeline(wide, nullptr, ds, true, "", nullptr);
  CHECK(res4.combined.jf == res.combined.jf);

  // a model is mandatory once prompts come from the detector
  CHECK_THROWS_AS(run_pipeline(cfg, nullptr, ds, false, "", nullptr),
                  InvalidInputError);
  std::string empty = temp_dir("novideos");
  CHECK_THROWS_AS(run_pipeline(cfg, nullptr, empty, true, "", nullptr),
                  FormatError);
  fs::remove_all(ds);
  fs::remove_all(out);
  fs::remove_all(empty);
}

TEST_CASE("prompt jitter degrades scores but stays seed-deterministic") {
  std::string ds = write_dataset("jit", {eval_scene(23), eval_scene(24)});
  ExperimentConfig cfg = tiny_cfg(1);
  cfg.segmenter.jitter = 0.15;

  PipelineResult a = run_pipeline(cfg, nullptr, ds, true, "", nullptr);
  PipelineResult b = run_pipeline(cfg, nullptr, ds, true, "", nullptr);
  CHECK(a.combined.jf == b.combined.jf);
  CHECK(a.combined.j_mean == b.combined.j_mean);
  CHECK(a.combined.jf > 0.0);
  CHECK(a.combined.jf < 1.0);

  ExperimentConfig moved = cfg;
  moved.seed = 99;
  PipelineResult c = run_pipeline(moved, nullptr, ds, true, "", nullptr);
  CHECK(c.combined.jf != a.combined.jf);
  fs::remove_all(ds);
}

TEST_CASE("the detector-driven pipeline runs end to end untrained") {
  std::string ds = write_dataset("det", {train_scene(31)});
  std::string out = temp_dir("det_out");
  ExperimentConfig cfg = tiny_cfg(1);
  STDNet net(cfg);
  net.init_params();

  // untrained scores sit below the track threshold: no tracks, zero scores,
  // but the full artifact tree still lands
  PipelineResult res = run_pipeline(cfg, &net, ds, false, out, nullptr);
  REQUIRE(res.videos.size() == 1);
  CHECK(res.videos[0].trajs.empty());
  CHECK(res.videos[0].quality.matched == 0);
  CHECK(res.combined.jf == 0.0);
  REQUIRE(res.combined.objects.size() == 1);
  CHECK(res.combined.objects[0].pred_id == -1);
  CHECK(fs::exists(out + "/report.csv"));
  CHECK(fs::exists(out + "/video_000/report.json"));
  fs::remove_all(ds);
  fs::remove_all(out);
}

TEST_CASE("ablation tables carry the axis values and reference numbers") {
  AblationResult hand;
  hand.axis = "d";
  hand.rows = {{"0", 0.5, 0.5, 0.5, 78.8},
               {"1", 0.625, 0.65, 0.6,
                std::numeric_limits<double>::quiet_NaN()}};
  CHECK(ablation_to_csv(hand) ==
        "d,J&F,J-Mean,F-Mean,Reference-J&F(non-target)\n"
        "0,0.5000,0.5000,0.5000,78.8\n"
        "1,0.6250,0.6500,0.6000,\n");

  std::string out = temp_dir("abl_hand");
  write_ablation_outputs(hand, out);
  CHECK(fs::exists(out + "/table.csv"));
  CHECK(fs::exists(out + "/plot.png"));
  {
    std::ifstream f(out + "/plot.csv");
    std::string text((std::istreambuf_iterator<char>(f)),
                     std::istreambuf_iterator<char>());
    CHECK(text == "d,jf\n0,0.500000\n1,0.625000\n");
  }
  Image plot = read_png_image(out + "/plot.png");
  CHECK(plot.w == 640);
  CHECK(plot.h == 400);
  fs::remove_all(out);
}

TEST_CASE("ablation sweeps retrain per value and write per-run artifacts") {
  std::string train_dir = write_dataset("abl_train", {train_scene(41)});
  std::string out = temp_dir("abl_out");
  ExperimentConfig base = tiny_cfg(2);

  AblationResult res =
      run_ablation(base, "d", {"1", "0"}, train_dir, train_dir, out, nullptr);
  CHECK(res.axis == "d");
  REQUIRE(res.rows.size() == 2);
  CHECK(res.rows[0].value == "1");
  CHECK(res.rows[0].published_jf == doctest::Approx(79.7));
  CHECK(res.rows[1].value == "0");
  CHECK(res.rows[1].published_jf == doctest::Approx(78.8));
  CHECK(fs::exists(out + "/table.csv"));
  CHECK(fs::exists(out + "/plot.csv"));
  CHECK(fs::exists(out + "/plot.png"));
  CHECK(fs::exists(out + "/d=1/checkpoint.bin"));
  CHECK(fs::exists(out + "/d=0/report.csv"));
  // each value trains to completion and checkpoints at the final step
  Checkpoint ck = load_checkpoint(out + "/d=1/checkpoint.bin");
  CHECK(ck.step == 2);
  CHECK(ck.config.attention.d == 1);

  // k_inter 0 cannot normalize zero sampling points; it falls back to no
  // temporal branch and must still run
  AblationResult k0 = run_ablation(base, "k_inter", {"0"}, train_dir,
                                   train_dir, "", nullptr);
  REQUIRE(k0.rows.size() == 1);
  CHECK(k0.rows[0].published_jf == doctest::Approx(78.8));

  CHECK_THROWS_AS(run_ablation(base, "layers", {"1"}, train_dir, train_dir,
                               "", nullptr),
                  InvalidInputError);
  CHECK_THROWS_AS(run_ablation(base, "d", {"x"}, train_dir, train_dir, "",
                               nullptr),
                  InvalidInputError);
  CHECK_THROWS_AS(run_ablation(base, "tcl", {"maybe"}, train_dir, train_dir,
                               "", nullptr),
                  InvalidInputError);
  CHECK_THROWS_AS(run_ablation(base, "d", {}, train_dir, train_dir, "",
                               nullptr),
                  InvalidInputError);
  fs::remove_all(train_dir);
  fs::remove_all(out);
}

TEST_CASE("a remote stub segmenter slots into the pipeline") {
  StubSegmentServer server;
  server.start();
  std::string ds = write_dataset("remote", {eval_scene(25)});
  ExperimentConfig cfg = tiny_cfg(1);
  cfg.segmenter.backend = "remote:" + server.url();

  PipelineResult res = run_pipeline(cfg, nullptr, ds, true, "", nullptr);
  // the stub fills the whole prompt box: perfect for rectangles, a known
  // overshoot for the ellipse, so scores land strictly inside (0, 1]
  CHECK(res.combined.jf > 0.3);
  CHECK(res.combined.jf <= 1.0);
  SyntheticVideo v = load_video(ds + "/video_000");
  CHECK(server.requests_handled() == int(v.objects.size()) * v.spec.t);
  server.stop();
  fs::remove_all(ds);
}
