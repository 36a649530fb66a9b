// Copyright (c) 2026 the stdnet authors.
// Licensed under the Apache License, Version 2.0 [see LICENSE for details]
//
// Operator entry point. Exit codes: 0 success, 2 usage, 3 bad config,
// 4 runtime failure. Settings resolve as flag > environment (STDNET_*) >
// config file > built-in default.
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "stdnet/config.hpp"
#include "stdnet/errors.hpp"
#include "stdnet/metrics.hpp"
#include "stdnet/model.hpp"
#include "stdnet/pipeline.hpp"
#include "stdnet/synthetic_video.hpp"
#include "stdnet/train.hpp"

namespace fs = std::filesystem;
using namespace stdnet;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot read " + path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return text;
}

void ensure_dir(const std::string& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw FormatError("cannot create " + p + ": " + ec.message());
}

struct CommonFlags {
  std::string config_path;
  uint64_t seed = 0;
  int jobs = 0;
  std::string segmenter;
  double jitter = 0;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* jobs_opt = nullptr;
  CLI::Option* seg_opt = nullptr;
  CLI::Option* jitter_opt = nullptr;

  void attach(CLI::App* sub, bool with_segmenter) {
    sub->add_option("--config", config_path, "config JSON file");
    seed_opt = sub->add_option("--seed", seed, "experiment seed");
    jobs_opt = sub->add_option("--jobs", jobs, "parallel worker bound");
    if (with_segmenter) {
      seg_opt = sub->add_option("--segmenter", segmenter,
                                "oracle or remote:URL");
      jitter_opt =
          sub->add_option("--jitter", jitter, "box prompt noise scale");
    }
  }

  // flag > env > file > default
  ExperimentConfig resolve(
      const std::optional<ExperimentConfig>& base = std::nullopt) const {
    ExperimentConfig cfg;
    if (base) {
      cfg = *base;
    } else if (!config_path.empty()) {
      cfg = load_config(config_path);
    }
    apply_env_overrides(cfg);
    if (seed_opt && seed_opt->count()) cfg.seed = seed;
    if (jobs_opt && jobs_opt->count()) cfg.jobs = jobs;
    if (seg_opt && seg_opt->count()) cfg.segmenter.backend = segmenter;
    if (jitter_opt && jitter_opt->count()) cfg.segmenter.jitter = jitter;
    cfg.validate();
    return cfg;
  }
};

int run_generate(const std::string& spec_path, const std::string& out,
                 CLI::Option* seed_opt, uint64_t seed, CLI::Option* count_opt,
                 int count, CLI::Option* objects_opt, int objects,
                 CLI::Option* frames_opt, int frames, bool occlusion) {
  DatasetSpec ds;
  if (!spec_path.empty()) {
    ds = dataset_spec_from_json_text(read_file(spec_path));
  }
  if (seed_opt->count()) ds.seed = seed;
  if (count_opt->count()) ds.count = count;
  if (objects_opt->count()) ds.objects = objects;
  if (frames_opt->count()) ds.t = frames;
  if (occlusion) ds.occlusion = true;
  generate_dataset(ds, out);
  std::cout << "wrote " << ds.count << " videos under " << out << "\n";
  return 0;
}

int run_train(const CommonFlags& flags, const std::string& data,
              const std::string& out, const std::string& resume_path) {
  std::optional<Checkpoint> resume;
  std::optional<ExperimentConfig> base;
  if (!resume_path.empty()) {
    resume = load_checkpoint(resume_path);
    base = resume->config;  // keeps the topology the params were built for
  }
  ExperimentConfig cfg = flags.resolve(base);

  std::vector<VideoGt> videos = load_train_dataset(data);
  STDNet model(cfg);
  model.init_params();
  Trainer trainer(model);
  if (resume) {
    restore_params(model, *resume);
    trainer.resume_from(*resume);
  }

  ensure_dir(out);
  std::string log_path = (fs::path(out) / "train_log.jsonl").string();
  std::ofstream log(log_path,
                    resume ? std::ios::app : std::ios::trunc);
  if (!log) throw FormatError("cannot write " + log_path);
  trainer.run(videos, &log);

  std::string ck_path = (fs::path(out) / "checkpoint.bin").string();
  save_checkpoint(ck_path, trainer.make_checkpoint());
  std::cout << "checkpoint " << ck_path << " at step "
            << trainer.step_count() << "\n";
  return 0;
}

int run_pipeline_cmd(const CommonFlags& flags, const std::string& ck_path,
                     const std::string& data, const std::string& out,
                     bool prompts_from_gt) {
  ExperimentConfig cfg = flags.resolve();
  std::unique_ptr<STDNet> model;
  if (!ck_path.empty()) {
    Checkpoint ck = load_checkpoint(ck_path);
    model = std::make_unique<STDNet>(ck.config);
    model->init_params();
    restore_params(*model, ck);
  }
  PipelineResult res = run_pipeline(cfg, model.get(), data, prompts_from_gt,
                                    out, &std::cerr);
  std::cout << report_to_json(res.combined);
  return 0;
}

int run_ablate(const CommonFlags& flags, const std::string& axis,
               std::vector<std::string> values, const std::string& train_dir,
               const std::string& eval_dir, const std::string& out) {
  ExperimentConfig cfg = flags.resolve();
  if (values.empty()) {
    if (axis == "d") values = {"0", "1", "2", "3", "4"};
    if (axis == "k_inter") values = {"0", "1", "2", "3", "4", "5", "6"};
    if (axis == "tcl") values = {"off", "on"};
  }
  AblationResult res =
      run_ablation(cfg, axis, values, train_dir, eval_dir, out, &std::cerr);
  std::cout << ablation_to_csv(res);
  return 0;
}

// Reads back a pipeline output tree (masks under <video>/masks/track*/)
// and scores it against the dataset's ground truth.
int run_eval(const std::string& pred_dir, const std::string& data,
             const std::string& out) {
  std::vector<EvalReport> reports;
  for (const std::string& vdir : list_videos(data)) {
    SyntheticVideo video = load_video(vdir);
    std::string name = fs::path(vdir).filename().string();

    std::vector<MaskSequence> pred;
    fs::path mask_root = fs::path(pred_dir) / name / "masks";
    if (fs::is_directory(mask_root)) {
      std::vector<fs::path> tracks;
      for (const auto& e : fs::directory_iterator(mask_root)) {
        if (e.is_directory()) tracks.push_back(e.path());
      }
      std::sort(tracks.begin(), tracks.end());
      for (const fs::path& tdir : tracks) {
        std::string tname = tdir.filename().string();
        if (tname.rfind("track", 0) != 0) {
          throw FormatError("unexpected directory " + tdir.string());
        }
        MaskSequence seq;
        seq.id = std::stoi(tname.substr(5));
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(tdir)) {
          if (e.path().extension() == ".png") files.push_back(e.path());
        }
        std::sort(files.begin(), files.end());
        for (const fs::path& f : files) {
          seq.by_frame[std::stoi(f.stem().string())] =
              read_png_mask(f.string());
        }
        pred.push_back(std::move(seq));
      }
    }
    reports.push_back(evaluate(pred, gt_mask_sequences(video),
                               default_boundary_tol(video.spec.h,
                                                    video.spec.w)));
  }
  EvalReport combined = combine_reports(reports);
  std::cout << report_to_json(combined);
  if (!out.empty()) {
    ensure_dir(out);
    std::ofstream((fs::path(out) / "report.json").string())
        << report_to_json(combined);
    std::ofstream((fs::path(out) / "report.csv").string())
        << report_to_csv(combined);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk-scale video tracking and prompted segmentation"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("generate", "write a synthetic dataset");
  std::string gen_spec, gen_out;
  uint64_t gen_seed = 1;
  int gen_count = 1, gen_objects = 2, gen_frames = 12;
  bool gen_occlusion = false;
  gen->add_option("--spec", gen_spec, "dataset spec JSON file");
  gen->add_option("--out", gen_out, "dataset directory")->required();
  auto* gen_seed_opt = gen->add_option("--seed", gen_seed, "dataset seed");
  auto* gen_count_opt = gen->add_option("--count", gen_count, "video count");
  auto* gen_objects_opt =
      gen->add_option("--objects", gen_objects, "objects per video");
  auto* gen_frames_opt =
      gen->add_option("--frames", gen_frames, "frames per video");
  gen->add_flag("--occlusion", gen_occlusion, "allow overlapping objects");

  auto* tr = app.add_subcommand("train", "train the tracking network");
  CommonFlags tr_flags;
  std::string tr_data, tr_out, tr_resume;
  tr_flags.attach(tr, false);
  tr->add_option("--data", tr_data, "training dataset directory")->required();
  tr->add_option("--out", tr_out, "checkpoint/log directory")->required();
  tr->add_option("--resume", tr_resume,
                 "checkpoint to continue from (its config is the base; env "
                 "and flags still apply)");

  auto* pl = app.add_subcommand("pipeline",
                                "track, prompt, segment and evaluate");
  CommonFlags pl_flags;
  std::string pl_ck, pl_data, pl_out;
  bool pl_from_gt = false;
  pl_flags.attach(pl, true);
  pl->add_option("--checkpoint", pl_ck, "trained model checkpoint");
  pl->add_option("--data", pl_data, "dataset directory")->required();
  pl->add_option("--out", pl_out, "output directory")->required();
  pl->add_flag("--prompts-from-gt", pl_from_gt,
               "use ground-truth boxes instead of tracked ones");

  auto* ab = app.add_subcommand("ablate", "sweep one axis, emit table+plot");
  CommonFlags ab_flags;
  std::string ab_axis, ab_train, ab_eval, ab_out;
  std::vector<std::string> ab_values;
  ab_flags.attach(ab, true);
  ab->add_option("--axis", ab_axis, "d, k_inter or tcl")
      ->required()
      ->check(CLI::IsMember({"d", "k_inter", "tcl"}));
  ab->add_option("--values", ab_values, "values to sweep")->delimiter(',');
  ab->add_option("--train-data", ab_train, "training dataset")->required();
  ab->add_option("--eval-data", ab_eval, "evaluation dataset")->required();
  ab->add_option("--out", ab_out, "output directory")->required();

  auto* ev = app.add_subcommand("eval", "score stored masks against a "
                                        "dataset");
  std::string ev_pred, ev_data, ev_out;
  ev->add_option("--pred", ev_pred, "pipeline output directory")->required();
  ev->add_option("--data", ev_data, "dataset directory")->required();
  ev->add_option("--out", ev_out, "where to also write report files");

  auto* cf = app.add_subcommand("config", "inspect configuration");
  cf->require_subcommand(1);
  auto* cf_show = cf->add_subcommand("show", "print the effective config");
  CommonFlags cf_flags;
  cf_flags.attach(cf_show, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (gen->parsed()) {
      return run_generate(gen_spec, gen_out, gen_seed_opt, gen_seed,
                          gen_count_opt, gen_count, gen_objects_opt,
                          gen_objects, gen_frames_opt, gen_frames,
                          gen_occlusion);
    }
    if (tr->parsed()) return run_train(tr_flags, tr_data, tr_out, tr_resume);
    if (pl->parsed()) {
      if (pl_ck.empty() && !pl_from_gt) {
        std::cerr << "pipeline: --checkpoint is required unless "
                     "--prompts-from-gt\n";
        return 2;
      }
      return run_pipeline_cmd(pl_flags, pl_ck, pl_data, pl_out, pl_from_gt);
    }
    if (ab->parsed()) {
      return run_ablate(ab_flags, ab_axis, ab_values, ab_train, ab_eval,
                        ab_out);
    }
    if (ev->parsed()) return run_eval(ev_pred, ev_data, ev_out);
    if (cf_show->parsed()) {
      std::cout << config_to_json_text(cf_flags.resolve());
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
