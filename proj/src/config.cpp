// Copyright (c) 2026 the stdnet authors.
// Licensed under the Apache License, Version 2.0 [see LICENSE for details]

#include "stdnet/config.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "stdnet/errors.hpp"

namespace stdnet {

namespace {

using nlohmann::json;

json to_json(const ExperimentConfig& c) {
  return json{
      {"seed", c.seed},
      {"jobs", c.jobs},
      {"backbone",
       {{"channels", c.backbone.channels}, {"strides", c.backbone.strides}}},
      {"attention",
       {{"heads", c.attention.heads},
        {"k_intra", c.attention.k_intra},
        {"k_inter", c.attention.k_inter},
        {"d", c.attention.d},
        {"n_layers", c.attention.n_layers},
        {"ffn_hidden", c.attention.ffn_hidden},
        {"fusion_hidden", c.attention.fusion_hidden}}},
      {"decoder",
       {{"queries", c.decoder.queries},
        {"n_layers", c.decoder.n_layers},
        {"k_points", c.decoder.k_points},
        {"reid_dim", c.decoder.reid_dim}}},
      {"loss",
       {{"tau", c.loss.tau},
        {"lambda_cls", c.loss.lambda_cls},
        {"lambda_l1", c.loss.lambda_l1},
        {"lambda_giou", c.loss.lambda_giou},
        {"focal_alpha", c.loss.focal_alpha},
        {"focal_gamma", c.loss.focal_gamma}}},
      {"tracker",
       {{"score_thresh", c.tracker.score_thresh},
        {"beta", c.tracker.beta},
        {"gate", c.tracker.gate},
        {"min_hits", c.tracker.min_hits},
        {"max_age", c.tracker.max_age},
        {"ema_momentum", c.tracker.ema_momentum}}},
      {"train",
       {{"steps", c.train.steps},
        {"tcl", c.train.tcl},
        {"lr", c.train.lr},
        {"adam_beta1", c.train.adam_beta1},
        {"adam_beta2", c.train.adam_beta2},
        {"adam_eps", c.train.adam_eps},
        {"grad_clip", c.train.grad_clip},
        {"log_every", c.train.log_every}}},
      {"segmenter",
       {{"backend", c.segmenter.backend},
        {"jitter", c.segmenter.jitter},
        {"retries", c.segmenter.retries},
        {"timeout_ms", c.segmenter.timeout_ms},
        {"resize_shorter", c.segmenter.resize_shorter}}},
  };
}

void reject_unknown(const json& j, const std::string& section,
                    std::initializer_list<const char*> known) {
  if (!j.is_object())
    throw ConfigError("config section '" + section + "' must be an object");
  for (const auto& [key, unused] : j.items()) {
    (void)unused;
    bool ok = false;
    for (const char* k : known)
      if (key == k) ok = true;
    if (!ok)
      throw ConfigError("unknown config key '" +
                        (section.empty() ? key : section + "." + key) + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& section) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("config key '" + section + "." + key +
                      "': " + e.what());
  }
}

ExperimentConfig from_json(const json& j) {
  ExperimentConfig c;
  reject_unknown(j, "", {"seed", "jobs", "backbone", "attention", "decoder",
                         "loss", "tracker", "train", "segmenter"});
  read(j, "seed", c.seed, "");
  read(j, "jobs", c.jobs, "");
  if (j.contains("backbone")) {
    const json& s = j.at("backbone");
    reject_unknown(s, "backbone", {"channels", "strides"});
    read(s, "channels", c.backbone.channels, "backbone");
    read(s, "strides", c.backbone.strides, "backbone");
  }
  if (j.contains("attention")) {
    const json& s = j.at("attention");
    reject_unknown(s, "attention",
                   {"heads", "k_intra", "k_inter", "d", "n_layers",
                    "ffn_hidden", "fusion_hidden"});
    read(s, "heads", c.attention.heads, "attention");
    read(s, "k_intra", c.attention.k_intra, "attention");
    read(s, "k_inter", c.attention.k_inter, "attention");
    read(s, "d", c.attention.d, "attention");
    read(s, "n_layers", c.attention.n_layers, "attention");
    read(s, "ffn_hidden", c.attention.ffn_hidden, "attention");
    read(s, "fusion_hidden", c.attention.fusion_hidden, "attention");
  }
  if (j.contains("decoder")) {
    const json& s = j.at("decoder");
    reject_unknown(s, "decoder",
                   {"queries", "n_layers", "k_points", "reid_dim"});
    read(s, "queries", c.decoder.queries, "decoder");
    read(s, "n_layers", c.decoder.n_layers, "decoder");
    read(s, "k_points", c.decoder.k_points, "decoder");
    read(s, "reid_dim", c.decoder.reid_dim, "decoder");
  }
  if (j.contains("loss")) {
    const json& s = j.at("loss");
    reject_unknown(s, "loss",
                   {"tau", "lambda_cls", "lambda_l1", "lambda_giou",
                    "focal_alpha", "focal_gamma"});
    read(s, "tau", c.loss.tau, "loss");
    read(s, "lambda_cls", c.loss.lambda_cls, "loss");
    read(s, "lambda_l1", c.loss.lambda_l1, "loss");
    read(s, "lambda_giou", c.loss.lambda_giou, "loss");
    read(s, "focal_alpha", c.loss.focal_alpha, "loss");
    read(s, "focal_gamma", c.loss.focal_gamma, "loss");
  }
  if (j.contains("tracker")) {
    const json& s = j.at("tracker");
    reject_unknown(s, "tracker", {"score_thresh", "beta", "gate", "min_hits",
                                  "max_age", "ema_momentum"});
    read(s, "score_thresh", c.tracker.score_thresh, "tracker");
    read(s, "beta", c.tracker.beta, "tracker");
    read(s, "gate", c.tracker.gate, "tracker");
    read(s, "min_hits", c.tracker.min_hits, "tracker");
    read(s, "max_age", c.tracker.max_age, "tracker");
    read(s, "ema_momentum", c.tracker.ema_momentum, "tracker");
  }
  if (j.contains("train")) {
    const json& s = j.at("train");
    reject_unknown(s, "train", {"steps", "tcl", "lr", "adam_beta1",
                                "adam_beta2", "adam_eps", "grad_clip",
                                "log_every"});
    read(s, "steps", c.train.steps, "train");
    read(s, "tcl", c.train.tcl, "train");
    read(s, "lr", c.train.lr, "train");
    read(s, "adam_beta1", c.train.adam_beta1, "train");
    read(s, "adam_beta2", c.train.adam_beta2, "train");
    read(s, "adam_eps", c.train.adam_eps, "train");
    read(s, "grad_clip", c.train.grad_clip, "train");
    read(s, "log_every", c.train.log_every, "train");
  }
  if (j.contains("segmenter")) {
    const json& s = j.at("segmenter");
    reject_unknown(s, "segmenter",
                   {"backend", "jitter", "retries", "timeout_ms",
                    "resize_shorter"});
    read(s, "backend", c.segmenter.backend, "segmenter");
    read(s, "jitter", c.segmenter.jitter, "segmenter");
    read(s, "retries", c.segmenter.retries, "segmenter");
    read(s, "timeout_ms", c.segmenter.timeout_ms, "segmenter");
    read(s, "resize_shorter", c.segmenter.resize_shorter, "segmenter");
  }
  return c;
}

// Applies an environment override to one leaf of the JSON tree when the
// matching STDNET_* variable is set.
void apply_env_walk(json& node, const std::string& prefix) {
  for (auto& [key, value] : node.items()) {
    std::string name = prefix;
    name += '_';
    for (char ch : key) name += char(std::toupper(uint8_t(ch)));
    if (value.is_object()) {
      apply_env_walk(value, name);
      continue;
    }
    const char* env = std::getenv(name.c_str());
    if (!env) continue;
    std::string text(env);
    try {
      if (value.is_string()) {
        value = text;
      } else if (value.is_boolean()) {
        if (text == "true" || text == "1")
          value = true;
        else if (text == "false" || text == "0")
          value = false;
        else
          throw std::invalid_argument("not a boolean");
      } else if (value.is_array()) {
        std::vector<int> items;
        std::stringstream ss(text);
        std::string part;
        while (std::getline(ss, part, ','))
          items.push_back(std::stoi(part));
        value = items;
      } else if (value.is_number_unsigned()) {
        value = std::stoull(text);
      } else if (value.is_number_integer()) {
        value = std::stoll(text);
      } else {
        value = std::stod(text);
      }
    } catch (const std::exception&) {
      throw ConfigError("environment override " + name + "='" + text +
                        "' is not a valid value");
    }
  }
}

}  // namespace

void ExperimentConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (jobs < 1) fail("jobs must be >= 1");
  if (backbone.channels < 1) fail("backbone.channels must be >= 1");
  if (backbone.strides.empty()) fail("backbone.strides must be non-empty");
  int prev = 0;
  for (int s : backbone.strides) {
    if (s < 1 || (s & (s - 1)) != 0)
      fail("backbone.strides entries must be powers of two");
    if (prev && s != 2 * prev)
      fail("backbone.strides must double level to level");
    prev = s;
  }
  if (attention.heads < 1) fail("attention.heads must be >= 1");
  if (backbone.channels % attention.heads != 0)
    fail("backbone.channels must be divisible by attention.heads");
  if (attention.k_intra < 1) fail("attention.k_intra must be >= 1");
  if (attention.k_inter < 1) fail("attention.k_inter must be >= 1");
  if (attention.d < 0) fail("attention.d must be >= 0");
  if (attention.n_layers < 1) fail("attention.n_layers must be >= 1");
  if (attention.ffn_hidden < 1) fail("attention.ffn_hidden must be >= 1");
  if (attention.fusion_hidden < 1) fail("attention.fusion_hidden must be >= 1");
  if (decoder.queries < 1) fail("decoder.queries must be >= 1");
  if (decoder.n_layers < 1) fail("decoder.n_layers must be >= 1");
  if (decoder.k_points < 1) fail("decoder.k_points must be >= 1");
  if (decoder.reid_dim < 1) fail("decoder.reid_dim must be >= 1");
  if (!(loss.tau > 0)) fail("loss.tau must be > 0");
  if (loss.lambda_cls < 0 || loss.lambda_l1 < 0 || loss.lambda_giou < 0)
    fail("loss lambdas must be >= 0");
  if (loss.focal_gamma < 0) fail("loss.focal_gamma must be >= 0");
  if (loss.focal_alpha >= 0 && loss.focal_alpha > 1)
    fail("loss.focal_alpha must be in [0,1] or negative to disable");
  if (tracker.score_thresh < 0 || tracker.score_thresh > 1)
    fail("tracker.score_thresh must be in [0,1]");
  if (tracker.beta < 0 || tracker.beta > 1)
    fail("tracker.beta must be in [0,1]");
  if (tracker.gate <= 0) fail("tracker.gate must be > 0");
  if (tracker.min_hits < 1) fail("tracker.min_hits must be >= 1");
  if (tracker.max_age < 0) fail("tracker.max_age must be >= 0");
  if (tracker.ema_momentum < 0 || tracker.ema_momentum >= 1)
    fail("tracker.ema_momentum must be in [0,1)");
  if (train.steps < 0) fail("train.steps must be >= 0");
  if (!(train.lr > 0)) fail("train.lr must be > 0");
  if (train.grad_clip < 0) fail("train.grad_clip must be >= 0");
  if (train.log_every < 1) fail("train.log_every must be >= 1");
  if (segmenter.backend != "oracle" &&
      segmenter.backend.rfind("remote:", 0) != 0)
    fail("segmenter.backend must be 'oracle' or 'remote:URL'");
  if (segmenter.jitter < 0) fail("segmenter.jitter must be >= 0");
  if (segmenter.retries < 0) fail("segmenter.retries must be >= 0");
  if (segmenter.timeout_ms < 1) fail("segmenter.timeout_ms must be >= 1");
  if (segmenter.resize_shorter < 0)
    fail("segmenter.resize_shorter must be >= 0");
}

ExperimentConfig config_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig c = from_json(j);
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_json_text(ss.str());
}

std::string config_to_json_text(const ExperimentConfig& cfg) {
  return to_json(cfg).dump(2) + "\n";
}

void apply_env_overrides(ExperimentConfig& cfg) {
  json j = to_json(cfg);
  apply_env_walk(j, "STDNET");
  cfg = from_json(j);
  cfg.validate();
}

}  // namespace stdnet
