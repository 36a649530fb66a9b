// Copyright (c) 2026 the stdnet authors.
// Licensed under the Apache License, Version 2.0 [see LICENSE for details]
#include "stdnet/segstub.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <stdexcept>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "stdnet/base64.hpp"
#include "stdnet/errors.hpp"
#include "stdnet/geometry.hpp"
#include "stdnet/image.hpp"
#include "stdnet/rle.hpp"

namespace stdnet {

struct StubSegmentServer::Impl {
  httplib::Server server;
  std::thread thread;
  int port = 0;
  std::atomic<int> fail_count{0};
  std::atomic<int> fail_status{500};
  std::atomic<int> handled{0};
};

namespace {

int clamp_px(double v, int hi) {
  long long r = std::llround(v);
  return int(std::clamp(r, 0LL, (long long)hi));
}

std::string handle_segment(const std::string& body) {
  nlohmann::json j = nlohmann::json::parse(body);
  Image img = decode_png(base64_decode(j.at("image").get<std::string>()));
  const auto& box = j.at("box");
  if (!box.is_array() || box.size() != 4) {
    throw std::runtime_error("box must be [x0,y0,x1,y1]");
  }
  PixelBox pb;
  pb.x0 = clamp_px(box[0].get<double>(), img.w);
  pb.y0 = clamp_px(box[1].get<double>(), img.h);
  pb.x1 = std::max(clamp_px(box[2].get<double>(), img.w), pb.x0);
  pb.y1 = std::max(clamp_px(box[3].get<double>(), img.h), pb.y0);
  Mask m = rasterize_box(pb, img.h, img.w);
  nlohmann::json out = {
      {"mask", {{"size", {img.h, img.w}}, {"counts", rle_encode(m)}}},
      {"score", 0.9}};
  return out.dump();
}

}  // namespace

StubSegmentServer::StubSegmentServer() : impl_(new Impl) {
  impl_->server.Get("/ping",
                    [](const httplib::Request&, httplib::Response& res) {
                      res.set_content("ok", "text/plain");
                    });
  Impl* impl = impl_.get();
  impl_->server.Post(
      "/segment", [impl](const httplib::Request& req, httplib::Response& res) {
        impl->handled.fetch_add(1);
        int left = impl->fail_count.load();
        while (left > 0 &&
               !impl->fail_count.compare_exchange_weak(left, left - 1)) {
        }
        if (left > 0) {
          res.status = impl->fail_status.load();
          return;
        }
        try {
          res.set_content(handle_segment(req.body), "application/json");
        } catch (const std::exception& e) {
          res.status = 400;
          res.set_content(std::string("bad request: ") + e.what(),
                          "text/plain");
        }
      });
}

StubSegmentServer::~StubSegmentServer() { stop(); }

int StubSegmentServer::start(int port) {
  if (impl_->thread.joinable()) {
    throw std::logic_error("stub server already running");
  }
  if (port == 0) {
    impl_->port = impl_->server.bind_to_any_port("127.0.0.1");
    if (impl_->port <= 0) throw TransportError("stub: cannot bind a port");
  } else {
    if (!impl_->server.bind_to_port("127.0.0.1", port)) {
      throw TransportError("stub: cannot bind port " + std::to_string(port));
    }
    impl_->port = port;
  }
  Impl* impl = impl_.get();
  impl_->thread = std::thread([impl] { impl->server.listen_after_bind(); });
  for (int i = 0; i < 5000 && !impl_->server.is_running(); ++i) {
    std::this_thread::sleep_for(std::chrono::milliseconds(1));
  }
  if (!impl_->server.is_running()) {
    throw TransportError("stub: server failed to start");
  }
  return impl_->port;
}

void StubSegmentServer::stop() {
  if (!impl_->thread.joinable()) return;
  impl_->server.stop();
  impl_->thread.join();
}

int StubSegmentServer::port() const { return impl_->port; }

std::string StubSegmentServer::url() const {
  return "http://127.0.0.1:" + std::to_string(impl_->port);
}

void StubSegmentServer::fail_next(int status, int count) {
  impl_->fail_status.store(status);
  impl_->fail_count.store(count);
}

int StubSegmentServer::requests_handled() const {
  return impl_->handled.load();
}

}  // namespace stdnet
