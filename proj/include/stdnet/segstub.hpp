// Copyright (c) 2026 the stdnet authors.
// Licensed under the Apache License, Version 2.0 [see LICENSE for details]
#pragma once

#include <memory>
#include <string>

namespace stdnet {

// Reference server for the segment wire protocol: POST /segment answers
// with the prompt box rasterized as a filled mask, which makes every
// response analytically checkable. GET /ping answers "ok". An injected
// failure budget lets tests drive the retry paths.
class StubSegmentServer {
 public:
  StubSegmentServer();
  ~StubSegmentServer();
  StubSegmentServer(const StubSegmentServer&) = delete;
  StubSegmentServer& operator=(const StubSegmentServer&) = delete;

  // Binds 127.0.0.1 (port 0 picks a free one), serves on a background
  // thread, returns the bound port.
  int start(int port = 0);
  void stop();
  int port() const;
  std::string url() const;  // http://127.0.0.1:<port>

  // The next `count` /segment calls answer `status` with an empty body.
  void fail_next(int status, int count);
  int requests_handled() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace stdnet
