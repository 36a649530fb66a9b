// Copyright (c) 2026 the stdnet authors.
// Licensed under the Apache License, Version 2.0 [see LICENSE for details]
//
// Standalone stub server speaking the segment wire protocol; answers every
// prompt with the box itself rasterized as a mask. Useful for exercising
// the remote backend without a real model behind it.
#include <chrono>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "stdnet/segstub.hpp"

int main(int argc, char** argv) {
  CLI::App app{"segment-protocol stub server"};
  int port = 8089;
  int fail_status = 500, fail_count = 0;
  app.add_option("--port", port, "listen port (0 picks a free one)");
  app.add_option("--fail-status", fail_status,
                 "status for injected failures");
  app.add_option("--fail-count", fail_count,
                 "answer this many requests with --fail-status first");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    stdnet::StubSegmentServer server;
    if (fail_count > 0) server.fail_next(fail_status, fail_count);
    server.start(port);
    std::cout << "listening on " << server.url() << std::endl;
    for (;;) std::this_thread::sleep_for(std::chrono::seconds(1));
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
}
