#pragma once

// HTTP boundary over the corpus store. JSON bodies, bearer tokens, one error
// envelope for every failure:
//
//   {"error": {"code": "<stable code>", "message": "...", "details": ...}}

#include <cstddef>
#include <filesystem>
#include <memory>
#include <string>

#include "audio.hpp"
#include "store.hpp"

namespace vocorpus::api {

struct ServerConfig {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks an ephemeral port
  std::size_t max_upload_bytes = std::size_t{32} << 20;
  std::filesystem::path static_dir;  // recorder UI assets; optional
  audio::RecordingConstraints default_constraints;
};

class ApiServer {
 public:
  ApiServer(store::Store& store, ServerConfig config);
  ~ApiServer();
  ApiServer(const ApiServer&) = delete;
  ApiServer& operator=(const ApiServer&) = delete;

  /// Binds the listening socket. False when the address is unavailable.
  bool bind();
  /// Serves until stop(); bind() must have succeeded. Returns after
  /// in-flight requests have finished.
  void run();
  /// Safe to call from any thread, before or during run().
  void stop();
  int port() const noexcept;
  bool running() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace vocorpus::api
