#include "vocorpus/vocorpus.h"

#include <cstdlib>
#include <cstring>
#include <fstream>
#include <memory>
#include <string>

#include "api_server.hpp"
#include "json_codec.hpp"
#include "store.hpp"

using namespace vocorpus;

struct vc_store {
  std::unique_ptr<store::Store> impl;
};

struct vc_server {
  std::unique_ptr<store::Store> store;
  std::unique_ptr<api::ApiServer> server;
};

namespace {

thread_local std::string g_last_error;

vc_status status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument:
    case ErrorCode::InvalidName:
    case ErrorCode::WeakSecret:
    case ErrorCode::NameTaken: return VC_ERR_INVALID_ARGUMENT;
    case ErrorCode::MalformedContainer: return VC_ERR_MALFORMED_CONTAINER;
    case ErrorCode::UnsupportedFormat: return VC_ERR_UNSUPPORTED_FORMAT;
    case ErrorCode::EmptyClip: return VC_ERR_EMPTY_CLIP;
    case ErrorCode::ClipTooShort: return VC_ERR_CLIP_TOO_SHORT;
    case ErrorCode::ScriptInvalid: return VC_ERR_SCRIPT_INVALID;
    case ErrorCode::UnknownCorpus: return VC_ERR_UNKNOWN_CORPUS;
    case ErrorCode::AuthFailure:
    case ErrorCode::Unauthenticated:
    case ErrorCode::Unauthorized: return VC_ERR_UNAUTHORIZED;
    case ErrorCode::Io: return VC_ERR_IO;
    default: return VC_ERR_INTERNAL;
  }
}

vc_status fail(vc_status status, const std::string& message) {
  g_last_error = message;
  return status;
}

template <typename F>
vc_status guarded(F&& body) noexcept {
  g_last_error.clear();
  try {
    return body();
  } catch (const Error& e) {
    return fail(status_for(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(VC_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(VC_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(VC_ERR_INTERNAL, "unknown error");
  }
}

char* dup_string(const std::string& s) {
  auto* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

audio::RecordingConstraints to_constraints(const vc_constraints* c) {
  audio::RecordingConstraints out;
  if (c == nullptr) return out;
  out.peak_min = c->peak_min;
  out.peak_max = c->peak_max;
  out.snr_min_db = c->snr_min_db;
  out.head_window_ms = c->head_window_ms;
  out.allowed_sample_rates_hz.clear();
  if (c->allowed_sample_rates_hz != nullptr) {
    out.allowed_sample_rates_hz.insert(c->allowed_sample_rates_hz,
                                       c->allowed_sample_rates_hz + c->allowed_sample_rate_count);
  }
  out.check();
  return out;
}

std::vector<std::uint32_t> default_rates() {
  const audio::RecordingConstraints defaults;
  return {defaults.allowed_sample_rates_hz.begin(), defaults.allowed_sample_rates_hz.end()};
}

}  // namespace

extern "C" {

const char* vc_version(void) { return "0.1.0"; }

const char* vc_status_string(vc_status status) {
  switch (status) {
    case VC_OK: return "ok";
    case VC_ERR_INVALID_ARGUMENT: return "invalid argument";
    case VC_ERR_MALFORMED_CONTAINER: return "malformed WAV container";
    case VC_ERR_UNSUPPORTED_FORMAT: return "unsupported audio format";
    case VC_ERR_EMPTY_CLIP: return "empty clip";
    case VC_ERR_CLIP_TOO_SHORT: return "clip too short";
    case VC_ERR_SCRIPT_INVALID: return "script invalid";
    case VC_ERR_UNKNOWN_CORPUS: return "unknown corpus";
    case VC_ERR_UNAUTHORIZED: return "unauthorized";
    case VC_ERR_IO: return "I/O error";
    case VC_ERR_BIND_FAILED: return "bind failed";
    case VC_ERR_REJECTED: return "recording rejected";
    case VC_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* vc_last_error(void) { return g_last_error.c_str(); }

void vc_string_free(char* str) { std::free(str); }

void vc_buffer_free(uint8_t* data) { std::free(data); }

void vc_constraints_default(vc_constraints* out) {
  if (out == nullptr) return;
  static const std::vector<std::uint32_t> rates = default_rates();
  const audio::RecordingConstraints d;
  out->peak_min = d.peak_min;
  out->peak_max = d.peak_max;
  out->snr_min_db = d.snr_min_db;
  out->head_window_ms = d.head_window_ms;
  out->allowed_sample_rates_hz = rates.data();
  out->allowed_sample_rate_count = rates.size();
}

vc_status vc_validate_wav(const uint8_t* data, size_t size, const vc_constraints* constraints,
                          char** report_json) {
  return guarded([&] {
    if ((data == nullptr && size > 0) || report_json == nullptr) {
      return fail(VC_ERR_INVALID_ARGUMENT, "null argument");
    }
    const auto c = to_constraints(constraints);
    const auto report = audio::validate_payload(std::span(data, size), c);
    *report_json = dup_string(json::to_json(report).dump());
    return report.accepted ? VC_OK : VC_ERR_REJECTED;
  });
}

vc_status vc_check_script(const char* text, size_t size, char** errors_json, size_t* error_count,
                          size_t* item_count) {
  return guarded([&] {
    if (text == nullptr && size > 0) return fail(VC_ERR_INVALID_ARGUMENT, "null text");
    const auto result = script::parse_script_csv(std::string_view(text, size));
    if (errors_json != nullptr) *errors_json = dup_string(json::to_json(result.errors).dump());
    if (error_count != nullptr) *error_count = result.errors.size();
    if (item_count != nullptr) *item_count = result.items.size();
    return result.ok() ? VC_OK : VC_ERR_SCRIPT_INVALID;
  });
}

vc_status vc_store_open(const char* data_dir, vc_store** out) {
  return guarded([&] {
    if (data_dir == nullptr || out == nullptr) return fail(VC_ERR_INVALID_ARGUMENT, "null argument");
    store::StoreOptions options;
    options.data_dir = data_dir;
    auto handle = std::make_unique<vc_store>();
    handle->impl = std::make_unique<store::Store>(std::move(options));
    *out = handle.release();
    return VC_OK;
  });
}

void vc_store_close(vc_store* store) { delete store; }

vc_status vc_store_export_buffer(vc_store* store, const char* corpus_id, uint8_t** data,
                                 size_t* size) {
  return guarded([&] {
    if (store == nullptr || corpus_id == nullptr || data == nullptr || size == nullptr) {
      return fail(VC_ERR_INVALID_ARGUMENT, "null argument");
    }
    const auto owner = store->impl->corpus_owner(corpus_id);
    const auto bytes = store->impl->export_corpus(owner, corpus_id);
    auto* buf = static_cast<uint8_t*>(std::malloc(bytes.empty() ? 1 : bytes.size()));
    if (buf == nullptr) throw std::bad_alloc();
    std::memcpy(buf, bytes.data(), bytes.size());
    *data = buf;
    *size = bytes.size();
    return VC_OK;
  });
}

vc_status vc_store_export(vc_store* store, const char* corpus_id, const char* out_path) {
  return guarded([&] {
    if (store == nullptr || corpus_id == nullptr || out_path == nullptr) {
      return fail(VC_ERR_INVALID_ARGUMENT, "null argument");
    }
    const auto owner = store->impl->corpus_owner(corpus_id);
    auto snapshot = store->impl->snapshot_export(owner, corpus_id);
    const std::string tmp = std::string(out_path) + ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) return fail(VC_ERR_IO, "cannot open output file");
      store->impl->write_export(snapshot, [&out](std::span<const std::uint8_t> chunk) {
        out.write(reinterpret_cast<const char*>(chunk.data()),
                  static_cast<std::streamsize>(chunk.size()));
      });
      if (!out.flush()) return fail(VC_ERR_IO, "write to output file failed");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, out_path, ec);
    if (ec) return fail(VC_ERR_IO, "cannot move archive into place: " + ec.message());
    return VC_OK;
  });
}

vc_status vc_store_verify(vc_store* store, char** problems_json, size_t* count) {
  return guarded([&] {
    if (store == nullptr) return fail(VC_ERR_INVALID_ARGUMENT, "null store");
    const auto problems = store->impl->verify_integrity();
    if (problems_json != nullptr) *problems_json = dup_string(nlohmann::json(problems).dump());
    if (count != nullptr) *count = problems.size();
    return VC_OK;
  });
}

vc_status vc_server_create(const vc_server_config* config, vc_server** out) {
  return guarded([&] {
    if (config == nullptr || out == nullptr || config->data_dir == nullptr) {
      return fail(VC_ERR_INVALID_ARGUMENT, "null argument");
    }
    store::StoreOptions options;
    options.data_dir = config->data_dir;
    if (config->session_ttl_hours > 0) {
      options.session_ttl = std::chrono::hours(config->session_ttl_hours);
    }
    api::ServerConfig server_config;
    if (config->host != nullptr) server_config.host = config->host;
    server_config.port = config->port;
    if (config->max_upload_mb > 0) {
      server_config.max_upload_bytes = std::size_t{config->max_upload_mb} << 20;
    }
    if (config->static_dir != nullptr) server_config.static_dir = config->static_dir;
    if (config->default_constraints != nullptr) {
      server_config.default_constraints = to_constraints(config->default_constraints);
    }
    auto handle = std::make_unique<vc_server>();
    handle->store = std::make_unique<store::Store>(std::move(options));
    handle->server = std::make_unique<api::ApiServer>(*handle->store, std::move(server_config));
    *out = handle.release();
    return VC_OK;
  });
}

vc_status vc_server_bind(vc_server* server) {
  return guarded([&] {
    if (server == nullptr) return fail(VC_ERR_INVALID_ARGUMENT, "null server");
    if (!server->server->bind()) return fail(VC_ERR_BIND_FAILED, "cannot bind listening socket");
    return VC_OK;
  });
}

int vc_server_port(const vc_server* server) {
  return server == nullptr ? -1 : server->server->port();
}

vc_status vc_server_run(vc_server* server) {
  return guarded([&] {
    if (server == nullptr) return fail(VC_ERR_INVALID_ARGUMENT, "null server");
    if (server->server->port() <= 0) return fail(VC_ERR_BIND_FAILED, "server is not bound");
    server->server->run();
    return VC_OK;
  });
}

void vc_server_stop(vc_server* server) {
  if (server != nullptr) server->server->stop();
}

void vc_server_destroy(vc_server* server) { delete server; }

}  // extern "C"
