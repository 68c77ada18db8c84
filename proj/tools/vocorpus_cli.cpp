// vocorpus: operator tool. Runs the server, checks WAVs and scripts offline,
// and exports corpora straight from a data directory.
//
// Exit codes: 0 success, 1 operational error, 2 validation rejection.

#include <pthread.h>
#include <signal.h>

#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <iterator>
#include <json.hpp>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "vocorpus/vocorpus.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitRejected = 2;

struct ConstraintFlags {
  std::optional<uint32_t> peak_min;
  std::optional<uint32_t> peak_max;
  std::optional<double> snr_min_db;
  std::optional<uint32_t> head_window_ms;
  std::optional<std::vector<uint32_t>> sample_rates;

  void add_to(CLI::App& cmd) {
    cmd.add_option("--peak-min", peak_min, "Lowest accepted peak |sample|")
        ->envname("VOCORPUS_PEAK_MIN");
    cmd.add_option("--peak-max", peak_max, "Highest accepted peak |sample|")
        ->envname("VOCORPUS_PEAK_MAX");
    cmd.add_option("--snr-min-db", snr_min_db, "Minimum S/N in dB")
        ->envname("VOCORPUS_SNR_MIN_DB");
    cmd.add_option("--head-window-ms", head_window_ms, "Noise window at the start of a take")
        ->envname("VOCORPUS_HEAD_WINDOW_MS");
    cmd.add_option("--sample-rates", sample_rates,
                   "Accepted sample rates in Hz (0 accepts any rate)")
        ->envname("VOCORPUS_SAMPLE_RATES")
        ->delimiter(',');
  }

  // `rates` must outlive the returned struct.
  vc_constraints resolve(std::vector<uint32_t>& rates) const {
    vc_constraints c;
    vc_constraints_default(&c);
    if (peak_min) c.peak_min = *peak_min;
    if (peak_max) c.peak_max = *peak_max;
    if (snr_min_db) c.snr_min_db = *snr_min_db;
    if (head_window_ms) c.head_window_ms = *head_window_ms;
    if (sample_rates) {
      rates.clear();
      for (auto r : *sample_rates) {
        if (r != 0) rates.push_back(r);
      }
      c.allowed_sample_rates_hz = rates.data();
      c.allowed_sample_rate_count = rates.size();
    }
    return c;
  }
};

std::optional<std::string> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

int report_error(bool as_json, const std::string& what) {
  if (as_json) {
    std::cout << nlohmann::json{{"error", what}}.dump() << "\n";
  } else {
    std::cerr << "vocorpus: " << what << "\n";
  }
  return kExitError;
}

std::string describe(vc_status status) {
  std::string msg = vc_status_string(status);
  const std::string detail = vc_last_error();
  if (!detail.empty()) msg += ": " + detail;
  return msg;
}

int cmd_validate_wav(const std::string& path, const ConstraintFlags& flags, bool as_json) {
  auto bytes = read_file(path);
  if (!bytes) return report_error(as_json, "cannot read " + path);
  std::vector<uint32_t> rates;
  const auto constraints = flags.resolve(rates);
  char* report = nullptr;
  const auto status = vc_validate_wav(reinterpret_cast<const uint8_t*>(bytes->data()),
                                      bytes->size(), &constraints, &report);
  if (status != VC_OK && status != VC_ERR_REJECTED) {
    return report_error(as_json, describe(status));
  }
  auto parsed = nlohmann::json::parse(report);
  vc_string_free(report);
  std::cout << (as_json ? parsed.dump() : parsed.dump(2)) << "\n";
  return status == VC_OK ? kExitOk : kExitRejected;
}

int cmd_check_script(const std::string& path, bool as_json) {
  auto text = read_file(path);
  if (!text) return report_error(as_json, "cannot read " + path);
  char* errors = nullptr;
  size_t error_count = 0;
  size_t item_count = 0;
  const auto status =
      vc_check_script(text->data(), text->size(), &errors, &error_count, &item_count);
  if (status != VC_OK && status != VC_ERR_SCRIPT_INVALID) {
    return report_error(as_json, describe(status));
  }
  auto parsed = nlohmann::json::parse(errors);
  vc_string_free(errors);
  if (as_json) {
    std::cout << nlohmann::json{{"item_count", item_count}, {"errors", parsed}}.dump() << "\n";
  } else {
    for (const auto& e : parsed) {
      std::cout << "line " << e.at("line").get<std::size_t>() << ": "
                << e.at("reason").get<std::string>() << ": "
                << e.at("message").get<std::string>() << "\n";
    }
    if (error_count == 0) std::cout << item_count << " item(s), no errors\n";
  }
  return error_count == 0 ? kExitOk : kExitRejected;
}

int cmd_export(const std::string& data_dir, const std::string& corpus_id,
               const std::string& out_path, bool as_json) {
  vc_store* store = nullptr;
  auto status = vc_store_open(data_dir.c_str(), &store);
  if (status != VC_OK) return report_error(as_json, describe(status));
  status = vc_store_export(store, corpus_id.c_str(), out_path.c_str());
  const std::string detail = describe(status);
  vc_store_close(store);
  if (status != VC_OK) return report_error(as_json, detail);
  if (as_json) {
    std::cout << nlohmann::json{{"corpus_id", corpus_id}, {"archive", out_path}}.dump() << "\n";
  } else {
    std::cout << "wrote " << out_path << "\n";
  }
  return kExitOk;
}

struct ServeOptions {
  std::string data_dir = "./data";
  std::string bind_addr = "127.0.0.1:8080";
  uint32_t session_ttl_hours = 24;
  uint32_t max_upload_mb = 32;
  std::string static_dir;
};

int cmd_serve(const ServeOptions& opts, const ConstraintFlags& flags, bool as_json) {
  const auto colon = opts.bind_addr.rfind(':');
  if (colon == std::string::npos) {
    return report_error(as_json, "bind address must be host:port");
  }
  const std::string host = opts.bind_addr.substr(0, colon);
  int port = 0;
  try {
    port = std::stoi(opts.bind_addr.substr(colon + 1));
  } catch (const std::exception&) {
    return report_error(as_json, "bad port in bind address");
  }
  if (port < 0 || port > 65535) return report_error(as_json, "port out of range");

  // Handle termination signals on one dedicated thread; every other thread
  // inherits the blocked mask.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  std::vector<uint32_t> rates;
  const auto constraints = flags.resolve(rates);
  vc_server_config config{};
  config.data_dir = opts.data_dir.c_str();
  config.host = host.c_str();
  config.port = port;
  config.session_ttl_hours = opts.session_ttl_hours;
  config.max_upload_mb = opts.max_upload_mb;
  config.static_dir = opts.static_dir.empty() ? nullptr : opts.static_dir.c_str();
  config.default_constraints = &constraints;

  vc_server* server = nullptr;
  auto status = vc_server_create(&config, &server);
  if (status != VC_OK) return report_error(as_json, describe(status));
  status = vc_server_bind(server);
  if (status != VC_OK) {
    vc_server_destroy(server);
    return report_error(as_json, "cannot listen on " + opts.bind_addr + ": " + describe(status));
  }

  std::thread([server, signals] {
    int sig = 0;
    sigwait(&signals, &sig);
    vc_server_stop(server);
  }).detach();

  if (as_json) {
    std::cout << nlohmann::json{{"listening", host + ":" + std::to_string(vc_server_port(server))},
                                {"data_dir", opts.data_dir}}
                     .dump()
              << std::endl;
  } else {
    std::cout << "listening on http://" << host << ":" << vc_server_port(server) << std::endl;
  }
  status = vc_server_run(server);
  vc_server_destroy(server);
  if (status != VC_OK) return report_error(as_json, describe(status));
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vocorpus - speech corpus collection server and tools"};
  app.require_subcommand(1);
  bool as_json = false;
  app.add_flag("--json", as_json, "Machine-readable output");

  ServeOptions serve_opts;
  ConstraintFlags serve_constraints;
  auto* serve = app.add_subcommand("serve", "Run the HTTP API server");
  serve->add_option("--data-dir", serve_opts.data_dir, "Data directory")
      ->envname("DATA_DIR")
      ->capture_default_str();
  serve->add_option("--bind", serve_opts.bind_addr, "Listen address host:port")
      ->envname("BIND_ADDR")
      ->capture_default_str();
  serve->add_option("--session-ttl-hours", serve_opts.session_ttl_hours, "Session lifetime")
      ->envname("SESSION_TTL_HOURS")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  serve->add_option("--max-upload-mb", serve_opts.max_upload_mb, "Request body cap in MiB")
      ->envname("MAX_UPLOAD_MB")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  serve->add_option("--static-dir", serve_opts.static_dir, "Recorder UI assets served at /")
      ->envname("STATIC_DIR");
  serve_constraints.add_to(*serve);
  serve->add_flag("--json", as_json, "Machine-readable output");

  std::string wav_path;
  ConstraintFlags wav_constraints;
  auto* validate = app.add_subcommand("validate-wav", "Check a WAV file against the constraints");
  validate->add_option("file", wav_path, "WAV file")->required();
  wav_constraints.add_to(*validate);
  validate->add_flag("--json", as_json, "Machine-readable output");

  std::string csv_path;
  auto* check = app.add_subcommand("check-script", "Check a recording script CSV");
  check->add_option("file", csv_path, "Script CSV")->required();
  check->add_flag("--json", as_json, "Machine-readable output");

  std::string export_dir = "./data";
  std::string corpus_id;
  std::string out_path;
  auto* exp = app.add_subcommand("export", "Write a corpus archive from the data directory");
  exp->add_option("corpus_id", corpus_id, "Corpus identifier")->required();
  exp->add_option("out", out_path, "Output ZIP path")->required();
  exp->add_option("--data-dir", export_dir, "Data directory")
      ->envname("DATA_DIR")
      ->capture_default_str();
  exp->add_flag("--json", as_json, "Machine-readable output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitError;
  }

  if (serve->parsed()) return cmd_serve(serve_opts, serve_constraints, as_json);
  if (validate->parsed()) return cmd_validate_wav(wav_path, wav_constraints, as_json);
  if (check->parsed()) return cmd_check_script(csv_path, as_json);
  if (exp->parsed()) return cmd_export(export_dir, corpus_id, out_path, as_json);
  return kExitError;
}
