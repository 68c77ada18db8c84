#include "api_server.hpp"

#include <httplib.h>

#include <atomic>
#include <charconv>
#include <chrono>
#include <thread>
#include <optional>

#include "json_codec.hpp"

namespace vocorpus::api {
namespace {

using nlohmann::json;
namespace codec = vocorpus::json;
using store::Principal;
using store::Role;

constexpr const char* kJson = "application/json";

// Closed set of error codes, with the status each one travels under.
struct ErrorSpec {
  int status;
  const char* code;
};

ErrorSpec spec_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return {400, "invalid_request"};
    case ErrorCode::InvalidName: return {422, "invalid_name"};
    case ErrorCode::NameTaken: return {409, "name_taken"};
    case ErrorCode::WeakSecret: return {422, "weak_secret"};
    case ErrorCode::AuthFailure: return {401, "auth_failed"};
    case ErrorCode::Unauthenticated: return {401, "unauthenticated"};
    case ErrorCode::Unauthorized: return {403, "forbidden"};
    case ErrorCode::UnknownCorpus: return {404, "unknown_corpus"};
    case ErrorCode::UnknownParticipant: return {404, "unknown_participant"};
    case ErrorCode::BadOrdinal: return {404, "bad_ordinal"};
    case ErrorCode::CorpusClosed: return {409, "corpus_closed"};
    case ErrorCode::NotCompleted: return {409, "not_completed"};
    case ErrorCode::NotReviewed: return {409, "not_reviewed"};
    case ErrorCode::NotIssued: return {404, "not_issued"};
    case ErrorCode::ScriptInvalid: return {422, "script_invalid"};
    default: return {500, "internal_error"};
  }
}

void send_error(httplib::Response& res, int status, std::string_view code,
                std::string_view message, std::optional<json> details = std::nullopt) {
  json err = {{"code", code}, {"message", message}};
  if (details) err["details"] = std::move(*details);
  res.status = status;
  res.set_content(json{{"error", std::move(err)}}.dump(), kJson);
}

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), kJson);
}

// Bad request bodies are reported with this before reaching the store.
struct MalformedBody : std::runtime_error {
  using std::runtime_error::runtime_error;
};

json parse_body(const std::string& body) {
  auto j = json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw MalformedBody("body must be a JSON object");
  return j;
}

std::string required_string(const json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_string()) {
    throw MalformedBody(std::string("missing string field '") + key + "'");
  }
  return j.at(key).get<std::string>();
}

std::string optional_string(const json& j, const char* key) {
  if (!j.contains(key)) return {};
  if (!j.at(key).is_string()) throw MalformedBody(std::string("'") + key + "' must be a string");
  return j.at(key).get<std::string>();
}

Role required_role(const json& j) {
  auto role = store::role_from_string(required_string(j, "role"));
  if (!role) throw MalformedBody("role must be 'builder' or 'participant'");
  return *role;
}

store::Profile parse_profile(const json& j) {
  store::Profile p;
  if (!j.contains("profile")) return p;
  const auto& prof = j.at("profile");
  if (!prof.is_object()) throw MalformedBody("profile must be an object");
  p.gender = optional_string(prof, "gender");
  p.birthplace = optional_string(prof, "birthplace");
  p.living_place = optional_string(prof, "living_place");
  if (prof.contains("age")) {
    const auto& age = prof.at("age");
    if (!age.is_number_integer() || age.get<std::int64_t>() < 0 ||
        age.get<std::int64_t>() > 200) {
      throw MalformedBody("age must be a non-negative integer");
    }
    p.age = age.get<std::uint32_t>();
  }
  return p;
}

json profile_json(const store::Profile& p) {
  return {{"gender", p.gender},
          {"age", p.age},
          {"birthplace", p.birthplace},
          {"living_place", p.living_place}};
}

std::string bearer_token(const httplib::Request& req) {
  const auto header = req.get_header_value("Authorization");
  constexpr std::string_view prefix = "Bearer ";
  if (header.size() <= prefix.size() || header.compare(0, prefix.size(), prefix) != 0) {
    return {};
  }
  return header.substr(prefix.size());
}

std::optional<std::size_t> parse_index(const std::string& text) {
  std::size_t value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) {
    return std::nullopt;
  }
  return value;
}

const char* default_code_for_status(int status) {
  switch (status) {
    case 400: return "malformed_body";
    case 401: return "unauthenticated";
    case 403: return "forbidden";
    case 404: return "not_found";
    case 405: return "method_not_allowed";
    case 413: return "payload_too_large";
    case 414: return "uri_too_long";
    case 416: return "range_not_satisfiable";
    default: return status >= 500 ? "internal_error" : "bad_request";
  }
}

constexpr const char* kPlaceholderPage =
    "<!doctype html><html><head><meta charset=\"utf-8\"><title>vocorpus</title></head>"
    "<body><p>vocorpus API server. The recorder UI is not installed; see /api.</p>"
    "</body></html>";

}  // namespace

struct ApiServer::Impl {
  Impl(store::Store& s, ServerConfig c) : store(s), config(std::move(c)) {}

  store::Store& store;
  ServerConfig config;
  httplib::Server http;
  int bound_port = -1;
  std::atomic<bool> stop_requested{false};
  std::atomic<bool> run_active{false};

  using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

  // Runs a handler, translating every failure into the error envelope.
  Handler guarded(Handler inner) {
    return [inner = std::move(inner)](const httplib::Request& req, httplib::Response& res) {
      try {
        inner(req, res);
      } catch (const store::ScriptInvalid& e) {
        send_error(res, 422, "script_invalid", e.what(),
                   json{{"row_errors", codec::to_json(e.rows())}});
      } catch (const MalformedBody& e) {
        send_error(res, 400, "malformed_body", e.what());
      } catch (const Error& e) {
        const auto spec = spec_for(e.code());
        send_error(res, spec.status, spec.code,
                   spec.status == 500 ? "internal server error" : e.what());
      } catch (const json::exception&) {
        send_error(res, 400, "malformed_body", "body does not match the expected schema");
      } catch (const std::exception&) {
        send_error(res, 500, "internal_error", "internal server error");
      }
    };
  }

  /// Handler that requires a valid session.
  Handler authed(std::function<void(const Principal&, const httplib::Request&,
                                    httplib::Response&)> inner) {
    return guarded([this, inner = std::move(inner)](const httplib::Request& req,
                                                    httplib::Response& res) {
      const auto principal = store.resolve_session(bearer_token(req));
      inner(principal, req, res);
    });
  }

  void install_routes();

  void register_account(const httplib::Request& req, httplib::Response& res);
  void login(const httplib::Request& req, httplib::Response& res);
  void create_corpus(const Principal& who, const httplib::Request& req,
                     httplib::Response& res);
  void scripts(const Principal& who, const httplib::Request& req, httplib::Response& res);
  void upload(const Principal& who, const httplib::Request& req, httplib::Response& res);
  void export_zip(const Principal& who, const httplib::Request& req, httplib::Response& res);
};

void ApiServer::Impl::register_account(const httplib::Request& req, httplib::Response& res) {
  const auto body = parse_body(req.body);
  const auto role = required_role(body);
  const auto name = required_string(body, "display_name");
  const auto secret = required_string(body, "secret");
  const auto profile = parse_profile(body);
  const auto account = store.register_account(role, name, secret, profile);
  send_json(res, 201,
            {{"account_id", account.account_id},
             {"role", store::to_string(account.role)},
             {"display_name", account.display_name},
             {"profile", profile_json(account.profile)},
             {"created_at", codec::iso8601(account.created_at)}});
}

void ApiServer::Impl::login(const httplib::Request& req, httplib::Response& res) {
  const auto body = parse_body(req.body);
  const auto role = required_role(body);
  const auto name = required_string(body, "display_name");
  const auto secret = required_string(body, "secret");
  const auto session = store.authenticate(name, role, secret);
  send_json(res, 200,
            {{"token", session.token},
             {"expires_at", codec::iso8601(session.expires_at)},
             {"account_id", session.principal.account_id},
             {"role", store::to_string(session.principal.role)}});
}

void ApiServer::Impl::create_corpus(const Principal& who, const httplib::Request& req,
                                    httplib::Response& res) {
  if (who.role != Role::Builder) {
    throw Error(ErrorCode::Unauthorized, "only builders create corpora");
  }
  if (!req.is_multipart_form_data() || !req.has_file("meta") || !req.has_file("script")) {
    throw MalformedBody("expected multipart parts 'meta' (JSON) and 'script' (CSV)");
  }
  const auto meta = parse_body(req.get_file_value("meta").content);
  store::CorpusSpec spec;
  spec.title = required_string(meta, "title");
  spec.explanation = optional_string(meta, "explanation");
  spec.device_note = optional_string(meta, "device_note");
  if (meta.contains("manual_review")) {
    if (!meta.at("manual_review").is_boolean()) {
      throw MalformedBody("manual_review must be a boolean");
    }
    spec.manual_review = meta.at("manual_review").get<bool>();
  }
  spec.constraints = config.default_constraints;
  if (meta.contains("constraints")) {
    try {
      spec.constraints = codec::constraints_from_json(meta.at("constraints"), spec.constraints);
    } catch (const Error& e) {
      send_error(res, 422, "invalid_constraints", e.what());
      return;
    }
  }
  spec.script_csv = req.get_file_value("script").content;
  const auto corpus = store.create_corpus(who, spec);
  send_json(res, 201, {{"corpus_id", corpus.corpus_id}, {"item_count", corpus.items.size()}});
}

void ApiServer::Impl::scripts(const Principal& who, const httplib::Request& req,
                              httplib::Response& res) {
  const std::string corpus_id = req.matches[1];
  const auto flags = store.accepted_flags(who, corpus_id);
  const auto corpus = store.get_corpus(corpus_id);
  json items = json::array();
  for (const auto& item : corpus.items) {
    items.push_back({{"ordinal", item.ordinal},
                     {"layers", {item.layer1, item.layer2, item.layer3}},
                     {"file_name", item.file_name},
                     {"sentence", script::serialize_ruby(item.sentence)},
                     {"display_text", script::display_text(item.sentence)},
                     {"segments", codec::to_json(item.sentence)},
                     {"prosody", item.prosody},
                     {"path", script::layer_path(item)},
                     {"accepted", static_cast<bool>(flags[item.ordinal])}});
  }
  send_json(res, 200,
            {{"corpus_id", corpus.corpus_id},
             {"title", corpus.title},
             {"explanation", corpus.explanation},
             {"status", corpus.status == store::CorpusStatus::Open ? "open" : "closed"},
             {"device_note", corpus.device_note},
             {"constraints", codec::to_json(corpus.constraints)},
             {"structure", codec::to_json(script::build_manifest(corpus.items))},
             {"items", std::move(items)}});
}

void ApiServer::Impl::upload(const Principal& who, const httplib::Request& req,
                             httplib::Response& res) {
  const std::string corpus_id = req.matches[1];
  if (!req.has_param("ordinal")) throw MalformedBody("missing query parameter 'ordinal'");
  const auto ordinal = parse_index(req.get_param_value("ordinal"));
  if (!ordinal) throw MalformedBody("ordinal must be a non-negative integer");
  const auto* data = reinterpret_cast<const std::uint8_t*>(req.body.data());
  const auto report =
      store.submit_recording(who, corpus_id, *ordinal, std::span(data, req.body.size()));
  if (report.accepted) {
    send_json(res, 200, codec::to_json(report));
  } else {
    send_error(res, 422, "recording_rejected",
               std::string("recording rejected: ") +
                   std::string(audio::to_string(report.retry_reason)),
               codec::to_json(report));
  }
}

void ApiServer::Impl::export_zip(const Principal& who, const httplib::Request& req,
                                 httplib::Response& res) {
  const std::string corpus_id = req.matches[1];
  auto snapshot = std::make_shared<store::ExportSnapshot>(store.snapshot_export(who, corpus_id));
  res.status = 200;
  res.set_header("Content-Disposition", "attachment; filename=\"" + corpus_id + ".zip\"");
  res.set_chunked_content_provider(
      "application/zip", [this, snapshot](std::size_t, httplib::DataSink& sink) {
        try {
          store.write_export(*snapshot, [&sink](std::span<const std::uint8_t> chunk) {
            if (!sink.write(reinterpret_cast<const char*>(chunk.data()), chunk.size())) {
              throw std::runtime_error("client went away");
            }
          });
        } catch (const std::exception&) {
          return false;
        }
        sink.done();
        return true;
      });
}

void ApiServer::Impl::install_routes() {
  http.set_payload_max_length(config.max_upload_bytes);

  http.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (!res.body.empty()) return httplib::Server::HandlerResponse::Unhandled;
    send_error(res, res.status, default_code_for_status(res.status),
               httplib::status_message(res.status));
    return httplib::Server::HandlerResponse::Handled;
  });
  http.set_exception_handler(
      [](const httplib::Request&, httplib::Response& res, std::exception_ptr) {
        send_error(res, 500, "internal_error", "internal server error");
      });

  http.Post("/api/accounts", guarded([this](const auto& req, auto& res) {
              register_account(req, res);
            }));
  http.Post("/api/sessions", guarded([this](const auto& req, auto& res) {
              login(req, res);
            }));
  http.Post("/api/corpora", authed([this](const auto& who, const auto& req, auto& res) {
              create_corpus(who, req, res);
            }));
  http.Get(R"(/api/corpora/([^/]+)/scripts)",
           authed([this](const auto& who, const auto& req, auto& res) {
             scripts(who, req, res);
           }));
  http.Post(R"(/api/corpora/([^/]+)/recordings)",
            authed([this](const auto& who, const auto& req, auto& res) {
              upload(who, req, res);
            }));
  http.Get(R"(/api/corpora/([^/]+)/progress)",
           authed([this](const auto& who, const auto& req, auto& res) {
             const std::string corpus_id = req.matches[1];
             const auto rows = store.progress(who, corpus_id);
             const auto corpus = store.get_corpus(corpus_id);
             json out = json::array();
             for (const auto& r : rows) {
               out.push_back({{"participant_id", r.participant_id},
                              {"display_name", r.display_name},
                              {"accepted_count", r.accepted_count},
                              {"item_count", r.item_count},
                              {"completed", r.completed},
                              {"reviewed", r.reviewed},
                              {"password_issued", r.password_issued}});
             }
             send_json(res, 200,
                       {{"corpus_id", corpus_id},
                        {"item_count", corpus.items.size()},
                        {"manual_review", corpus.manual_review},
                        {"participants", std::move(out)}});
           }));
  http.Post(R"(/api/corpora/([^/]+)/close)",
            authed([this](const auto& who, const auto& req, auto& res) {
              store.close_corpus(who, req.matches[1]);
              send_json(res, 200, {{"corpus_id", std::string(req.matches[1])},
                                   {"status", "closed"}});
            }));
  http.Post(R"(/api/corpora/([^/]+)/participants/([^/]+)/review)",
            authed([this](const auto& who, const auto& req, auto& res) {
              store.mark_reviewed(who, req.matches[1], req.matches[2]);
              send_json(res, 200, {{"participant_id", std::string(req.matches[2])},
                                   {"reviewed", true}});
            }));
  http.Post(R"(/api/corpora/([^/]+)/participants/([^/]+)/password)",
            authed([this](const auto& who, const auto& req, auto& res) {
              const auto pw = store.issue_completion_password(who, req.matches[1],
                                                              req.matches[2]);
              send_json(res, 200, {{"participant_id", std::string(req.matches[2])},
                                   {"password", pw}});
            }));
  http.Get(R"(/api/corpora/([^/]+)/participants/([^/]+)/password)",
           authed([this](const auto& who, const auto& req, auto& res) {
             const auto pw = store.read_completion_password(who, req.matches[1],
                                                            req.matches[2]);
             send_json(res, 200, {{"participant_id", std::string(req.matches[2])},
                                  {"password", pw}});
           }));
  http.Get(R"(/api/corpora/([^/]+)/export)",
           authed([this](const auto& who, const auto& req, auto& res) {
             export_zip(who, req, res);
           }));
  http.Post("/api/outline", authed([](const auto&, const auto& req, auto& res) {
              std::size_t buckets = 200;
              if (req.has_param("buckets")) {
                auto parsed = parse_index(req.get_param_value("buckets"));
                if (!parsed || *parsed == 0) throw MalformedBody("buckets must be positive");
                buckets = *parsed;
              }
              const auto* data = reinterpret_cast<const std::uint8_t*>(req.body.data());
              audio::PcmClip clip;
              try {
                clip = audio::parse_wav(std::span(data, req.body.size()));
                if (clip.empty()) throw Error(ErrorCode::EmptyClip, "clip has no samples");
              } catch (const Error& e) {
                send_error(res, 422, "undecodable_audio", e.what());
                return;
              }
              send_json(res, 200,
                        {{"sample_rate_hz", clip.sample_rate_hz},
                         {"sample_count", clip.samples.size()},
                         {"buckets", codec::to_json(audio::compute_outline(clip, buckets))}});
            }));

  if (!config.static_dir.empty()) {
    http.set_mount_point("/", config.static_dir.string());
  } else {
    http.Get("/", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(kPlaceholderPage, "text/html; charset=utf-8");
    });
  }
}

ApiServer::ApiServer(store::Store& store, ServerConfig config)
    : impl_(std::make_unique<Impl>(store, std::move(config))) {
  impl_->install_routes();
}

ApiServer::~ApiServer() { stop(); }

bool ApiServer::bind() {
  // httplib's default also sets SO_REUSEPORT, which lets a second server
  // share a port that is already in use.
  impl_->http.set_socket_options([](socket_t sock) {
    int yes = 1;
    ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof yes);
  });
  if (impl_->config.port == 0) {
    impl_->bound_port = impl_->http.bind_to_any_port(impl_->config.host);
  } else if (impl_->http.bind_to_port(impl_->config.host, impl_->config.port)) {
    impl_->bound_port = impl_->config.port;
  } else {
    impl_->bound_port = -1;
  }
  return impl_->bound_port > 0;
}

void ApiServer::run() {
  impl_->run_active = true;
  if (!impl_->stop_requested) impl_->http.listen_after_bind();
  impl_->run_active = false;
}

void ApiServer::stop() {
  impl_->stop_requested = true;
  while (impl_->run_active && !impl_->http.is_running()) {
    std::this_thread::sleep_for(std::chrono::milliseconds(1));
  }
  if (impl_->http.is_running()) impl_->http.stop();
}

int ApiServer::port() const noexcept { return impl_->bound_port; }

bool ApiServer::running() const { return impl_->http.is_running(); }

}  // namespace vocorpus::api
