#include "json_codec.hpp"

#include <ctime>
#include <limits>

#include "error.hpp"

namespace vocorpus::json {
namespace {

audio::RetryReason reason_from_string(std::string_view text) {
  using audio::RetryReason;
  for (auto r : {RetryReason::None, RetryReason::TooQuiet, RetryReason::TooLoud,
                 RetryReason::TooNoisy, RetryReason::EmptyAudio}) {
    if (audio::to_string(r) == text) return r;
  }
  throw Error(ErrorCode::InvalidArgument, "unknown retry reason");
}

template <typename T>
T read_unsigned(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (!v.is_number_integer() || v.get<std::int64_t>() < 0 ||
      v.get<std::uint64_t>() > std::numeric_limits<T>::max()) {
    throw Error(ErrorCode::InvalidArgument,
                std::string(key) + " must be a non-negative integer");
  }
  return v.get<T>();
}

}  // namespace

json to_json(const audio::ValidationReport& report) {
  return {
      {"peak_observed", report.peak_observed},
      {"peak_ok", report.peak_ok},
      {"snr_observed_db", report.snr_observed_db},
      {"snr_ok", report.snr_ok},
      {"accepted", report.accepted},
      {"retry_reason", std::string(audio::to_string(report.retry_reason))},
  };
}

audio::ValidationReport report_from_json(const json& j) {
  audio::ValidationReport r;
  r.peak_observed = j.at("peak_observed").get<std::uint32_t>();
  r.peak_ok = j.at("peak_ok").get<bool>();
  r.snr_observed_db = j.at("snr_observed_db").get<double>();
  r.snr_ok = j.at("snr_ok").get<bool>();
  r.accepted = j.at("accepted").get<bool>();
  r.retry_reason = reason_from_string(j.at("retry_reason").get<std::string>());
  return r;
}

json to_json(const audio::RecordingConstraints& c) {
  return {
      {"peak_min", c.peak_min},
      {"peak_max", c.peak_max},
      {"snr_min_db", c.snr_min_db},
      {"head_window_ms", c.head_window_ms},
      {"allowed_sample_rates_hz", c.allowed_sample_rates_hz},
  };
}

audio::RecordingConstraints constraints_from_json(const json& j,
                                                  const audio::RecordingConstraints& base) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidArgument, "constraints must be an object");
  audio::RecordingConstraints c = base;
  c.peak_min = read_unsigned<std::uint32_t>(j, "peak_min", c.peak_min);
  c.peak_max = read_unsigned<std::uint32_t>(j, "peak_max", c.peak_max);
  c.head_window_ms = read_unsigned<std::uint32_t>(j, "head_window_ms", c.head_window_ms);
  if (j.contains("snr_min_db")) {
    if (!j.at("snr_min_db").is_number()) {
      throw Error(ErrorCode::InvalidArgument, "snr_min_db must be a number");
    }
    c.snr_min_db = j.at("snr_min_db").get<double>();
  }
  if (j.contains("allowed_sample_rates_hz")) {
    const auto& rates = j.at("allowed_sample_rates_hz");
    if (!rates.is_array()) {
      throw Error(ErrorCode::InvalidArgument, "allowed_sample_rates_hz must be an array");
    }
    c.allowed_sample_rates_hz.clear();
    for (const auto& r : rates) {
      if (!r.is_number_integer() || r.get<std::int64_t>() <= 0 ||
          r.get<std::int64_t>() > std::numeric_limits<std::uint32_t>::max()) {
        throw Error(ErrorCode::InvalidArgument, "sample rates must be positive integers");
      }
      c.allowed_sample_rates_hz.insert(r.get<std::uint32_t>());
    }
  }
  c.check();
  return c;
}

json to_json(const std::vector<script::RowError>& errors) {
  json out = json::array();
  for (const auto& e : errors) {
    out.push_back({{"line", e.line_number},
                   {"reason", std::string(script::to_string(e.kind))},
                   {"message", e.message}});
  }
  return out;
}

json to_json(const std::vector<script::Segment>& segments) {
  json out = json::array();
  for (const auto& s : segments) {
    if (s.kind == script::SegmentKind::Ruby) {
      out.push_back({{"kind", "ruby"}, {"base", s.base}, {"reading", s.reading}});
    } else {
      out.push_back({{"kind", "plain"}, {"base", s.base}, {"reading", ""}});
    }
  }
  return out;
}

json to_json(const script::CorpusManifest& manifest) {
  json leaves = json::array();
  for (const auto& leaf : manifest.leaves) {
    leaves.push_back({{"layers", {leaf.layer1, leaf.layer2, leaf.layer3}},
                      {"ordinals", leaf.ordinals}});
  }
  return {{"item_count", manifest.item_count}, {"groups", std::move(leaves)}};
}

json to_json(const audio::WaveformOutline& outline) {
  json out = json::array();
  for (const auto& b : outline.buckets) out.push_back({b.min, b.max});
  return out;
}

std::string iso8601(std::int64_t unix_seconds) {
  std::time_t t = static_cast<std::time_t>(unix_seconds);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace vocorpus::json
