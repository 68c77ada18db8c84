#include "audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <string>

#include "error.hpp"

namespace vocorpus::audio {
namespace {

constexpr std::uint16_t kFormatPcm = 0x0001;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }
  std::size_t position() const noexcept { return pos_; }

  bool tag_is(std::string_view tag) const {
    return remaining() >= 4 && std::memcmp(bytes_.data() + pos_, tag.data(), 4) == 0;
  }
  std::string tag() {
    need(4);
    std::string out(reinterpret_cast<const char*>(bytes_.data() + pos_), 4);
    pos_ += 4;
    return out;
  }
  std::uint16_t u16() {
    need(2);
    auto v = static_cast<std::uint16_t>(bytes_[pos_] | (bytes_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | bytes_[pos_ + i];
    pos_ += 4;
    return v;
  }
  std::span<const std::uint8_t> take(std::size_t n) {
    need(n);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  void skip(std::size_t n) { take(n); }

 private:
  void need(std::size_t n) const {
    if (remaining() < n) {
      throw Error(ErrorCode::MalformedContainer, "WAV payload is truncated");
    }
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_tag(std::vector<std::uint8_t>& out, std::string_view tag) {
  out.insert(out.end(), tag.begin(), tag.end());
}

std::uint64_t sum_of_squares(std::span<const std::int16_t> samples) {
  std::uint64_t acc = 0;
  for (auto s : samples) {
    auto v = static_cast<std::int64_t>(s);
    acc += static_cast<std::uint64_t>(v * v);
  }
  return acc;
}

void require_samples(const PcmClip& clip) {
  if (clip.empty()) throw Error(ErrorCode::EmptyClip, "clip has no samples");
}

}  // namespace

void RecordingConstraints::check() const {
  if (peak_min > peak_max) {
    throw Error(ErrorCode::InvalidArgument, "peak_min exceeds peak_max");
  }
  if (peak_max > 32767) {
    throw Error(ErrorCode::InvalidArgument, "peak_max exceeds 32767");
  }
  if (head_window_ms == 0) {
    throw Error(ErrorCode::InvalidArgument, "head_window_ms must be positive");
  }
  if (!std::isfinite(snr_min_db)) {
    throw Error(ErrorCode::InvalidArgument, "snr_min_db must be finite");
  }
  if (allowed_sample_rates_hz.contains(0)) {
    throw Error(ErrorCode::InvalidArgument, "sample rates must be positive");
  }
}

std::string_view to_string(RetryReason reason) noexcept {
  switch (reason) {
    case RetryReason::None: return "none";
    case RetryReason::TooQuiet: return "too_quiet";
    case RetryReason::TooLoud: return "too_loud";
    case RetryReason::TooNoisy: return "too_noisy";
    case RetryReason::EmptyAudio: return "empty_audio";
  }
  return "none";
}

PcmClip parse_wav(std::span<const std::uint8_t> payload) {
  ByteReader in(payload);
  if (!in.tag_is("RIFF")) {
    throw Error(ErrorCode::MalformedContainer, "missing RIFF magic");
  }
  in.skip(4);
  in.u32();  // RIFF size; browsers are not consistent about it
  if (!in.tag_is("WAVE")) {
    throw Error(ErrorCode::MalformedContainer, "missing WAVE form type");
  }
  in.skip(4);

  bool have_fmt = false;
  PcmClip clip;
  while (in.remaining() >= 8) {
    const std::string id = in.tag();
    const std::uint32_t size = in.u32();
    if (id == "fmt ") {
      if (size < 16) {
        throw Error(ErrorCode::MalformedContainer, "fmt chunk is too short");
      }
      auto body = in.take(size);
      ByteReader fmt(body);
      std::uint16_t format = fmt.u16();
      const std::uint16_t channels = fmt.u16();
      const std::uint32_t rate = fmt.u32();
      fmt.u32();  // byte rate
      fmt.u16();  // block align
      const std::uint16_t bits = fmt.u16();
      if (format == kFormatExtensible && size >= 40) {
        fmt.u16();  // cbSize
        fmt.u16();  // valid bits
        fmt.u32();  // channel mask
        format = fmt.u16();  // leading two bytes of the sub-format GUID
      }
      if (format != kFormatPcm) {
        throw Error(ErrorCode::UnsupportedFormat,
                    "format tag " + std::to_string(format) + " is not PCM");
      }
      if (bits != 16) {
        throw Error(ErrorCode::UnsupportedFormat,
                    std::to_string(bits) + "-bit audio is not supported");
      }
      if (channels != 1) {
        throw Error(ErrorCode::UnsupportedFormat,
                    std::to_string(channels) + "-channel audio is not supported");
      }
      if (rate == 0) {
        throw Error(ErrorCode::MalformedContainer, "sample rate is zero");
      }
      clip.sample_rate_hz = rate;
      have_fmt = true;
      if (size % 2 == 1 && in.remaining() > 0) in.skip(1);
    } else if (id == "data") {
      if (!have_fmt) {
        throw Error(ErrorCode::MalformedContainer, "data chunk precedes fmt chunk");
      }
      if (size % 2 != 0) {
        throw Error(ErrorCode::MalformedContainer,
                    "data chunk length is not a whole number of samples");
      }
      auto body = in.take(size);
      clip.samples.resize(size / 2);
      for (std::size_t i = 0; i < clip.samples.size(); ++i) {
        auto lo = static_cast<std::uint16_t>(body[2 * i]);
        auto hi = static_cast<std::uint16_t>(body[2 * i + 1]);
        clip.samples[i] = static_cast<std::int16_t>(lo | (hi << 8));
      }
      return clip;
    } else {
      in.skip(size);
      if (size % 2 == 1 && in.remaining() > 0) in.skip(1);
    }
  }
  throw Error(ErrorCode::MalformedContainer,
              have_fmt ? "missing data chunk" : "missing fmt chunk");
}

std::vector<std::uint8_t> encode_wav(const PcmClip& clip) {
  const std::size_t data_bytes = clip.samples.size() * 2;
  if (data_bytes > std::numeric_limits<std::uint32_t>::max() - 36) {
    throw Error(ErrorCode::InvalidArgument, "clip too long for a RIFF container");
  }
  std::vector<std::uint8_t> out;
  out.reserve(44 + data_bytes);
  put_tag(out, "RIFF");
  put_u32(out, static_cast<std::uint32_t>(36 + data_bytes));
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put_u32(out, 16);
  put_u16(out, kFormatPcm);
  put_u16(out, 1);
  put_u32(out, clip.sample_rate_hz);
  put_u32(out, clip.sample_rate_hz * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  put_tag(out, "data");
  put_u32(out, static_cast<std::uint32_t>(data_bytes));
  for (auto s : clip.samples) put_u16(out, static_cast<std::uint16_t>(s));
  return out;
}

std::uint32_t peak_amplitude(const PcmClip& clip) {
  require_samples(clip);
  std::uint32_t peak = 0;
  for (auto s : clip.samples) {
    auto v = static_cast<std::int32_t>(s);
    peak = std::max(peak, static_cast<std::uint32_t>(v < 0 ? -v : v));
  }
  return peak;
}

AmplitudeCheck check_amplitude(const PcmClip& clip,
                               const RecordingConstraints& constraints) {
  const auto peak = peak_amplitude(clip);
  if (peak < constraints.peak_min) return {false, RetryReason::TooQuiet};
  if (peak > constraints.peak_max) return {false, RetryReason::TooLoud};
  return {true, RetryReason::None};
}

std::size_t head_window_samples(const PcmClip& clip,
                                std::uint32_t head_window_ms) noexcept {
  return static_cast<std::size_t>(
      static_cast<std::uint64_t>(head_window_ms) * clip.sample_rate_hz / 1000);
}

double estimate_snr_db(const PcmClip& clip, std::uint32_t head_window_ms) {
  if (head_window_ms == 0) {
    throw Error(ErrorCode::InvalidArgument, "head window must be positive");
  }
  // Duration strictly greater than the window, compared in exact integers.
  const auto n = static_cast<std::uint64_t>(clip.samples.size());
  const auto head_n = head_window_samples(clip, head_window_ms);
  if (n * 1000 <= static_cast<std::uint64_t>(head_window_ms) * clip.sample_rate_hz ||
      head_n == 0) {
    throw Error(ErrorCode::ClipTooShort, "clip is not longer than the head window");
  }
  const std::span<const std::int16_t> all(clip.samples);
  const std::uint64_t whole_sum = sum_of_squares(all);
  const std::uint64_t head_sum = sum_of_squares(all.first(head_n));
  if (whole_sum == 0) return -kSnrSaturationDb;
  if (head_sum == 0) return kSnrSaturationDb;
  const double p_whole = static_cast<double>(whole_sum) / static_cast<double>(n);
  const double p_head = static_cast<double>(head_sum) / static_cast<double>(head_n);
  return 10.0 * std::log10(p_whole / p_head);
}

ValidationReport validate_recording(const PcmClip& clip,
                                    const RecordingConstraints& constraints) {
  if (clip.empty()) return ValidationReport::empty_audio();

  ValidationReport report;
  report.peak_observed = peak_amplitude(clip);
  const auto amp = check_amplitude(clip, constraints);
  report.peak_ok = amp.peak_ok;

  bool too_short = false;
  try {
    report.snr_observed_db = estimate_snr_db(clip, constraints.head_window_ms);
    report.snr_ok = report.snr_observed_db >= constraints.snr_min_db;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::ClipTooShort) throw;
    too_short = true;
    report.snr_observed_db = -kSnrSaturationDb;
    report.snr_ok = false;
  }

  report.accepted = report.peak_ok && report.snr_ok;
  if (too_short) {
    report.retry_reason = RetryReason::EmptyAudio;
  } else if (!report.peak_ok) {
    report.retry_reason = amp.reason;
  } else if (!report.snr_ok) {
    report.retry_reason = RetryReason::TooNoisy;
  } else {
    report.retry_reason = RetryReason::None;
  }
  return report;
}

ValidationReport validate_payload(std::span<const std::uint8_t> payload,
                                  const RecordingConstraints& constraints,
                                  PcmClip* decoded) {
  PcmClip clip;
  try {
    clip = parse_wav(payload);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::MalformedContainer ||
        e.code() == ErrorCode::UnsupportedFormat) {
      return ValidationReport::empty_audio();
    }
    throw;
  }
  if (!constraints.allows_rate(clip.sample_rate_hz)) {
    return ValidationReport::empty_audio();
  }
  auto report = validate_recording(clip, constraints);
  if (report.accepted && decoded != nullptr) *decoded = std::move(clip);
  return report;
}

WaveformOutline compute_outline(const PcmClip& clip, std::size_t bucket_count) {
  require_samples(clip);
  if (bucket_count == 0) {
    throw Error(ErrorCode::InvalidArgument, "bucket count must be positive");
  }
  const std::size_t n = clip.samples.size();
  const std::size_t buckets = std::min(bucket_count, n);
  const std::size_t base = n / buckets;
  const std::size_t extra = n % buckets;

  WaveformOutline outline;
  outline.buckets.reserve(buckets);
  auto it = clip.samples.begin();
  for (std::size_t b = 0; b < buckets; ++b) {
    const auto len = static_cast<std::ptrdiff_t>(base + (b < extra ? 1 : 0));
    auto [lo, hi] = std::minmax_element(it, it + len);
    outline.buckets.push_back({*lo, *hi});
    it += len;
  }
  return outline;
}

}  // namespace vocorpus::audio
