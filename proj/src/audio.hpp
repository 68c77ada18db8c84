#pragma once

// Signal layer: WAV decode/encode and the two acceptance conditions applied
// to every uploaded take (peak amplitude range and head-window S/N).

#include <cstddef>
#include <cstdint>
#include <set>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

namespace vocorpus::audio {

/// Mono 16-bit PCM with its sample rate.
struct PcmClip {
  std::vector<std::int16_t> samples;
  std::uint32_t sample_rate_hz = 0;
  std::uint16_t channel_count = 1;

  bool empty() const noexcept { return samples.empty(); }
};

inline constexpr double kSnrSaturationDb = 99.0;

struct RecordingConstraints {
  std::uint32_t peak_min = 20000;
  std::uint32_t peak_max = 30000;
  double snr_min_db = 15.0;
  std::uint32_t head_window_ms = 300;
  // Empty means every sample rate is allowed.
  std::set<std::uint32_t> allowed_sample_rates_hz = {16000, 22050, 24000,
                                                     32000, 44100, 48000};

  /// Throws Error(InvalidArgument) unless peak_min <= peak_max <= 32767 and
  /// head_window_ms > 0.
  void check() const;
  bool allows_rate(std::uint32_t rate_hz) const noexcept {
    return allowed_sample_rates_hz.empty() ||
           allowed_sample_rates_hz.contains(rate_hz);
  }
};

enum class RetryReason { None, TooQuiet, TooLoud, TooNoisy, EmptyAudio };

std::string_view to_string(RetryReason reason) noexcept;

struct ValidationReport {
  std::uint32_t peak_observed = 0;
  bool peak_ok = false;
  double snr_observed_db = -kSnrSaturationDb;
  bool snr_ok = false;
  bool accepted = false;
  RetryReason retry_reason = RetryReason::EmptyAudio;

  /// Report for a payload that never yielded usable samples.
  static ValidationReport empty_audio() { return {}; }

  friend bool operator==(const ValidationReport&,
                         const ValidationReport&) = default;
};

struct OutlineBucket {
  std::int16_t min = 0;
  std::int16_t max = 0;
  friend bool operator==(const OutlineBucket&, const OutlineBucket&) = default;
};

struct WaveformOutline {
  std::vector<OutlineBucket> buckets;
};

/// Decodes a RIFF/WAVE payload holding mono 16-bit PCM. Unknown chunks
/// between fmt and data (LIST, fact, ...) are skipped.
PcmClip parse_wav(std::span<const std::uint8_t> payload);

/// Canonical 44-byte-header WAV encoding of `clip`.
std::vector<std::uint8_t> encode_wav(const PcmClip& clip);

/// max |sample|; -32768 yields 32768.
std::uint32_t peak_amplitude(const PcmClip& clip);

struct AmplitudeCheck {
  bool peak_ok = false;
  RetryReason reason = RetryReason::None;
};

AmplitudeCheck check_amplitude(const PcmClip& clip,
                               const RecordingConstraints& constraints);

/// Number of samples covered by the head window at the clip's rate.
std::size_t head_window_samples(const PcmClip& clip,
                                std::uint32_t head_window_ms) noexcept;

/// 10*log10(P_whole / P_head), where the head window is taken as the noise
/// floor. Saturates at +99 dB for a silent head and -99 dB for a silent clip.
/// Throws Error(ClipTooShort) unless the clip outlasts the head window.
double estimate_snr_db(const PcmClip& clip, std::uint32_t head_window_ms);

ValidationReport validate_recording(const PcmClip& clip,
                                    const RecordingConstraints& constraints);

/// Decode then validate, the path every upload takes. Undecodable payloads
/// and disallowed sample rates yield an empty_audio report. On acceptance
/// the decoded clip is moved into `decoded` when it is non-null.
ValidationReport validate_payload(std::span<const std::uint8_t> payload,
                                  const RecordingConstraints& constraints,
                                  PcmClip* decoded = nullptr);

/// Splits the clip into min(bucket_count, sample count) contiguous runs whose
/// lengths differ by at most one, earlier runs taking the extra sample.
WaveformOutline compute_outline(const PcmClip& clip, std::size_t bucket_count);

}  // namespace vocorpus::audio
