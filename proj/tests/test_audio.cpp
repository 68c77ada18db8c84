#include <doctest.h>

#include <algorithm>
#include <random>

#include "audio.hpp"
#include "error.hpp"
#include "support.hpp"

using namespace vocorpus;
using namespace vocorpus::audio;
using testing::make_clip;

namespace {

std::vector<std::uint8_t> canonical_header(std::uint32_t rate, std::uint32_t data_len,
                                           std::uint16_t format = 1, std::uint16_t channels = 1,
                                           std::uint16_t bits = 16) {
  std::vector<std::uint8_t> h;
  auto tag = [&](const char* t) { h.insert(h.end(), t, t + 4); };
  auto u16 = [&](std::uint16_t v) {
    h.push_back(v & 0xFF);
    h.push_back(v >> 8);
  };
  auto u32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) h.push_back((v >> (8 * i)) & 0xFF);
  };
  tag("RIFF");
  u32(36 + data_len);
  tag("WAVE");
  tag("fmt ");
  u32(16);
  u16(format);
  u16(channels);
  u32(rate);
  u32(rate * channels * bits / 8);
  u16(channels * bits / 8);
  u16(bits);
  tag("data");
  u32(data_len);
  return h;
}

void append_samples(std::vector<std::uint8_t>& out, std::initializer_list<std::int16_t> s) {
  for (auto v : s) {
    const auto u = static_cast<std::uint16_t>(v);
    out.push_back(u & 0xFF);
    out.push_back(u >> 8);
  }
}

ErrorCode code_of(const std::vector<std::uint8_t>& payload) {
  try {
    parse_wav(payload);
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("parse_wav accepted the payload");
  return ErrorCode::Internal;
}

}  // namespace

TEST_CASE("parse_wav decodes a canonical header") {
  auto wav = canonical_header(48000, 8);
  append_samples(wav, {0, 100, -100, 0});
  const auto clip = parse_wav(wav);
  CHECK(clip.sample_rate_hz == 48000);
  CHECK(clip.channel_count == 1);
  CHECK(clip.samples == std::vector<std::int16_t>{0, 100, -100, 0});
}

TEST_CASE("parse_wav container errors") {
  auto rifx = canonical_header(48000, 8);
  append_samples(rifx, {0, 100, -100, 0});
  rifx[3] = 'X';
  CHECK(code_of(rifx) == ErrorCode::MalformedContainer);

  auto truncated = canonical_header(48000, 8);
  append_samples(truncated, {1, 2});
  CHECK(code_of(truncated) == ErrorCode::MalformedContainer);

  auto odd = canonical_header(48000, 3);
  odd.insert(odd.end(), {1, 2, 3});
  CHECK(code_of(odd) == ErrorCode::MalformedContainer);

  CHECK(code_of({}) == ErrorCode::MalformedContainer);

  // fmt but no data chunk
  auto no_data = canonical_header(48000, 0);
  no_data.resize(no_data.size() - 8);
  CHECK(code_of(no_data) == ErrorCode::MalformedContainer);
}

TEST_CASE("parse_wav format errors") {
  auto stereo = canonical_header(48000, 4, 1, 2);
  append_samples(stereo, {1, 2});
  CHECK(code_of(stereo) == ErrorCode::UnsupportedFormat);

  auto eight_bit = canonical_header(48000, 4, 1, 1, 8);
  eight_bit.insert(eight_bit.end(), {1, 2, 3, 4});
  CHECK(code_of(eight_bit) == ErrorCode::UnsupportedFormat);

  auto float_fmt = canonical_header(48000, 4, 3);
  append_samples(float_fmt, {1, 2});
  CHECK(code_of(float_fmt) == ErrorCode::UnsupportedFormat);
}

TEST_CASE("parse_wav skips chunks between fmt and data") {
  auto base = canonical_header(16000, 4);
  // Split after the fmt chunk (12 + 8 + 16 bytes) and splice in LIST with an odd size.
  std::vector<std::uint8_t> wav(base.begin(), base.begin() + 36);
  const std::vector<std::uint8_t> list = {'L', 'I', 'S', 'T', 3, 0, 0, 0, 'a', 'b', 'c', 0};
  wav.insert(wav.end(), list.begin(), list.end());
  wav.insert(wav.end(), base.begin() + 36, base.end());
  append_samples(wav, {7, -7});
  const auto clip = parse_wav(wav);
  CHECK(clip.samples == std::vector<std::int16_t>{7, -7});
}

TEST_CASE("encode_wav writes the canonical 44-byte header") {
  const auto clip = make_clip({0, 100, -100, 0}, 48000);
  auto expected = canonical_header(48000, 8);
  append_samples(expected, {0, 100, -100, 0});
  CHECK(encode_wav(clip) == expected);
}

TEST_CASE("peak_amplitude") {
  CHECK(peak_amplitude(make_clip({0, 0, 0})) == 0);
  CHECK(peak_amplitude(make_clip({100, -25000, 300})) == 25000);
  CHECK(peak_amplitude(make_clip({-32768})) == 32768);
  CHECK_THROWS_AS(peak_amplitude(make_clip({})), Error);
}

TEST_CASE("peak_amplitude ignores order and sign") {
  std::mt19937 rng(11);
  std::uniform_int_distribution<int> d(-32767, 32767);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::int16_t> s(1 + trial * 7);
    for (auto& v : s) v = static_cast<std::int16_t>(d(rng));
    const auto p = peak_amplitude(make_clip(s));
    auto shuffled = s;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    auto negated = s;
    for (auto& v : negated) v = static_cast<std::int16_t>(-v);
    CHECK(peak_amplitude(make_clip(shuffled)) == p);
    CHECK(peak_amplitude(make_clip(negated)) == p);
  }
}

TEST_CASE("check_amplitude against the default range") {
  const RecordingConstraints c;
  auto at = [&](std::int16_t peak) { return check_amplitude(make_clip({0, peak, 0}), c); };
  CHECK(at(25000).peak_ok);
  CHECK(at(25000).reason == RetryReason::None);
  CHECK(at(20000).peak_ok);
  CHECK(at(30000).peak_ok);
  CHECK_FALSE(at(32767).peak_ok);
  CHECK(at(32767).reason == RetryReason::TooLoud);
  CHECK(at(0).reason == RetryReason::TooQuiet);
  CHECK(at(19999).reason == RetryReason::TooQuiet);
  CHECK(at(30001).reason == RetryReason::TooLoud);
}

TEST_CASE("estimate_snr_db fixed cases") {
  SUBCASE("DC clip is 0 dB") {
    const auto clip = make_clip(std::vector<std::int16_t>(16000, 500), 16000);
    CHECK(estimate_snr_db(clip, 300) == 0.0);
  }
  SUBCASE("noise head then sine matches the power-sum oracle") {
    std::mt19937 rng(42);
    std::uniform_int_distribution<int> n(-100, 100);
    std::vector<std::int16_t> s(48000);
    for (int i = 0; i < 14400; ++i) s[i] = static_cast<std::int16_t>(n(rng));
    for (int i = 14400; i < 48000; ++i) {
      s[i] = static_cast<std::int16_t>(std::lround(32767.0 / 3 * std::sin(i * 0.05)));
    }
    const auto got = estimate_snr_db(make_clip(s, 48000), 300);
    CHECK(std::abs(got - testing::snr_oracle(s, 48000, 300)) <= 1e-9);
  }
  SUBCASE("silent head saturates high, silent clip saturates low") {
    std::vector<std::int16_t> s(16000, 0);
    for (int i = 4800; i < 16000; ++i) s[i] = 1000;
    CHECK(estimate_snr_db(make_clip(s), 300) == kSnrSaturationDb);
    CHECK(estimate_snr_db(make_clip(std::vector<std::int16_t>(16000, 0)), 300) ==
          -kSnrSaturationDb);
  }
  SUBCASE("clip no longer than the head window") {
    CHECK_THROWS_AS(estimate_snr_db(make_clip(std::vector<std::int16_t>(4800, 1)), 300), Error);
    CHECK_NOTHROW(estimate_snr_db(make_clip(std::vector<std::int16_t>(4801, 1)), 300));
  }
}

TEST_CASE("estimate_snr_db is scale invariant") {
  std::mt19937 rng(7);
  std::uniform_int_distribution<int> d(-3000, 3000);
  for (int trial = 0; trial < 40; ++trial) {
    std::vector<std::int16_t> s(8000);
    for (auto& v : s) v = static_cast<std::int16_t>(d(rng) / (trial % 3 == 0 ? 10 : 1));
    const double base = testing::snr_oracle(s, 16000, 100);
    for (int k : {2, 3, 5, 10}) {
      auto scaled = s;
      for (auto& v : scaled) v = static_cast<std::int16_t>(v * k);
      CHECK(std::abs(estimate_snr_db(make_clip(scaled), 100) - base) <= 1e-6);
    }
  }
}

TEST_CASE("validate_recording") {
  const RecordingConstraints c;
  SUBCASE("passing clip") {
    const auto r = validate_recording(testing::speech_like(25000, 1), c);
    CHECK(r.accepted);
    CHECK(r.retry_reason == RetryReason::None);
    CHECK(r.peak_observed == 25000);
  }
  SUBCASE("peak fine but noisy") {
    const auto r = validate_recording(testing::speech_like(25000, 1, 16000, 1.0, 20000), c);
    CHECK(r.peak_ok);
    CHECK_FALSE(r.snr_ok);
    CHECK(r.retry_reason == RetryReason::TooNoisy);
  }
  SUBCASE("quiet outranks noisy") {
    const auto r = validate_recording(testing::speech_like(5000, 1, 16000, 1.0, 4000), c);
    CHECK_FALSE(r.snr_ok);
    CHECK(r.retry_reason == RetryReason::TooQuiet);
  }
  SUBCASE("empty clip") {
    const auto r = validate_recording(make_clip({}), c);
    CHECK(r == ValidationReport::empty_audio());
    CHECK(r.retry_reason == RetryReason::EmptyAudio);
  }
}

TEST_CASE("validate_payload maps decode problems to empty_audio") {
  const RecordingConstraints c;
  const std::vector<std::uint8_t> junk = {'n', 'o', 'p', 'e'};
  CHECK(validate_payload(junk, c).retry_reason == RetryReason::EmptyAudio);
  const auto odd_rate = encode_wav(testing::speech_like(25000, 1, 11025));
  CHECK(validate_payload(odd_rate, c).retry_reason == RetryReason::EmptyAudio);
  auto any_rate = c;
  any_rate.allowed_sample_rates_hz.clear();
  CHECK(validate_payload(odd_rate, any_rate).accepted);
  const auto short_clip = encode_wav(make_clip(std::vector<std::int16_t>(100, 25000)));
  CHECK(validate_payload(short_clip, c).retry_reason == RetryReason::EmptyAudio);
}

TEST_CASE("validate_recording agrees with an oracle on random clips") {
  std::mt19937 rng(2024);
  RecordingConstraints c;
  c.head_window_ms = 100;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto n = std::uniform_int_distribution<int>(1601, 6000)(rng);
    const auto amp = std::uniform_int_distribution<int>(0, 32767)(rng);
    const auto head_amp = std::uniform_int_distribution<int>(0, 4000)(rng);
    std::vector<std::int16_t> s(n);
    for (int i = 0; i < n; ++i) {
      const int a = i < 1600 ? head_amp : amp;
      s[i] = static_cast<std::int16_t>(std::uniform_int_distribution<int>(-a, a)(rng));
    }
    const auto report = validate_recording(make_clip(s), c);
    const auto peak = testing::peak_oracle(s);
    const double snr = testing::snr_oracle(s, 16000, 100);
    const bool peak_ok = peak >= c.peak_min && peak <= c.peak_max;
    const bool snr_ok = snr >= c.snr_min_db;
    CHECK(report.peak_observed == peak);
    CHECK(report.peak_ok == peak_ok);
    CHECK(report.snr_ok == snr_ok);
    CHECK(report.accepted == (peak_ok && snr_ok));
    CHECK((report.retry_reason == RetryReason::None) == report.accepted);
    CHECK(validate_recording(make_clip(s), c) == report);
  }
}

TEST_CASE("compute_outline") {
  SUBCASE("even partition") {
    std::vector<std::int16_t> s(1000);
    for (int i = 0; i < 1000; ++i) s[i] = static_cast<std::int16_t>(i);
    const auto o = compute_outline(make_clip(s), 10);
    REQUIRE(o.buckets.size() == 10);
    for (int b = 0; b < 10; ++b) {
      CHECK(o.buckets[b].min == b * 100);
      CHECK(o.buckets[b].max == b * 100 + 99);
    }
  }
  SUBCASE("constant clip") {
    const auto o = compute_outline(make_clip(std::vector<std::int16_t>(77, -5)), 8);
    for (const auto& b : o.buckets) CHECK(b == OutlineBucket{-5, -5});
  }
  SUBCASE("fewer samples than buckets") {
    CHECK(compute_outline(make_clip({1, 2, 3}), 10).buckets.size() == 3);
  }
  SUBCASE("empty clip") { CHECK_THROWS_AS(compute_outline(make_clip({}), 4), Error); }
  SUBCASE("random clip against a double loop") {
    std::mt19937 rng(37);
    std::uniform_int_distribution<int> d(-32768, 32767);
    for (int n : {37, 100, 1001, 4567}) {
      std::vector<std::int16_t> s(n);
      for (auto& v : s) v = static_cast<std::int16_t>(d(rng));
      const auto o = compute_outline(make_clip(s), 37);
      REQUIRE(o.buckets.size() == 37);
      // bucket b covers [b*n/37 + min(b, n%37), ...) with the extras first.
      const int base = n / 37;
      const int extra = n % 37;
      int start = 0;
      std::int16_t gmin = 32767;
      std::int16_t gmax = -32768;
      for (int b = 0; b < 37; ++b) {
        const int len = base + (b < extra ? 1 : 0);
        std::int16_t lo = 32767;
        std::int16_t hi = -32768;
        for (int i = start; i < start + len; ++i) {
          lo = std::min(lo, s[i]);
          hi = std::max(hi, s[i]);
        }
        CHECK(o.buckets[b].min == lo);
        CHECK(o.buckets[b].max == hi);
        gmin = std::min(gmin, o.buckets[b].min);
        gmax = std::max(gmax, o.buckets[b].max);
        start += len;
      }
      CHECK(gmin == *std::min_element(s.begin(), s.end()));
      CHECK(gmax == *std::max_element(s.begin(), s.end()));
    }
  }
}

TEST_CASE("constraints check") {
  RecordingConstraints c;
  CHECK_NOTHROW(c.check());
  c.peak_min = 31000;
  CHECK_THROWS_AS(c.check(), Error);
  c = {};
  c.peak_max = 40000;
  CHECK_THROWS_AS(c.check(), Error);
  c = {};
  c.head_window_ms = 0;
  CHECK_THROWS_AS(c.check(), Error);
}
