#pragma once

// Shared test helpers: clip synthesis, independent oracles, a minimal ZIP
// reader and an in-process server fixture.

#include <sodium.h>
#include <zlib.h>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "api_server.hpp"
#include "audio.hpp"
#include "store.hpp"

namespace testing {

namespace fs = std::filesystem;
using nlohmann::json;

inline fs::path make_temp_dir(const std::string& tag) {
  auto base = fs::temp_directory_path() / ("vocorpus-" + tag + "-XXXXXX");
  std::string templ = base.string();
  if (::mkdtemp(templ.data()) == nullptr) throw std::runtime_error("mkdtemp failed");
  return templ;
}

struct TempDir {
  explicit TempDir(const std::string& tag = "test") : path(make_temp_dir(tag)) {}
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  fs::path path;
};

// -- synthesis --------------------------------------------------------------

inline vocorpus::audio::PcmClip make_clip(std::vector<std::int16_t> samples,
                                          std::uint32_t rate = 16000) {
  vocorpus::audio::PcmClip clip;
  clip.samples = std::move(samples);
  clip.sample_rate_hz = rate;
  return clip;
}

// Quiet noise head, then a sine whose peak is exactly `peak`.
inline vocorpus::audio::PcmClip speech_like(std::uint32_t peak, std::uint32_t seed,
                                            std::uint32_t rate = 16000, double seconds = 1.0,
                                            int noise = 30) {
  std::mt19937 rng(seed);
  std::uniform_int_distribution<int> n(-noise, noise);
  const auto total = static_cast<std::size_t>(seconds * rate);
  const auto head = static_cast<std::size_t>(0.3 * rate);
  std::vector<std::int16_t> s(total);
  for (std::size_t i = 0; i < head && i < total; ++i) s[i] = static_cast<std::int16_t>(n(rng));
  for (std::size_t i = head; i < total; ++i) {
    const double v = peak * std::sin(2.0 * M_PI * 220.0 * static_cast<double>(i) / rate);
    s[i] = static_cast<std::int16_t>(std::lround(v));
  }
  if (total > head) s[head + (total - head) / 2] = static_cast<std::int16_t>(peak);
  return make_clip(std::move(s), rate);
}

inline std::string wav_string(const vocorpus::audio::PcmClip& clip) {
  const auto bytes = vocorpus::audio::encode_wav(clip);
  return {bytes.begin(), bytes.end()};
}

inline std::string passing_wav(std::uint32_t seed = 1) {
  return wav_string(speech_like(25000, seed));
}
inline std::string quiet_wav(std::uint32_t seed = 2) { return wav_string(speech_like(5000, seed)); }
inline std::string noisy_wav(std::uint32_t seed = 3) {
  return wav_string(speech_like(25000, seed, 16000, 1.0, 20000));
}

// -- oracles ----------------------------------------------------------------

// Straight from the definition: long double sums of x^2 over the head and
// the whole clip, ratio of the means in dB.
inline double snr_oracle(const std::vector<std::int16_t>& s, std::uint32_t rate,
                         std::uint32_t head_ms) {
  const std::size_t head = static_cast<std::size_t>(
      (static_cast<unsigned long long>(head_ms) * rate) / 1000ULL);
  long double ph = 0;
  long double pw = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const long double x = s[i];
    pw += x * x;
    if (i < head) ph += x * x;
  }
  pw /= static_cast<long double>(s.size());
  ph /= static_cast<long double>(head);
  if (pw == 0) return -99.0;
  if (ph == 0) return 99.0;
  return static_cast<double>(10.0L * std::log10(pw / ph));
}

inline std::uint32_t peak_oracle(const std::vector<std::int16_t>& s) {
  std::uint32_t best = 0;
  for (auto v : s) {
    const std::int32_t w = v;
    const auto a = static_cast<std::uint32_t>(w < 0 ? -w : w);
    if (a > best) best = a;
  }
  return best;
}

inline std::uint32_t crc_of(const std::string& bytes) {
  return static_cast<std::uint32_t>(
      ::crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size())));
}

inline std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[crypto_hash_sha256_BYTES];
  crypto_hash_sha256(digest, reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size());
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned char c : digest) {
    out += hex[c >> 4];
    out += hex[c & 15];
  }
  return out;
}

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

// Reads a stored-method ZIP through its central directory, checking every
// local header and CRC. Throws on anything unexpected.
struct ZipEntry {
  std::string name;
  std::string data;
  std::uint16_t dos_time = 0;
  std::uint16_t dos_date = 0;
};

inline std::vector<ZipEntry> read_zip(const std::string& z) {
  auto u16 = [&](std::size_t off) -> std::uint16_t {
    if (off + 2 > z.size()) throw std::runtime_error("zip: out of range");
    return static_cast<std::uint16_t>(static_cast<std::uint8_t>(z[off]) |
                                      (static_cast<std::uint8_t>(z[off + 1]) << 8));
  };
  auto u32 = [&](std::size_t off) -> std::uint32_t {
    return static_cast<std::uint32_t>(u16(off)) | (static_cast<std::uint32_t>(u16(off + 2)) << 16);
  };
  if (z.size() < 22) throw std::runtime_error("zip: too short");
  const std::size_t eocd = z.size() - 22;
  if (u32(eocd) != 0x06054b50) throw std::runtime_error("zip: no end record");
  const std::size_t count = u16(eocd + 10);
  std::size_t cd = u32(eocd + 16);
  std::vector<ZipEntry> out;
  for (std::size_t i = 0; i < count; ++i) {
    if (u32(cd) != 0x02014b50) throw std::runtime_error("zip: bad central header");
    if (u16(cd + 10) != 0) throw std::runtime_error("zip: not stored");
    const auto crc = u32(cd + 16);
    const auto size = u32(cd + 20);
    if (u32(cd + 24) != size) throw std::runtime_error("zip: size mismatch");
    const auto name_len = u16(cd + 28);
    const auto extra_len = u16(cd + 30);
    const auto comment_len = u16(cd + 32);
    const auto local = u32(cd + 42);
    ZipEntry e;
    e.dos_time = u16(cd + 12);
    e.dos_date = u16(cd + 14);
    e.name = z.substr(cd + 46, name_len);
    if (u32(local) != 0x04034b50) throw std::runtime_error("zip: bad local header");
    const std::size_t data_off = local + 30 + u16(local + 26) + u16(local + 28);
    if (z.substr(local + 30, u16(local + 26)) != e.name) {
      throw std::runtime_error("zip: local name differs");
    }
    if (data_off + size > z.size()) throw std::runtime_error("zip: truncated entry");
    e.data = z.substr(data_off, size);
    if (crc_of(e.data) != crc) throw std::runtime_error("zip: crc mismatch in " + e.name);
    out.push_back(std::move(e));
    cd += 46 + name_len + extra_len + comment_len;
  }
  return out;
}

// -- scripts ----------------------------------------------------------------

// n items spread over a few layer triples, canonical CSV form.
inline std::string simple_script(std::size_t n) {
  std::string out;
  for (std::size_t i = 0; i < n; ++i) {
    char name[16];
    std::snprintf(name, sizeof name, "f%03zu", i + 1);
    out += "read,";
    out += (i % 2 == 0) ? "calm" : "happy";
    out += ",set0" + std::to_string(i / 4 + 1) + "," + name + ",sentence " + std::to_string(i) +
           ",\n";
  }
  return out;
}

// -- server fixture ---------------------------------------------------------

struct ServerFixture {
  explicit ServerFixture(vocorpus::store::StoreOptions options = {},
                         vocorpus::api::ServerConfig config = {})
      : dir("api") {
    if (options.data_dir.empty()) options.data_dir = dir.path / "data";
    store = std::make_unique<vocorpus::store::Store>(std::move(options));
    config.port = 0;
    server = std::make_unique<vocorpus::api::ApiServer>(*store, std::move(config));
    if (!server->bind()) throw std::runtime_error("bind failed");
    thread = std::thread([this] { server->run(); });
  }
  ~ServerFixture() {
    server->stop();
    thread.join();
  }

  httplib::Client client() const {
    httplib::Client c("127.0.0.1", server->port());
    c.set_read_timeout(60, 0);
    c.set_write_timeout(60, 0);
    return c;
  }

  static httplib::Headers bearer(const std::string& token) {
    if (token.empty()) return {};
    return {{"Authorization", "Bearer " + token}};
  }

  json register_account(const std::string& role, const std::string& name,
                        const std::string& secret = "correct horse") {
    auto c = client();
    auto res = c.Post("/api/accounts",
                      json{{"role", role},
                           {"display_name", name},
                           {"secret", secret},
                           {"profile",
                            {{"gender", "female"},
                             {"age", 34},
                             {"birthplace", "Tokyo"},
                             {"living_place", "Osaka"}}}}
                          .dump(),
                      "application/json");
    if (!res || res->status != 201) throw std::runtime_error("register failed for " + name);
    return json::parse(res->body);
  }

  std::string login(const std::string& role, const std::string& name,
                    const std::string& secret = "correct horse") {
    auto c = client();
    auto res = c.Post("/api/sessions",
                      json{{"role", role}, {"display_name", name}, {"secret", secret}}.dump(),
                      "application/json");
    if (!res || res->status != 200) throw std::runtime_error("login failed for " + name);
    return json::parse(res->body).at("token").get<std::string>();
  }

  httplib::Result create_corpus(const std::string& token, const std::string& csv,
                                json meta = json{{"title", "test corpus"}}) {
    auto c = client();
    httplib::MultipartFormDataItems items = {
        {"meta", meta.dump(), "meta.json", "application/json"},
        {"script", csv, "script.csv", "text/csv"},
    };
    return c.Post("/api/corpora", bearer(token), items);
  }

  httplib::Result upload(const std::string& token, const std::string& corpus,
                         std::size_t ordinal, const std::string& wav) {
    auto c = client();
    return c.Post("/api/corpora/" + corpus + "/recordings?ordinal=" + std::to_string(ordinal),
                  bearer(token), wav, "audio/wav");
  }

  httplib::Result get(const std::string& token, const std::string& path) {
    auto c = client();
    return c.Get(path, bearer(token));
  }

  httplib::Result post(const std::string& token, const std::string& path,
                       const std::string& body = "", const std::string& type = "application/json") {
    auto c = client();
    return c.Post(path, bearer(token), body, type);
  }

  TempDir dir;
  std::unique_ptr<vocorpus::store::Store> store;
  std::unique_ptr<vocorpus::api::ApiServer> server;
  std::thread thread;
};

}  // namespace testing
