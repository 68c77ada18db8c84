#include "zip_writer.hpp"

#include <zlib.h>

#include <limits>

#include "error.hpp"

namespace vocorpus {
namespace {

constexpr std::uint16_t kVersion = 20;
constexpr std::uint16_t kUtf8Flag = 1u << 11;

void put16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_name(std::vector<std::uint8_t>& out, std::string_view name) {
  out.insert(out.end(), name.begin(), name.end());
}

constexpr std::uint64_t kMax32 = std::numeric_limits<std::uint32_t>::max();

}  // namespace

void ZipWriter::emit(const std::vector<std::uint8_t>& bytes) {
  emit(std::span<const std::uint8_t>(bytes));
}

void ZipWriter::emit(std::span<const std::uint8_t> bytes) {
  sink_(bytes);
  offset_ += bytes.size();
}

void ZipWriter::add(std::string_view name, std::string_view text) {
  add(name, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

void ZipWriter::add(std::string_view name, std::span<const std::uint8_t> data) {
  if (finished_) throw Error(ErrorCode::Internal, "zip archive already finished");
  if (name.empty() || name.size() > 0xFFFF) {
    throw Error(ErrorCode::InvalidArgument, "bad zip entry name");
  }
  if (data.size() >= kMax32 || offset_ >= kMax32 || entries_.size() >= 0xFFFF) {
    throw Error(ErrorCode::InvalidArgument, "archive exceeds ZIP32 limits");
  }

  Entry entry;
  entry.name = std::string(name);
  entry.crc = static_cast<std::uint32_t>(
      ::crc32(::crc32(0L, Z_NULL, 0), data.data(), static_cast<uInt>(data.size())));
  entry.size = static_cast<std::uint32_t>(data.size());
  entry.offset = static_cast<std::uint32_t>(offset_);

  std::vector<std::uint8_t> header;
  header.reserve(30 + name.size());
  put32(header, 0x04034b50);
  put16(header, kVersion);
  put16(header, kUtf8Flag);
  put16(header, 0);  // stored
  put16(header, kDosTime);
  put16(header, kDosDate);
  put32(header, entry.crc);
  put32(header, entry.size);
  put32(header, entry.size);
  put16(header, static_cast<std::uint16_t>(name.size()));
  put16(header, 0);
  put_name(header, name);
  emit(header);
  emit(data);
  entries_.push_back(std::move(entry));
}

void ZipWriter::finish() {
  if (finished_) return;
  finished_ = true;
  const std::uint64_t cd_start = offset_;
  for (const auto& e : entries_) {
    std::vector<std::uint8_t> rec;
    rec.reserve(46 + e.name.size());
    put32(rec, 0x02014b50);
    put16(rec, (3u << 8) | kVersion);  // made by: unix
    put16(rec, kVersion);
    put16(rec, kUtf8Flag);
    put16(rec, 0);
    put16(rec, kDosTime);
    put16(rec, kDosDate);
    put32(rec, e.crc);
    put32(rec, e.size);
    put32(rec, e.size);
    put16(rec, static_cast<std::uint16_t>(e.name.size()));
    put16(rec, 0);  // extra
    put16(rec, 0);  // comment
    put16(rec, 0);  // disk
    put16(rec, 0);  // internal attrs
    put32(rec, 0100644u << 16);  // -rw-r--r--
    put32(rec, e.offset);
    put_name(rec, e.name);
    emit(rec);
  }
  const std::uint64_t cd_size = offset_ - cd_start;
  if (cd_start >= kMax32 || cd_size >= kMax32) {
    throw Error(ErrorCode::InvalidArgument, "archive exceeds ZIP32 limits");
  }
  std::vector<std::uint8_t> eocd;
  put32(eocd, 0x06054b50);
  put16(eocd, 0);
  put16(eocd, 0);
  put16(eocd, static_cast<std::uint16_t>(entries_.size()));
  put16(eocd, static_cast<std::uint16_t>(entries_.size()));
  put32(eocd, static_cast<std::uint32_t>(cd_size));
  put32(eocd, static_cast<std::uint32_t>(cd_start));
  put16(eocd, 0);
  emit(eocd);
}

}  // namespace vocorpus
