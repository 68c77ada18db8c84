#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace vocorpus {

/// Writes a stored (uncompressed) ZIP archive to a byte sink. Every entry
/// carries the same fixed timestamp, so identical inputs in identical order
/// produce identical bytes. Entry names are flagged as UTF-8.
class ZipWriter {
 public:
  using Sink = std::function<void(std::span<const std::uint8_t>)>;

  explicit ZipWriter(Sink sink) : sink_(std::move(sink)) {}
  ZipWriter(const ZipWriter&) = delete;
  ZipWriter& operator=(const ZipWriter&) = delete;

  void add(std::string_view name, std::span<const std::uint8_t> data);
  void add(std::string_view name, std::string_view text);
  /// Writes the central directory. No entries may be added afterwards.
  void finish();

  // 1980-01-01 00:00:00, the earliest instant MS-DOS timestamps encode.
  static constexpr std::uint16_t kDosDate = (0 << 9) | (1 << 5) | 1;
  static constexpr std::uint16_t kDosTime = 0;

 private:
  struct Entry {
    std::string name;
    std::uint32_t crc = 0;
    std::uint32_t size = 0;
    std::uint32_t offset = 0;
  };

  void emit(const std::vector<std::uint8_t>& bytes);
  void emit(std::span<const std::uint8_t> bytes);

  Sink sink_;
  std::vector<Entry> entries_;
  std::uint64_t offset_ = 0;
  bool finished_ = false;
};

}  // namespace vocorpus
