#pragma once

// Recording scripts: the builder's six-column CSV, inline ruby annotations
// of the form "[base](reading)", and the three-layer directory mapping.

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace vocorpus::script {

enum class SegmentKind { Plain, Ruby };

struct Segment {
  SegmentKind kind = SegmentKind::Plain;
  std::string base;
  std::string reading;

  static Segment plain(std::string text) { return {SegmentKind::Plain, std::move(text), {}}; }
  static Segment ruby(std::string base, std::string reading) {
    return {SegmentKind::Ruby, std::move(base), std::move(reading)};
  }
  friend bool operator==(const Segment&, const Segment&) = default;
};

struct ScriptItem {
  std::string layer1;
  std::string layer2;
  std::string layer3;
  std::string file_name;
  std::vector<Segment> sentence;
  std::string prosody;
  std::size_t ordinal = 0;

  friend bool operator==(const ScriptItem&, const ScriptItem&) = default;
};

enum class RowErrorKind {
  WrongFieldCount,
  EmptyLayerName,
  InvalidLayerName,
  InvalidFileName,
  DuplicateKey,
  RubySyntaxError,
  MalformedCsv,
};

std::string_view to_string(RowErrorKind kind) noexcept;

struct RowError {
  std::size_t line_number = 0;  // 1-based physical line where the record starts
  RowErrorKind kind = RowErrorKind::WrongFieldCount;
  std::string message;
};

class RubySyntaxError : public std::runtime_error {
 public:
  RubySyntaxError(std::size_t offset, const std::string& what)
      : std::runtime_error(what), offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// Either every row parsed (items) or the full list of bad rows (errors).
struct ScriptParseResult {
  std::vector<ScriptItem> items;
  std::vector<RowError> errors;

  bool ok() const noexcept { return errors.empty(); }
};

ScriptParseResult parse_script_csv(std::string_view text);

/// Throws RubySyntaxError on an unclosed, nested, or empty annotation.
std::vector<Segment> parse_ruby(std::string_view sentence);

/// Inverse of parse_ruby: ruby segments are written back as "[base](reading)".
std::string serialize_ruby(const std::vector<Segment>& segments);

/// Sentence with markup removed (bases only).
std::string display_text(const std::vector<Segment>& segments);

/// "layer1/layer2/layer3/file_name.wav"
std::string layer_path(const ScriptItem& item);

/// One CSV record per item, minimal quoting, "\n" terminated. For input in
/// that canonical form this reproduces parse_script_csv's input exactly.
std::string serialize_script_csv(const std::vector<ScriptItem>& items);

/// Appends one CSV field, quoted only when it holds a comma, quote, or newline.
void append_csv_field(std::string& out, std::string_view field);

bool is_valid_file_name(std::string_view name) noexcept;
bool is_valid_layer_name(std::string_view name) noexcept;

struct ManifestLeaf {
  std::string layer1;
  std::string layer2;
  std::string layer3;
  std::vector<std::size_t> ordinals;
};

/// Items grouped by layer triple: one leaf per distinct triple, in order of
/// first appearance, each holding its ordinals in script order.
struct CorpusManifest {
  std::vector<ManifestLeaf> leaves;
  std::size_t item_count = 0;

  std::vector<std::size_t> flatten() const;
};

CorpusManifest build_manifest(const std::vector<ScriptItem>& items);

}  // namespace vocorpus::script
