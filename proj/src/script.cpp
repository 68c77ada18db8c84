#include "script.hpp"

#include <algorithm>
#include <array>
#include <map>
#include <tuple>

namespace vocorpus::script {
namespace {

constexpr std::size_t kFieldCount = 6;
const std::array<std::string_view, kFieldCount> kHeader = {
    "layer1", "layer2", "layer3", "file_name", "sentence", "prosody"};

struct CsvRecord {
  std::size_t line_number = 0;
  std::vector<std::string> fields;
  std::string malformed;  // non-empty when quoting is broken
};

// RFC 4180 reader. Records may span lines inside quoted fields; each record
// remembers the physical line it started on.
class CsvReader {
 public:
  explicit CsvReader(std::string_view text) : text_(text) {
    if (text_.starts_with("\xEF\xBB\xBF")) pos_ = 3;
  }

  bool next(CsvRecord& rec) {
    if (pos_ >= text_.size()) return false;
    rec = CsvRecord{};
    rec.line_number = line_;
    std::string field;
    bool in_quotes = false;
    bool was_quoted = false;
    bool after_quote = false;

    while (pos_ < text_.size()) {
      const char c = text_[pos_];
      if (in_quotes) {
        ++pos_;
        if (c == '"') {
          if (pos_ < text_.size() && text_[pos_] == '"') {
            field.push_back('"');
            ++pos_;
          } else {
            in_quotes = false;
            after_quote = true;
          }
        } else {
          if (c == '\n') ++line_;
          field.push_back(c);
        }
        continue;
      }
      if (c == ',') {
        ++pos_;
        rec.fields.push_back(std::move(field));
        field.clear();
        was_quoted = after_quote = false;
        continue;
      }
      if (c == '\n' || (c == '\r' && pos_ + 1 < text_.size() && text_[pos_ + 1] == '\n')) {
        pos_ += (c == '\r') ? 2 : 1;
        ++line_;
        rec.fields.push_back(std::move(field));
        return true;
      }
      ++pos_;
      if (c == '"') {
        if (field.empty() && !was_quoted) {
          in_quotes = was_quoted = true;
        } else if (rec.malformed.empty()) {
          rec.malformed = "stray double quote inside a field";
        }
        continue;
      }
      if (after_quote && rec.malformed.empty()) {
        rec.malformed = "text after a closing quote";
      }
      field.push_back(c);
    }
    if (in_quotes) rec.malformed = "unterminated quoted field";
    rec.fields.push_back(std::move(field));
    return true;
  }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
};

bool is_blank(const CsvRecord& rec) {
  if (rec.fields.size() != 1 || !rec.malformed.empty()) return false;
  return std::all_of(rec.fields[0].begin(), rec.fields[0].end(), [](char c) {
    return c == ' ' || c == '\t' || c == '\r' || c == '\f' || c == '\v';
  });
}

bool is_header(const CsvRecord& rec) {
  if (rec.fields.size() != kFieldCount) return false;
  for (std::size_t i = 0; i < kFieldCount; ++i) {
    if (rec.fields[i] != kHeader[i]) return false;
  }
  return true;
}

bool is_whitespace_only(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](char c) {
    return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\f' || c == '\v';
  });
}

}  // namespace

std::string_view to_string(RowErrorKind kind) noexcept {
  switch (kind) {
    case RowErrorKind::WrongFieldCount: return "WrongFieldCount";
    case RowErrorKind::EmptyLayerName: return "EmptyLayerName";
    case RowErrorKind::InvalidLayerName: return "InvalidLayerName";
    case RowErrorKind::InvalidFileName: return "InvalidFileName";
    case RowErrorKind::DuplicateKey: return "DuplicateKey";
    case RowErrorKind::RubySyntaxError: return "RubySyntaxError";
    case RowErrorKind::MalformedCsv: return "MalformedCsv";
  }
  return "MalformedCsv";
}

void append_csv_field(std::string& out, std::string_view field) {
  const bool needs_quotes = field.find_first_of(",\"\r\n") != std::string_view::npos;
  if (!needs_quotes) {
    out.append(field);
    return;
  }
  out.push_back('"');
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
}

bool is_valid_file_name(std::string_view name) noexcept {
  if (name.empty()) return false;
  return std::all_of(name.begin(), name.end(), [](char c) {
    return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') ||
           (c >= '0' && c <= '9') || c == '_' || c == '-';
  });
}

bool is_valid_layer_name(std::string_view name) noexcept {
  if (name.empty() || name == "." || name == "..") return false;
  return std::none_of(name.begin(), name.end(), [](char c) {
    const auto u = static_cast<unsigned char>(c);
    return c == '/' || c == '\\' || u < 0x20 || u == 0x7F;
  });
}

std::vector<Segment> parse_ruby(std::string_view sentence) {
  std::vector<Segment> out;
  std::string plain;
  std::size_t i = 0;
  while (i < sentence.size()) {
    if (sentence[i] != '[') {
      plain.push_back(sentence[i++]);
      continue;
    }
    const std::size_t open = i;
    const std::size_t close = sentence.find(']', open + 1);
    if (close == std::string_view::npos) {
      throw RubySyntaxError(open, "'[' without a closing ']'");
    }
    const auto base = sentence.substr(open + 1, close - open - 1);
    if (base.find('[') != std::string_view::npos) {
      throw RubySyntaxError(open, "nested '[' inside a ruby base");
    }
    if (base.empty()) throw RubySyntaxError(open, "empty ruby base");
    if (close + 1 >= sentence.size() || sentence[close + 1] != '(') {
      throw RubySyntaxError(open, "ruby base not followed by '(reading)'");
    }
    const std::size_t rclose = sentence.find(')', close + 2);
    if (rclose == std::string_view::npos) {
      throw RubySyntaxError(open, "ruby reading without a closing ')'");
    }
    const auto reading = sentence.substr(close + 2, rclose - close - 2);
    if (reading.empty()) throw RubySyntaxError(open, "empty ruby reading");
    if (reading.find_first_of("[(") != std::string_view::npos) {
      throw RubySyntaxError(open, "nested markup inside a ruby reading");
    }
    if (!plain.empty()) out.push_back(Segment::plain(std::exchange(plain, {})));
    out.push_back(Segment::ruby(std::string(base), std::string(reading)));
    i = rclose + 1;
  }
  if (!plain.empty()) out.push_back(Segment::plain(std::move(plain)));
  return out;
}

std::string serialize_ruby(const std::vector<Segment>& segments) {
  std::string out;
  for (const auto& seg : segments) {
    if (seg.kind == SegmentKind::Ruby) {
      out += '[';
      out += seg.base;
      out += "](";
      out += seg.reading;
      out += ')';
    } else {
      out += seg.base;
    }
  }
  return out;
}

std::string display_text(const std::vector<Segment>& segments) {
  std::string out;
  for (const auto& seg : segments) out += seg.base;
  return out;
}

std::string layer_path(const ScriptItem& item) {
  return item.layer1 + '/' + item.layer2 + '/' + item.layer3 + '/' + item.file_name + ".wav";
}

ScriptParseResult parse_script_csv(std::string_view text) {
  ScriptParseResult result;
  std::map<std::tuple<std::string, std::string, std::string, std::string>, std::size_t>
      first_line;
  CsvReader reader(text);
  CsvRecord rec;
  bool first_record = true;

  auto fail = [&](RowErrorKind kind, std::string message) {
    result.errors.push_back({rec.line_number, kind, std::move(message)});
  };

  while (reader.next(rec)) {
    if (is_blank(rec)) continue;
    if (std::exchange(first_record, false) && is_header(rec)) continue;

    if (!rec.malformed.empty()) {
      fail(RowErrorKind::MalformedCsv, rec.malformed);
      continue;
    }
    if (rec.fields.size() != kFieldCount) {
      fail(RowErrorKind::WrongFieldCount, "expected 6 fields, found " +
                                              std::to_string(rec.fields.size()));
      continue;
    }
    auto& f = rec.fields;
    bool row_ok = true;
    for (std::size_t k = 0; k < 3 && row_ok; ++k) {
      const std::string which = "layer" + std::to_string(k + 1);
      if (is_whitespace_only(f[k])) {
        fail(RowErrorKind::EmptyLayerName, which + " is empty");
        row_ok = false;
      } else if (!is_valid_layer_name(f[k])) {
        fail(RowErrorKind::InvalidLayerName,
             which + " '" + f[k] + "' cannot be used as a directory name");
        row_ok = false;
      }
    }
    if (!row_ok) continue;
    if (!is_valid_file_name(f[3])) {
      fail(RowErrorKind::InvalidFileName,
           "file name '" + f[3] + "' must match [A-Za-z0-9_-]+");
      continue;
    }
    std::vector<Segment> sentence;
    try {
      sentence = parse_ruby(f[4]);
    } catch (const RubySyntaxError& e) {
      fail(RowErrorKind::RubySyntaxError,
           std::string(e.what()) + " at byte " + std::to_string(e.offset()));
      continue;
    }
    auto key = std::make_tuple(f[0], f[1], f[2], f[3]);
    auto [it, inserted] = first_line.emplace(key, rec.line_number);
    if (!inserted) {
      fail(RowErrorKind::DuplicateKey,
           "duplicate of line " + std::to_string(it->second));
      continue;
    }
    ScriptItem item;
    item.layer1 = std::move(f[0]);
    item.layer2 = std::move(f[1]);
    item.layer3 = std::move(f[2]);
    item.file_name = std::move(f[3]);
    item.sentence = std::move(sentence);
    item.prosody = std::move(f[5]);
    item.ordinal = result.items.size();
    result.items.push_back(std::move(item));
  }
  if (!result.errors.empty()) result.items.clear();
  return result;
}

std::string serialize_script_csv(const std::vector<ScriptItem>& items) {
  std::string out;
  for (const auto& item : items) {
    append_csv_field(out, item.layer1);
    out.push_back(',');
    append_csv_field(out, item.layer2);
    out.push_back(',');
    append_csv_field(out, item.layer3);
    out.push_back(',');
    append_csv_field(out, item.file_name);
    out.push_back(',');
    append_csv_field(out, serialize_ruby(item.sentence));
    out.push_back(',');
    append_csv_field(out, item.prosody);
    out.push_back('\n');
  }
  return out;
}

std::vector<std::size_t> CorpusManifest::flatten() const {
  std::vector<std::size_t> out;
  out.reserve(item_count);
  for (const auto& leaf : leaves) {
    out.insert(out.end(), leaf.ordinals.begin(), leaf.ordinals.end());
  }
  return out;
}

CorpusManifest build_manifest(const std::vector<ScriptItem>& items) {
  CorpusManifest manifest;
  std::map<std::tuple<std::string, std::string, std::string>, std::size_t> index;
  for (const auto& item : items) {
    auto key = std::make_tuple(item.layer1, item.layer2, item.layer3);
    auto [it, inserted] = index.emplace(key, manifest.leaves.size());
    if (inserted) {
      manifest.leaves.push_back({item.layer1, item.layer2, item.layer3, {}});
    }
    manifest.leaves[it->second].ordinals.push_back(item.ordinal);
  }
  for (auto& leaf : manifest.leaves) std::sort(leaf.ordinals.begin(), leaf.ordinals.end());
  manifest.item_count = items.size();
  return manifest;
}

}  // namespace vocorpus::script
