#pragma once

// Corpus store: accounts and sessions, corpora and their scripts,
// participations, accepted recordings on disk, completion passwords, and the
// deterministic archive export.
//
// Layout under data_dir:
//   index.sqlite3                      metadata (accounts, corpora, ...)
//   recordings/<corpus>/<speaker>/<layer1>/<layer2>/<layer3>/<file>.wav
//   staging/                           short-lived export snapshots
//
// A recording is committed when its index row is committed. Audio goes to
// "<file>.wav.part" first; the index row records its size and CRC; the part
// file is then renamed into place. Opening a store rolls interrupted uploads
// forward or back from that information.

#include <array>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "audio.hpp"
#include "error.hpp"
#include "script.hpp"
#include "zip_writer.hpp"

namespace vocorpus::store {

enum class Role { Builder, Participant };

std::string_view to_string(Role role) noexcept;
std::optional<Role> role_from_string(std::string_view text) noexcept;

struct Profile {
  std::string gender;
  std::uint32_t age = 0;
  std::string birthplace;
  std::string living_place;
};

struct Account {
  std::string account_id;
  Role role = Role::Participant;
  std::string display_name;
  std::string credential_digest;
  Profile profile;
  std::int64_t created_at = 0;
};

/// The authenticated caller of a store operation.
struct Principal {
  std::string account_id;
  Role role = Role::Participant;
  std::string display_name;
};

struct Session {
  std::string token;
  std::int64_t expires_at = 0;
  Principal principal;
};

enum class CorpusStatus { Open, Closed };

struct CorpusSpec {
  std::string title;
  std::string explanation;
  std::string script_csv;
  audio::RecordingConstraints constraints;
  bool manual_review = false;
  std::string device_note;
};

struct Corpus {
  std::string corpus_id;
  std::string builder_id;
  std::string title;
  std::string explanation;
  audio::RecordingConstraints constraints;
  std::vector<script::ScriptItem> items;
  std::string script_csv;
  bool manual_review = false;
  std::string device_note;
  CorpusStatus status = CorpusStatus::Open;
  std::int64_t created_at = 0;
};

/// Raised by create_corpus; carries every bad row.
class ScriptInvalid : public Error {
 public:
  explicit ScriptInvalid(std::vector<script::RowError> rows)
      : Error(ErrorCode::ScriptInvalid,
              std::to_string(rows.size()) + " invalid script row(s)"),
        rows_(std::move(rows)) {}
  const std::vector<script::RowError>& rows() const noexcept { return rows_; }

 private:
  std::vector<script::RowError> rows_;
};

struct Participation {
  std::string corpus_id;
  std::string participant_id;
  std::string display_name;
  std::set<std::size_t> accepted_ordinals;
  std::size_t item_count = 0;
  bool reviewed = false;
  std::optional<std::string> completion_password;
  std::string device_note;

  bool completed() const noexcept { return accepted_ordinals.size() == item_count; }
};

struct ParticipantProgress {
  std::string participant_id;
  std::string display_name;
  std::size_t accepted_count = 0;
  std::size_t item_count = 0;
  bool completed = false;
  bool reviewed = false;
  bool password_issued = false;
};

struct StoredRecording {
  std::string corpus_id;
  std::string participant_id;
  std::size_t ordinal = 0;
  std::string relative_path;
  audio::ValidationReport report;
  std::uint64_t byte_size = 0;
  std::uint32_t crc32 = 0;
  std::int64_t uploaded_at = 0;
};

/// Points in an upload at which a fault hook fires.
enum class FaultPoint {
  TempPartiallyWritten,
  TempWritten,
  IndexCommitted,
  Renamed,
};

struct StoreOptions {
  std::filesystem::path data_dir;
  std::chrono::seconds session_ttl = std::chrono::hours(24);
  /// Unix seconds; defaults to the system clock.
  std::function<std::int64_t()> clock;
  /// Test-only; invoked at each FaultPoint during submit_recording.
  std::function<void(FaultPoint)> fault_hook;
};

struct SpeakerRow {
  std::string display_name;
  Profile profile;
  std::string device_note;
};

/// Consistent view of one corpus taken for export. Audio files are pinned by
/// hard links in a staging directory that is removed with the snapshot.
class ExportSnapshot {
 public:
  ExportSnapshot() = default;
  ExportSnapshot(ExportSnapshot&& other) noexcept;
  ExportSnapshot& operator=(ExportSnapshot&&) = delete;
  ~ExportSnapshot();

  Corpus corpus;
  std::string builder_name;
  std::vector<SpeakerRow> speakers;
  std::vector<StoredRecording> recordings;
  std::vector<std::filesystem::path> pinned;  // parallel to recordings
  std::filesystem::path staging_dir;
};

class Store {
 public:
  explicit Store(StoreOptions options);
  ~Store();
  Store(const Store&) = delete;
  Store& operator=(const Store&) = delete;

  Account register_account(Role role, const std::string& display_name,
                           const std::string& secret, const Profile& profile);
  Session authenticate(const std::string& display_name, Role role,
                       const std::string& secret);
  /// Throws Error(Unauthenticated) for unknown or expired tokens.
  Principal resolve_session(const std::string& token);

  Corpus create_corpus(const Principal& caller, const CorpusSpec& spec);
  Corpus get_corpus(const std::string& corpus_id);
  void close_corpus(const Principal& caller, const std::string& corpus_id);

  /// Per-ordinal accepted flags for the caller. A participant reading the
  /// sentence list joins the corpus.
  std::vector<bool> accepted_flags(const Principal& caller, const std::string& corpus_id);

  audio::ValidationReport submit_recording(const Principal& caller,
                                           const std::string& corpus_id,
                                           std::size_t ordinal,
                                           std::span<const std::uint8_t> wav_payload);

  std::vector<ParticipantProgress> progress(const Principal& caller,
                                            const std::string& corpus_id);
  void mark_reviewed(const Principal& caller, const std::string& corpus_id,
                     const std::string& participant_id);
  std::string issue_completion_password(const Principal& caller,
                                        const std::string& corpus_id,
                                        const std::string& participant_id);
  std::string read_completion_password(const Principal& caller,
                                       const std::string& corpus_id,
                                       const std::string& participant_id);

  ExportSnapshot snapshot_export(const Principal& caller, const std::string& corpus_id);
  void write_export(const ExportSnapshot& snapshot, const ZipWriter::Sink& sink);
  std::vector<std::uint8_t> export_corpus(const Principal& caller,
                                          const std::string& corpus_id);

  /// The builder that owns `corpus_id`, for operator tooling.
  Principal corpus_owner(const std::string& corpus_id);

  std::vector<StoredRecording> list_recordings(const std::string& corpus_id);
  Participation participation(const std::string& corpus_id,
                              const std::string& participant_id);
  /// Describes every mismatch between the index and the audio files.
  std::vector<std::string> verify_integrity();

  const std::filesystem::path& data_dir() const noexcept { return options_.data_dir; }
  std::filesystem::path recording_path(const std::string& corpus_id,
                                       const std::string& relative_path) const;

 private:
  class Db;
  std::shared_ptr<const Corpus> load_corpus(const std::string& corpus_id);
  std::shared_ptr<const Corpus> load_corpus_locked(const std::string& corpus_id);
  std::shared_ptr<const Corpus> owned_corpus(const Principal& caller,
                                             const std::string& corpus_id);
  std::vector<StoredRecording> list_recordings_locked(const std::string& corpus_id);
  std::optional<StoredRecording> find_recording_locked(const std::string& corpus_id,
                                                       const std::string& participant_id,
                                                       std::size_t ordinal);
  std::optional<Participation> find_participation_locked(const Corpus& corpus,
                                                         const std::string& participant_id);
  void ensure_participation_locked(const Corpus& corpus, const Principal& participant);
  std::int64_t now() const;
  void recover();
  void fault(FaultPoint point) const;
  std::mutex& key_mutex(const std::string& key);
  const std::string& dummy_digest();

  StoreOptions options_;
  std::unique_ptr<Db> db_;
  std::mutex db_mutex_;
  std::map<std::string, std::shared_ptr<const Corpus>> corpora_;
  std::array<std::mutex, 64> key_mutexes_;
  std::once_flag dummy_once_;
  std::string dummy_digest_;
};

/// Display names double as speaker directory names: 1-64 characters from
/// [A-Za-z0-9_.-], not starting with '.'.
bool is_valid_display_name(std::string_view name) noexcept;

/// 12 characters from an alphabet without look-alike glyphs.
inline constexpr std::string_view kPasswordAlphabet =
    "23456789ABCDEFGHJKLMNPQRSTUVWXYZabcdefghijkmnpqrstuvwxyz";
inline constexpr std::size_t kPasswordLength = 12;
inline constexpr std::size_t kMinSecretLength = 8;

}  // namespace vocorpus::store
