#include "store.hpp"

#include <fcntl.h>
#include <sodium.h>
#include <sqlite3.h>
#include <unistd.h>
#include <zlib.h>

#include <algorithm>
#include <fstream>
#include <iterator>
#include <unordered_set>

#include "json_codec.hpp"

namespace fs = std::filesystem;

namespace vocorpus::store {
namespace {

constexpr int kSchemaVersion = 1;

const char* kSchema = R"sql(
CREATE TABLE IF NOT EXISTS meta(
  key TEXT PRIMARY KEY,
  value TEXT NOT NULL);
CREATE TABLE IF NOT EXISTS accounts(
  account_id TEXT PRIMARY KEY,
  role TEXT NOT NULL,
  display_name TEXT NOT NULL,
  credential_digest TEXT NOT NULL,
  gender TEXT NOT NULL,
  age INTEGER NOT NULL,
  birthplace TEXT NOT NULL,
  living_place TEXT NOT NULL,
  created_at INTEGER NOT NULL,
  UNIQUE(role, display_name));
CREATE TABLE IF NOT EXISTS sessions(
  token_hash TEXT PRIMARY KEY,
  account_id TEXT NOT NULL REFERENCES accounts(account_id),
  expires_at INTEGER NOT NULL);
CREATE TABLE IF NOT EXISTS corpora(
  corpus_id TEXT PRIMARY KEY,
  builder_id TEXT NOT NULL REFERENCES accounts(account_id),
  title TEXT NOT NULL,
  explanation TEXT NOT NULL,
  constraints_json TEXT NOT NULL,
  script_csv TEXT NOT NULL,
  manual_review INTEGER NOT NULL,
  device_note TEXT NOT NULL,
  status TEXT NOT NULL,
  created_at INTEGER NOT NULL);
CREATE TABLE IF NOT EXISTS participations(
  corpus_id TEXT NOT NULL REFERENCES corpora(corpus_id),
  participant_id TEXT NOT NULL REFERENCES accounts(account_id),
  reviewed INTEGER NOT NULL DEFAULT 0,
  completion_password TEXT,
  device_note TEXT NOT NULL,
  joined_at INTEGER NOT NULL,
  PRIMARY KEY(corpus_id, participant_id));
CREATE TABLE IF NOT EXISTS recordings(
  corpus_id TEXT NOT NULL,
  participant_id TEXT NOT NULL,
  ordinal INTEGER NOT NULL,
  relative_path TEXT NOT NULL,
  report_json TEXT NOT NULL,
  byte_size INTEGER NOT NULL,
  crc32 INTEGER NOT NULL,
  uploaded_at INTEGER NOT NULL,
  PRIMARY KEY(corpus_id, participant_id, ordinal),
  UNIQUE(corpus_id, relative_path),
  FOREIGN KEY(corpus_id, participant_id)
    REFERENCES participations(corpus_id, participant_id));
)sql";

[[noreturn]] void io_error(const std::string& what) {
  throw Error(ErrorCode::Io, what);
}

class Statement {
 public:
  Statement(sqlite3* db, const char* sql) : db_(db) {
    if (sqlite3_prepare_v2(db, sql, -1, &stmt_, nullptr) != SQLITE_OK) {
      throw Error(ErrorCode::Internal, std::string("sqlite prepare: ") + sqlite3_errmsg(db));
    }
  }
  ~Statement() { sqlite3_finalize(stmt_); }
  Statement(const Statement&) = delete;
  Statement& operator=(const Statement&) = delete;

  Statement& bind(int idx, std::string_view v) {
    check(sqlite3_bind_text(stmt_, idx, v.data(), static_cast<int>(v.size()),
                            SQLITE_TRANSIENT));
    return *this;
  }
  Statement& bind(int idx, const std::string& v) { return bind(idx, std::string_view(v)); }
  Statement& bind(int idx, const char* v) { return bind(idx, std::string_view(v)); }
  Statement& bind(int idx, std::int64_t v) {
    check(sqlite3_bind_int64(stmt_, idx, v));
    return *this;
  }
  Statement& bind_null(int idx) {
    check(sqlite3_bind_null(stmt_, idx));
    return *this;
  }

  /// True while rows remain.
  bool step() {
    const int rc = sqlite3_step(stmt_);
    if (rc == SQLITE_ROW) return true;
    if (rc == SQLITE_DONE) return false;
    if (rc == SQLITE_CONSTRAINT) {
      throw Error(ErrorCode::InvalidArgument,
                  std::string("constraint violated: ") + sqlite3_errmsg(db_));
    }
    throw Error(ErrorCode::Internal, std::string("sqlite step: ") + sqlite3_errmsg(db_));
  }
  void run() { while (step()) {} }

  std::string text(int col) const {
    auto p = sqlite3_column_text(stmt_, col);
    if (p == nullptr) return {};
    return std::string(reinterpret_cast<const char*>(p),
                       static_cast<std::size_t>(sqlite3_column_bytes(stmt_, col)));
  }
  std::int64_t integer(int col) const { return sqlite3_column_int64(stmt_, col); }
  bool is_null(int col) const { return sqlite3_column_type(stmt_, col) == SQLITE_NULL; }

 private:
  void check(int rc) {
    if (rc != SQLITE_OK) {
      throw Error(ErrorCode::Internal, std::string("sqlite bind: ") + sqlite3_errmsg(db_));
    }
  }

  sqlite3* db_;
  sqlite3_stmt* stmt_ = nullptr;
};

std::string random_hex(std::size_t bytes) {
  std::vector<unsigned char> buf(bytes);
  randombytes_buf(buf.data(), buf.size());
  std::string hex(bytes * 2 + 1, '\0');
  sodium_bin2hex(hex.data(), hex.size(), buf.data(), buf.size());
  hex.pop_back();
  return hex;
}

std::string sha256_hex(std::string_view text) {
  unsigned char out[crypto_hash_sha256_BYTES];
  crypto_hash_sha256(out, reinterpret_cast<const unsigned char*>(text.data()), text.size());
  std::string hex(sizeof out * 2 + 1, '\0');
  sodium_bin2hex(hex.data(), hex.size(), out, sizeof out);
  hex.pop_back();
  return hex;
}

std::string hash_secret(const std::string& secret) {
  char digest[crypto_pwhash_STRBYTES];
  if (crypto_pwhash_str(digest, secret.data(), secret.size(),
                        crypto_pwhash_OPSLIMIT_INTERACTIVE,
                        crypto_pwhash_MEMLIMIT_INTERACTIVE) != 0) {
    throw Error(ErrorCode::Internal, "out of memory while hashing a secret");
  }
  return digest;
}

bool verify_secret(const std::string& digest, const std::string& secret) {
  return crypto_pwhash_str_verify(digest.c_str(), secret.data(), secret.size()) == 0;
}

std::string generate_password() {
  std::string out;
  out.reserve(kPasswordLength);
  for (std::size_t i = 0; i < kPasswordLength; ++i) {
    out.push_back(kPasswordAlphabet[randombytes_uniform(
        static_cast<std::uint32_t>(kPasswordAlphabet.size()))]);
  }
  return out;
}

std::uint32_t crc_of(std::span<const std::uint8_t> data) {
  return static_cast<std::uint32_t>(
      ::crc32(::crc32(0L, Z_NULL, 0), data.data(), static_cast<uInt>(data.size())));
}

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) io_error("cannot open " + path.filename().string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void fsync_dir(const fs::path& dir) {
  const int fd = ::open(dir.c_str(), O_RDONLY | O_DIRECTORY);
  if (fd < 0) return;
  ::fsync(fd);
  ::close(fd);
}

void write_all(int fd, std::span<const std::uint8_t> bytes) {
  while (!bytes.empty()) {
    const auto n = ::write(fd, bytes.data(), bytes.size());
    if (n < 0) {
      if (errno == EINTR) continue;
      io_error("write failed");
    }
    bytes = bytes.subspan(static_cast<std::size_t>(n));
  }
}

std::string_view status_string(CorpusStatus s) {
  return s == CorpusStatus::Open ? "open" : "closed";
}

void require_owner(const Principal& caller, const Corpus& corpus) {
  if (caller.role != Role::Builder || caller.account_id != corpus.builder_id) {
    throw Error(ErrorCode::Unauthorized, "only the corpus builder may do this");
  }
}

StoredRecording recording_from_row(const Statement& st) {
  StoredRecording r;
  r.corpus_id = st.text(0);
  r.participant_id = st.text(1);
  r.ordinal = static_cast<std::size_t>(st.integer(2));
  r.relative_path = st.text(3);
  r.report = json::report_from_json(nlohmann::json::parse(st.text(4)));
  r.byte_size = static_cast<std::uint64_t>(st.integer(5));
  r.crc32 = static_cast<std::uint32_t>(st.integer(6));
  r.uploaded_at = st.integer(7);
  return r;
}

constexpr const char* kRecordingColumns =
    "corpus_id, participant_id, ordinal, relative_path, report_json, byte_size, "
    "crc32, uploaded_at";

}  // namespace

std::string_view to_string(Role role) noexcept {
  return role == Role::Builder ? "builder" : "participant";
}

std::optional<Role> role_from_string(std::string_view text) noexcept {
  if (text == "builder") return Role::Builder;
  if (text == "participant") return Role::Participant;
  return std::nullopt;
}

bool is_valid_display_name(std::string_view name) noexcept {
  if (name.empty() || name.size() > 64 || name.front() == '.') return false;
  return std::all_of(name.begin(), name.end(), [](char c) {
    return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') ||
           (c >= '0' && c <= '9') || c == '_' || c == '-' || c == '.';
  });
}

// ---------------------------------------------------------------------------

class Store::Db {
 public:
  explicit Db(const fs::path& file) {
    if (sqlite3_open_v2(file.c_str(), &db_, SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE,
                        nullptr) != SQLITE_OK) {
      std::string msg = db_ ? sqlite3_errmsg(db_) : "out of memory";
      sqlite3_close(db_);
      io_error("cannot open index: " + msg);
    }
    sqlite3_busy_timeout(db_, 5000);
    exec("PRAGMA journal_mode=WAL");
    exec("PRAGMA synchronous=FULL");
    exec("PRAGMA foreign_keys=ON");
    exec(kSchema);
  }
  ~Db() { sqlite3_close(db_); }

  void exec(const char* sql) {
    char* err = nullptr;
    if (sqlite3_exec(db_, sql, nullptr, nullptr, &err) != SQLITE_OK) {
      std::string msg = err ? err : "unknown";
      sqlite3_free(err);
      throw Error(ErrorCode::Internal, "sqlite: " + msg);
    }
  }
  Statement prepare(const char* sql) { return Statement(db_, sql); }
  Statement prepare(const std::string& sql) { return Statement(db_, sql.c_str()); }
  int changes() const { return sqlite3_changes(db_); }

  class Transaction {
   public:
    explicit Transaction(Db& db) : db_(db) { db_.exec("BEGIN IMMEDIATE"); }
    ~Transaction() {
      if (!done_) {
        try {
          db_.exec("ROLLBACK");
        } catch (...) {
        }
      }
    }
    void commit() {
      db_.exec("COMMIT");
      done_ = true;
    }

   private:
    Db& db_;
    bool done_ = false;
  };

 private:
  sqlite3* db_ = nullptr;
};

// ---------------------------------------------------------------------------

ExportSnapshot::ExportSnapshot(ExportSnapshot&& other) noexcept
    : corpus(std::move(other.corpus)),
      builder_name(std::move(other.builder_name)),
      speakers(std::move(other.speakers)),
      recordings(std::move(other.recordings)),
      pinned(std::move(other.pinned)),
      staging_dir(std::exchange(other.staging_dir, {})) {}

ExportSnapshot::~ExportSnapshot() {
  if (!staging_dir.empty()) {
    std::error_code ec;
    fs::remove_all(staging_dir, ec);
  }
}

Store::Store(StoreOptions options) : options_(std::move(options)) {
  if (sodium_init() < 0) throw Error(ErrorCode::Internal, "libsodium failed to initialise");
  if (options_.data_dir.empty()) throw Error(ErrorCode::InvalidArgument, "data_dir is empty");
  if (!options_.clock) {
    options_.clock = [] {
      return std::chrono::duration_cast<std::chrono::seconds>(
                 std::chrono::system_clock::now().time_since_epoch())
          .count();
    };
  }
  std::error_code ec;
  fs::create_directories(options_.data_dir / "recordings", ec);
  if (ec) io_error("cannot create data directory: " + ec.message());
  fs::remove_all(options_.data_dir / "staging", ec);
  fs::create_directories(options_.data_dir / "staging", ec);
  if (ec) io_error("cannot create staging directory: " + ec.message());

  db_ = std::make_unique<Db>(options_.data_dir / "index.sqlite3");
  {
    auto st = db_->prepare("INSERT OR IGNORE INTO meta(key, value) VALUES('schema_version', ?)");
    st.bind(1, std::to_string(kSchemaVersion)).run();
  }
  recover();
}

Store::~Store() = default;

std::int64_t Store::now() const { return options_.clock(); }

void Store::fault(FaultPoint point) const {
  if (options_.fault_hook) options_.fault_hook(point);
}

std::mutex& Store::key_mutex(const std::string& key) {
  return key_mutexes_[std::hash<std::string>{}(key) % key_mutexes_.size()];
}

const std::string& Store::dummy_digest() {
  std::call_once(dummy_once_, [this] { dummy_digest_ = hash_secret(random_hex(16)); });
  return dummy_digest_;
}

fs::path Store::recording_path(const std::string& corpus_id,
                               const std::string& relative_path) const {
  return options_.data_dir / "recordings" / corpus_id / fs::path(relative_path);
}

// -- accounts ---------------------------------------------------------------

Account Store::register_account(Role role, const std::string& display_name,
                                const std::string& secret, const Profile& profile) {
  if (!is_valid_display_name(display_name)) {
    throw Error(ErrorCode::InvalidName,
                "display_name must be 1-64 characters from [A-Za-z0-9_.-]");
  }
  if (secret.size() < kMinSecretLength) {
    throw Error(ErrorCode::WeakSecret, "secret must be at least 8 characters");
  }
  Account account;
  account.account_id = random_hex(8);
  account.role = role;
  account.display_name = display_name;
  account.profile = profile;
  account.created_at = now();
  account.credential_digest = hash_secret(secret);

  std::lock_guard lock(db_mutex_);
  {
    auto st = db_->prepare("SELECT 1 FROM accounts WHERE role = ? AND display_name = ?");
    st.bind(1, to_string(role)).bind(2, display_name);
    if (st.step()) throw Error(ErrorCode::NameTaken, "display_name is already taken");
  }
  auto st = db_->prepare(
      "INSERT INTO accounts(account_id, role, display_name, credential_digest, gender, age, "
      "birthplace, living_place, created_at) VALUES(?,?,?,?,?,?,?,?,?)");
  st.bind(1, account.account_id)
      .bind(2, to_string(role))
      .bind(3, display_name)
      .bind(4, account.credential_digest)
      .bind(5, profile.gender)
      .bind(6, static_cast<std::int64_t>(profile.age))
      .bind(7, profile.birthplace)
      .bind(8, profile.living_place)
      .bind(9, account.created_at)
      .run();
  return account;
}

Session Store::authenticate(const std::string& display_name, Role role,
                            const std::string& secret) {
  std::optional<Principal> principal;
  std::string digest;
  {
    std::lock_guard lock(db_mutex_);
    auto st = db_->prepare(
        "SELECT account_id, credential_digest FROM accounts WHERE role = ? AND display_name = ?");
    st.bind(1, to_string(role)).bind(2, display_name);
    if (st.step()) {
      principal = Principal{st.text(0), role, display_name};
      digest = st.text(1);
    }
  }
  // Unknown names still pay for one verification so both failures look alike.
  const bool ok = principal ? verify_secret(digest, secret)
                            : (verify_secret(dummy_digest(), secret), false);
  if (!ok) throw Error(ErrorCode::AuthFailure, "invalid credentials");

  Session session;
  session.token = random_hex(32);
  session.expires_at = now() + options_.session_ttl.count();
  session.principal = *principal;
  std::lock_guard lock(db_mutex_);
  db_->prepare("DELETE FROM sessions WHERE expires_at <= ?").bind(1, now()).run();
  db_->prepare("INSERT INTO sessions(token_hash, account_id, expires_at) VALUES(?,?,?)")
      .bind(1, sha256_hex(session.token))
      .bind(2, principal->account_id)
      .bind(3, session.expires_at)
      .run();
  return session;
}

Principal Store::resolve_session(const std::string& token) {
  if (token.empty()) throw Error(ErrorCode::Unauthenticated, "missing session token");
  std::lock_guard lock(db_mutex_);
  auto st = db_->prepare(
      "SELECT a.account_id, a.role, a.display_name, s.expires_at FROM sessions s "
      "JOIN accounts a ON a.account_id = s.account_id WHERE s.token_hash = ?");
  st.bind(1, sha256_hex(token));
  if (!st.step() || st.integer(3) <= now()) {
    throw Error(ErrorCode::Unauthenticated, "session is missing or expired");
  }
  return Principal{st.text(0), *role_from_string(st.text(1)), st.text(2)};
}

// -- corpora ----------------------------------------------------------------

std::shared_ptr<const Corpus> Store::load_corpus_locked(const std::string& corpus_id) {
  if (auto it = corpora_.find(corpus_id); it != corpora_.end()) return it->second;
  auto st = db_->prepare(
      "SELECT builder_id, title, explanation, constraints_json, script_csv, manual_review, "
      "device_note, status, created_at FROM corpora WHERE corpus_id = ?");
  st.bind(1, corpus_id);
  if (!st.step()) throw Error(ErrorCode::UnknownCorpus, "no such corpus");
  auto corpus = std::make_shared<Corpus>();
  corpus->corpus_id = corpus_id;
  corpus->builder_id = st.text(0);
  corpus->title = st.text(1);
  corpus->explanation = st.text(2);
  corpus->constraints = json::constraints_from_json(nlohmann::json::parse(st.text(3)));
  corpus->script_csv = st.text(4);
  corpus->manual_review = st.integer(5) != 0;
  corpus->device_note = st.text(6);
  corpus->status = st.text(7) == "open" ? CorpusStatus::Open : CorpusStatus::Closed;
  corpus->created_at = st.integer(8);
  auto parsed = script::parse_script_csv(corpus->script_csv);
  if (!parsed.ok()) throw Error(ErrorCode::Internal, "stored script no longer parses");
  corpus->items = std::move(parsed.items);
  corpora_[corpus_id] = corpus;
  return corpus;
}

std::shared_ptr<const Corpus> Store::load_corpus(const std::string& corpus_id) {
  std::lock_guard lock(db_mutex_);
  return load_corpus_locked(corpus_id);
}

std::shared_ptr<const Corpus> Store::owned_corpus(const Principal& caller,
                                                  const std::string& corpus_id) {
  auto corpus = load_corpus(corpus_id);
  require_owner(caller, *corpus);
  return corpus;
}

Corpus Store::create_corpus(const Principal& caller, const CorpusSpec& spec) {
  if (caller.role != Role::Builder) {
    throw Error(ErrorCode::Unauthorized, "only builders create corpora");
  }
  if (spec.title.empty()) throw Error(ErrorCode::InvalidArgument, "title is empty");
  spec.constraints.check();
  auto parsed = script::parse_script_csv(spec.script_csv);
  if (!parsed.ok()) throw ScriptInvalid(std::move(parsed.errors));
  if (parsed.items.empty()) {
    throw Error(ErrorCode::InvalidArgument, "script contains no items");
  }

  auto corpus = std::make_shared<Corpus>();
  corpus->corpus_id = random_hex(8);
  corpus->builder_id = caller.account_id;
  corpus->title = spec.title;
  corpus->explanation = spec.explanation;
  corpus->constraints = spec.constraints;
  corpus->items = std::move(parsed.items);
  corpus->script_csv = spec.script_csv;
  corpus->manual_review = spec.manual_review;
  corpus->device_note = spec.device_note;
  corpus->created_at = now();

  std::lock_guard lock(db_mutex_);
  db_->prepare(
         "INSERT INTO corpora(corpus_id, builder_id, title, explanation, constraints_json, "
         "script_csv, manual_review, device_note, status, created_at) "
         "VALUES(?,?,?,?,?,?,?,?,?,?)")
      .bind(1, corpus->corpus_id)
      .bind(2, corpus->builder_id)
      .bind(3, corpus->title)
      .bind(4, corpus->explanation)
      .bind(5, json::to_json(corpus->constraints).dump())
      .bind(6, corpus->script_csv)
      .bind(7, std::int64_t{corpus->manual_review ? 1 : 0})
      .bind(8, corpus->device_note)
      .bind(9, status_string(corpus->status))
      .bind(10, corpus->created_at)
      .run();
  corpora_[corpus->corpus_id] = corpus;
  return *corpus;
}

Corpus Store::get_corpus(const std::string& corpus_id) { return *load_corpus(corpus_id); }

Principal Store::corpus_owner(const std::string& corpus_id) {
  std::lock_guard lock(db_mutex_);
  auto corpus = load_corpus_locked(corpus_id);
  auto st = db_->prepare("SELECT display_name FROM accounts WHERE account_id = ?");
  st.bind(1, corpus->builder_id);
  if (!st.step()) throw Error(ErrorCode::Internal, "corpus builder account is missing");
  return Principal{corpus->builder_id, Role::Builder, st.text(0)};
}

void Store::close_corpus(const Principal& caller, const std::string& corpus_id) {
  auto corpus = owned_corpus(caller, corpus_id);
  std::lock_guard lock(db_mutex_);
  db_->prepare("UPDATE corpora SET status = 'closed' WHERE corpus_id = ?")
      .bind(1, corpus_id)
      .run();
  auto updated = std::make_shared<Corpus>(*corpus);
  updated->status = CorpusStatus::Closed;
  corpora_[corpus_id] = std::move(updated);
}

// -- participations ---------------------------------------------------------

void Store::ensure_participation_locked(const Corpus& corpus, const Principal& participant) {
  db_->prepare(
         "INSERT OR IGNORE INTO participations(corpus_id, participant_id, device_note, "
         "joined_at) VALUES(?,?,?,?)")
      .bind(1, corpus.corpus_id)
      .bind(2, participant.account_id)
      .bind(3, corpus.device_note)
      .bind(4, now())
      .run();
}

std::optional<Participation> Store::find_participation_locked(
    const Corpus& corpus, const std::string& participant_id) {
  auto st = db_->prepare(
      "SELECT p.reviewed, p.completion_password, p.device_note, a.display_name "
      "FROM participations p JOIN accounts a ON a.account_id = p.participant_id "
      "WHERE p.corpus_id = ? AND p.participant_id = ?");
  st.bind(1, corpus.corpus_id).bind(2, participant_id);
  if (!st.step()) return std::nullopt;
  Participation p;
  p.corpus_id = corpus.corpus_id;
  p.participant_id = participant_id;
  p.reviewed = st.integer(0) != 0;
  if (!st.is_null(1)) p.completion_password = st.text(1);
  p.device_note = st.text(2);
  p.display_name = st.text(3);
  p.item_count = corpus.items.size();
  auto ords = db_->prepare(
      "SELECT ordinal FROM recordings WHERE corpus_id = ? AND participant_id = ?");
  ords.bind(1, corpus.corpus_id).bind(2, participant_id);
  while (ords.step()) p.accepted_ordinals.insert(static_cast<std::size_t>(ords.integer(0)));
  return p;
}

Participation Store::participation(const std::string& corpus_id,
                                   const std::string& participant_id) {
  std::lock_guard lock(db_mutex_);
  auto corpus = load_corpus_locked(corpus_id);
  auto p = find_participation_locked(*corpus, participant_id);
  if (!p) throw Error(ErrorCode::UnknownParticipant, "participant has not joined this corpus");
  return *p;
}

std::vector<bool> Store::accepted_flags(const Principal& caller, const std::string& corpus_id) {
  std::lock_guard lock(db_mutex_);
  auto corpus = load_corpus_locked(corpus_id);
  std::vector<bool> flags(corpus->items.size(), false);
  if (caller.role != Role::Participant) return flags;
  if (corpus->status == CorpusStatus::Open) ensure_participation_locked(*corpus, caller);
  if (auto p = find_participation_locked(*corpus, caller.account_id)) {
    for (auto ord : p->accepted_ordinals) flags[ord] = true;
  }
  return flags;
}

std::vector<ParticipantProgress> Store::progress(const Principal& caller,
                                                 const std::string& corpus_id) {
  auto corpus = owned_corpus(caller, corpus_id);
  std::lock_guard lock(db_mutex_);
  auto st = db_->prepare(
      "SELECT p.participant_id, a.display_name, p.reviewed, p.completion_password IS NOT NULL, "
      "(SELECT COUNT(*) FROM recordings r WHERE r.corpus_id = p.corpus_id "
      " AND r.participant_id = p.participant_id) "
      "FROM participations p JOIN accounts a ON a.account_id = p.participant_id "
      "WHERE p.corpus_id = ? ORDER BY a.display_name");
  st.bind(1, corpus_id);
  std::vector<ParticipantProgress> rows;
  while (st.step()) {
    ParticipantProgress row;
    row.participant_id = st.text(0);
    row.display_name = st.text(1);
    row.reviewed = st.integer(2) != 0;
    row.password_issued = st.integer(3) != 0;
    row.accepted_count = static_cast<std::size_t>(st.integer(4));
    row.item_count = corpus->items.size();
    row.completed = row.accepted_count == row.item_count;
    rows.push_back(std::move(row));
  }
  return rows;
}

void Store::mark_reviewed(const Principal& caller, const std::string& corpus_id,
                          const std::string& participant_id) {
  auto corpus = owned_corpus(caller, corpus_id);
  std::lock_guard lock(db_mutex_);
  auto p = find_participation_locked(*corpus, participant_id);
  if (!p) throw Error(ErrorCode::UnknownParticipant, "participant has not joined this corpus");
  if (!p->completed()) throw Error(ErrorCode::NotCompleted, "participant has not finished");
  db_->prepare("UPDATE participations SET reviewed = 1 WHERE corpus_id = ? AND participant_id = ?")
      .bind(1, corpus_id)
      .bind(2, participant_id)
      .run();
}

std::string Store::issue_completion_password(const Principal& caller,
                                             const std::string& corpus_id,
                                             const std::string& participant_id) {
  auto corpus = owned_corpus(caller, corpus_id);
  std::lock_guard lock(db_mutex_);
  auto p = find_participation_locked(*corpus, participant_id);
  if (!p) throw Error(ErrorCode::UnknownParticipant, "participant has not joined this corpus");
  if (p->completion_password) return *p->completion_password;
  if (!p->completed()) throw Error(ErrorCode::NotCompleted, "participant has not finished");
  if (corpus->manual_review && !p->reviewed) {
    throw Error(ErrorCode::NotReviewed, "participation must be reviewed first");
  }
  auto password = generate_password();
  db_->prepare(
         "UPDATE participations SET completion_password = ? "
         "WHERE corpus_id = ? AND participant_id = ?")
      .bind(1, password)
      .bind(2, corpus_id)
      .bind(3, participant_id)
      .run();
  return password;
}

std::string Store::read_completion_password(const Principal& caller,
                                            const std::string& corpus_id,
                                            const std::string& participant_id) {
  std::lock_guard lock(db_mutex_);
  auto corpus = load_corpus_locked(corpus_id);
  if (caller.role != Role::Participant || caller.account_id != participant_id) {
    throw Error(ErrorCode::Unauthorized, "a password is readable only by its participant");
  }
  auto p = find_participation_locked(*corpus, participant_id);
  if (!p || !p->completion_password) {
    throw Error(ErrorCode::NotIssued, "no completion password has been issued");
  }
  return *p->completion_password;
}

// -- recordings -------------------------------------------------------------

std::optional<StoredRecording> Store::find_recording_locked(const std::string& corpus_id,
                                                            const std::string& participant_id,
                                                            std::size_t ordinal) {
  auto st = db_->prepare(std::string("SELECT ") + kRecordingColumns +
                         " FROM recordings WHERE corpus_id = ? AND participant_id = ? AND "
                         "ordinal = ?");
  st.bind(1, corpus_id).bind(2, participant_id).bind(3, static_cast<std::int64_t>(ordinal));
  if (!st.step()) return std::nullopt;
  return recording_from_row(st);
}

std::vector<StoredRecording> Store::list_recordings_locked(const std::string& corpus_id) {
  auto st = db_->prepare(std::string("SELECT ") + kRecordingColumns +
                         " FROM recordings WHERE corpus_id = ? ORDER BY relative_path");
  st.bind(1, corpus_id);
  std::vector<StoredRecording> out;
  while (st.step()) out.push_back(recording_from_row(st));
  return out;
}

std::vector<StoredRecording> Store::list_recordings(const std::string& corpus_id) {
  std::lock_guard lock(db_mutex_);
  return list_recordings_locked(corpus_id);
}

audio::ValidationReport Store::submit_recording(const Principal& caller,
                                                const std::string& corpus_id,
                                                std::size_t ordinal,
                                                std::span<const std::uint8_t> wav_payload) {
  auto corpus = load_corpus(corpus_id);
  if (caller.role != Role::Participant) {
    throw Error(ErrorCode::Unauthorized, "only participants submit recordings");
  }
  if (corpus->status != CorpusStatus::Open) {
    throw Error(ErrorCode::CorpusClosed, "corpus is closed");
  }
  if (ordinal >= corpus->items.size()) {
    throw Error(ErrorCode::BadOrdinal, "no script item with that ordinal");
  }

  audio::PcmClip clip;
  const auto report = audio::validate_payload(wav_payload, corpus->constraints, &clip);
  if (!report.accepted) return report;

  const auto& item = corpus->items[ordinal];
  const std::string relative = caller.display_name + "/" + script::layer_path(item);
  const auto bytes = audio::encode_wav(clip);
  const auto crc = crc_of(bytes);
  const fs::path final_path = recording_path(corpus_id, relative);
  fs::path part_path = final_path;
  part_path += ".part";

  std::lock_guard key_lock(
      key_mutex(corpus_id + '\n' + caller.account_id + '\n' + std::to_string(ordinal)));

  std::error_code ec;
  fs::create_directories(final_path.parent_path(), ec);
  if (ec) io_error("cannot create recording directory: " + ec.message());
  {
    const int fd = ::open(part_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
    if (fd < 0) io_error("cannot create temporary recording file");
    try {
      const std::span<const std::uint8_t> all(bytes);
      write_all(fd, all.first(all.size() / 2));
      fault(FaultPoint::TempPartiallyWritten);
      write_all(fd, all.subspan(all.size() / 2));
      if (::fsync(fd) != 0) io_error("fsync failed");
    } catch (...) {
      ::close(fd);
      fs::remove(part_path, ec);
      throw;
    }
    ::close(fd);
  }
  fault(FaultPoint::TempWritten);

  try {
    std::lock_guard lock(db_mutex_);
    Db::Transaction txn(*db_);
    ensure_participation_locked(*corpus, caller);
    db_->prepare(
           "INSERT INTO recordings(corpus_id, participant_id, ordinal, relative_path, "
           "report_json, byte_size, crc32, uploaded_at) VALUES(?,?,?,?,?,?,?,?) "
           "ON CONFLICT(corpus_id, participant_id, ordinal) DO UPDATE SET "
           "relative_path = excluded.relative_path, report_json = excluded.report_json, "
           "byte_size = excluded.byte_size, crc32 = excluded.crc32, "
           "uploaded_at = excluded.uploaded_at")
        .bind(1, corpus_id)
        .bind(2, caller.account_id)
        .bind(3, static_cast<std::int64_t>(ordinal))
        .bind(4, relative)
        .bind(5, json::to_json(report).dump())
        .bind(6, static_cast<std::int64_t>(bytes.size()))
        .bind(7, static_cast<std::int64_t>(crc))
        .bind(8, now())
        .run();
    txn.commit();
  } catch (...) {
    fs::remove(part_path, ec);
    throw;
  }
  fault(FaultPoint::IndexCommitted);

  fs::rename(part_path, final_path, ec);
  if (ec) io_error("cannot move recording into place: " + ec.message());
  fsync_dir(final_path.parent_path());
  fault(FaultPoint::Renamed);
  return report;
}

void Store::recover() {
  const fs::path root = options_.data_dir / "recordings";
  std::unordered_set<std::string> referenced;
  std::vector<StoredRecording> rows;
  {
    std::lock_guard lock(db_mutex_);
    auto st = db_->prepare(std::string("SELECT ") + kRecordingColumns + " FROM recordings");
    while (st.step()) rows.push_back(recording_from_row(st));
  }
  std::error_code ec;
  for (const auto& row : rows) {
    const auto final_path = recording_path(row.corpus_id, row.relative_path);
    referenced.insert(final_path.lexically_normal().string());
    fs::path part_path = final_path;
    part_path += ".part";
    if (!fs::exists(part_path, ec)) continue;
    // The part file is the committed version iff it matches the index row.
    const auto bytes = read_file(part_path);
    if (bytes.size() == row.byte_size && crc_of(bytes) == row.crc32) {
      fs::rename(part_path, final_path, ec);
      fsync_dir(final_path.parent_path());
    } else {
      fs::remove(part_path, ec);
    }
  }
  if (!fs::exists(root, ec)) return;
  std::vector<fs::path> stray;
  for (const auto& entry : fs::recursive_directory_iterator(root, ec)) {
    if (!entry.is_regular_file()) continue;
    const auto& p = entry.path();
    if (p.extension() == ".part" || !referenced.contains(p.lexically_normal().string())) {
      stray.push_back(p);
    }
  }
  for (const auto& p : stray) fs::remove(p, ec);
}

std::vector<std::string> Store::verify_integrity() {
  std::vector<std::string> problems;
  std::vector<StoredRecording> rows;
  {
    std::lock_guard lock(db_mutex_);
    auto st = db_->prepare(std::string("SELECT ") + kRecordingColumns + " FROM recordings");
    while (st.step()) rows.push_back(recording_from_row(st));
  }
  std::unordered_set<std::string> referenced;
  std::error_code ec;
  for (const auto& row : rows) {
    const auto path = recording_path(row.corpus_id, row.relative_path);
    referenced.insert(path.lexically_normal().string());
    if (!fs::exists(path, ec)) {
      problems.push_back("missing file for " + row.corpus_id + "/" + row.relative_path);
      continue;
    }
    const auto bytes = read_file(path);
    if (bytes.size() != row.byte_size || crc_of(bytes) != row.crc32) {
      problems.push_back("content mismatch for " + row.corpus_id + "/" + row.relative_path);
      continue;
    }
    try {
      audio::parse_wav(bytes);
    } catch (const Error&) {
      problems.push_back("unreadable WAV " + row.corpus_id + "/" + row.relative_path);
    }
  }
  const fs::path root = options_.data_dir / "recordings";
  for (const auto& entry : fs::recursive_directory_iterator(root, ec)) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), root).generic_string();
    if (entry.path().extension() == ".part") {
      problems.push_back("leftover temporary file " + rel);
    } else if (!referenced.contains(entry.path().lexically_normal().string())) {
      problems.push_back("unindexed file " + rel);
    }
  }
  return problems;
}

// -- export -----------------------------------------------------------------

ExportSnapshot Store::snapshot_export(const Principal& caller, const std::string& corpus_id) {
  auto corpus = owned_corpus(caller, corpus_id);
  ExportSnapshot snap;
  snap.corpus = *corpus;
  std::vector<StoredRecording> rows;
  {
    std::lock_guard lock(db_mutex_);
    rows = list_recordings_locked(corpus_id);
    auto owner = db_->prepare("SELECT display_name FROM accounts WHERE account_id = ?");
    owner.bind(1, corpus->builder_id);
    if (owner.step()) snap.builder_name = owner.text(0);
    auto st = db_->prepare(
        "SELECT a.display_name, a.gender, a.age, a.birthplace, a.living_place, p.device_note "
        "FROM participations p JOIN accounts a ON a.account_id = p.participant_id "
        "WHERE p.corpus_id = ? ORDER BY a.display_name");
    st.bind(1, corpus_id);
    while (st.step()) {
      SpeakerRow row;
      row.display_name = st.text(0);
      row.profile.gender = st.text(1);
      row.profile.age = static_cast<std::uint32_t>(st.integer(2));
      row.profile.birthplace = st.text(3);
      row.profile.living_place = st.text(4);
      row.device_note = st.text(5);
      snap.speakers.push_back(std::move(row));
    }
  }

  snap.staging_dir = options_.data_dir / "staging" / random_hex(8);
  std::error_code ec;
  fs::create_directories(snap.staging_dir, ec);
  if (ec) io_error("cannot create export staging directory");
  // Writers replace files by rename, so a hard link taken under the key lock
  // pins exactly the version its index row describes.
  for (const auto& row : rows) {
    std::lock_guard key_lock(key_mutex(row.corpus_id + '\n' + row.participant_id + '\n' +
                                       std::to_string(row.ordinal)));
    std::optional<StoredRecording> current;
    {
      std::lock_guard lock(db_mutex_);
      current = find_recording_locked(row.corpus_id, row.participant_id, row.ordinal);
    }
    if (!current) continue;
    const auto pinned = snap.staging_dir / std::to_string(snap.pinned.size());
    fs::create_hard_link(recording_path(corpus_id, current->relative_path), pinned, ec);
    if (ec) {
      fs::copy_file(recording_path(corpus_id, current->relative_path), pinned, ec);
      if (ec) io_error("cannot snapshot " + current->relative_path);
    }
    snap.recordings.push_back(std::move(*current));
    snap.pinned.push_back(pinned);
  }
  return snap;
}

void Store::write_export(const ExportSnapshot& snap, const ZipWriter::Sink& sink) {
  const auto& corpus = snap.corpus;

  nlohmann::json recordings = nlohmann::json::array();
  for (const auto& r : snap.recordings) {
    const auto& item = corpus.items.at(r.ordinal);
    recordings.push_back({
        {"path", r.relative_path},
        {"speaker", r.relative_path.substr(0, r.relative_path.find('/'))},
        {"ordinal", r.ordinal},
        {"layers", {item.layer1, item.layer2, item.layer3}},
        {"file_name", item.file_name},
        {"byte_size", r.byte_size},
        {"crc32", r.crc32},
        {"uploaded_at", json::iso8601(r.uploaded_at)},
        {"validation", json::to_json(r.report)},
    });
  }
  const nlohmann::json manifest = {
      {"schema_version", 1},
      {"corpus",
       {{"corpus_id", corpus.corpus_id},
        {"title", corpus.title},
        {"explanation", corpus.explanation},
        {"builder", snap.builder_name},
        {"created_at", json::iso8601(corpus.created_at)},
        {"status", status_string(corpus.status)},
        {"manual_review", corpus.manual_review},
        {"device_note", corpus.device_note},
        {"item_count", corpus.items.size()}}},
      {"constraints", json::to_json(corpus.constraints)},
      {"structure", json::to_json(script::build_manifest(corpus.items))},
      {"recordings", std::move(recordings)},
  };

  std::string speakers = "display_name,gender,age,birthplace,living_place,device_note\n";
  for (const auto& s : snap.speakers) {
    script::append_csv_field(speakers, s.display_name);
    speakers += ',';
    script::append_csv_field(speakers, s.profile.gender);
    speakers += ',';
    speakers += std::to_string(s.profile.age);
    speakers += ',';
    script::append_csv_field(speakers, s.profile.birthplace);
    speakers += ',';
    script::append_csv_field(speakers, s.profile.living_place);
    speakers += ',';
    script::append_csv_field(speakers, s.device_note);
    speakers += '\n';
  }

  // name -> metadata text, or index into the pinned recordings
  struct Source {
    std::string name;
    const std::string* text = nullptr;
    std::size_t recording = 0;
  };
  const std::string manifest_text = manifest.dump(2) + "\n";
  std::vector<Source> entries;
  entries.push_back({"manifest.json", &manifest_text});
  entries.push_back({"script.csv", &corpus.script_csv});
  entries.push_back({"speakers.csv", &speakers});
  for (std::size_t i = 0; i < snap.recordings.size(); ++i) {
    entries.push_back({snap.recordings[i].relative_path, nullptr, i});
  }
  std::sort(entries.begin(), entries.end(),
            [](const Source& a, const Source& b) { return a.name < b.name; });

  ZipWriter zip(sink);
  for (const auto& e : entries) {
    if (e.text != nullptr) {
      zip.add(e.name, std::string_view(*e.text));
    } else {
      const auto bytes = read_file(snap.pinned[e.recording]);
      zip.add(e.name, std::span<const std::uint8_t>(bytes));
    }
  }
  zip.finish();
}

std::vector<std::uint8_t> Store::export_corpus(const Principal& caller,
                                               const std::string& corpus_id) {
  auto snap = snapshot_export(caller, corpus_id);
  std::vector<std::uint8_t> out;
  write_export(snap, [&out](std::span<const std::uint8_t> chunk) {
    out.insert(out.end(), chunk.begin(), chunk.end());
  });
  return out;
}

}  // namespace vocorpus::store
