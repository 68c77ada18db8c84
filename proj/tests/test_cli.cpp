// Runs the built vocorpus binary as a subprocess.

#include <doctest.h>

#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>

#include "script.hpp"
#include "support.hpp"

using testing::json;
namespace fs = std::filesystem;

namespace {

struct Run {
  int exit_code = -1;
  std::string out;
};

std::string quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') {
      out += "'\\''";
    } else {
      out += c;
    }
  }
  return out + "'";
}

Run run_cli(const std::vector<std::string>& args, const std::string& env = "") {
  std::string cmd = env.empty() ? "" : "env " + env + " ";
  cmd += quote(VOCORPUS_CLI_PATH);
  for (const auto& a : args) cmd += " " + quote(a);
  cmd += " 2>/dev/null";
  Run r;
  FILE* p = ::popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
  const int status = ::pclose(p);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

// Starts `vocorpus serve` and returns its pid and the first stdout line.
struct ServeProcess {
  pid_t pid = -1;
  int out_fd = -1;
  std::string first_line;

  explicit ServeProcess(const std::vector<std::string>& args) {
    // argv is built before fork; the child only execs.
    std::string prog = VOCORPUS_CLI_PATH;
    std::vector<std::string> copy = args;
    std::vector<char*> argv{prog.data()};
    for (auto& a : copy) argv.push_back(a.data());
    argv.push_back(nullptr);
    int fds[2];
    REQUIRE(::pipe(fds) == 0);
    pid = ::fork();
    REQUIRE(pid >= 0);
    if (pid == 0) {
      ::dup2(fds[1], STDOUT_FILENO);
      ::close(fds[0]);
      ::close(fds[1]);
      ::execv(prog.c_str(), argv.data());
      ::_exit(127);
    }
    ::close(fds[1]);
    out_fd = fds[0];
    char c;
    while (::read(out_fd, &c, 1) == 1 && c != '\n') first_line += c;
  }

  int wait() {
    int status = 0;
    ::waitpid(pid, &status, 0);
    ::close(out_fd);
    pid = -1;
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  ~ServeProcess() {
    if (pid > 0) {
      ::kill(pid, SIGKILL);
      wait();
    }
  }
};

}  // namespace

TEST_CASE("validate-wav") {
  testing::TempDir dir("cli");
  const auto good = dir.path / "good.wav";
  const auto silent = dir.path / "silent.wav";
  testing::write_file(good, testing::passing_wav());
  testing::write_file(silent, testing::wav_string(testing::make_clip(std::vector<std::int16_t>(16000, 0))));

  auto r = run_cli({"validate-wav", good.string()});
  CHECK(r.exit_code == 0);
  CHECK(json::parse(r.out)["accepted"] == true);

  r = run_cli({"validate-wav", silent.string(), "--json"});
  CHECK(r.exit_code == 2);
  CHECK(json::parse(r.out)["retry_reason"] == "too_quiet");

  CHECK(run_cli({"validate-wav", (dir.path / "missing.wav").string()}).exit_code == 1);
  CHECK(run_cli({"validate-wav"}).exit_code == 1);

  // flag beats environment beats default
  CHECK(run_cli({"validate-wav", good.string()}, "VOCORPUS_PEAK_MIN=26000").exit_code == 2);
  CHECK(run_cli({"validate-wav", good.string(), "--peak-min", "20000"}, "VOCORPUS_PEAK_MIN=26000")
            .exit_code == 0);
  CHECK(run_cli({"validate-wav", good.string(), "--sample-rates", "48000"}).exit_code == 2);
  CHECK(run_cli({"validate-wav", good.string(), "--sample-rates", "0"}).exit_code == 0);
}

TEST_CASE("validate-wav report equals the API report") {
  testing::TempDir dir("cli");
  testing::ServerFixture f;
  f.register_account("builder", "owner");
  f.register_account("participant", "spk001");
  const auto owner = f.login("builder", "owner");
  const auto spk = f.login("participant", "spk001");
  const std::string id =
      json::parse(f.create_corpus(owner, testing::simple_script(3))->body)["corpus_id"];
  const std::vector<std::string> clips = {testing::passing_wav(1), testing::quiet_wav(2),
                                          testing::noisy_wav(3)};
  for (std::size_t i = 0; i < clips.size(); ++i) {
    const auto path = dir.path / ("c" + std::to_string(i) + ".wav");
    testing::write_file(path, clips[i]);
    const auto cli = run_cli({"validate-wav", "--json", path.string()});
    auto res = f.upload(spk, id, i, clips[i]);
    REQUIRE(res);
    auto api = json::parse(res->body);
    if (res->status == 422) api = api["error"]["details"];
    CHECK(json::parse(cli.out) == api);
  }
}

TEST_CASE("check-script") {
  testing::TempDir dir("cli");
  const auto clean = dir.path / "clean.csv";
  testing::write_file(clean, testing::read_file(VOCORPUS_FIXTURE_DIR "/script_ja_en.csv"));
  auto r = run_cli({"check-script", clean.string()});
  CHECK(r.exit_code == 0);

  const std::string bad_text = "a,b,c,f1,x,\na,b,c\n,b,c,f3,x,\na,b,c,f1,x,\n";
  const auto bad = dir.path / "bad.csv";
  testing::write_file(bad, bad_text);
  r = run_cli({"check-script", bad.string()});
  CHECK(r.exit_code == 2);
  CHECK(r.out ==
        "line 2: WrongFieldCount: expected 6 fields, found 3\n"
        "line 3: EmptyLayerName: layer1 is empty\n"
        "line 4: DuplicateKey: duplicate of line 1\n");
  r = run_cli({"check-script", "--json", bad.string()});
  CHECK(json::parse(r.out)["errors"].size() ==
        vocorpus::script::parse_script_csv(bad_text).errors.size());
  CHECK(run_cli({"check-script", (dir.path / "nope.csv").string()}).exit_code == 1);
}

TEST_CASE("export matches the HTTP archive") {
  testing::TempDir dir("cli");
  std::string http_zip;
  std::string id;
  const auto data = dir.path / "data";
  {
    vocorpus::store::StoreOptions opts;
    opts.data_dir = data;
    testing::ServerFixture f(opts);
    f.register_account("builder", "owner");
    f.register_account("participant", "spk001");
    const auto owner = f.login("builder", "owner");
    const auto spk = f.login("participant", "spk001");
    id = json::parse(f.create_corpus(owner, testing::simple_script(2))->body)["corpus_id"];
    f.upload(spk, id, 0, testing::passing_wav());
    http_zip = f.get(owner, "/api/corpora/" + id + "/export")->body;
  }
  const auto out = dir.path / "out.zip";
  auto r = run_cli({"export", id, out.string(), "--data-dir", data.string()});
  CHECK(r.exit_code == 0);
  CHECK(testing::sha256_hex(testing::read_file(out)) == testing::sha256_hex(http_zip));

  r = run_cli({"export", id, out.string(), "--json"}, "DATA_DIR=" + quote(data.string()));
  CHECK(r.exit_code == 0);
  CHECK(json::parse(r.out)["corpus_id"] == id);
  CHECK(run_cli({"export", "unknown", out.string(), "--data-dir", data.string()}).exit_code == 1);
}

TEST_CASE("serve") {
  testing::TempDir dir("cli");
  const auto data = (dir.path / "data").string();

  SUBCASE("serves until SIGINT") {
    ServeProcess p({"serve", "--bind", "127.0.0.1:0", "--data-dir", data});
    const std::string prefix = "listening on http://127.0.0.1:";
    REQUIRE(p.first_line.rfind(prefix, 0) == 0);
    const int port = std::stoi(p.first_line.substr(prefix.size()));
    httplib::Client c("127.0.0.1", port);
    auto res = c.Post("/api/accounts",
                      json{{"role", "builder"}, {"display_name", "b"}, {"secret", "12345678"}}.dump(),
                      "application/json");
    REQUIRE(res);
    CHECK(res->status == 201);
    ::kill(p.pid, SIGINT);
    CHECK(p.wait() == 0);
  }
  SUBCASE("occupied port exits 1") {
    testing::ServerFixture f;
    ServeProcess p({"serve", "--bind", "127.0.0.1:" + std::to_string(f.server->port()),
                    "--data-dir", data});
    CHECK(p.wait() == 1);
  }
}
