#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "promptex/cli.hpp"
#include "promptex/text.hpp"

using namespace promptex;

namespace {

struct RunResult {
  int code = 0;
  std::string out;
  std::string err;
};

RunResult run(std::vector<std::string> args) {
  args.insert(args.begin(), "promptex");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli_dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string work_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("promptex_cli_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::string> lines_of(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

}  // namespace

TEST_CASE("expand prints one prompt per line, deterministically") {
  const auto a = run({"--mock", "--seed", "3", "expand", "--query", "hope", "--prefix", "ABST", "--n", "4"});
  REQUIRE(a.code == 0);
  const auto lines = lines_of(a.out);
  CHECK(lines.size() == 4);
  for (const auto& l : lines) CHECK(l.starts_with("hope"));
  CHECK(run({"--mock", "--seed", "3", "expand", "--query", "hope", "--prefix", "ABST", "--n", "4"}).out == a.out);
  CHECK(run({"--mock", "--seed", "4", "expand", "--query", "hope", "--prefix", "ABST", "--n", "4"}).out != a.out);

  const auto greedy = run({"--mock", "expand", "--query", "hope", "--decode", "greedy"});
  CHECK(greedy.code == 0);
  CHECK(lines_of(greedy.out).size() == 1);
}

TEST_CASE("usage errors") {
  const auto unknown = run({"--mock", "expand", "--query", "hope", "--bogus"});
  CHECK(unknown.code == 2);
  CHECK(unknown.err.find("--bogus") != std::string::npos);
  CHECK(run({}).code == 2);
  CHECK(run({"--help"}).code == 0);
  CHECK(run({"--mock", "expand"}).code == 2);
  CHECK(run({"--config", "/nonexistent.toml", "expand", "--query", "x"}).code == 2);
}

TEST_CASE("typed failures return 1 with the error kind") {
  const auto missing = run({"--mock", "build-catalog", "--corpus", "/nonexistent/corpus.txt", "--out", "x.json"});
  CHECK(missing.code != 0);
  const auto bad = run({"--mock", "expand", "--query", "hope", "--prefix", "WEIRD"});
  CHECK(bad.code == 1);
  CHECK(bad.err.starts_with("error [invalid_argument]"));
  const auto decode = run({"--mock", "expand", "--query", "hope", "--decode", "nucleus"});
  CHECK(decode.code == 1);
}

TEST_CASE("missing backends without mock mode are a config error") {
  const auto r = run({"expand", "--query", "hope"});
  CHECK(r.code == 1);
  CHECK(r.err.find("config") != std::string::npos);
}

TEST_CASE("data commands chain into a 350/350/200/100 split") {
  const auto dir = work_dir("dataset");
  REQUIRE(run({"--mock", "--seed", "2", "synth-images", "--count", "1000", "--out", dir + "/images.jsonl"}).code == 0);
  REQUIRE(run({"--mock", "--seed", "2", "invert", "--images", dir + "/images.jsonl", "--out", dir + "/inv.jsonl"}).code ==
          0);
  const auto built = run({"--mock", "--seed", "2", "build-dataset", "--inversions", dir + "/inv.jsonl", "--out",
                          dir + "/pairs.jsonl", "--chains", dir + "/chains.jsonl"});
  REQUIRE(built.code == 0);
  const auto summary = nlohmann::json::parse(built.out);
  CHECK(summary["pairs"] == 1000);
  CHECK(summary["train_base"] == 350);
  CHECK(summary["train_rft"] == 350);
  CHECK(summary["val"] == 200);
  CHECK(summary["test"] == 100);
  CHECK(lines_of(slurp(dir + "/chains.jsonl")).size() == 1000);

  const auto filtered =
      run({"--mock", "--seed", "2", "rft-filter", "--pairs", dir + "/pairs.jsonl", "--out", dir + "/rft.jsonl"});
  CHECK(filtered.code == 0);
  const auto curriculum = run({"--mock", "--seed", "2", "curriculum", "--pairs", dir + "/pairs.jsonl", "--steps", "4",
                               "--batch", "8", "--out", dir + "/curriculum.jsonl"});
  CHECK(curriculum.code == 0);
  CHECK(lines_of(slurp(dir + "/curriculum.jsonl")).size() == 5 * 8);
}

TEST_CASE("eval and rater commands produce stable files") {
  std::string first_report;
  for (int round = 0; round < 2; ++round) {
    const auto dir = work_dir("eval" + std::to_string(round));
    REQUIRE(run({"--mock", "--seed", "9", "synth-queries", "--count", "12", "--out", dir + "/q.jsonl"}).code == 0);
    REQUIRE(run({"--mock", "--seed", "9", "eval", "--queries", dir + "/q.jsonl", "--system", "straight", "--name",
                 "straight", "--out-dir", dir + "/base"})
                .code == 0);
    const auto pe = run({"--mock", "--seed", "9", "eval", "--queries", dir + "/q.jsonl", "--prefix", "ABST", "--name",
                         "pe", "--baseline", dir + "/base/report.json", "--out-dir", dir + "/pe"});
    REQUIRE(pe.code == 0);
    CHECK(std::filesystem::exists(dir + "/pe/delta.json"));
    CHECK(slurp(dir + "/pe/report.csv").starts_with("bucket,metric,mean,std,count\n"));
    const auto report = slurp(dir + "/pe/report.json");
    if (round == 0) {
      first_report = report;
    } else {
      CHECK(report == first_report);
    }

    REQUIRE(run({"--mock", "--seed", "9", "rater-gen", "--flow", "1x1", "--mode", "aesthetics", "--straight",
                 dir + "/base/records.jsonl", "--expansion", dir + "/pe/records.jsonl", "--out", dir + "/tasks.jsonl"})
                .code == 0);
    CHECK(lines_of(slurp(dir + "/tasks.jsonl")).size() == 12);
    REQUIRE(run({"--mock", "--seed", "9", "rater-simulate", "--tasks", dir + "/tasks.jsonl", "--out",
                 dir + "/responses.jsonl"})
                .code == 0);
    const auto analysis = run({"--mock", "rater-analyze", "--tasks", dir + "/tasks.jsonl", "--responses",
                               dir + "/responses.jsonl", "--out", dir + "/analysis.json"});
    CHECK(analysis.code == 0);
    CHECK(analysis.out.starts_with("flow,mode,metric,value,spread,count"));
  }
}

TEST_CASE("tree and probe commands") {
  const auto dir = work_dir("tree");
  const auto tree = run({"--mock", "tree", "--query", "a red fox", "--steps", "2", "--n", "4", "--out", dir + "/t.json"});
  REQUIRE(tree.code == 0);
  const auto doc = nlohmann::json::parse(slurp(dir + "/t.json"));
  CHECK(doc["leaf_count"] == 64);
  CHECK(doc["nodes"].size() == 85);
  const auto probe = run({"--mock", "probe-flavors", "--flavors", "watercolor,vorticism", "--queries",
                          PROMPTEX_SOURCE_DIR "/data/queries_200.jsonl", "--out", dir + "/probe.json"});
  CHECK(probe.code == 0);
  CHECK(nlohmann::json::parse(slurp(dir + "/probe.json"))["ranking"].size() == 2);
}

TEST_CASE("the installed binary reports exit codes") {
  const std::string bin = PROMPTEX_CLI_PATH;
  CHECK(std::system((bin + " --mock expand --query hope > /dev/null").c_str()) == 0);
  const int status = std::system((bin + " --mock expand --query hope --bogus > /dev/null 2>&1").c_str());
  CHECK(WEXITSTATUS(status) == 2);
}
