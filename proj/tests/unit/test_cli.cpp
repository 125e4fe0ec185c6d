#include <doctest.h>

#include "helpers.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

using namespace tgn;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

int run(const std::string& args, const std::string& log) {
  const std::string cmd = std::string(TGN_CLI_PATH) + " " + args + " > " + log + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// Three-class table where the label follows the first attribute.
void write_fixture(const testing::TempDir& dir) {
  std::ofstream csv(dir.file("toy.csv"));
  csv << "a,b,c,label\n";
  Rng rng(5);
  for (int i = 0; i < 90; ++i) {
    const double a = rng.uniform(0.0, 3.0);
    const double b = rng.uniform(-1.0, 1.0);
    csv << a << ',' << (i % 7 == 0 ? std::string("NA") : std::to_string(b)) << ','
        << rng.uniform(0.0, 1.0) << ',' << static_cast<int>(a) << '\n';
  }
  std::ofstream cfg(dir.file("toy.cfg"));
  cfg << "[data]\npath = " << dir.file("toy.csv") << "\ntarget = label\ntask = classification\n"
      << "[model]\ngraphs = 2\nfilters = 2\ndistance_hidden = 6,4\nfilter_hidden = 6\n"
      << "[train]\nmax_epochs = 8\nlearning_rate = 0.01\n"
      << "[experiment]\ntrials = 2\nmetric = accuracy\nseed = 3\n";
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("train is byte-identical across runs without timestamps") {
  testing::TempDir dir;
  write_fixture(dir);
  const std::string base = "-c " + dir.file("toy.cfg") + " --no-timestamp -o ";
  REQUIRE(run("train " + base + dir.file("r1"), dir.file("log1")) == 0);
  REQUIRE(run("train " + base + dir.file("r2"), dir.file("log2")) == 0);
  const std::string m1 = slurp(dir.file("r1/model.json"));
  CHECK_FALSE(m1.empty());
  CHECK(m1 == slurp(dir.file("r2/model.json")));
  const std::string h1 = slurp(dir.file("r1/history.tsv"));
  CHECK(h1 == slurp(dir.file("r2/history.tsv")));
  CHECK(h1.rfind("# tablegraphnet history\n# config_hash ", 0) == 0);
  CHECK(h1.find("# created") == std::string::npos);

  REQUIRE(run("evaluate " + base + dir.file("r1") + " -m " + dir.file("r1/model.json"), dir.file("log3")) == 0);
  CHECK(slurp(dir.file("r1/evaluation.tsv")).find("accuracy") != std::string::npos);

  REQUIRE(run("explain " + base + dir.file("r1") + " -m " + dir.file("r1/model.json") + " --record 0 --grid 1x3",
              dir.file("log4")) == 0);
  CHECK_FALSE(slurp(dir.file("r1/attribution.tsv")).empty());

  const int audit = run("audit " + base + dir.file("r1") + " -m " + dir.file("r1/model.json"), dir.file("log5"));
  CHECK(audit == 0);
  CHECK(slurp(dir.file("r1/audit.tsv")).find("met_conditional") != std::string::npos);
  CHECK(slurp(dir.file("r1/axioms.tsv")).find("missingness_violations") != std::string::npos);
}

TEST_CASE("set overrides change the config hash and seeds") {
  testing::TempDir dir;
  write_fixture(dir);
  const std::string base = "train -c " + dir.file("toy.cfg") + " --no-timestamp -o ";
  REQUIRE(run(base + dir.file("a"), dir.file("l1")) == 0);
  REQUIRE(run(base + dir.file("b") + " --set train.learning_rate=0.02", dir.file("l2")) == 0);
  const std::string a = slurp(dir.file("a/history.tsv"));
  const std::string b = slurp(dir.file("b/history.tsv"));
  CHECK(a.substr(0, a.find("# seed")) != b.substr(0, b.find("# seed")));
  REQUIRE(run(base + dir.file("c") + " --seed 9", dir.file("l3")) == 0);
  CHECK(slurp(dir.file("c/history.tsv")).find("# seed 9\n") != std::string::npos);
}

TEST_CASE("benchmark writes deterministic summaries and separate timings") {
  testing::TempDir dir;
  write_fixture(dir);
  const std::string base = "benchmark -c " + dir.file("toy.cfg") + " --no-timestamp -o ";
  REQUIRE(run(base + dir.file("a"), dir.file("l1")) == 0);
  REQUIRE(run(base + dir.file("b"), dir.file("l2")) == 0);
  const std::string s = slurp(dir.file("a/summary.tsv"));
  CHECK(s == slurp(dir.file("b/summary.tsv")));
  CHECK(s.find("# mean ") != std::string::npos);
  CHECK(s.find("# std ") != std::string::npos);
  CHECK(slurp(dir.file("a/timings.tsv")).find("seconds") != std::string::npos);
}

TEST_CASE("errors exit with status 1 and a message") {
  testing::TempDir dir;
  write_fixture(dir);
  {
    std::ofstream bad(dir.file("bad.cfg"));
    bad << "[data]\npath = x.csv\n[train]\nlearnin_rate = 1\n";
  }
  CHECK(run("train -c " + dir.file("bad.cfg"), dir.file("e1")) == 1);
  const std::string e1 = slurp(dir.file("e1"));
  CHECK(e1.find("tablegraphnet: error:") != std::string::npos);
  CHECK(e1.find("bad.cfg:4") != std::string::npos);

  CHECK(run("train -c " + dir.file("toy.cfg") + " --set train.nope=1", dir.file("e2")) == 1);
  CHECK(run("evaluate -c " + dir.file("toy.cfg") + " -m " + dir.file("missing.json"), dir.file("e3")) == 1);
  CHECK(run("config", dir.file("e4")) == 0);
  CHECK(slurp(dir.file("e4")).find("[train]") != std::string::npos);
}

}  // TEST_SUITE
