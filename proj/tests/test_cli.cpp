#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "snapsurv/csv.hpp"
#include "test_support.hpp"

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(SNAPSURV_CLI_PATH) + " " + args + " 2>/dev/null";
  return std::system(cmd.c_str());
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("cli pipeline: simulate, resample, train, evaluate, predict") {
  testsupport::TempDir tmp("cli");
  const std::string ind = tmp.file("ind.csv");
  const std::string snap = tmp.file("snap.csv");

  REQUIRE(run("simulate --n 60 --seed 4 --out-individuals " + ind + " --out-snapshots " + snap +
              " --out-truth " + tmp.file("truth.csv")) == 0);
  REQUIRE(std::filesystem::exists(tmp.file("truth.csv")));

  SECTION("resample emits dataset and flat outputs") {
    REQUIRE(run("resample --individuals " + ind + " --snapshots " + snap +
                " --grid fixed --t-min 0.1 --t-max 1.0 --num-points 4" +
                " --out-individuals " + tmp.file("rind.csv") + " --out-snapshots " +
                tmp.file("rsnap.csv") + " --out-flat " + tmp.file("flat.csv") +
                " --mode remaining") == 0);
    auto flat = snapsurv::csv::read_file(tmp.file("flat.csv"));
    REQUIRE(flat.header.size() == 4);
    CHECK(flat.header[0] == "target_time");
    CHECK(flat.header[3] == "usage");
    auto rsnap = snapsurv::csv::read_file(tmp.file("rsnap.csv"));
    for (const auto& row : rsnap.rows) {
      const double t = snapsurv::csv::parse_double(row[1], "t");
      CHECK(t >= 0.1);
      CHECK(t <= 1.0);
    }
  }

  SECTION("train, evaluate and predict chain") {
    REQUIRE(run("train --individuals " + ind + " --snapshots " + snap + " --seed 1" +
                " --epochs 2 --grid random --num-points 3 --out-dir " + tmp.file("run")) == 0);
    REQUIRE(std::filesystem::exists(tmp.file("run/checkpoint.json")));
    REQUIRE(std::filesystem::exists(tmp.file("run/manifest.json")));

    REQUIRE(run("evaluate --checkpoint " + tmp.file("run/checkpoint.json") + " --individuals " +
                ind + " --snapshots " + snap + " --out-dir " + tmp.file("eval") +
                " --test-times 0.3,0.6 --random-points 4") == 0);
    CHECK(std::filesystem::exists(tmp.file("eval/report.json")));
    auto brier = snapsurv::csv::read_file(tmp.file("eval/brier_curve.csv"));
    CHECK(brier.header == std::vector<std::string>{"t", "brier"});
    CHECK(brier.rows.size() == 100);

    REQUIRE(run("predict --checkpoint " + tmp.file("run/checkpoint.json") +
                " --t0 0.5 --covariates 1.5 --grid-points 11 --out " + tmp.file("curve.csv")) ==
            0);
    auto curve = snapsurv::csv::read_file(tmp.file("curve.csv"));
    REQUIRE(curve.rows.size() == 11);
    CHECK(snapsurv::csv::parse_double(curve.rows[0][1], "S") == 1.0);
    double prev = 2.0;
    for (const auto& row : curve.rows) {
      const double s = snapsurv::csv::parse_double(row[1], "S");
      CHECK(s <= prev);
      CHECK(s >= 0.0);
      prev = s;
    }
  }

  SECTION("bad inputs exit nonzero") {
    CHECK(run("resample --individuals missing.csv --snapshots " + snap +
              " --out-flat " + tmp.file("x.csv")) != 0);
    CHECK(run("train --individuals " + ind + " --snapshots " + snap + " --epochs 0 --out-dir " +
              tmp.file("bad")) != 0);
  }
}

TEST_CASE("cli study reruns are byte-identical") {
  testsupport::TempDir tmp("cli_study");
  std::ofstream cfg(tmp.file("study.toml"));
  cfg << "[study]\n"
         "sizes = [30]\n"
         "grid_sizes = [3]\n"
         "policies = [\"fixed\", \"random\"]\n"
         "replicates = 2\n"
         "test_size = 25\n"
         "random_test_points = 4\n"
         "seed = 5\n"
         "workers = 2\n"
         "[train]\n"
         "epochs = 2\n"
         "learning_rate = 0.05\n"
         "batch_size = 64\n"
         "[network]\n"
         "hidden = [8]\n"
         "[quadrature]\n"
         "num_points = 33\n";
  cfg.close();

  REQUIRE(run("study --config " + tmp.file("study.toml") + " --out-dir " + tmp.file("s1")) == 0);
  REQUIRE(run("study --config " + tmp.file("study.toml") + " --out-dir " + tmp.file("s2") +
              " --workers 1") == 0);
  const std::string a = slurp(tmp.file("s1/results.csv"));
  CHECK(a == slurp(tmp.file("s2/results.csv")));
  CHECK(a.find("policy,M,N,replicate,test_qnll,test_ibs") == 0);
  CHECK(std::filesystem::exists(tmp.file("s1/study_manifest.json")));
}
