#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cs3vm/pipeline.hpp"
#include "doctest.h"
#include "json.hpp"
#include "test_helpers.hpp"

using namespace cs3vm;
using cs3vm::testing::oracle_1d_instance;
using cs3vm::testing::TestInstance;
namespace fs = std::filesystem;

namespace {

std::string write_separable_csv(const std::string& name) {
  const std::string path = "/tmp/cs3vm_pipe_" + name;
  std::ofstream out(path);
  out << "x1,x2,target\n";
  for (int i = 0; i < 15; ++i) {
    out << (1.0 + 0.2 * i) << "," << (0.5 + 0.1 * i) << ",1\n";
    out << (-1.0 - 0.2 * i) << "," << (-0.5 - 0.1 * i) << ",0\n";
  }
  return path;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunConfig tiny_config(const std::string& csv, const std::string& out_dir) {
  RunConfig cfg;
  cfg.dataset_paths = {csv};
  cfg.out_dir = out_dir;
  cfg.samples_per_instance = 2;
  cfg.fraction = 0.2;
  cfg.seed = 3;
  cfg.time_limit = 60.0;
  cfg.methods = {Method::Svm, Method::Cs3vm};
  return cfg;
}

// strip the timing field so runs can be compared byte for byte
std::string strip_wall_time(const std::string& jsonl) {
  std::istringstream in(jsonl);
  std::ostringstream out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line);
    j.erase("wall_time");
    out << j.dump() << "\n";
  }
  return out.str();
}

}  // namespace

TEST_CASE("prepare writes deterministic manifests") {
  const std::string csv = write_separable_csv("prep.csv");
  RunConfig cfg = tiny_config(csv, "/tmp/cs3vm_out_prep");
  fs::remove_all(cfg.out_dir);
  const auto manifests = cmd_prepare(cfg);
  REQUIRE(manifests.size() == 1);
  REQUIRE(manifests[0].sample_paths.size() == 2);
  CHECK(fs::exists(manifests[0].dataset_path));
  const std::string first = slurp(manifests[0].sample_paths[0]);

  fs::remove_all(cfg.out_dir);
  cmd_prepare(cfg);
  CHECK(slurp(manifests[0].sample_paths[0]) == first);

  const auto loaded = load_manifests(cfg.out_dir + "/manifests.json");
  REQUIRE(loaded.size() == 1);
  CHECK(loaded[0].dataset_path == manifests[0].dataset_path);
  fs::remove_all(cfg.out_dir);
  std::remove(csv.c_str());
}

TEST_CASE("prepare fails loudly on a bad path") {
  RunConfig cfg;
  cfg.dataset_paths = {"/tmp/does_not_exist_cs3vm.csv"};
  cfg.out_dir = "/tmp/cs3vm_out_bad";
  CHECK_THROWS(cmd_prepare(cfg));
  RunConfig empty;
  empty.dataset_paths = {};
  CHECK_THROWS(cmd_prepare(empty));
}

TEST_CASE("svm run reports an optimal status with sensible metrics") {
  const TestInstance t = oracle_1d_instance();
  RunConfig cfg;
  const MethodRun run = run_method(t.ds, t.sample, Method::Svm, cfg);
  CHECK(run.status == "optimal");
  const auto records = evaluate_sample(t.ds, t.sample, "hand", {run});
  REQUIRE(records.size() == 1);
  CHECK(records[0].method == "svm");
  CHECK(records[0].metrics_all.ac.has_value());
}

TEST_CASE("exact solve on the hand instance hits the enumerated optimum") {
  const TestInstance t = oracle_1d_instance();
  RunConfig cfg;
  cfg.time_limit = 60.0;
  const MethodRun run = run_method(t.ds, t.sample, Method::Cs3vm, cfg);
  CHECK(run.status == "optimal");
  CHECK(*run.objective == doctest::Approx(0.5).epsilon(1e-6));
  const auto records = evaluate_sample(t.ds, t.sample, "hand", {run});
  CHECK(*records[0].gap_value == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("solve and report produce the full artifact set") {
  const std::string csv = write_separable_csv("solve.csv");
  RunConfig cfg = tiny_config(csv, "/tmp/cs3vm_out_solve");
  fs::remove_all(cfg.out_dir);
  const auto manifests = cmd_prepare(cfg);
  const auto records = cmd_solve(cfg, manifests);
  CHECK(records.size() == 2 * cfg.methods.size());
  CHECK(fs::exists(cfg.out_dir + "/records.jsonl"));
  const auto loaded = load_records(cfg.out_dir + "/records.jsonl");
  REQUIRE(loaded.size() == records.size());
  CHECK(loaded[0].instance == records[0].instance);
  CHECK(loaded[0].method == records[0].method);

  cmd_report(records, cfg.out_dir);
  CHECK(fs::exists(cfg.out_dir + "/ecdf_time.csv"));
  CHECK(fs::exists(cfg.out_dir + "/ecdf_gap.csv"));
  CHECK(fs::exists(cfg.out_dir + "/boxplot_data.csv"));
  CHECK(fs::exists(cfg.out_dir + "/summary.csv"));
  const std::string header = slurp(cfg.out_dir + "/ecdf_time.csv");
  CHECK(header.rfind("sigma,cs3vm,svm", 0) == 0);
  CHECK_THROWS(cmd_report({}, cfg.out_dir));
  fs::remove_all(cfg.out_dir);
  std::remove(csv.c_str());
}

TEST_CASE("two runs with the same seed are identical apart from timings") {
  const std::string csv = write_separable_csv("det.csv");
  RunConfig cfg_a = tiny_config(csv, "/tmp/cs3vm_out_det_a");
  RunConfig cfg_b = tiny_config(csv, "/tmp/cs3vm_out_det_b");
  fs::remove_all(cfg_a.out_dir);
  fs::remove_all(cfg_b.out_dir);
  cmd_solve(cfg_a, cmd_prepare(cfg_a));
  cmd_solve(cfg_b, cmd_prepare(cfg_b));
  CHECK(strip_wall_time(slurp(cfg_a.out_dir + "/records.jsonl")) ==
        strip_wall_time(slurp(cfg_b.out_dir + "/records.jsonl")));
  fs::remove_all(cfg_a.out_dir);
  fs::remove_all(cfg_b.out_dir);
  std::remove(csv.c_str());
}

TEST_CASE("hyperparameters outside the plausible ranges are flagged") {
  RunConfig cfg;
  CHECK(validate_run_config(cfg, 200).empty());
  cfg.k1 = 1;
  cfg.t_max = 5.0;
  cfg.delta_hat_1 = 0.95;
  const auto msgs = validate_run_config(cfg, 200);
  CHECK(msgs.size() >= 3);
}

TEST_CASE("brute-force verification accepts the exact solver") {
  const TestInstance t = oracle_1d_instance();
  std::string report;
  CHECK(cmd_oracle(t.ds, t.sample, {}, &report));
  CHECK(report.find("match") != std::string::npos);
}

TEST_CASE("record json lines round trip including undefined fields") {
  BenchmarkRecord r;
  r.instance = "a:b";
  r.method = "svm";
  r.wall_time = 1.5;
  r.status = "optimal";
  r.objective = 2.0;
  r.metrics_all.ac = 0.9;
  r.gap_value = std::nullopt;
  const BenchmarkRecord back = record_from_json_line(record_to_json_line(r));
  CHECK(back.instance == r.instance);
  CHECK(back.method == r.method);
  CHECK(*back.objective == doctest::Approx(2.0));
  CHECK(*back.metrics_all.ac == doctest::Approx(0.9));
  CHECK(!back.metrics_all.pr.has_value());
  CHECK(!back.gap_value.has_value());
}
