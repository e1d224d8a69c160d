#ifndef CS3VM_PIPELINE_HPP
#define CS3VM_PIPELINE_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cs3vm/dataset.hpp"
#include "cs3vm/eval.hpp"
#include "cs3vm/models.hpp"

namespace cs3vm {

/// Benchmark runner configuration; file format is JSON with the same keys,
/// CLI flags override file values.
struct RunConfig {
  std::vector<std::string> dataset_paths;
  std::string label_column = "target";
  std::vector<Method> methods = {Method::Svm, Method::Cs3vm, Method::Ircm, Method::Wircm};
  int samples_per_instance = 5;
  std::string sampling = "biased";  // "biased" or "srs"
  double fraction = 0.1;
  double p_pos = 0.85;
  double time_limit = 3600.0;
  std::uint64_t seed = 1;
  int jobs = 1;
  bool trace = false;
  bool strict_config = false;
  std::string out_dir = "out";

  PenaltyConfig penalties;
  std::optional<int> k1;  // default: size schedule
  int k_plus = 50;
  double delta_hat_1 = 0.8;
  double delta_tilde = 0.1;
  std::optional<int> b_max;  // default: size schedule
  double gamma = 1.2;
  double t_max = 40.0;
  long node_limit = -1;  // optional deterministic cap for the exact solves
};

RunConfig load_run_config(const std::string& path);

/// Checks hyperparameters against their plausible ranges for a sample with
/// m unlabeled points; returns one message per violation.
std::vector<std::string> validate_run_config(const RunConfig& cfg, int m);

struct Manifest {
  std::string dataset_path;
  std::vector<std::string> sample_paths;
};

std::vector<Manifest> load_manifests(const std::string& path);

struct BenchmarkRecord {
  std::string instance;
  std::string method;
  double wall_time = 0.0;
  std::string status;
  std::optional<double> objective;
  MetricSet metrics_all, metrics_unlabeled;
  MetricRatios ratios_all, ratios_unlabeled;
  SvmDeltas deltas_all, deltas_unlabeled;
  std::optional<double> gap_value;
};

std::string record_to_json_line(const BenchmarkRecord& r);
BenchmarkRecord record_from_json_line(const std::string& line);
std::vector<BenchmarkRecord> load_records(const std::string& path);

/// Loads, preprocesses, rescales and samples every dataset; writes
/// dataset/sample JSON manifests plus manifests.json under out_dir.
std::vector<Manifest> cmd_prepare(const RunConfig& cfg);

/// Runs the configured methods on every (dataset, sample) cell, evaluates
/// them, and writes records.jsonl under out_dir. Cells run concurrently up
/// to cfg.jobs; output order is deterministic.
std::vector<BenchmarkRecord> cmd_solve(const RunConfig& cfg,
                                       const std::vector<Manifest>& manifests);

/// Writes ECDF curves, boxplot source data, and a summary table.
void cmd_report(const std::vector<BenchmarkRecord>& records, const std::string& out_dir);

/// Brute-force verification of the exact solver on one sample (needs at
/// most 20 unlabeled points). Returns true when both objectives agree.
bool cmd_oracle(const Dataset& ds, const Sample& sample, const PenaltyConfig& pen,
                std::string* report = nullptr);

/// Single-method run on one sample; exposed for the solve command and tests.
struct MethodRun {
  Method method = Method::Svm;
  double wall_time = 0.0;
  std::string status;
  std::optional<double> objective;  // certified upper-bound value
  Hyperplane hyperplane;
  std::optional<std::vector<int>> z;  // per unlabeled point
  bool proved_optimal = false;
};

MethodRun run_method(const Dataset& ds, const Sample& sample, Method method,
                     const RunConfig& cfg, const std::string& trace_path = "");

/// Evaluates a set of method runs on one sample into benchmark records.
std::vector<BenchmarkRecord> evaluate_sample(const Dataset& ds, const Sample& sample,
                                             const std::string& instance_id,
                                             const std::vector<MethodRun>& runs);

}  // namespace cs3vm

#endif
