#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cs3vm/pipeline.hpp"
#include "json.hpp"

using namespace cs3vm;
using nlohmann::json;

namespace {

struct CommonFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  std::optional<double> time_limit;
  std::optional<std::string> out_dir;
  std::optional<std::string> label_column;
  std::vector<std::string> methods;
  bool trace = false;
  std::optional<long> node_limit;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_path, "JSON config file");
  cmd->add_option("--seed", f.seed, "base seed for sampling");
  cmd->add_option("--jobs", f.jobs, "concurrent solve cells");
  cmd->add_option("--time-limit", f.time_limit, "per-solve time limit in seconds");
  cmd->add_option("--out-dir", f.out_dir, "output directory");
  cmd->add_option("--label-column", f.label_column, "CSV label column name");
  cmd->add_option("--method", f.methods, "methods to run (svm cs3vm rcm ircm wircm)");
  cmd->add_flag("--trace", f.trace, "write per-iteration traces / fix ledgers");
  cmd->add_option("--node-limit", f.node_limit, "node budget for the exact solves");
}

RunConfig build_config(const CommonFlags& f) {
  RunConfig cfg;
  if (!f.config_path.empty()) cfg = load_run_config(f.config_path);
  if (f.seed) cfg.seed = *f.seed;
  if (f.jobs) cfg.jobs = *f.jobs;
  if (f.time_limit) cfg.time_limit = *f.time_limit;
  if (f.out_dir) cfg.out_dir = *f.out_dir;
  if (f.label_column) cfg.label_column = *f.label_column;
  if (f.trace) cfg.trace = true;
  if (f.node_limit) cfg.node_limit = *f.node_limit;
  if (!f.methods.empty()) {
    cfg.methods.clear();
    for (const auto& m : f.methods) cfg.methods.push_back(method_from_name(m));
  }
  return cfg;
}

json summarize(const std::vector<BenchmarkRecord>& records) {
  json out = json::object();
  for (const auto& r : records) {
    json& m = out[r.method];
    if (m.is_null()) {
      m = {{"records", 0}, {"statuses", json::object()}, {"ac_unlabeled", json::array()}};
    }
    m["records"] = m["records"].get<int>() + 1;
    json& st = m["statuses"][r.status];
    st = st.is_null() ? 1 : st.get<int>() + 1;
    if (r.metrics_unlabeled.ac) m["ac_unlabeled"].push_back(*r.metrics_unlabeled.ac);
  }
  for (auto& [name, m] : out.items()) {
    auto vals = m["ac_unlabeled"].get<std::vector<double>>();
    if (!vals.empty()) {
      std::sort(vals.begin(), vals.end());
      const std::size_t h = vals.size() / 2;
      m["median_ac_unlabeled"] =
          vals.size() % 2 ? vals[h] : 0.5 * (vals[h - 1] + vals[h]);
    }
    m.erase("ac_unlabeled");
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cardinality-constrained semi-supervised SVM benchmark toolkit"};
  app.require_subcommand(1);

  CommonFlags prep_f, solve_f, eval_f, report_f, oracle_f;
  std::vector<std::string> datasets;
  int samples_per_instance = -1;
  std::string sampling;
  std::string manifests_path, records_path;

  auto* prep = app.add_subcommand("prepare", "load, clean, rescale and sample datasets");
  add_common(prep, prep_f);
  prep->add_option("datasets", datasets, "CSV files");
  prep->add_option("--samples", samples_per_instance, "samples per instance");
  prep->add_option("--sampling", sampling, "biased or srs");

  auto* solve = app.add_subcommand("solve", "run methods on prepared manifests");
  add_common(solve, solve_f);
  solve->add_option("--manifests", manifests_path, "manifests.json from prepare");

  auto* evaluate = app.add_subcommand("evaluate", "summarize benchmark records");
  add_common(evaluate, eval_f);
  evaluate->add_option("--records", records_path, "records.jsonl from solve")->required();

  auto* report = app.add_subcommand("report", "write ECDF/boxplot/summary artifacts");
  add_common(report, report_f);
  report->add_option("--records", records_path, "records.jsonl from solve")->required();

  auto* oracle = app.add_subcommand("oracle", "brute-force verification on small manifests");
  add_common(oracle, oracle_f);
  oracle->add_option("--manifests", manifests_path, "manifests.json from prepare");

  CLI11_PARSE(app, argc, argv);

  try {
    if (prep->parsed()) {
      RunConfig cfg = build_config(prep_f);
      if (!datasets.empty()) cfg.dataset_paths = datasets;
      if (samples_per_instance > 0) cfg.samples_per_instance = samples_per_instance;
      if (!sampling.empty()) cfg.sampling = sampling;
      const auto manifests = cmd_prepare(cfg);
      std::cout << "prepared " << manifests.size() << " instance(s) under " << cfg.out_dir
                << "\n";
    } else if (solve->parsed()) {
      RunConfig cfg = build_config(solve_f);
      if (manifests_path.empty()) manifests_path = cfg.out_dir + "/manifests.json";
      const auto manifests = load_manifests(manifests_path);
      const auto records = cmd_solve(cfg, manifests);
      std::cout << "wrote " << records.size() << " records to " << cfg.out_dir
                << "/records.jsonl\n";
    } else if (evaluate->parsed()) {
      const auto records = load_records(records_path);
      if (records.empty()) throw std::runtime_error("evaluate: no records");
      std::cout << summarize(records).dump(2) << "\n";
    } else if (report->parsed()) {
      RunConfig cfg = build_config(report_f);
      const auto records = load_records(records_path);
      cmd_report(records, cfg.out_dir);
      std::cout << "report written under " << cfg.out_dir << "\n";
    } else if (oracle->parsed()) {
      RunConfig cfg = build_config(oracle_f);
      if (manifests_path.empty()) manifests_path = cfg.out_dir + "/manifests.json";
      const auto manifests = load_manifests(manifests_path);
      bool all_ok = true;
      for (const auto& man : manifests) {
        std::ifstream din(man.dataset_path);
        std::stringstream dbuf;
        dbuf << din.rdbuf();
        const Dataset ds = dataset_from_json(dbuf.str());
        for (const auto& sp : man.sample_paths) {
          std::ifstream sin(sp);
          std::stringstream sbuf;
          sbuf << sin.rdbuf();
          const Sample smp = sample_from_json(sbuf.str());
          std::string line;
          const bool ok = cmd_oracle(ds, smp, cfg.penalties, &line);
          all_ok = all_ok && ok;
          std::cout << sp << ": " << line << "\n";
        }
      }
      if (!all_ok) throw std::runtime_error("oracle: solver/brute-force mismatch");
    }
  } catch (const std::exception& e) {
    json err = {{"error", e.what()}};
    std::cerr << err.dump() << "\n";
    return 1;
  }
  return 0;
}
