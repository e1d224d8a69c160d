#include "cs3vm/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "cs3vm/bb.hpp"
#include "cs3vm/rcm.hpp"
#include "cs3vm/wircm.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace cs3vm {

namespace {

double now_between(const std::chrono::steady_clock::time_point& a,
                   const std::chrono::steady_clock::time_point& b) {
  return std::chrono::duration<double>(b - a).count();
}

json optional_to_json(const std::optional<double>& v) {
  if (!v) return nullptr;
  return *v;
}

std::optional<double> optional_from_json(const json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

json metricset_to_json(const MetricSet& m) {
  return {{"ac", optional_to_json(m.ac)},
          {"pr", optional_to_json(m.pr)},
          {"re", optional_to_json(m.re)},
          {"fpr", optional_to_json(m.fpr)}};
}

MetricSet metricset_from_json(const json& j) {
  MetricSet m;
  m.ac = optional_from_json(j.at("ac"));
  m.pr = optional_from_json(j.at("pr"));
  m.re = optional_from_json(j.at("re"));
  m.fpr = optional_from_json(j.at("fpr"));
  return m;
}

std::string status_name(MiqpStatus s) {
  switch (s) {
    case MiqpStatus::Optimal: return "optimal";
    case MiqpStatus::Feasible: return "feasible";
    case MiqpStatus::Infeasible: return "infeasible";
    case MiqpStatus::TimeLimit: return "time_limit";
    case MiqpStatus::CutoffInfeasible: return "cutoff_infeasible";
  }
  return "?";
}

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
}

RcmConfig make_rcm_config(const RunConfig& cfg, const Sample& sample) {
  RcmConfig rc = default_rcm_config(sample.num_unlabeled(), sample.tau);
  if (cfg.k1) rc.k1 = std::min(*cfg.k1, sample.num_unlabeled());
  rc.k_plus = cfg.k_plus;
  rc.delta_hat_1 = cfg.delta_hat_1;
  rc.delta_tilde = cfg.delta_tilde;
  rc.penalties = cfg.penalties;
  rc.time_limit = cfg.time_limit;
  rc.seed = sample.seed;
  return rc;
}

WircmConfig make_wircm_config(const RunConfig& cfg, const Sample& sample) {
  WircmConfig wc = default_wircm_config(sample.num_unlabeled(), sample.tau);
  wc.rcm = make_rcm_config(cfg, sample);
  if (cfg.b_max) wc.b_max = std::min(*cfg.b_max, sample.num_unlabeled());
  wc.gamma = cfg.gamma;
  wc.t_max = cfg.t_max;
  wc.total_time_limit = cfg.time_limit;
  return wc;
}

std::string trace_to_jsonl(const std::vector<IterationTrace>& trace) {
  std::ostringstream out;
  for (const auto& t : trace) {
    json j = {{"k", t.k},           {"objective", t.objective},
              {"delta", t.delta},   {"delta_hat", t.delta_hat},
              {"discarded", t.discarded_total},
              {"reactivated", t.reactivated}, {"big_m", t.big_m}};
    out << j.dump() << "\n";
  }
  return out.str();
}

Hyperplane solve_svm_hyperplane(const Dataset& ds, const Sample& sample, double c1) {
  const SvmModel svm = build_svm(ds, sample, c1);
  const QpSolution sol = solve_qp(svm.problem);
  if (sol.status != QpStatus::Optimal) {
    throw std::runtime_error("svm subproblem did not solve to optimality");
  }
  return extract_hyperplane(sol.primal, svm.layout);
}

// "True hyperplane": the SVM trained on the complete dataset with every
// label available.
Hyperplane true_hyperplane(const Dataset& ds, double c1) {
  Sample all;
  for (int i = 0; i < ds.size(); ++i) all.labeled_idx.push_back(i);
  all.labels = ds.labels;
  return solve_svm_hyperplane(ds, all, c1);
}

std::vector<double> p3_warm_vector(const MiqpProblem& p, const FeasiblePoint& fp) {
  std::vector<double> x(p.relaxation.num_vars, 0.0);
  for (int j = 0; j < p.layout.dim; ++j) x[j] = fp.hyperplane.omega[j];
  x[p.layout.bias_index] = fp.hyperplane.b;
  for (int i = 0; i < p.layout.n_labeled; ++i) x[p.layout.xi_begin + i] = fp.xi[i];
  x[p.layout.eta1_index] = fp.eta1;
  x[p.layout.eta2_index] = fp.eta2;
  for (int k = 0; k < p.layout.z_count; ++k) x[p.layout.z_begin + k] = fp.z[k];
  return x;
}

}  // namespace

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config '" + path + "'");
  json j;
  in >> j;
  RunConfig cfg;
  if (j.contains("datasets")) cfg.dataset_paths = j["datasets"].get<std::vector<std::string>>();
  if (j.contains("label_column")) cfg.label_column = j["label_column"];
  if (j.contains("methods")) {
    cfg.methods.clear();
    for (const auto& name : j["methods"]) cfg.methods.push_back(method_from_name(name));
  }
  if (j.contains("samples_per_instance")) cfg.samples_per_instance = j["samples_per_instance"];
  if (j.contains("sampling")) cfg.sampling = j["sampling"];
  if (j.contains("fraction")) cfg.fraction = j["fraction"];
  if (j.contains("p_pos")) cfg.p_pos = j["p_pos"];
  if (j.contains("time_limit")) cfg.time_limit = j["time_limit"];
  if (j.contains("seed")) cfg.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("jobs")) cfg.jobs = j["jobs"];
  if (j.contains("trace")) cfg.trace = j["trace"];
  if (j.contains("strict_config")) cfg.strict_config = j["strict_config"];
  if (j.contains("out_dir")) cfg.out_dir = j["out_dir"];
  if (j.contains("node_limit")) cfg.node_limit = j["node_limit"].get<long>();
  if (j.contains("penalties")) {
    cfg.penalties.c1 = j["penalties"].value("c1", 1.0);
    cfg.penalties.c2 = j["penalties"].value("c2", 1.0);
  }
  if (j.contains("rcm")) {
    const auto& r = j["rcm"];
    if (r.contains("k1") && !r["k1"].is_null()) cfg.k1 = r["k1"].get<int>();
    if (r.contains("k_plus")) cfg.k_plus = r["k_plus"];
    if (r.contains("delta_hat_1")) cfg.delta_hat_1 = r["delta_hat_1"];
    if (r.contains("delta_tilde")) cfg.delta_tilde = r["delta_tilde"];
  }
  if (j.contains("wircm")) {
    const auto& w = j["wircm"];
    if (w.contains("b_max") && !w["b_max"].is_null()) cfg.b_max = w["b_max"].get<int>();
    if (w.contains("gamma")) cfg.gamma = w["gamma"];
    if (w.contains("t_max")) cfg.t_max = w["t_max"];
  }
  return cfg;
}

std::vector<std::string> validate_run_config(const RunConfig& cfg, int m) {
  std::vector<std::string> msgs;
  if (!(cfg.penalties.c1 >= 0.0)) msgs.push_back("c1 must be nonnegative");
  if (cfg.penalties.c2 < 0.5 * cfg.penalties.c1 || cfg.penalties.c2 > 2.0 * cfg.penalties.c1) {
    msgs.push_back("c2 outside the plausible range [0.5*c1, 2*c1]");
  }
  const int k1 = cfg.k1 ? *cfg.k1 : default_rcm_config(m, 0).k1;
  if (k1 < 2 || k1 > m) msgs.push_back("k1 outside the plausible range [2, m]");
  if (cfg.k_plus < k1 || cfg.k_plus > m) {
    msgs.push_back("k_plus outside the plausible range [k1, m]");
  }
  if (cfg.delta_hat_1 < 0.5 || cfg.delta_hat_1 > 0.9) {
    msgs.push_back("delta_hat_1 outside the plausible range [0.5, 0.9]");
  }
  if (cfg.delta_tilde < 0.1 || cfg.delta_tilde > 1.0 - cfg.delta_hat_1) {
    msgs.push_back("delta_tilde outside the plausible range [0.1, 1 - delta_hat_1]");
  }
  const int b_max = cfg.b_max ? *cfg.b_max : default_wircm_config(m, 0).b_max;
  if (b_max < 1 || b_max > m) msgs.push_back("b_max outside the plausible range [1, m]");
  if (b_max >= 1 &&
      (cfg.gamma < 1.1 || cfg.gamma > static_cast<double>(m) / b_max)) {
    msgs.push_back("gamma outside the plausible range [1.1, m/b_max]");
  }
  if (cfg.t_max < 10.0 || cfg.t_max > 100.0) {
    msgs.push_back("t_max outside the plausible range [10, 100] s");
  }
  return msgs;
}

std::vector<Manifest> load_manifests(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifests '" + path + "'");
  json j;
  in >> j;
  std::vector<Manifest> out;
  for (const auto& e : j.at("instances")) {
    Manifest man;
    man.dataset_path = e.at("dataset").get<std::string>();
    man.sample_paths = e.at("samples").get<std::vector<std::string>>();
    out.push_back(std::move(man));
  }
  return out;
}

std::string record_to_json_line(const BenchmarkRecord& r) {
  json j = {{"instance", r.instance},
            {"method", r.method},
            {"wall_time", r.wall_time},
            {"status", r.status},
            {"objective", optional_to_json(r.objective)},
            {"metrics_all", metricset_to_json(r.metrics_all)},
            {"metrics_unlabeled", metricset_to_json(r.metrics_unlabeled)},
            {"ratios_all",
             {{"ac", optional_to_json(r.ratios_all.ac)},
              {"pr", optional_to_json(r.ratios_all.pr)},
              {"re", optional_to_json(r.ratios_all.re)},
              {"fpr", optional_to_json(r.ratios_all.fpr)}}},
            {"ratios_unlabeled",
             {{"ac", optional_to_json(r.ratios_unlabeled.ac)},
              {"pr", optional_to_json(r.ratios_unlabeled.pr)},
              {"re", optional_to_json(r.ratios_unlabeled.re)},
              {"fpr", optional_to_json(r.ratios_unlabeled.fpr)}}},
            {"deltas_all",
             {{"ac", optional_to_json(r.deltas_all.ac)}, {"pr", optional_to_json(r.deltas_all.pr)}}},
            {"deltas_unlabeled",
             {{"ac", optional_to_json(r.deltas_unlabeled.ac)},
              {"pr", optional_to_json(r.deltas_unlabeled.pr)}}},
            {"gap", optional_to_json(r.gap_value)}};
  return j.dump();
}

BenchmarkRecord record_from_json_line(const std::string& line) {
  const json j = json::parse(line);
  BenchmarkRecord r;
  r.instance = j.at("instance");
  r.method = j.at("method");
  r.wall_time = j.at("wall_time");
  r.status = j.at("status");
  r.objective = optional_from_json(j.at("objective"));
  r.metrics_all = metricset_from_json(j.at("metrics_all"));
  r.metrics_unlabeled = metricset_from_json(j.at("metrics_unlabeled"));
  r.ratios_all.ac = optional_from_json(j.at("ratios_all").at("ac"));
  r.ratios_all.pr = optional_from_json(j.at("ratios_all").at("pr"));
  r.ratios_all.re = optional_from_json(j.at("ratios_all").at("re"));
  r.ratios_all.fpr = optional_from_json(j.at("ratios_all").at("fpr"));
  r.ratios_unlabeled.ac = optional_from_json(j.at("ratios_unlabeled").at("ac"));
  r.ratios_unlabeled.pr = optional_from_json(j.at("ratios_unlabeled").at("pr"));
  r.ratios_unlabeled.re = optional_from_json(j.at("ratios_unlabeled").at("re"));
  r.ratios_unlabeled.fpr = optional_from_json(j.at("ratios_unlabeled").at("fpr"));
  r.deltas_all.ac = optional_from_json(j.at("deltas_all").at("ac"));
  r.deltas_all.pr = optional_from_json(j.at("deltas_all").at("pr"));
  r.deltas_unlabeled.ac = optional_from_json(j.at("deltas_unlabeled").at("ac"));
  r.deltas_unlabeled.pr = optional_from_json(j.at("deltas_unlabeled").at("pr"));
  r.gap_value = optional_from_json(j.at("gap"));
  return r;
}

std::vector<BenchmarkRecord> load_records(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open records '" + path + "'");
  std::vector<BenchmarkRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(record_from_json_line(line));
  }
  return out;
}

std::vector<Manifest> cmd_prepare(const RunConfig& cfg) {
  if (cfg.dataset_paths.empty()) throw std::runtime_error("prepare: no datasets given");
  std::vector<Manifest> manifests;
  for (const auto& path : cfg.dataset_paths) {
    const RawDataset raw = load_csv(path, cfg.label_column);
    const Dataset ds = rescale(preprocess(raw));
    const fs::path dir = fs::path(cfg.out_dir) / ds.name;
    Manifest man;
    man.dataset_path = (dir / "dataset.json").string();
    write_text(man.dataset_path, dataset_to_json(ds));
    for (int s = 0; s < cfg.samples_per_instance; ++s) {
      const std::uint64_t seed = cfg.seed + static_cast<std::uint64_t>(s);
      const Sample smp = cfg.sampling == "srs"
                             ? draw_srs_sample(ds, cfg.fraction, seed)
                             : draw_biased_sample(ds, cfg.fraction, cfg.p_pos, seed);
      const fs::path sp = dir / ("sample_" + cfg.sampling + "_" + std::to_string(s) + ".json");
      write_text(sp, sample_to_json(smp));
      man.sample_paths.push_back(sp.string());
    }
    manifests.push_back(std::move(man));
  }
  json idx;
  idx["instances"] = json::array();
  for (const auto& man : manifests) {
    idx["instances"].push_back({{"dataset", man.dataset_path}, {"samples", man.sample_paths}});
  }
  write_text(fs::path(cfg.out_dir) / "manifests.json", idx.dump(2) + "\n");
  return manifests;
}

MethodRun run_method(const Dataset& ds, const Sample& sample, Method method,
                     const RunConfig& cfg, const std::string& trace_path) {
  MethodRun run;
  run.method = method;
  const auto t0 = std::chrono::steady_clock::now();
  const PenaltyConfig pen = cfg.penalties;
  const int tau = sample.tau;

  switch (method) {
    case Method::Svm: {
      run.hyperplane = solve_svm_hyperplane(ds, sample, pen.c1);
      const FeasiblePoint lift = lift_svm_solution(ds, sample, run.hyperplane, pen, tau);
      run.objective = lift.objective;
      run.z = lift.z;
      run.status = "optimal";
      break;
    }
    case Method::Cs3vm: {
      const double M = big_m_initial(ds, sample, pen, tau);
      MiqpProblem p = build_cs3vm(ds, sample, pen, tau, M);
      BbOptions opts;
      opts.time_limit = cfg.time_limit;
      opts.node_limit = cfg.node_limit;
      const Hyperplane svm_h = solve_svm_hyperplane(ds, sample, pen.c1);
      const FeasiblePoint lift = lift_svm_solution(ds, sample, svm_h, pen, tau);
      std::vector<double> warm = p3_warm_vector(p, lift);
      if (p.relaxation.max_violation(warm) <= 1e-8) opts.warm_start = std::move(warm);
      const MiqpSolution sol = solve_miqp(p, opts);
      run.status = status_name(sol.status);
      if (sol.incumbent) {
        const FeasiblePoint fp = extract_point(*sol.incumbent, p.layout, pen);
        run.hyperplane = fp.hyperplane;
        run.z = fp.z;
        run.objective = fp.objective;
        run.proved_optimal = sol.status == MiqpStatus::Optimal;
      }
      break;
    }
    case Method::Rcm:
    case Method::Ircm: {
      const RcmConfig rc = make_rcm_config(cfg, sample);
      const RcmResult res = method == Method::Rcm ? rcm(ds, sample, rc) : ircm(ds, sample, rc);
      run.hyperplane = res.lifted_point.hyperplane;
      run.z = res.lifted_point.z;
      run.objective = res.lifted_point.objective;
      run.status = res.hit_time_limit ? "time_limit" : "completed";
      if (!trace_path.empty()) write_text(trace_path, trace_to_jsonl(res.trace));
      break;
    }
    case Method::Wircm: {
      const WircmConfig wc = make_wircm_config(cfg, sample);
      const WircmResult res = wircm(ds, sample, wc);
      run.hyperplane = res.point.hyperplane;
      run.z = res.point.z;
      run.objective = res.point.objective;
      run.status = status_name(res.solution.status);
      run.proved_optimal = res.solution.status == MiqpStatus::Optimal;
      if (!trace_path.empty()) {
        json j;
        j["fixed_pos"] = res.ledger.fixed_pos;
        j["fixed_neg"] = res.ledger.fixed_neg;
        j["probes"] = json::array();
        for (const auto& pr : res.ledger.probes) {
          const char* oc = pr.outcome == ProbeOutcome::ImprovedIncumbent ? "improved_incumbent"
                           : pr.outcome == ProbeOutcome::Fixed           ? "fixed"
                           : pr.outcome == ProbeOutcome::TimedOut        ? "timed_out"
                                                                         : "skipped";
          j["probes"].push_back({{"index", pr.index},
                                 {"tested_side", pr.tested_side == Side::Positive ? "positive" : "negative"},
                                 {"outcome", oc}});
        }
        j["f_bar_history"] = res.f_bar_history;
        write_text(trace_path, j.dump(2) + "\n");
      }
      break;
    }
  }
  run.wall_time = now_between(t0, std::chrono::steady_clock::now());
  return run;
}

std::vector<BenchmarkRecord> evaluate_sample(const Dataset& ds, const Sample& sample,
                                             const std::string& instance_id,
                                             const std::vector<MethodRun>& runs) {
  const PenaltyConfig pen;  // metrics do not depend on the penalties
  const Hyperplane h_true = true_hyperplane(ds, 1.0);
  const std::vector<int> pred_true = classify(h_true, ds, sample, Method::Svm, nullptr);
  const MetricSet true_all = metrics(confusion(pred_true, ds.labels));
  const MetricSet true_unl =
      metrics(confusion_subset(pred_true, ds.labels, sample.unlabeled_idx));

  // reference SVM metrics for the relative deltas
  const Hyperplane h_svm = solve_svm_hyperplane(ds, sample, pen.c1);
  const std::vector<int> pred_svm = classify(h_svm, ds, sample, Method::Svm, nullptr);
  const MetricSet svm_all = metrics(confusion(pred_svm, ds.labels));
  const MetricSet svm_unl =
      metrics(confusion_subset(pred_svm, ds.labels, sample.unlabeled_idx));

  std::optional<double> optimum;
  for (const auto& run : runs) {
    if (run.proved_optimal && run.objective) {
      optimum = optimum ? std::min(*optimum, *run.objective) : *run.objective;
    }
  }

  std::vector<BenchmarkRecord> records;
  for (const auto& run : runs) {
    BenchmarkRecord r;
    r.instance = instance_id;
    r.method = method_name(run.method);
    r.wall_time = run.wall_time;
    r.status = run.status;
    r.objective = run.objective;
    if (!run.hyperplane.omega.empty()) {
      const std::vector<int>* z = run.z ? &*run.z : nullptr;
      const std::vector<int> pred = classify(run.hyperplane, ds, sample, run.method, z);
      r.metrics_all = metrics(confusion(pred, ds.labels));
      r.metrics_unlabeled = metrics(confusion_subset(pred, ds.labels, sample.unlabeled_idx));
      r.ratios_all = ratios_vs_true(r.metrics_all, true_all);
      r.ratios_unlabeled = ratios_vs_true(r.metrics_unlabeled, true_unl);
      r.deltas_all = deltas_vs_svm(r.metrics_all, svm_all);
      r.deltas_unlabeled = deltas_vs_svm(r.metrics_unlabeled, svm_unl);
    }
    if (optimum && run.objective) r.gap_value = gap(*run.objective, *optimum);
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<BenchmarkRecord> cmd_solve(const RunConfig& cfg,
                                       const std::vector<Manifest>& manifests) {
  struct Cell {
    std::string dataset_path;
    std::string sample_path;
    std::string instance_id;
  };
  std::vector<Cell> cells;
  for (const auto& man : manifests) {
    const fs::path dp(man.dataset_path);
    const std::string dname = dp.parent_path().filename().string();
    for (const auto& sp : man.sample_paths) {
      const std::string sname = fs::path(sp).stem().string();
      cells.push_back({man.dataset_path, sp, dname + ":" + sname});
    }
  }

  std::vector<std::vector<BenchmarkRecord>> results(cells.size());
  std::atomic<std::size_t> next{0};
  std::mutex err_mutex;
  std::string first_error;

  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      try {
        std::ifstream din(cells[i].dataset_path), sin(cells[i].sample_path);
        std::stringstream dbuf, sbuf;
        dbuf << din.rdbuf();
        sbuf << sin.rdbuf();
        const Dataset ds = dataset_from_json(dbuf.str());
        const Sample smp = sample_from_json(sbuf.str());

        const auto msgs = validate_run_config(cfg, smp.num_unlabeled());
        if (!msgs.empty() && cfg.strict_config) {
          throw std::runtime_error("config validation failed: " + msgs.front());
        }

        std::vector<MethodRun> runs;
        for (Method method : cfg.methods) {
          std::string trace_path;
          if (cfg.trace && method != Method::Svm && method != Method::Cs3vm) {
            trace_path = (fs::path(cfg.out_dir) / "traces" /
                          (cells[i].instance_id + "_" + method_name(method) + ".jsonl"))
                             .string();
            std::string safe = trace_path;
            std::replace(safe.begin(), safe.end(), ':', '_');
            trace_path = safe;
          }
          runs.push_back(run_method(ds, smp, method, cfg, trace_path));
        }
        results[i] = evaluate_sample(ds, smp, cells[i].instance_id, runs);
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (first_error.empty()) {
          first_error = cells[i].instance_id + ": " + e.what();
        }
      }
    }
  };

  const int jobs = std::max(1, cfg.jobs);
  std::vector<std::thread> pool;
  for (int t = 0; t < jobs - 1; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (!first_error.empty()) throw std::runtime_error(first_error);

  std::vector<BenchmarkRecord> records;
  for (auto& rs : results) {
    for (auto& r : rs) records.push_back(std::move(r));
  }
  std::ostringstream out;
  for (const auto& r : records) out << record_to_json_line(r) << "\n";
  write_text(fs::path(cfg.out_dir) / "records.jsonl", out.str());
  return records;
}

void cmd_report(const std::vector<BenchmarkRecord>& records, const std::string& out_dir) {
  if (records.empty()) throw std::runtime_error("report: no records");
  std::vector<std::string> methods;
  for (const auto& r : records) {
    if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) {
      methods.push_back(r.method);
    }
  }
  std::sort(methods.begin(), methods.end());

  const double censor = 3600.0;
  auto ecdf_csv = [&](auto value_of, const std::string& name) {
    std::vector<double> grid;
    std::vector<std::vector<double>> per_method;
    for (const auto& m : methods) {
      std::vector<double> vals;
      for (const auto& r : records) {
        if (r.method != m) continue;
        const std::optional<double> v = value_of(r);
        vals.push_back(v ? *v : censor * 2.0);  // unsolved: censored
      }
      for (double v : vals) {
        if (v <= censor) grid.push_back(v);
      }
      per_method.push_back(std::move(vals));
    }
    grid.push_back(censor);
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

    std::ostringstream csv;
    csv << "sigma";
    for (const auto& m : methods) csv << "," << m;
    csv << "\n";
    std::vector<std::vector<std::pair<double, double>>> curves;
    for (const auto& vals : per_method) curves.push_back(ecdf(vals, censor, grid));
    for (std::size_t g = 0; g < grid.size(); ++g) {
      csv << grid[g];
      for (const auto& c : curves) csv << "," << c[g].second;
      csv << "\n";
    }
    write_text(fs::path(out_dir) / name, csv.str());
  };
  ecdf_csv([](const BenchmarkRecord& r) { return std::optional<double>(r.wall_time); },
           "ecdf_time.csv");
  ecdf_csv([](const BenchmarkRecord& r) { return r.gap_value; }, "ecdf_gap.csv");

  std::ostringstream box;
  box << "instance,method,metric,scope,value\n";
  for (const auto& r : records) {
    auto emit = [&](const char* metric, const char* scope, const std::optional<double>& v) {
      if (v) box << r.instance << "," << r.method << "," << metric << "," << scope << "," << *v << "\n";
    };
    emit("ac_ratio", "all", r.ratios_all.ac);
    emit("pr_ratio", "all", r.ratios_all.pr);
    emit("re_ratio", "all", r.ratios_all.re);
    emit("fpr_ratio", "all", r.ratios_all.fpr);
    emit("ac_ratio", "unlabeled", r.ratios_unlabeled.ac);
    emit("pr_ratio", "unlabeled", r.ratios_unlabeled.pr);
    emit("re_ratio", "unlabeled", r.ratios_unlabeled.re);
    emit("fpr_ratio", "unlabeled", r.ratios_unlabeled.fpr);
    emit("ac_delta", "all", r.deltas_all.ac);
    emit("pr_delta", "all", r.deltas_all.pr);
    emit("ac_delta", "unlabeled", r.deltas_unlabeled.ac);
    emit("pr_delta", "unlabeled", r.deltas_unlabeled.pr);
  }
  write_text(fs::path(out_dir) / "boxplot_data.csv", box.str());

  std::ostringstream sum;
  sum << "method,records,solved,median_time,median_ac_unlabeled,median_gap\n";
  for (const auto& m : methods) {
    std::vector<double> times, acs, gaps;
    long solved = 0, count = 0;
    for (const auto& r : records) {
      if (r.method != m) continue;
      ++count;
      times.push_back(r.wall_time);
      if (r.status == "optimal" || r.status == "completed") ++solved;
      if (r.metrics_unlabeled.ac) acs.push_back(*r.metrics_unlabeled.ac);
      if (r.gap_value) gaps.push_back(*r.gap_value);
    }
    auto median = [](std::vector<double> v) -> std::string {
      if (v.empty()) return "";
      std::sort(v.begin(), v.end());
      const std::size_t h = v.size() / 2;
      const double med = v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
      std::ostringstream os;
      os << med;
      return os.str();
    };
    sum << m << "," << count << "," << solved << "," << median(times) << ","
        << median(acs) << "," << median(gaps) << "\n";
  }
  write_text(fs::path(out_dir) / "summary.csv", sum.str());
}

bool cmd_oracle(const Dataset& ds, const Sample& sample, const PenaltyConfig& pen,
                std::string* report) {
  if (sample.num_unlabeled() > 20) {
    throw std::runtime_error("oracle: more than 20 unlabeled points");
  }
  const double M = big_m_initial(ds, sample, pen, sample.tau);
  const MiqpProblem p = build_cs3vm(ds, sample, pen, sample.tau, M);
  const MiqpSolution exact = solve_miqp(p);
  const MiqpSolution brute = brute_force_miqp(p);
  std::ostringstream os;
  const bool both = exact.objective && brute.objective;
  bool ok;
  if (both) {
    ok = std::abs(*exact.objective - *brute.objective) <= 1e-6;
    os << "solver " << *exact.objective << " brute-force " << *brute.objective << " "
       << (ok ? "match" : "MISMATCH");
  } else {
    ok = exact.status == brute.status;
    os << "solver " << status_name(exact.status) << " brute-force "
       << status_name(brute.status) << " " << (ok ? "match" : "MISMATCH");
  }
  if (report) *report = os.str();
  return ok;
}

}  // namespace cs3vm
