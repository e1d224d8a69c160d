#include "cs3vm/wircm.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

namespace cs3vm {

namespace {

double elapsed(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Expand a solution of a fixed-sides problem to a per-point feasible point.
FeasiblePoint to_full_point(const Dataset& ds, const Sample& sample,
                            const std::vector<double>& x, const MiqpProblem& p,
                            const FixLedger& ledger, int tau, const PenaltyConfig& pen) {
  FeasiblePoint fp = extract_point(x, p.layout, pen);
  std::vector<int> z(sample.num_unlabeled(), 0);
  for (int i : ledger.fixed_pos) z[i] = 1;
  for (int k = 0; k < p.layout.z_count; ++k) z[p.z_source[k]] = fp.z[k];
  fp.z = std::move(z);
  // strict sides override rounded binaries left off their pin by solver noise
  const double band = boundary_band(fp.hyperplane);
  for (int i = 0; i < sample.num_unlabeled(); ++i) {
    const double v = hyperplane_value(fp.hyperplane, ds.points[sample.unlabeled_idx[i]]);
    if (v > band) {
      fp.z[i] = 1;
    } else if (v < -band) {
      fp.z[i] = 0;
    }
  }
  // exact slacks for the per-point problem
  fp.xi = labeled_slacks(ds, sample, fp.hyperplane);
  int total = 0;
  for (int zi : fp.z) total += zi;
  fp.eta1 = std::max(0, tau - total);
  fp.eta2 = std::max(0, total - tau);
  fp.objective = point_objective(pen, fp.hyperplane, fp.xi, fp.eta1, fp.eta2);
  return fp;
}

}  // namespace

WircmConfig default_wircm_config(int m, int tau) {
  WircmConfig cfg;
  cfg.rcm = default_rcm_config(m, tau);
  double frac;
  if (m <= 100) {
    frac = 0.2;
  } else if (m <= 500) {
    frac = 0.25;
  } else if (m <= 1000) {
    frac = 0.35;
  } else {
    frac = 0.45;
  }
  cfg.b_max = static_cast<int>(std::llround(frac * m));
  return cfg;
}

ProbeResult probe_point(const Dataset& ds, const Sample& sample,
                        const FixLedger& ledger, int s, Side current_side,
                        double f_bar, double M, const PenaltyConfig& pen,
                        int tau, double t_max) {
  const Side tested = current_side == Side::Positive ? Side::Negative : Side::Positive;
  MiqpProblem p = build_fixing_problem(ds, sample, ledger.fixed_pos, ledger.fixed_neg,
                                       s, tested, pen, tau, M);
  BbOptions opts;
  opts.time_limit = t_max;
  // the incumbent objective carries solver noise; pad the bound so a fix is
  // only certified clear of it
  const double slack = 1e-7 * std::max(1.0, std::abs(f_bar));
  opts.cutoff = f_bar + slack;

  ProbeResult res;
  res.solution = solve_miqp(p, opts);
  const auto improving = [&]() {
    if (!res.solution.incumbent || !res.solution.objective) return false;
    const FeasiblePoint fp = to_full_point(ds, sample, *res.solution.incumbent, p,
                                           ledger, tau, pen);
    return fp.objective < f_bar - 1e-9 * std::max(1.0, std::abs(f_bar));
  };
  switch (res.solution.status) {
    case MiqpStatus::Optimal:
    case MiqpStatus::Feasible:
      if (improving()) {
        res.outcome = ProbeOutcome::ImprovedIncumbent;
        res.improved = to_full_point(ds, sample, *res.solution.incumbent, p, ledger,
                                     tau, pen);
      } else {
        res.outcome = ProbeOutcome::Skipped;  // inside the noise band: inconclusive
      }
      break;
    case MiqpStatus::CutoffInfeasible:
    case MiqpStatus::Infeasible:
      res.outcome = ProbeOutcome::Fixed;
      break;
    case MiqpStatus::TimeLimit:
      if (improving()) {
        res.outcome = ProbeOutcome::ImprovedIncumbent;
        res.improved = to_full_point(ds, sample, *res.solution.incumbent, p, ledger,
                                     tau, pen);
      } else {
        res.outcome = ProbeOutcome::TimedOut;
      }
      break;
  }
  return res;
}

WircmResult wircm(const Dataset& ds, const Sample& sample, const WircmConfig& config) {
  const auto t0 = std::chrono::steady_clock::now();
  const int m = sample.num_unlabeled();
  if (m < 1) throw std::invalid_argument("wircm: sample has no unlabeled points");
  if (config.b_max > 0 && !(config.gamma > 1.0)) {
    throw std::invalid_argument("wircm: gamma must exceed 1");
  }
  const PenaltyConfig pen = config.rcm.penalties;
  const int tau = config.rcm.tau;
  auto remaining = [&]() { return config.total_time_limit - elapsed(t0); };

  WircmResult out;
  RcmConfig rcm_cfg = config.rcm;
  rcm_cfg.time_limit = std::min(rcm_cfg.time_limit, config.total_time_limit);
  out.ircm_result = ircm(ds, sample, rcm_cfg);
  out.big_m = out.ircm_result.final_big_m;

  FeasiblePoint current = out.ircm_result.lifted_point;
  bool have_incumbent = !out.ircm_result.hit_time_limit ||
                        p3_max_residual(ds, sample, pen, tau, out.big_m, current) <= 1e-8;
  double f_bar = have_incumbent ? current.objective : kInf;
  out.f_bar_history.push_back(f_bar);

  // probe candidates: farthest from the incumbent hyperplane first
  if (have_incumbent && config.b_max > 0) {
    std::vector<std::pair<double, int>> order;
    for (int i = 0; i < m; ++i) {
      const double v = hyperplane_value(current.hyperplane, ds.points[sample.unlabeled_idx[i]]);
      order.push_back({-std::abs(v), i});
    }
    std::sort(order.begin(), order.end());
    const int beta = static_cast<int>(std::floor(config.gamma * config.b_max + 0.5));

    for (int i = 0; i < std::min<int>(beta, m); ++i) {
      const int fixed = static_cast<int>(out.ledger.fixed_pos.size() +
                                         out.ledger.fixed_neg.size());
      if (fixed >= config.b_max) break;
      if (remaining() <= 0.0) break;
      const int s = order[i].second;
      const double v = hyperplane_value(current.hyperplane, ds.points[sample.unlabeled_idx[s]]);
      FixLedger::Probe rec;
      rec.index = s;
      if (std::abs(v) <= boundary_band(current.hyperplane)) {
        rec.outcome = ProbeOutcome::Skipped;
        out.ledger.probes.push_back(rec);
        continue;
      }
      const Side side = v > 0.0 ? Side::Positive : Side::Negative;
      rec.tested_side = side == Side::Positive ? Side::Negative : Side::Positive;
      ProbeResult pr = probe_point(ds, sample, out.ledger, s, side, f_bar, out.big_m,
                                   pen, tau, std::min(config.t_max, std::max(0.0, remaining())));
      rec.outcome = pr.outcome;
      out.ledger.probes.push_back(rec);
      if (pr.outcome == ProbeOutcome::ImprovedIncumbent) {
        current = *pr.improved;
        f_bar = current.objective;
      } else if (pr.outcome == ProbeOutcome::Fixed) {
        (side == Side::Positive ? out.ledger.fixed_pos : out.ledger.fixed_neg).push_back(s);
      }
      out.f_bar_history.push_back(f_bar);
    }
  }

  // final reduced solve, warm-started with the incumbent
  MiqpProblem p6 = build_reduced_problem(ds, sample, out.ledger.fixed_pos,
                                         out.ledger.fixed_neg, pen, tau, out.big_m);
  BbOptions opts;
  opts.time_limit = std::max(1e-3, remaining());
  if (have_incumbent) {
    std::vector<double> warm(p6.relaxation.num_vars, 0.0);
    for (int j = 0; j < p6.layout.dim; ++j) warm[j] = current.hyperplane.omega[j];
    warm[p6.layout.bias_index] = current.hyperplane.b;
    for (int i = 0; i < p6.layout.n_labeled; ++i) {
      warm[p6.layout.xi_begin + i] = current.xi[i];
    }
    warm[p6.layout.eta1_index] = current.eta1;
    warm[p6.layout.eta2_index] = current.eta2;
    for (int k = 0; k < p6.layout.z_count; ++k) {
      warm[p6.layout.z_begin + k] = current.z[p6.z_source[k]];
    }
    if (p6.relaxation.max_violation(warm) <= 1e-8) opts.warm_start = std::move(warm);
  }
  out.solution = solve_miqp(p6, opts);
  if (out.solution.incumbent) {
    FeasiblePoint cand = to_full_point(ds, sample, *out.solution.incumbent, p6,
                                       out.ledger, tau, pen);
    out.point = cand.objective <= current.objective || !have_incumbent ? cand : current;
  } else {
    out.point = current;
  }
  return out;
}

}  // namespace cs3vm
