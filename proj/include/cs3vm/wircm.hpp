#ifndef CS3VM_WIRCM_HPP
#define CS3VM_WIRCM_HPP

#include <optional>
#include <vector>

#include "cs3vm/bb.hpp"
#include "cs3vm/dataset.hpp"
#include "cs3vm/models.hpp"
#include "cs3vm/rcm.hpp"

namespace cs3vm {

struct WircmConfig {
  RcmConfig rcm;
  int b_max = 0;        // cap on the number of fixed points
  double gamma = 1.2;   // probe list length factor: beta = round(gamma * b_max)
  double t_max = 40.0;  // per-probe time limit (seconds)
  double total_time_limit = 3600.0;
};

/// Defaults with b_max picked by the size schedule
/// (0.2m / 0.25m / 0.35m / 0.45m) and the re-clustering defaults.
WircmConfig default_wircm_config(int m, int tau);

enum class ProbeOutcome { ImprovedIncumbent, Fixed, TimedOut, Skipped };

struct FixLedger {
  std::vector<int> fixed_pos;  // unlabeled positions proven on the positive side
  std::vector<int> fixed_neg;
  struct Probe {
    int index = -1;  // unlabeled position
    Side tested_side = Side::Positive;
    ProbeOutcome outcome = ProbeOutcome::Skipped;
  };
  std::vector<Probe> probes;
};

struct ProbeResult {
  ProbeOutcome outcome = ProbeOutcome::Skipped;
  MiqpSolution solution;                  // raw probe solve (empty when skipped)
  std::optional<FeasiblePoint> improved;  // per-point feasible point when improving
};

/// One feasibility probe: tests whether the point can lie on the side
/// opposite its current one with objective below f_bar. CutoffInfeasible
/// proves it cannot, licensing the fix.
ProbeResult probe_point(const Dataset& ds, const Sample& sample,
                        const FixLedger& ledger, int s, Side current_side,
                        double f_bar, double M, const PenaltyConfig& pen,
                        int tau, double t_max);

struct WircmResult {
  MiqpSolution solution;  // final reduced solve
  FixLedger ledger;
  FeasiblePoint point;    // per-point feasible point of the full problem
  RcmResult ircm_result;
  double big_m = 0.0;
  std::vector<double> f_bar_history;  // nonincreasing across the probe loop
};

/// Warm-started pipeline: re-clustering incumbent, feasibility probes that
/// fix far points to proven sides, then the reduced problem.
WircmResult wircm(const Dataset& ds, const Sample& sample, const WircmConfig& config);

}  // namespace cs3vm

#endif
