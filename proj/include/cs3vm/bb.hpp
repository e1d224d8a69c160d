#ifndef CS3VM_BB_HPP
#define CS3VM_BB_HPP

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "cs3vm/qp.hpp"

namespace cs3vm {

/// Index ranges of the variable roles inside the primal vector. Problems
/// without a role use -1 / count 0.
struct VariableLayout {
  int dim = 0;        // omega occupies [0, dim)
  int n_labeled = 0;  // xi count
  int bias_index = -1;
  int xi_begin = -1;
  int eta1_index = -1;
  int eta2_index = -1;
  int z_begin = -1;
  int z_count = 0;
};

/// A big-M MIQP: convex QP relaxation plus binary markers. z_rep holds the
/// representative point (or centroid) each binary refers to and z_weight its
/// capacity in the cardinality row; both feed the solver's primal heuristics.
struct MiqpProblem {
  QpProblem relaxation;
  std::vector<int> binary_idx;
  VariableLayout layout;
  double big_m = 0.0;
  double tau_effective = 0.0;  // cardinality target net of fixed positives
  std::vector<std::vector<double>> z_rep;
  std::vector<double> z_weight;
  std::vector<int> z_source;  // unlabeled position / cluster id per binary
};

enum class MiqpStatus { Optimal, Feasible, Infeasible, TimeLimit, CutoffInfeasible };

struct MiqpSolution {
  MiqpStatus status = MiqpStatus::Infeasible;
  std::optional<std::vector<double>> incumbent;
  std::optional<double> objective;
  double best_bound = -kInf;
  long nodes_explored = 0;
  double wall_time = 0.0;
};

struct BbOptions {
  double time_limit = 3600.0;
  std::optional<double> cutoff;  // reject points with objective >= cutoff
  std::optional<std::vector<double>> warm_start;
  double mip_gap_tol = 1e-8;
  double int_tol = 1e-6;
  long node_limit = -1;  // < 0: unlimited; deterministic alternative to wall time
  std::ostream* node_log = nullptr;
};

/// Branch-and-bound over the binary variables. Most-fractional branching,
/// best-bound node selection with depth-first plunging until the first
/// incumbent. Every returned incumbent satisfies the constraints within the
/// solver feasibility tolerance and integrality within int_tol.
MiqpSolution solve_miqp(const MiqpProblem& p, const BbOptions& opts = {});

/// Test oracle: enumerates all 2^k binary assignments (k <= 20), solves the
/// QP for each, returns the best. Independent of the search path above.
MiqpSolution brute_force_miqp(const MiqpProblem& p);

}  // namespace cs3vm

#endif
