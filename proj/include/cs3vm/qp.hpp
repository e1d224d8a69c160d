#ifndef CS3VM_QP_HPP
#define CS3VM_QP_HPP

#include <iosfwd>
#include <limits>
#include <memory>
#include <optional>
#include <vector>

namespace cs3vm {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class QpStatus { Optimal, Infeasible, Unbounded, IterationLimit };

/// One linear constraint lo <= sum_k coeff_k * x[idx_k] <= hi.
struct LinearConstraint {
  std::vector<std::pair<int, double>> terms;
  double lo = -kInf;
  double hi = kInf;
};

/// Convex QP: minimize 0.5 * sum_i q_i x_i^2 + c^T x subject to linear
/// constraints and variable bounds. The Hessian is diagonal and nonnegative
/// by construction (only the hyperplane weights carry curvature here).
struct QpProblem {
  int num_vars = 0;
  std::vector<double> quadratic_diag;
  std::vector<double> linear_cost;
  std::vector<double> var_lo;
  std::vector<double> var_hi;
  std::vector<LinearConstraint> constraints;

  void resize(int n) {
    num_vars = n;
    quadratic_diag.assign(n, 0.0);
    linear_cost.assign(n, 0.0);
    var_lo.assign(n, -kInf);
    var_hi.assign(n, kInf);
  }

  double objective_value(const std::vector<double>& x) const;
  /// Largest absolute violation over all constraints and variable bounds.
  double max_violation(const std::vector<double>& x) const;
  /// Throws on NaN/Inf coefficients, negative curvature, bad indices.
  void validate() const;
};

struct QpSolution {
  QpStatus status = QpStatus::IterationLimit;
  std::vector<double> primal;
  double objective = std::numeric_limits<double>::quiet_NaN();
  double kkt_residual = kInf;
};

/// Operator-splitting solver with an active-set polish step. A solver
/// instance keeps the factorization of the splitting system, which depends
/// only on the constraint rows, so repeated solves that differ only in
/// variable bounds (branch-and-bound nodes, fixed-binary subproblems) reuse
/// it. Instances are single-use per thread; the problem itself is immutable.
class QpSolver {
 public:
  explicit QpSolver(const QpProblem& p, double feas_tol = 1e-8, double kkt_tol = 1e-8);
  ~QpSolver();
  QpSolver(const QpSolver&) = delete;
  QpSolver& operator=(const QpSolver&) = delete;

  /// Solve with the problem's own bounds.
  QpSolution solve(const std::vector<double>* warm_start = nullptr);
  /// Solve with overridden variable bounds (same rows).
  QpSolution solve_with_bounds(const std::vector<double>& lo,
                               const std::vector<double>& hi,
                               const std::vector<double>* warm_start = nullptr);

  int max_iterations = 20000;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

QpSolution solve_qp(const QpProblem& p,
                    const std::vector<double>* warm_start = nullptr,
                    double feas_tol = 1e-8, double kkt_tol = 1e-8);

/// Per-thread solve statistics, for diagnostics.
struct QpCounters {
  long solves = 0;
  long iterations = 0;
  long polish_attempts = 0;
  long polish_successes = 0;
  double last_rho = 0.0;
  long refine_cycle = 0;
  long refine_cap = 0;
  long refine_singular = 0;
  long refine_reject = 0;
  long refine_passes = 0;
  long rescues = 0;
};
QpCounters& qp_counters();

/// Plain-text LP-style listing for debugging.
void dump_lp(const QpProblem& p, std::ostream& os);

}  // namespace cs3vm

#endif
