#include "cs3vm/bb.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <queue>
#include <set>
#include <stdexcept>
#include <vector>

namespace cs3vm {

namespace {

// tighter than the public solve_qp defaults so that points lifted out of
// incumbents keep headroom under downstream 1e-8 feasibility checks
constexpr double kFeasTol = 1e-9;
constexpr double kKktTol = 1e-9;

double now_seconds(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct Node {
  double bound = -kInf;
  int depth = 0;
  long id = 0;
  std::vector<std::int8_t> zfix;  // -1 free, 0, 1
  std::vector<double> warm;
};

struct NodeOrder {
  bool operator()(const Node& a, const Node& b) const {
    if (a.bound != b.bound) return a.bound > b.bound;  // min-heap on bound
    return a.id > b.id;                                // FIFO tie-break
  }
};

// Large relaxations are flat in the binaries (no curvature, many optimal
// faces), which stalls the splitting solver. The search therefore works on
// a copy with a tiny proximal term on the binaries and corrects every bound
// by its maximum possible contribution; incumbents are always re-evaluated
// on the true objective.
constexpr int kRegularizeAbove = 32;
constexpr double kZRegularization = 1e-7;

QpProblem regularized_relaxation(const MiqpProblem& p) {
  QpProblem r = p.relaxation;
  if (static_cast<int>(p.binary_idx.size()) > kRegularizeAbove) {
    for (int idx : p.binary_idx) r.quadratic_diag[idx] += kZRegularization;
  }
  return r;
}


// Feasible point with omega = 0, b = 0: every plane row evaluates to 0, the
// hinge slacks are 1, and eta absorbs whatever the binaries cannot meet.
// Valid for every problem built by the model layer; used to warm-start cold
// solves.
std::vector<double> zero_plane_point(const MiqpProblem& p, const std::vector<int>* zvals) {
  const auto& L = p.layout;
  std::vector<double> x(p.relaxation.num_vars, 0.0);
  for (int i = 0; i < L.n_labeled; ++i) x[L.xi_begin + i] = 1.0;
  double zsum = 0.0, wsum = 0.0;
  for (double w : p.z_weight) wsum += w;
  if (zvals) {
    for (int k = 0; k < L.z_count; ++k) {
      x[L.z_begin + k] = (*zvals)[k];
      zsum += (*zvals)[k] * p.z_weight[k];
    }
  } else if (L.z_count > 0 && wsum > 0.0) {
    const double t = std::min(1.0, std::max(0.0, p.tau_effective / wsum));
    for (int k = 0; k < L.z_count; ++k) x[L.z_begin + k] = t;
    zsum = t * wsum;
  }
  if (L.eta1_index >= 0) {
    x[L.eta1_index] = std::max(0.0, p.tau_effective - zsum);
    x[L.eta2_index] = std::max(0.0, zsum - p.tau_effective);
  }
  return x;
}

class Search {
 public:
  Search(const MiqpProblem& p, const BbOptions& opts)
      : p_(p),
        opts_(opts),
        solver_(regularized_relaxation(p), kFeasTol, kKktTol),
        zc_(static_cast<int>(p.binary_idx.size())) {
    p_.relaxation.validate();
    for (int idx : p_.binary_idx) {
      if (idx < 0 || idx >= p_.relaxation.num_vars) {
        throw std::invalid_argument("solve_miqp: binary index out of range");
      }
    }
    if (zc_ > kRegularizeAbove) {
      reg_slack_ = 0.5 * kZRegularization * zc_;
      solver_.max_iterations = 1500;  // bound slack covers unfinished solves
    }
    if (opts_.cutoff) {
      cutoff_limit_ = *opts_.cutoff - 1e-9 * std::max(1.0, std::abs(*opts_.cutoff));
    }
  }

  MiqpSolution run() {
    t0_ = std::chrono::steady_clock::now();
    if (opts_.warm_start) install_warm_start(*opts_.warm_start);

    MiqpSolution out;
    if (zc_ == 0) {
      out = solve_without_binaries();
      out.wall_time = now_seconds(t0_);
      return out;
    }

    Node root;
    root.zfix.assign(zc_, -1);
    if (!inc_x_.empty()) {
      root.warm = inc_x_;
    } else {
      root.warm = zero_plane_point(p_, nullptr);
      if (p_.relaxation.max_violation(root.warm) > 1e-9) root.warm.clear();
    }
    push_node(std::move(root), /*prefer_stack=*/true);

    bool limit_hit = false;
    bool time_hit = false;
    while (!stack_.empty() || !heap_.empty()) {
      if (now_seconds(t0_) > opts_.time_limit) {
        limit_hit = true;
        time_hit = true;
        break;
      }
      if (opts_.node_limit >= 0 && nodes_ >= opts_.node_limit) {
        limit_hit = true;
        break;
      }
      Node node = pop_node();
      if (node.bound >= prune_limit()) continue;
      process(node);
    }

    out.nodes_explored = nodes_;
    out.wall_time = now_seconds(t0_);
    if (limit_hit) {
      out.status = time_hit ? MiqpStatus::TimeLimit
                            : (has_inc_ ? MiqpStatus::Feasible : MiqpStatus::TimeLimit);
      out.best_bound = reported_lb_;
    } else if (has_inc_) {
      out.status = MiqpStatus::Optimal;
      out.best_bound = inc_obj_;
    } else if (opts_.cutoff) {
      out.status = MiqpStatus::CutoffInfeasible;
      out.best_bound = *opts_.cutoff;
    } else {
      out.status = MiqpStatus::Infeasible;
      out.best_bound = kInf;
    }
    if (has_inc_) {
      out.incumbent = inc_x_;
      out.objective = inc_obj_;
      if (out.best_bound > inc_obj_) out.best_bound = inc_obj_;
    }
    return out;
  }

 private:
  // ---- incumbent management ----

  double prune_limit() const {
    double lim = cutoff_limit_;
    if (has_inc_) {
      lim = std::min(lim, inc_obj_ - opts_.mip_gap_tol * std::max(1.0, std::abs(inc_obj_)));
    }
    return lim;
  }

  bool accept(double obj) const {
    if (obj >= cutoff_limit_) return false;
    return !has_inc_ || obj < inc_obj_ - 1e-12;
  }

  void install_warm_start(const std::vector<double>& w) {
    if (static_cast<int>(w.size()) != p_.relaxation.num_vars) {
      throw std::invalid_argument("solve_miqp: warm start has wrong size");
    }
    const double viol = p_.relaxation.max_violation(w);
    if (viol > 1e-7) {
      throw std::invalid_argument("solve_miqp: warm start violates constraints (residual " +
                                  std::to_string(viol) + ")");
    }
    for (int idx : p_.binary_idx) {
      const double f = std::min(w[idx], 1.0 - w[idx]);
      if (f > opts_.int_tol) {
        throw std::invalid_argument("solve_miqp: warm start is not integer-feasible");
      }
    }
    const double obj = p_.relaxation.objective_value(w);
    if (obj < cutoff_limit_) {
      has_inc_ = true;
      inc_x_ = w;
      inc_obj_ = obj;
      repair_incumbent();
    } else {
      // keep it around as a pure warm-start vector
      inc_x_ = w;
    }
  }

  // Solve the QP with all binaries pinned to the given values; if it beats
  // the incumbent install it.
  bool try_assignment(const std::vector<int>& zvals, const std::vector<double>* warm) {
    std::vector<double> lo = p_.relaxation.var_lo, hi = p_.relaxation.var_hi;
    for (int k = 0; k < zc_; ++k) {
      lo[p_.binary_idx[k]] = zvals[k];
      hi[p_.binary_idx[k]] = zvals[k];
    }
    const int saved_cap = solver_.max_iterations;
    solver_.max_iterations = 20000;  // candidate points must solve to tolerance
    QpSolution s = solver_.solve_with_bounds(lo, hi, warm);
    solver_.max_iterations = saved_cap;
    if (s.status == QpStatus::Infeasible || s.status == QpStatus::Unbounded) return false;
    if (s.status == QpStatus::IterationLimit &&
        p_.relaxation.max_violation(s.primal) > 1e-8) {
      return false;
    }
    const double obj = p_.relaxation.objective_value(s.primal);  // without the proximal term
    if (!accept(obj)) return false;
    has_inc_ = true;
    inc_x_ = s.primal;
    inc_obj_ = obj;
    return true;
  }

  std::vector<int> incumbent_z() const {
    std::vector<int> z(zc_);
    for (int k = 0; k < zc_; ++k) z[k] = inc_x_[p_.binary_idx[k]] >= 0.5 ? 1 : 0;
    return z;
  }

  double rep_value(const std::vector<double>& x, int k) const {
    double v = x[p_.layout.bias_index];
    const auto& rep = p_.z_rep[k];
    for (int j = 0; j < p_.layout.dim; ++j) v += x[j] * rep[j];
    return v;
  }

  // Move the incumbent's binary sum toward the cardinality target by
  // flipping the binaries closest to the hyperplane, re-optimizing the
  // continuous part after each flip set.
  void repair_incumbent() {
    if (!has_inc_ || zc_ == 0 || p_.layout.eta1_index < 0) return;
    for (int round = 0; round < 3; ++round) {
      std::vector<int> z = incumbent_z();
      double dev = -p_.tau_effective;
      for (int k = 0; k < zc_; ++k) dev += z[k] * p_.z_weight[k];
      if (std::abs(dev) < 1e-9) return;
      std::vector<std::pair<double, int>> side;  // |v|, k
      for (int k = 0; k < zc_; ++k) {
        if ((dev > 0 && z[k] == 1) || (dev < 0 && z[k] == 0)) {
          side.push_back({std::abs(rep_value(inc_x_, k)), k});
        }
      }
      std::sort(side.begin(), side.end());
      bool flipped = false;
      double rem = dev;
      for (const auto& [dist, k] : side) {
        const double delta = dev > 0 ? -p_.z_weight[k] : p_.z_weight[k];
        if (std::abs(rem + delta) >= std::abs(rem)) break;
        z[k] = 1 - z[k];
        rem += delta;
        flipped = true;
      }
      if (!flipped) return;
      if (!try_assignment(z, &inc_x_)) return;
    }
  }

  // Round the relaxation point to the sides of its own hyperplane and try
  // the result as an incumbent. The rounded point itself is feasible (the
  // hyperplane stays put, eta absorbs the count), so it is evaluated
  // directly and the pinned re-solve only runs when it already improves.
  void rounding_heuristic(const Node& node, const QpSolution& relax) {
    if (p_.layout.eta1_index < 0) return;
    std::vector<int> z(zc_);
    std::vector<double> cand = relax.primal;
    double zsum = 0.0;
    for (int k = 0; k < zc_; ++k) {
      z[k] = node.zfix[k] >= 0 ? node.zfix[k]
                               : (rep_value(relax.primal, k) > 0.0 ? 1 : 0);
      cand[p_.binary_idx[k]] = z[k];
      zsum += z[k] * p_.z_weight[k];
    }
    cand[p_.layout.eta1_index] = std::max(0.0, p_.tau_effective - zsum);
    cand[p_.layout.eta2_index] = std::max(0.0, zsum - p_.tau_effective);
    const double value = p_.relaxation.objective_value(cand);
    const bool ok = p_.relaxation.max_violation(cand) <= 1e-8;
    if (ok && !accept(value)) return;
    if (try_assignment(z, ok ? &cand : &relax.primal)) repair_incumbent();
  }

  // ---- search ----

  void push_node(Node n, bool prefer_stack) {
    open_bounds_.insert(n.bound);
    if (!has_inc_ && prefer_stack) {
      stack_.push_back(std::move(n));
    } else {
      heap_.push(std::move(n));
    }
  }

  Node pop_node() {
    if (has_inc_ && !stack_.empty()) {
      // switch to best-bound once an incumbent exists
      while (!stack_.empty()) {
        heap_.push(std::move(stack_.back()));
        stack_.pop_back();
      }
    }
    Node n;
    if (!stack_.empty()) {
      n = std::move(stack_.back());
      stack_.pop_back();
    } else {
      n = heap_.top();
      heap_.pop();
    }
    open_bounds_.erase(open_bounds_.find(n.bound));
    return n;
  }

  void update_reported_lb() {
    double lb = open_bounds_.empty() ? (has_inc_ ? inc_obj_ : kInf) : *open_bounds_.begin();
    if (has_inc_) lb = std::min(lb, inc_obj_);
    reported_lb_ = std::max(reported_lb_, lb);
  }

  void process(const Node& node) {
    ++nodes_;
    std::vector<double> lo = p_.relaxation.var_lo, hi = p_.relaxation.var_hi;
    for (int k = 0; k < zc_; ++k) {
      if (node.zfix[k] >= 0) {
        lo[p_.binary_idx[k]] = node.zfix[k];
        hi[p_.binary_idx[k]] = node.zfix[k];
      }
    }
    const std::vector<double>* warm = node.warm.empty() ? nullptr : &node.warm;
    QpSolution relax = solver_.solve_with_bounds(lo, hi, warm);
    log_node(node, relax);
    if (relax.status == QpStatus::Infeasible) {
      update_reported_lb();
      return;
    }
    if (relax.status == QpStatus::Unbounded) {
      throw std::runtime_error("solve_miqp: relaxation reported unbounded");
    }
    double bound = relax.objective - reg_slack_;
    if (relax.status == QpStatus::IterationLimit) {
      // not solved to tolerance; keep the bound safe
      bound -= 10.0 * relax.kkt_residual * (1.0 + std::abs(bound)) + 1e-9;
    }
    bound = std::max(bound, node.bound);
    if (bound >= prune_limit()) {
      update_reported_lb();
      return;
    }

    // fractionality
    int branch_k = -1;
    double best_frac = opts_.int_tol;
    for (int k = 0; k < zc_; ++k) {
      if (node.zfix[k] >= 0) continue;
      const double zv = relax.primal[p_.binary_idx[k]];
      const double frac = std::min(zv - 0.0, 1.0 - zv);
      if (frac > best_frac) {
        best_frac = frac;
        branch_k = k;
      }
    }

    if (branch_k < 0) {
      // integral relaxation: snap and re-optimize the continuous part
      std::vector<int> z(zc_);
      for (int k = 0; k < zc_; ++k) {
        z[k] = node.zfix[k] >= 0 ? node.zfix[k]
                                 : (relax.primal[p_.binary_idx[k]] >= 0.5 ? 1 : 0);
      }
      if (try_assignment(z, &relax.primal)) repair_incumbent();
      update_reported_lb();
      return;
    }

    if (nodes_ == 1 || nodes_ % 16 == 0) rounding_heuristic(node, relax);
    if (bound >= prune_limit()) {
      update_reported_lb();
      return;
    }

    const double v = rep_value(relax.primal, branch_k);
    const int preferred = v > 0.0 ? 1 : 0;
    Node first, second;
    first.zfix = node.zfix;
    first.zfix[branch_k] = static_cast<std::int8_t>(preferred);
    second.zfix = node.zfix;
    second.zfix[branch_k] = static_cast<std::int8_t>(1 - preferred);
    first.bound = second.bound = bound;
    first.depth = second.depth = node.depth + 1;
    first.id = next_id_++;
    second.id = next_id_++;
    first.warm = relax.primal;
    second.warm = std::move(relax.primal);
    push_node(std::move(second), /*prefer_stack=*/false);
    push_node(std::move(first), /*prefer_stack=*/true);
    update_reported_lb();
  }

  MiqpSolution solve_without_binaries() {
    MiqpSolution out;
    std::vector<double> warm = inc_x_.empty() ? zero_plane_point(p_, nullptr) : inc_x_;
    if (p_.relaxation.max_violation(warm) > 1e-9) warm.clear();
    QpSolution s = solver_.solve(warm.empty() ? nullptr : &warm);
    nodes_ = 1;
    out.nodes_explored = 1;
    switch (s.status) {
      case QpStatus::Optimal:
        if (s.objective < cutoff_limit_) {
          out.status = MiqpStatus::Optimal;
          out.incumbent = s.primal;
          out.objective = s.objective;
          out.best_bound = s.objective;
        } else {
          out.status = MiqpStatus::CutoffInfeasible;
          out.best_bound = s.objective;
        }
        break;
      case QpStatus::Infeasible:
        out.status = MiqpStatus::Infeasible;
        out.best_bound = kInf;
        break;
      case QpStatus::Unbounded:
        throw std::runtime_error("solve_miqp: relaxation reported unbounded");
      case QpStatus::IterationLimit:
        if (p_.relaxation.max_violation(s.primal) <= 1e-6 && s.objective < cutoff_limit_) {
          out.status = MiqpStatus::Feasible;
          out.incumbent = s.primal;
          out.objective = s.objective;
          out.best_bound = s.objective - 10.0 * s.kkt_residual * (1.0 + std::abs(s.objective));
        } else {
          out.status = MiqpStatus::TimeLimit;
          out.best_bound = -kInf;
        }
        break;
    }
    return out;
  }

  void log_node(const Node& node, const QpSolution& relax) {
    if (!opts_.node_log) return;
    (*opts_.node_log) << "node " << node.id << " depth " << node.depth << " bound ";
    if (relax.status == QpStatus::Infeasible) {
      (*opts_.node_log) << "infeasible";
    } else {
      (*opts_.node_log) << relax.objective;
    }
    (*opts_.node_log) << " incumbent ";
    if (has_inc_) {
      (*opts_.node_log) << inc_obj_;
    } else {
      (*opts_.node_log) << "none";
    }
    (*opts_.node_log) << "\n";
  }

  MiqpProblem p_;
  const BbOptions& opts_;
  QpSolver solver_;
  int zc_;

  bool has_inc_ = false;
  std::vector<double> inc_x_;
  double inc_obj_ = kInf;
  double cutoff_limit_ = kInf;

  std::vector<Node> stack_;
  std::priority_queue<Node, std::vector<Node>, NodeOrder> heap_;
  std::multiset<double> open_bounds_;
  double reg_slack_ = 0.0;
  double reported_lb_ = -kInf;
  long nodes_ = 0;
  long next_id_ = 1;
  std::chrono::steady_clock::time_point t0_;
};

}  // namespace

MiqpSolution solve_miqp(const MiqpProblem& p, const BbOptions& opts) {
  Search search(p, opts);
  return search.run();
}

MiqpSolution brute_force_miqp(const MiqpProblem& p) {
  p.relaxation.validate();
  const int k = static_cast<int>(p.binary_idx.size());
  if (k > 20) throw std::invalid_argument("brute_force_miqp: more than 20 binaries");
  const auto t0 = std::chrono::steady_clock::now();

  QpSolver solver(p.relaxation, 1e-8, 1e-8);  // objective comparisons need 1e-6
  MiqpSolution out;
  out.best_bound = kInf;
  std::vector<double> lo = p.relaxation.var_lo, hi = p.relaxation.var_hi;
  std::vector<double> warm;
  std::vector<int> zvals(k, 0);
  bool any = false;
  double best = kInf;
  for (std::uint32_t mask = 0; mask < (1u << k); ++mask) {
    for (int i = 0; i < k; ++i) {
      zvals[i] = (mask >> i) & 1u;
      lo[p.binary_idx[i]] = zvals[i];
      hi[p.binary_idx[i]] = zvals[i];
    }
    QpSolution s = solver.solve_with_bounds(lo, hi, warm.empty() ? nullptr : &warm);
    if (s.status != QpStatus::Optimal && s.status != QpStatus::Infeasible) {
      // retry from the always-feasible witness; the oracle must be exact
      std::vector<double> witness = zero_plane_point(p, &zvals);
      s = solver.solve_with_bounds(lo, hi, &witness);
    }
    ++out.nodes_explored;
    if (s.status == QpStatus::Optimal) {
      warm = s.primal;
      if (!any || s.objective < best) {
        any = true;
        best = s.objective;
        out.incumbent = s.primal;
      }
    } else if (s.status != QpStatus::Infeasible) {
      throw std::runtime_error("brute_force_miqp: subproblem did not solve to optimality");
    }
  }
  if (any) {
    out.status = MiqpStatus::Optimal;
    out.objective = best;
    out.best_bound = best;
  } else {
    out.status = MiqpStatus::Infeasible;
  }
  out.wall_time = now_seconds(t0);
  return out;
}

}  // namespace cs3vm
