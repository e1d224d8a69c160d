#include "cs3vm/qp.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <ostream>
#include <set>
#include <stdexcept>

namespace cs3vm {

double QpProblem::objective_value(const std::vector<double>& x) const {
  double v = 0.0;
  for (int j = 0; j < num_vars; ++j) {
    v += 0.5 * quadratic_diag[j] * x[j] * x[j] + linear_cost[j] * x[j];
  }
  return v;
}

double QpProblem::max_violation(const std::vector<double>& x) const {
  double viol = 0.0;
  for (int j = 0; j < num_vars; ++j) {
    if (var_lo[j] > -kInf) viol = std::max(viol, var_lo[j] - x[j]);
    if (var_hi[j] < kInf) viol = std::max(viol, x[j] - var_hi[j]);
  }
  for (const auto& c : constraints) {
    double ax = 0.0;
    for (const auto& [j, a] : c.terms) ax += a * x[j];
    if (c.lo > -kInf) viol = std::max(viol, c.lo - ax);
    if (c.hi < kInf) viol = std::max(viol, ax - c.hi);
  }
  return viol;
}

void QpProblem::validate() const {
  auto finite = [](double v) { return std::isfinite(v); };
  if (num_vars < 0) throw std::invalid_argument("qp: negative num_vars");
  if (static_cast<int>(quadratic_diag.size()) != num_vars ||
      static_cast<int>(linear_cost.size()) != num_vars ||
      static_cast<int>(var_lo.size()) != num_vars ||
      static_cast<int>(var_hi.size()) != num_vars) {
    throw std::invalid_argument("qp: mismatched vector sizes");
  }
  for (int j = 0; j < num_vars; ++j) {
    if (!finite(quadratic_diag[j]) || quadratic_diag[j] < 0.0) {
      throw std::invalid_argument("qp: quadratic_diag must be finite and >= 0");
    }
    if (!finite(linear_cost[j])) throw std::invalid_argument("qp: NaN/Inf in linear_cost");
    if (std::isnan(var_lo[j]) || std::isnan(var_hi[j])) {
      throw std::invalid_argument("qp: NaN variable bound");
    }
  }
  for (const auto& c : constraints) {
    for (const auto& [j, a] : c.terms) {
      if (j < 0 || j >= num_vars) throw std::invalid_argument("qp: constraint index out of range");
      if (!finite(a)) throw std::invalid_argument("qp: NaN/Inf constraint coefficient");
    }
    if (std::isnan(c.lo) || std::isnan(c.hi)) throw std::invalid_argument("qp: NaN constraint bound");
    if (c.lo > c.hi) throw std::invalid_argument("qp: constraint lo > hi");
  }
}

QpCounters& qp_counters() {
  thread_local QpCounters counters;
  return counters;
}

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct Row {
  std::vector<std::pair<int, double>> terms;  // scaled coefficients
};

constexpr double kSigma = 1e-6;
constexpr double kAlpha = 1.6;
constexpr double kRhoEqScale = 1e3;
constexpr double kInfeasTol = 1e-9;

}  // namespace

struct QpSolver::Impl {
  const QpProblem prob;  // own a copy; callers may mutate theirs
  double feas_tol, kkt_tol;
  int nv = 0;        // variables
  int nc = 0;        // general constraints
  int nrows = 0;     // nc + nv (bound rows appended)

  // Ruiz equilibration scalings: x = D x_s, rows scaled by E.
  VectorXd D, E;
  VectorXd pdiag_s, q_s;       // scaled cost
  std::vector<Row> rows_s;     // scaled rows (general + bound rows)
  VectorXd rho;
  double rho_bar = 0.1;
  std::vector<bool> row_eq;    // fixed at setup from the problem's own bounds

  Eigen::LLT<MatrixXd> chol;
  bool factored = false;

  bool in_phase1 = false;  // guards recursion of the elastic feasibility check

  Impl(const QpProblem& p, double ft, double kt) : prob(p), feas_tol(ft), kkt_tol(kt) {
    prob.validate();
    nv = prob.num_vars;
    nc = static_cast<int>(prob.constraints.size());
    nrows = nc + nv;
    setup_scaling();
    setup_rho();
    factorize();
  }

  void setup_scaling() {
    D = VectorXd::Ones(nv);
    E = VectorXd::Ones(nrows);
    rows_s.resize(nrows);
    for (int i = 0; i < nc; ++i) rows_s[i].terms = prob.constraints[i].terms;
    for (int j = 0; j < nv; ++j) rows_s[nc + j].terms = {{j, 1.0}};

    // Modified Ruiz equilibration on [P; A] columns and A rows.
    for (int pass = 0; pass < 12; ++pass) {
      VectorXd col(nv), rowm(nrows);
      col.setZero();
      rowm.setZero();
      for (int i = 0; i < nrows; ++i) {
        for (const auto& [j, a] : rows_s[i].terms) {
          const double m = std::abs(a) * D[j] * E[i];
          col[j] = std::max(col[j], m);
          rowm[i] = std::max(rowm[i], m);
        }
      }
      for (int j = 0; j < nv; ++j) {
        col[j] = std::max(col[j], prob.quadratic_diag[j] * D[j] * D[j]);
      }
      double worst = 1.0;
      for (int j = 0; j < nv; ++j) {
        if (col[j] > 1e-12) {
          D[j] /= std::sqrt(col[j]);
          worst = std::max(worst, std::max(col[j], 1.0 / col[j]));
        }
      }
      for (int i = 0; i < nrows; ++i) {
        if (rowm[i] > 1e-12) {
          E[i] /= std::sqrt(rowm[i]);
          worst = std::max(worst, std::max(rowm[i], 1.0 / rowm[i]));
        }
      }
      if (worst < 1.0 + 1e-3) break;
    }

    pdiag_s.resize(nv);
    q_s.resize(nv);
    for (int j = 0; j < nv; ++j) {
      pdiag_s[j] = prob.quadratic_diag[j] * D[j] * D[j];
      q_s[j] = prob.linear_cost[j] * D[j];
    }
    for (int i = 0; i < nrows; ++i) {
      for (auto& [j, a] : rows_s[i].terms) a *= E[i] * D[j];
    }
  }

  void setup_rho() {
    row_eq.assign(nrows, false);
    for (int i = 0; i < nc; ++i) {
      row_eq[i] = prob.constraints[i].lo == prob.constraints[i].hi;
    }
    rho.resize(nrows);
    for (int i = 0; i < nrows; ++i) rho[i] = row_eq[i] ? rho_bar * kRhoEqScale : rho_bar;
  }

  // Equality rows (including variables pinned through the bound override)
  // carry a much stiffer penalty; refactor when the pattern changes.
  void sync_rho(const std::vector<double>& lo, const std::vector<double>& hi) {
    bool changed = false;
    for (int j = 0; j < nv; ++j) {
      const bool eq = lo[j] == hi[j];
      if (row_eq[nc + j] != eq) {
        row_eq[nc + j] = eq;
        changed = true;
      }
    }
    if (changed) {
      for (int i = 0; i < nrows; ++i) rho[i] = row_eq[i] ? rho_bar * kRhoEqScale : rho_bar;
      factorize();
    }
  }

  void factorize() {
    MatrixXd H = MatrixXd::Zero(nv, nv);
    for (int j = 0; j < nv; ++j) H(j, j) = pdiag_s[j] + kSigma;
    for (int i = 0; i < nrows; ++i) {
      const auto& t = rows_s[i].terms;
      for (const auto& [j1, a1] : t) {
        for (const auto& [j2, a2] : t) H(j1, j2) += rho[i] * a1 * a2;
      }
    }
    chol.compute(H);
    if (chol.info() != Eigen::Success) {
      throw std::runtime_error("qp: splitting system factorization failed");
    }
    factored = true;
  }

  void row_values(const VectorXd& x, VectorXd& out) const {
    out.resize(nrows);
    for (int i = 0; i < nrows; ++i) {
      double v = 0.0;
      for (const auto& [j, a] : rows_s[i].terms) v += a * x[j];
      out[i] = v;
    }
  }

  void add_At(const VectorXd& w, VectorXd& out) const {
    for (int i = 0; i < nrows; ++i) {
      for (const auto& [j, a] : rows_s[i].terms) out[j] += a * w[i];
    }
  }

  // Scaled row bounds for this solve: general rows from the problem, bound
  // rows from the (possibly overridden) variable bounds.
  void scaled_bounds(const std::vector<double>& lo, const std::vector<double>& hi,
                     VectorXd& l, VectorXd& u) const {
    l.resize(nrows);
    u.resize(nrows);
    for (int i = 0; i < nc; ++i) {
      l[i] = prob.constraints[i].lo > -kInf ? prob.constraints[i].lo * E[i] : -kInf;
      u[i] = prob.constraints[i].hi < kInf ? prob.constraints[i].hi * E[i] : kInf;
    }
    for (int j = 0; j < nv; ++j) {
      l[nc + j] = lo[j] > -kInf ? lo[j] * E[nc + j] : -kInf;
      u[nc + j] = hi[j] < kInf ? hi[j] * E[nc + j] : kInf;
    }
  }

  // Unscaled residuals at the scaled iterate.
  void residuals(const VectorXd& xs, const VectorXd& zs, const VectorXd& ys,
                 double& rp, double& rd) const {
    VectorXd ax;
    row_values(xs, ax);
    rp = 0.0;
    for (int i = 0; i < nrows; ++i) rp = std::max(rp, std::abs(ax[i] - zs[i]) / E[i]);
    VectorXd g = VectorXd::Zero(nv);
    for (int j = 0; j < nv; ++j) g[j] = pdiag_s[j] * xs[j] + q_s[j];
    add_At(ys, g);
    rd = 0.0;
    for (int j = 0; j < nv; ++j) rd = std::max(rd, std::abs(g[j]) / D[j]);
  }

  // ---- active-set polish -------------------------------------------------

  struct Polished {
    bool ok = false;
    std::vector<double> x;
    std::vector<int> side;  // active set that produced x
    double rp = kInf, rd = kInf;
  };

  // Degenerate instances can defeat both the splitting iteration (crawling
  // residuals) and the batch refinement (cycling active sets). Classical
  // remedy: perturb the linear costs to make the optimum unique, solve the
  // perturbed problem, then drop its active set into one refinement against
  // the true costs and verify.
  Polished perturbation_rescue(const std::vector<double>& lo, const std::vector<double>& hi,
                               VectorXd xs) {
    Polished fail;
    for (double eps : {1e-7, 1e-5}) {
      std::vector<double> qpert(nv);
      VectorXd qpert_s(nv);
      for (int j = 0; j < nv; ++j) {
        const double frac = std::fmod(0.6180339887498949 * (j + 1) + 0.1234567, 1.0);
        qpert[j] = prob.linear_cost[j] + eps * (frac + 0.5) * (1.0 + std::abs(prob.linear_cost[j]));
        qpert_s[j] = qpert[j] * D[j];
      }
      VectorXd l, u;
      scaled_bounds(lo, hi, l, u);
      VectorXd zs;
      row_values(xs, zs);
      for (int i = 0; i < nrows; ++i) zs[i] = std::min(std::max(zs[i], l[i]), u[i]);
      VectorXd ys = VectorXd::Zero(nrows);
      VectorXd rhs(nv), xt(nv), zt(nrows), w(nrows);
      for (int iter = 1; iter <= 6000; ++iter) {
        for (int j = 0; j < nv; ++j) rhs[j] = kSigma * xs[j] - qpert_s[j];
        for (int i = 0; i < nrows; ++i) w[i] = rho[i] * zs[i] - ys[i];
        add_At(w, rhs);
        xt = chol.solve(rhs);
        row_values(xt, zt);
        for (int j = 0; j < nv; ++j) xs[j] = kAlpha * xt[j] + (1.0 - kAlpha) * xs[j];
        for (int i = 0; i < nrows; ++i) {
          const double zr = kAlpha * zt[i] + (1.0 - kAlpha) * zs[i];
          const double znew = std::min(std::max(zr + ys[i] / rho[i], l[i]), u[i]);
          ys[i] += rho[i] * (zr - znew);
          zs[i] = znew;
        }
        if (iter % 200 != 0 && iter != 6000) continue;
        Polished pert = refine(guess_from_admm(zs, ys, lo, hi), lo, hi, 30, &qpert);
        if (pert.rp <= 1e-6 && pert.rd <= 1e-6 && !pert.side.empty()) {
          // re-anchor the active set on the true costs
          Polished exact = refine(pert.side, lo, hi, 8);
          if (exact.ok) return exact;
        }
      }
    }
    return fail;
  }

  double row_lo_at(int i, const std::vector<double>& lo) const {
    return i < nc ? prob.constraints[i].lo : lo[i - nc];
  }
  double row_hi_at(int i, const std::vector<double>& hi) const {
    return i < nc ? prob.constraints[i].hi : hi[i - nc];
  }
  double row_value_at(int i, const std::vector<double>& x) const {
    if (i >= nc) return x[i - nc];
    double ax = 0.0;
    for (const auto& [j, a] : prob.constraints[i].terms) ax += a * x[j];
    return ax;
  }

  // Active-set guess from the splitting iterate (duals plus slacks).
  std::vector<int> guess_from_admm(const VectorXd& zs, const VectorXd& ys,
                                   const std::vector<double>& lo,
                                   const std::vector<double>& hi) const {
    double ymax = 1e-9;
    for (int i = 0; i < nrows; ++i) ymax = std::max(ymax, std::abs(ys[i] * E[i]));
    std::vector<int> side(nrows, 0);  // 0 inactive, -1 lower, +1 upper, 2 equality
    for (int i = 0; i < nrows; ++i) {
      const double l = row_lo_at(i, lo), u = row_hi_at(i, hi);
      if (l == u && l > -kInf) {
        side[i] = 2;
        continue;
      }
      const double y = ys[i] * E[i];
      const double z = zs[i] / E[i];
      const double ytol = 1e-7 * ymax;
      const bool low = l > -kInf && (y < -ytol || z - l <= 1e-7 * (1.0 + std::abs(l)));
      const bool up = u < kInf && (y > ytol || u - z <= 1e-7 * (1.0 + std::abs(u)));
      if (low && up) {
        side[i] = std::abs(z - l) <= std::abs(u - z) ? -1 : +1;
      } else if (low) {
        side[i] = -1;
      } else if (up) {
        side[i] = +1;
      }
    }
    // keep the system square-ish: at most nv active rows, strongest duals first
    int count = 0;
    for (int i = 0; i < nrows; ++i) count += side[i] != 0 ? 1 : 0;
    if (count > nv) {
      std::vector<std::pair<double, int>> ranked;
      for (int i = 0; i < nrows; ++i) {
        if (side[i] != 0 && side[i] != 2) ranked.push_back({-std::abs(ys[i] * E[i]), i});
      }
      std::sort(ranked.begin(), ranked.end());
      int keep = nv;
      for (int i = 0; i < nrows; ++i) keep -= side[i] == 2 ? 1 : 0;
      for (std::size_t r = 0; r < ranked.size(); ++r) {
        if (static_cast<int>(r) >= std::max(keep, 0)) side[ranked[r].second] = 0;
      }
    }
    return side;
  }

  // Active-set guess from a primal point: equality rows plus the rows that
  // are tight there, nearest-to-tight first when there are too many.
  std::vector<int> guess_from_primal(const std::vector<double>& x,
                                     const std::vector<double>& lo,
                                     const std::vector<double>& hi) const {
    std::vector<int> side(nrows, 0);
    int budget = nv;
    std::vector<std::pair<double, std::pair<int, int>>> tight;  // slack, (row, side)
    for (int i = 0; i < nrows; ++i) {
      const double l = row_lo_at(i, lo), u = row_hi_at(i, hi);
      if (l == u && l > -kInf) {
        side[i] = 2;
        --budget;
        continue;
      }
      const double v = row_value_at(i, x);
      if (l > -kInf && v - l <= 1e-8 * (1.0 + std::abs(l))) {
        tight.push_back({std::abs(v - l), {i, -1}});
      } else if (u < kInf && u - v <= 1e-8 * (1.0 + std::abs(u))) {
        tight.push_back({std::abs(u - v), {i, +1}});
      }
    }
    std::sort(tight.begin(), tight.end());
    for (const auto& [slack, rs] : tight) {
      if (budget <= 0) break;
      side[rs.first] = rs.second;
      --budget;
    }
    return side;
  }

  Polished polish(const VectorXd& zs, const VectorXd& ys, const std::vector<double>& lo,
                  const std::vector<double>& hi, int max_passes) const {
    return refine(guess_from_admm(zs, ys, lo, hi), lo, hi, max_passes);
  }

  // Primal-dual active-set refinement: solve the equality KKT system for the
  // guessed active rows, drop wrong-signed multipliers, add violated rows,
  // repeat. Exact on success; fails safe (caller falls back to splitting).
  // cost overrides the linear objective (used by the perturbation rescue).
  Polished refine(std::vector<int> side, const std::vector<double>& lo,
                  const std::vector<double>& hi, int max_passes,
                  const std::vector<double>* cost = nullptr) const {
    Polished out;
    const std::vector<double>& q = cost ? *cost : prob.linear_cost;
    auto row_lo = [&](int i) { return row_lo_at(i, lo); };
    auto row_hi = [&](int i) { return row_hi_at(i, hi); };
    auto row_value = [&](int i, const std::vector<double>& x) { return row_value_at(i, x); };

    std::set<std::vector<signed char>> seen;
    std::set<int> banned;  // rows dropped to restore consistency
    for (int pass = 0; pass < max_passes; ++pass) {
      ++qp_counters().refine_passes;
      std::vector<signed char> sig(side.begin(), side.end());
      if (!seen.insert(sig).second) {
        ++qp_counters().refine_cycle;
        return out;
      }
      std::vector<int> act;
      for (int i = 0; i < nrows; ++i) {
        if (side[i] != 0) act.push_back(i);
      }
      const int na = static_cast<int>(act.size());
      const int dim = nv + na;
      MatrixXd K0 = MatrixXd::Zero(dim, dim);
      VectorXd rhs(dim);
      for (int j = 0; j < nv; ++j) {
        K0(j, j) = prob.quadratic_diag[j];
        rhs[j] = -q[j];
      }
      for (int k = 0; k < na; ++k) {
        const int i = act[k];
        if (i < nc) {
          for (const auto& [j, a] : prob.constraints[i].terms) {
            K0(nv + k, j) = a;
            K0(j, nv + k) = a;
          }
        } else {
          K0(nv + k, i - nc) = 1.0;
          K0(i - nc, nv + k) = 1.0;
        }
        rhs[nv + k] = side[i] == -1 ? row_lo(i) : (side[i] == +1 ? row_hi(i) : row_lo(i));
      }
      const double delta = 1e-9;
      MatrixXd K = K0;
      for (int j = 0; j < nv; ++j) K(j, j) += delta;
      for (int k = 0; k < na; ++k) K(nv + k, nv + k) -= delta;
      Eigen::PartialPivLU<MatrixXd> lu(K);
      VectorXd w = lu.solve(rhs);
      for (int it = 0; it < 6; ++it) {
        VectorXd r = rhs - K0 * w;
        if (r.lpNorm<Eigen::Infinity>() < 1e-14) break;
        w += lu.solve(r);
      }
      if (!w.allFinite()) {
        ++qp_counters().refine_singular;
        return out;
      }

      std::vector<double> x(nv);
      for (int j = 0; j < nv; ++j) x[j] = w[j];

      bool changed = false;
      double numax = 1e-9;
      for (int k = 0; k < na; ++k) numax = std::max(numax, std::abs(w[nv + k]));
      for (int k = 0; k < na; ++k) {
        const double nu = w[nv + k];
        const double tol = 1e-9 * numax;
        if ((side[act[k]] == -1 && nu > tol) || (side[act[k]] == +1 && nu < -tol)) {
          side[act[k]] = 0;
          changed = true;
        }
      }
      int active_now = 0;
      for (int i = 0; i < nrows; ++i) active_now += side[i] != 0 ? 1 : 0;
      for (int i = 0; i < nrows; ++i) {
        if (side[i] != 0 || banned.count(i)) continue;
        const double v = row_value(i, x);
        int want = 0;
        if (row_lo(i) > -kInf && v < row_lo(i) - feas_tol) {
          want = -1;
        } else if (row_hi(i) < kInf && v > row_hi(i) + feas_tol) {
          want = +1;
        }
        if (want == 0) continue;
        if (active_now >= nv) {
          // exchange: release the active inequality with the weakest
          // multiplier to make room for the violated row
          int weakest = -1;
          double wmag = kInf;
          for (int kk = 0; kk < na; ++kk) {
            const int j = act[kk];
            if (side[j] == 0 || side[j] == 2) continue;
            const double mag = std::abs(w[nv + kk]);
            if (mag < wmag) {
              wmag = mag;
              weakest = j;
            }
          }
          if (weakest < 0) continue;
          side[weakest] = 0;
          banned.insert(weakest);
          --active_now;
        }
        side[i] = want;
        ++active_now;
        changed = true;
      }
      if (changed) continue;

      // verify the stationarity and feasibility of the refined point
      double rp = 0.0;
      for (int i = 0; i < nrows; ++i) {
        const double v = row_value(i, x);
        if (row_lo(i) > -kInf) rp = std::max(rp, row_lo(i) - v);
        if (row_hi(i) < kInf) rp = std::max(rp, v - row_hi(i));
      }
      VectorXd g(nv);
      for (int j = 0; j < nv; ++j) g[j] = prob.quadratic_diag[j] * x[j] + q[j];
      for (int k = 0; k < na; ++k) {
        const int i = act[k];
        const double nu = w[nv + k];
        if (i < nc) {
          for (const auto& [j, a] : prob.constraints[i].terms) g[j] += a * nu;
        } else {
          g[i - nc] += nu;
        }
      }
      const double rd = g.lpNorm<Eigen::Infinity>();
      if (rp > feas_tol) {
        // stable but inconsistent active system (dependent rows): evict the
        // inequality row the compromise point satisfies worst and retry
        int worst = -1;
        double worst_r = feas_tol;
        for (int kk = 0; kk < na; ++kk) {
          const int i = act[kk];
          if (side[i] == 2) continue;
          const double target = side[i] == -1 ? row_lo(i) : row_hi(i);
          const double r = std::abs(row_value(i, x) - target);
          if (r > worst_r) {
            worst_r = r;
            worst = i;
          }
        }
        if (worst >= 0) {
          side[worst] = 0;
          banned.insert(worst);
          continue;
        }
      }
      out.ok = rp <= feas_tol && rd <= kkt_tol;
      if (!out.ok) ++qp_counters().refine_reject;
      out.x = std::move(x);
      out.side = std::move(side);
      out.rp = rp;
      out.rd = rd;
      return out;
    }
    ++qp_counters().refine_cap;
    return out;
  }


  // ---- primal active-set method (small problems) ---------------------------
  //
  // Classical feasible-point active-set iteration: starting from a feasible
  // x0, repeatedly minimize over the current working set's equality
  // manifold, step with a ratio test so feasibility is never lost, add the
  // blocking row (always independent, since it moves along the step), and
  // release the most wrong-signed multiplier when no step is possible. A
  // hair of proximal regularization keeps every equality subproblem
  // strictly convex; its effect on the stationarity residual is far below
  // the solver tolerance.
  Polished primal_active_set(std::vector<double> x, const std::vector<double>& lo,
                             const std::vector<double>& hi) const {
    Polished out;
    const double delta = 1e-11;
    const int max_steps = 60 * (nrows + 1);

    std::vector<int> side(nrows, 0);  // working set: -1 lower, +1 upper, 2 equality
    std::vector<double> dense_row(nv);
    auto load_row = [&](int i) {
      std::fill(dense_row.begin(), dense_row.end(), 0.0);
      if (i < nc) {
        for (const auto& [j, a] : prob.constraints[i].terms) dense_row[j] += a;
      } else {
        dense_row[i - nc] = 1.0;
      }
    };

    for (int i = 0; i < nrows; ++i) {
      const double l = row_lo_at(i, lo), u = row_hi_at(i, hi);
      if (l == u && l > -kInf) side[i] = 2;
    }

    int stall = 0;
    for (int step = 0; step < max_steps; ++step) {
      std::vector<int> act;
      for (int i = 0; i < nrows; ++i) {
        if (side[i] != 0) act.push_back(i);
      }
      const int na = static_cast<int>(act.size());
      const int dim = nv + na;
      MatrixXd K = MatrixXd::Zero(dim, dim);
      VectorXd rhs(dim);
      for (int j = 0; j < nv; ++j) {
        K(j, j) = prob.quadratic_diag[j] + delta;
        rhs[j] = -(prob.quadratic_diag[j] * x[j] + prob.linear_cost[j] + delta * x[j]);
      }
      for (int k = 0; k < na; ++k) {
        load_row(act[k]);
        for (int j = 0; j < nv; ++j) {
          K(nv + k, j) = dense_row[j];
          K(j, nv + k) = dense_row[j];
        }
        rhs[nv + k] = 0.0;
      }
      Eigen::PartialPivLU<MatrixXd> lu(K);
      VectorXd sol = lu.solve(rhs);
      for (int it = 0; it < 3; ++it) {
        VectorXd resid = rhs - K * sol;
        if (resid.lpNorm<Eigen::Infinity>() < 1e-13) break;
        sol += lu.solve(resid);
      }
      if (!sol.allFinite()) return out;

      double pnorm = 0.0;
      for (int j = 0; j < nv; ++j) pnorm = std::max(pnorm, std::abs(sol[j]));
      // stationarity via the directional derivative, not the raw step size:
      // the proximal term turns flat directions into huge noise vectors
      double descent = 0.0;
      double fmag = 0.0;
      for (int j = 0; j < nv; ++j) {
        const double gj = prob.quadratic_diag[j] * x[j] + prob.linear_cost[j];
        descent += gj * sol[j] + 0.5 * prob.quadratic_diag[j] * sol[j] * sol[j];
        fmag += std::abs(gj * x[j]);
      }

      if (pnorm <= 1e-11 || descent >= -1e-12 * (1.0 + fmag)) {
        // stationary on the working set: release a wrong-signed multiplier
        int release = -1;
        double worst = 1e-11;
        const bool bland = stall > 2 * nrows;  // least-index after stalling
        for (int k = 0; k < na; ++k) {
          const int i = act[k];
          if (side[i] == 2) continue;
          const double nu = sol[nv + k];
          const double wrong = side[i] == -1 ? nu : -nu;
          if (wrong > worst) {
            release = i;
            if (bland) break;
            worst = wrong;
          }
        }
        if (release < 0) {
          // optimal for the regularized subproblem: report exact residuals
          double rp = 0.0;
          for (int i = 0; i < nrows; ++i) {
            const double v = row_value_at(i, x);
            if (row_lo_at(i, lo) > -kInf) rp = std::max(rp, row_lo_at(i, lo) - v);
            if (row_hi_at(i, hi) < kInf) rp = std::max(rp, v - row_hi_at(i, hi));
          }
          VectorXd g(nv);
          for (int j = 0; j < nv; ++j) {
            g[j] = prob.quadratic_diag[j] * x[j] + prob.linear_cost[j];
          }
          for (int k = 0; k < na; ++k) {
            load_row(act[k]);
            for (int j = 0; j < nv; ++j) g[j] += dense_row[j] * sol[nv + k];
          }
          const double rd = g.lpNorm<Eigen::Infinity>();
          out.ok = rp <= feas_tol && rd <= kkt_tol;
          out.x = std::move(x);
          out.rp = rp;
          out.rd = rd;
          return out;
        }
        side[release] = 0;
        ++stall;
        continue;
      }

      // ratio test against the rows outside the working set
      double alpha = 1.0;
      int blocker = -1, blocker_side = 0;
      for (int i = 0; i < nrows; ++i) {
        if (side[i] != 0) continue;
        if (static_cast<int>(na) >= nv) break;  // no independent row can block
        load_row(i);
        double dir = 0.0, val = 0.0, rown = 0.0;
        for (int j = 0; j < nv; ++j) {
          dir += dense_row[j] * sol[j];
          val += dense_row[j] * x[j];
          rown = std::max(rown, std::abs(dense_row[j]));
        }
        if (std::abs(dir) <= 1e-10 * pnorm * std::max(rown, 1e-12)) continue;
        const double l = row_lo_at(i, lo), u = row_hi_at(i, hi);
        if (dir < 0.0 && l > -kInf) {
          const double a = (l - val) / dir;
          if (a < alpha - 1e-15) {
            alpha = std::max(0.0, a);
            blocker = i;
            blocker_side = -1;
          }
        } else if (dir > 0.0 && u < kInf) {
          const double a = (u - val) / dir;
          if (a < alpha - 1e-15) {
            alpha = std::max(0.0, a);
            blocker = i;
            blocker_side = +1;
          }
        }
      }
      for (int j = 0; j < nv; ++j) x[j] += alpha * sol[j];
      if (blocker >= 0) {
        side[blocker] = blocker_side;
        if (alpha <= 1e-15) {
          ++stall;
        } else {
          stall = 0;
        }
      } else {
        stall = 0;
      }
    }
    return out;
  }

  // ---- elastic feasibility confirmation ----------------------------------

  // Minimizes the total constraint violation; a strictly positive optimum
  // certifies primal infeasibility independently of the ADMM certificate.
  bool confirm_infeasible(const std::vector<double>& lo, const std::vector<double>& hi) {
    if (in_phase1) return true;
    QpProblem ph;
    int nt = 0;
    for (const auto& c : prob.constraints) {
      if (c.lo > -kInf || c.hi < kInf) ++nt;
    }
    ph.resize(nv + nt);
    for (int j = 0; j < nv; ++j) {
      ph.var_lo[j] = lo[j];
      ph.var_hi[j] = hi[j];
    }
    int t = nv;
    for (const auto& c : prob.constraints) {
      if (c.lo == -kInf && c.hi == kInf) continue;
      ph.linear_cost[t] = 1.0;
      ph.var_lo[t] = 0.0;
      if (c.lo > -kInf) {
        LinearConstraint r;
        r.terms = c.terms;
        r.terms.push_back({t, 1.0});
        r.lo = c.lo;
        ph.constraints.push_back(std::move(r));
      }
      if (c.hi < kInf) {
        LinearConstraint r;
        r.terms = c.terms;
        r.terms.push_back({t, -1.0});
        r.hi = c.hi;
        ph.constraints.push_back(std::move(r));
      }
      ++t;
    }
    QpSolver phase1(ph, 1e-9, 1e-9);
    phase1.impl_->in_phase1 = true;
    const QpSolution s = phase1.solve();
    if (s.status == QpStatus::Optimal) return s.objective > 1e-7;
    return false;  // inconclusive: do not certify
  }

  // ---- main ADMM loop -----------------------------------------------------

  QpSolution run(const std::vector<double>& lo, const std::vector<double>& hi,
                 const std::vector<double>* warm, int max_iter) {
    sync_rho(lo, hi);
    VectorXd l, u;
    scaled_bounds(lo, hi, l, u);

    VectorXd xs = VectorXd::Zero(nv);
    if (warm) {
      if (static_cast<int>(warm->size()) != nv) {
        throw std::invalid_argument("qp: warm start size mismatch");
      }
      for (int j = 0; j < nv; ++j) {
        if (!std::isfinite((*warm)[j])) throw std::invalid_argument("qp: NaN/Inf in warm start");
        xs[j] = (*warm)[j] / D[j];
      }
    }
    // a feasible warm primal admits direct active-set treatment
    if (warm) {
      double viol = 0.0;
      for (int i = 0; i < nrows; ++i) {
        const double v = row_value_at(i, *warm);
        if (row_lo_at(i, lo) > -kInf) viol = std::max(viol, row_lo_at(i, lo) - v);
        if (row_hi_at(i, hi) < kInf) viol = std::max(viol, v - row_hi_at(i, hi));
      }
      ++qp_counters().polish_attempts;
      Polished pol;
      if (nv <= 120 && viol <= 1e-9) {
        pol = primal_active_set(*warm, lo, hi);
      } else {
        pol = refine(guess_from_primal(*warm, lo, hi), lo, hi, 30);
      }
      if (pol.ok) {
        ++qp_counters().polish_successes;
        QpSolution sol;
        sol.status = QpStatus::Optimal;
        sol.primal = std::move(pol.x);
        sol.objective = prob.objective_value(sol.primal);
        sol.kkt_residual = std::max(pol.rp, pol.rd);
        return sol;
      }
    }

    VectorXd zs;
    row_values(xs, zs);
    for (int i = 0; i < nrows; ++i) zs[i] = std::min(std::max(zs[i], l[i]), u[i]);
    VectorXd ys = VectorXd::Zero(nrows);
    VectorXd ys_prev = ys, xs_prev = xs;

    auto finish = [&](const std::vector<double>& x, double rp, double rd,
                      QpStatus st) {
      QpSolution sol;
      sol.status = st;
      sol.primal = x;
      sol.objective = prob.objective_value(x);
      sol.kkt_residual = std::max(rp, rd);
      return sol;
    };
    auto unscale_x = [&]() {
      std::vector<double> x(nv);
      for (int j = 0; j < nv; ++j) x[j] = xs[j] * D[j];
      return x;
    };

    VectorXd rhs(nv), xt(nv), zt(nrows), w(nrows);
    int last_polish = 0;
    double polish_gate = 1e-3;
    ++qp_counters().solves;
    for (int iter = 1; iter <= max_iter; ++iter) {
      ++qp_counters().iterations;
      // x-step through the cached factorization
      for (int j = 0; j < nv; ++j) rhs[j] = kSigma * xs[j] - q_s[j];
      for (int i = 0; i < nrows; ++i) w[i] = rho[i] * zs[i] - ys[i];
      add_At(w, rhs);
      xt = chol.solve(rhs);
      row_values(xt, zt);

      for (int j = 0; j < nv; ++j) xs[j] = kAlpha * xt[j] + (1.0 - kAlpha) * xs[j];
      for (int i = 0; i < nrows; ++i) {
        const double zr = kAlpha * zt[i] + (1.0 - kAlpha) * zs[i];
        const double znew = std::min(std::max(zr + ys[i] / rho[i], l[i]), u[i]);
        ys[i] += rho[i] * (zr - znew);
        zs[i] = znew;
      }

      if (iter % 25 != 0 && iter != max_iter) continue;

      double rp, rd;
      residuals(xs, zs, ys, rp, rd);

      const bool admm_ok = rp <= feas_tol && rd <= kkt_tol;
      if (admm_ok || (rp <= polish_gate && rd <= polish_gate && iter - last_polish >= 100) ||
          iter == max_iter) {
        last_polish = iter;
        ++qp_counters().polish_attempts;
        Polished pol = polish(zs, ys, lo, hi, 30);
        if (pol.ok) {
          ++qp_counters().polish_successes;
          return finish(pol.x, pol.rp, pol.rd, QpStatus::Optimal);
        }
        polish_gate = std::max(polish_gate * 0.1, 10.0 * kkt_tol);
        if (admm_ok) return finish(unscale_x(), rp, rd, QpStatus::Optimal);
        if (iter == max_iter) {
          // worth the extra passes only where exactness is the point; large
          // searches absorb unfinished solves through their bound slack
          if (nv <= 100) {
            Polished rescued = perturbation_rescue(lo, hi, xs);
            if (rescued.ok) {
              ++qp_counters().rescues;
              return finish(rescued.x, rescued.rp, rescued.rd, QpStatus::Optimal);
            }
          }
          return finish(unscale_x(), rp, rd, QpStatus::IterationLimit);
        }
      }

      // infeasibility certificates, checked on iterate deltas
      {
        VectorXd dys = ys - ys_prev;
        double dy_norm = 0.0;
        for (int i = 0; i < nrows; ++i) dy_norm = std::max(dy_norm, std::abs(dys[i] * E[i]));
        if (dy_norm > 1e-12) {
          VectorXd atdy = VectorXd::Zero(nv);
          add_At(dys, atdy);
          double cert1 = 0.0;
          for (int j = 0; j < nv; ++j) cert1 = std::max(cert1, std::abs(atdy[j]) / D[j]);
          double support = 0.0;
          bool inf_bound_hit = false;
          for (int i = 0; i < nrows; ++i) {
            const double dy = dys[i] * E[i];
            const double lraw = l[i] > -kInf ? l[i] / E[i] : -kInf;
            const double uraw = u[i] < kInf ? u[i] / E[i] : kInf;
            if (dy > 0) {
              if (uraw == kInf) { if (dy > kInfeasTol * dy_norm) inf_bound_hit = true; }
              else support += uraw * dy;
            } else if (dy < 0) {
              if (lraw == -kInf) { if (-dy > kInfeasTol * dy_norm) inf_bound_hit = true; }
              else support += lraw * dy;
            }
          }
          if (!inf_bound_hit && cert1 <= kInfeasTol * dy_norm &&
              support <= -kInfeasTol * dy_norm) {
            if (confirm_infeasible(lo, hi)) {
              QpSolution sol;
              sol.status = QpStatus::Infeasible;
              sol.primal = unscale_x();
              sol.kkt_residual = std::max(rp, rd);
              return sol;
            }
          }
        }

        VectorXd dxs = xs - xs_prev;
        double dx_norm = 0.0;
        for (int j = 0; j < nv; ++j) dx_norm = std::max(dx_norm, std::abs(dxs[j] * D[j]));
        if (dx_norm > 1e-12) {
          double pdx = 0.0, qdx = 0.0;
          for (int j = 0; j < nv; ++j) {
            const double dx = dxs[j] * D[j];
            pdx = std::max(pdx, std::abs(prob.quadratic_diag[j] * dx));
            qdx += prob.linear_cost[j] * dx;
          }
          bool ray_ok = pdx <= kInfeasTol * dx_norm && qdx < -kInfeasTol * dx_norm;
          if (ray_ok) {
            VectorXd adx;
            row_values(dxs, adx);
            for (int i = 0; i < nrows && ray_ok; ++i) {
              const double v = adx[i] / E[i];
              if (u[i] < kInf && v > kInfeasTol * dx_norm) ray_ok = false;
              if (l[i] > -kInf && v < -kInfeasTol * dx_norm) ray_ok = false;
            }
            if (ray_ok) {
              QpSolution sol;
              sol.status = QpStatus::Unbounded;
              sol.primal = unscale_x();
              sol.kkt_residual = std::max(rp, rd);
              return sol;
            }
          }
        }
        ys_prev = ys;
        xs_prev = xs;
      }

      // adaptive step-size: rebalance primal vs dual progress
      if (iter % 100 == 0) {
        VectorXd ax;
        row_values(xs, ax);
        double nx = std::max(ax.lpNorm<Eigen::Infinity>(), zs.lpNorm<Eigen::Infinity>());
        VectorXd g = VectorXd::Zero(nv);
        for (int j = 0; j < nv; ++j) g[j] = pdiag_s[j] * xs[j];
        add_At(ys, g);
        double ny = std::max(g.lpNorm<Eigen::Infinity>(), q_s.lpNorm<Eigen::Infinity>());
        double rps, rds;
        {
          double t1 = 0.0, t2 = 0.0;
          for (int i = 0; i < nrows; ++i) t1 = std::max(t1, std::abs(ax[i] - zs[i]));
          VectorXd gg = VectorXd::Zero(nv);
          for (int j = 0; j < nv; ++j) gg[j] = pdiag_s[j] * xs[j] + q_s[j];
          add_At(ys, gg);
          t2 = gg.lpNorm<Eigen::Infinity>();
          rps = t1 / std::max(nx, 1e-10);
          rds = t2 / std::max(ny, 1e-10);
        }
        const double ratio = std::sqrt(rps / std::max(rds, 1e-16));
        if (ratio > 5.0 || ratio < 0.2) {
          rho_bar = std::min(std::max(rho_bar * ratio, 1e-6), 1e6);
          qp_counters().last_rho = rho_bar;
          for (int i = 0; i < nrows; ++i) {
            rho[i] = row_eq[i] ? rho_bar * kRhoEqScale : rho_bar;
          }
          factorize();
        }
      }
    }
    // unreachable; the max_iter branch above returns
    QpSolution sol;
    sol.primal = unscale_x();
    sol.objective = prob.objective_value(sol.primal);
    return sol;
  }
};

QpSolver::QpSolver(const QpProblem& p, double feas_tol, double kkt_tol)
    : impl_(std::make_unique<Impl>(p, feas_tol, kkt_tol)) {}

QpSolver::~QpSolver() = default;

QpSolution QpSolver::solve(const std::vector<double>* warm_start) {
  return impl_->run(impl_->prob.var_lo, impl_->prob.var_hi, warm_start, max_iterations);
}

QpSolution QpSolver::solve_with_bounds(const std::vector<double>& lo,
                                       const std::vector<double>& hi,
                                       const std::vector<double>* warm_start) {
  if (static_cast<int>(lo.size()) != impl_->nv || static_cast<int>(hi.size()) != impl_->nv) {
    throw std::invalid_argument("qp: bound override size mismatch");
  }
  return impl_->run(lo, hi, warm_start, max_iterations);
}

QpSolution solve_qp(const QpProblem& p, const std::vector<double>* warm_start,
                    double feas_tol, double kkt_tol) {
  QpSolver solver(p, feas_tol, kkt_tol);
  return solver.solve(warm_start);
}

void dump_lp(const QpProblem& p, std::ostream& os) {
  os << "minimize\n  ";
  bool first = true;
  for (int j = 0; j < p.num_vars; ++j) {
    if (p.quadratic_diag[j] != 0.0) {
      os << (first ? "" : " + ") << "0.5*" << p.quadratic_diag[j] << " x" << j << "^2";
      first = false;
    }
  }
  for (int j = 0; j < p.num_vars; ++j) {
    if (p.linear_cost[j] != 0.0) {
      os << (first ? "" : " + ") << p.linear_cost[j] << " x" << j;
      first = false;
    }
  }
  if (first) os << "0";
  os << "\nsubject to\n";
  for (std::size_t i = 0; i < p.constraints.size(); ++i) {
    const auto& c = p.constraints[i];
    os << "  r" << i << ": ";
    if (c.lo > -kInf) os << c.lo << " <= ";
    bool f2 = true;
    for (const auto& [j, a] : c.terms) {
      os << (f2 ? "" : " + ") << a << " x" << j;
      f2 = false;
    }
    if (c.hi < kInf) os << " <= " << c.hi;
    os << "\n";
  }
  os << "bounds\n";
  for (int j = 0; j < p.num_vars; ++j) {
    if (p.var_lo[j] > -kInf || p.var_hi[j] < kInf) {
      os << "  " << p.var_lo[j] << " <= x" << j << " <= " << p.var_hi[j] << "\n";
    }
  }
}

}  // namespace cs3vm
