#include <Eigen/Dense>
#include <cmath>
#include <sstream>

#include "cs3vm/qp.hpp"
#include "cs3vm/rng.hpp"
#include "doctest.h"

using namespace cs3vm;

namespace {

// Independent oracle: enumerate candidate active sets of elementary
// constraints (single-sided rows and bounds), solve the equality KKT system,
// and keep the best point that is feasible with correctly signed
// multipliers. Exact for tiny problems.
struct Elementary {
  std::vector<double> a;  // dense row
  double b;               // a'x <= b
};

double oracle_optimum(const QpProblem& p) {
  const int n = p.num_vars;
  std::vector<Elementary> cons;
  auto dense = [&](const LinearConstraint& c) {
    std::vector<double> a(n, 0.0);
    for (const auto& [j, v] : c.terms) a[j] += v;
    return a;
  };
  for (const auto& c : p.constraints) {
    if (c.hi < kInf) cons.push_back({dense(c), c.hi});
    if (c.lo > -kInf) {
      auto a = dense(c);
      for (double& v : a) v = -v;
      cons.push_back({std::move(a), -c.lo});
    }
  }
  for (int j = 0; j < n; ++j) {
    if (p.var_hi[j] < kInf) {
      std::vector<double> a(n, 0.0);
      a[j] = 1.0;
      cons.push_back({std::move(a), p.var_hi[j]});
    }
    if (p.var_lo[j] > -kInf) {
      std::vector<double> a(n, 0.0);
      a[j] = -1.0;
      cons.push_back({std::move(a), -p.var_lo[j]});
    }
  }
  const int mc = static_cast<int>(cons.size());
  double best = kInf;
  for (unsigned mask = 0; mask < (1u << mc); ++mask) {
    std::vector<int> act;
    for (int i = 0; i < mc; ++i) {
      if ((mask >> i) & 1u) act.push_back(i);
    }
    if (static_cast<int>(act.size()) > n) continue;
    const int na = static_cast<int>(act.size());
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n + na, n + na);
    Eigen::VectorXd rhs(n + na);
    for (int j = 0; j < n; ++j) {
      K(j, j) = p.quadratic_diag[j];
      rhs[j] = -p.linear_cost[j];
    }
    for (int k = 0; k < na; ++k) {
      for (int j = 0; j < n; ++j) {
        K(n + k, j) = cons[act[k]].a[j];
        K(j, n + k) = cons[act[k]].a[j];
      }
      rhs[n + k] = cons[act[k]].b;
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(K);
    Eigen::VectorXd w = lu.solve(rhs);
    if (!w.allFinite()) continue;
    if ((K * w - rhs).lpNorm<Eigen::Infinity>() > 1e-8) continue;
    bool ok = true;
    for (int k = 0; k < na && ok; ++k) {
      if (w[n + k] < -1e-9) ok = false;  // multipliers of a'x <= b must be >= 0
    }
    std::vector<double> x(n);
    for (int j = 0; j < n; ++j) x[j] = w[j];
    for (int i = 0; i < mc && ok; ++i) {
      double ax = 0.0;
      for (int j = 0; j < n; ++j) ax += cons[i].a[j] * x[j];
      if (ax > cons[i].b + 1e-8) ok = false;
    }
    if (ok) best = std::min(best, p.objective_value(x));
  }
  return best;
}

}  // namespace

TEST_CASE("single variable with an active bound") {
  QpProblem p;
  p.resize(1);
  p.quadratic_diag[0] = 1.0;
  p.var_lo[0] = 1.0;
  const QpSolution s = solve_qp(p);
  REQUIRE(s.status == QpStatus::Optimal);
  CHECK(s.primal[0] == doctest::Approx(1.0).epsilon(1e-8));
  CHECK(s.objective == doctest::Approx(0.5).epsilon(1e-8));
}

TEST_CASE("unconstrained quadratic settles at zero") {
  QpProblem p;
  p.resize(1);
  p.quadratic_diag[0] = 1.0;
  const QpSolution s = solve_qp(p);
  REQUIRE(s.status == QpStatus::Optimal);
  CHECK(std::abs(s.primal[0]) < 1e-8);
  CHECK(std::abs(s.objective) < 1e-12);
}

TEST_CASE("contradictory constraints are infeasible") {
  QpProblem p;
  p.resize(1);
  p.quadratic_diag[0] = 1.0;
  LinearConstraint c1, c2;
  c1.terms = {{0, 1.0}};
  c1.lo = 1.0;
  c2.terms = {{0, 1.0}};
  c2.hi = 0.0;
  p.constraints = {c1, c2};
  const QpSolution s = solve_qp(p);
  CHECK(s.status == QpStatus::Infeasible);
}

TEST_CASE("soft-margin problem on a symmetric labeled pair") {
  // variables: w, b, xi1 (for x=-1, y=-1), xi2 (for x=+1, y=+1)
  QpProblem p;
  p.resize(4);
  p.quadratic_diag[0] = 1.0;
  p.linear_cost[2] = 1.0;
  p.linear_cost[3] = 1.0;
  p.var_lo[2] = 0.0;
  p.var_lo[3] = 0.0;
  LinearConstraint r1, r2;
  r1.terms = {{0, 1.0}, {1, -1.0}, {2, 1.0}};  // y=-1, x=-1: w - b + xi1 >= 1
  r1.lo = 1.0;
  r2.terms = {{0, 1.0}, {1, 1.0}, {3, 1.0}};  // y=+1, x=+1: w + b + xi2 >= 1
  r2.lo = 1.0;
  p.constraints = {r1, r2};
  const QpSolution s = solve_qp(p);
  REQUIRE(s.status == QpStatus::Optimal);
  CHECK(s.objective == doctest::Approx(0.5).epsilon(1e-7));
  CHECK(s.primal[0] == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(std::abs(s.primal[1]) < 1e-6);
}

TEST_CASE("unbounded linear direction is reported") {
  QpProblem p;
  p.resize(1);
  p.linear_cost[0] = -1.0;
  const QpSolution s = solve_qp(p);
  CHECK(s.status == QpStatus::Unbounded);
}

TEST_CASE("NaN input is rejected before solving") {
  QpProblem p;
  p.resize(1);
  p.linear_cost[0] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS(solve_qp(p));
}

TEST_CASE("warm and cold starts agree") {
  QpProblem p;
  p.resize(2);
  p.quadratic_diag = {1.0, 0.0};
  p.linear_cost = {0.0, 2.0};
  p.var_lo = {-kInf, -1.0};
  p.var_hi = {kInf, 5.0};
  LinearConstraint c;
  c.terms = {{0, 1.0}, {1, 1.0}};
  c.lo = 2.0;
  p.constraints = {c};
  const QpSolution cold = solve_qp(p);
  std::vector<double> warm = {10.0, -1.0};
  const QpSolution warmed = solve_qp(p, &warm);
  REQUIRE(cold.status == QpStatus::Optimal);
  REQUIRE(warmed.status == QpStatus::Optimal);
  CHECK(warmed.objective == doctest::Approx(cold.objective).epsilon(1e-7));
}

TEST_CASE("random problems match the active-set enumeration oracle") {
  Rng rng(7);
  for (int trial = 0; trial < 60; ++trial) {
    const int n = 1 + static_cast<int>(rng.uniform_index(3));
    QpProblem p;
    p.resize(n);
    std::vector<double> x0(n);
    for (int j = 0; j < n; ++j) {
      p.quadratic_diag[j] = rng.uniform01() < 0.5 ? 0.0 : 1.0 + rng.uniform01();
      p.linear_cost[j] = 2.0 * rng.uniform01() - 1.0;
      p.var_lo[j] = -5.0;
      p.var_hi[j] = 5.0;
      x0[j] = 4.0 * rng.uniform01() - 2.0;
    }
    const int rows = static_cast<int>(rng.uniform_index(3));
    for (int r = 0; r < rows; ++r) {
      LinearConstraint c;
      double ax0 = 0.0;
      for (int j = 0; j < n; ++j) {
        const double a = 2.0 * rng.uniform01() - 1.0;
        c.terms.push_back({j, a});
        ax0 += a * x0[j];
      }
      c.hi = ax0 + rng.uniform01();  // feasible at x0 by construction
      p.constraints.push_back(std::move(c));
    }
    const double expected = oracle_optimum(p);
    const QpSolution s = solve_qp(p);
    REQUIRE(s.status == QpStatus::Optimal);
    CHECK(p.max_violation(s.primal) <= 1e-8);
    CHECK(s.kkt_residual <= 1e-8);
    CHECK(s.objective == doctest::Approx(expected).epsilon(1e-6));
  }
}

TEST_CASE("objective matches the quadratic form at the primal") {
  QpProblem p;
  p.resize(2);
  p.quadratic_diag = {1.0, 1.0};
  p.linear_cost = {0.5, -0.25};
  p.var_lo = {0.0, 0.0};
  p.var_hi = {3.0, 3.0};
  const QpSolution s = solve_qp(p);
  REQUIRE(s.status == QpStatus::Optimal);
  CHECK(s.objective == doctest::Approx(p.objective_value(s.primal)).epsilon(1e-12));
}

TEST_CASE("debug listing mentions all parts") {
  QpProblem p;
  p.resize(1);
  p.quadratic_diag[0] = 1.0;
  p.var_lo[0] = 1.0;
  LinearConstraint c;
  c.terms = {{0, 2.0}};
  c.hi = 8.0;
  p.constraints = {c};
  std::ostringstream os;
  dump_lp(p, os);
  const std::string text = os.str();
  CHECK(text.find("minimize") != std::string::npos);
  CHECK(text.find("subject to") != std::string::npos);
  CHECK(text.find("bounds") != std::string::npos);
}
