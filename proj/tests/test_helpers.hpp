#ifndef CS3VM_TEST_HELPERS_HPP
#define CS3VM_TEST_HELPERS_HPP

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "cs3vm/bb.hpp"
#include "cs3vm/dataset.hpp"
#include "cs3vm/models.hpp"
#include "cs3vm/qp.hpp"
#include "cs3vm/rng.hpp"

namespace cs3vm::testing {

struct TestInstance {
  Dataset ds;
  Sample sample;
};

// One-dimensional instance small enough to reason about by hand: labeled
// pair x=-1 (y=-1), x=+1 (y=+1); unlabeled {-0.5, 0.5, 2} with true labels
// {-1, +1, +1}, so tau = 2. The optimum of the full problem is w=1, b=0,
// objective 0.5 with z = (0, 1, 1).
inline TestInstance oracle_1d_instance() {
  TestInstance t;
  t.ds.name = "oracle1d";
  t.ds.points = {{-1.0}, {1.0}, {-0.5}, {0.5}, {2.0}};
  t.ds.labels = {-1, +1, -1, +1, +1};
  t.sample.labeled_idx = {0, 1};
  t.sample.unlabeled_idx = {2, 3, 4};
  t.sample.labels = {-1, +1};
  t.sample.tau = 2;
  return t;
}

// Random small instance: points near a random hyperplane with label noise,
// both classes guaranteed among the labeled points, tau set to the true
// positive count among the unlabeled points.
inline TestInstance random_small_instance(Rng& rng, int dmax = 3, int nmax = 8,
                                          int mmax = 10) {
  const int d = 1 + static_cast<int>(rng.uniform_index(dmax));
  const int n = 2 + static_cast<int>(rng.uniform_index(nmax - 1));
  const int m = 1 + static_cast<int>(rng.uniform_index(mmax));
  std::vector<double> w(d);
  double nrm = 0.0;
  for (double& v : w) {
    v = 2.0 * rng.uniform01() - 1.0;
    nrm += v * v;
  }
  nrm = std::sqrt(std::max(nrm, 1e-6));
  for (double& v : w) v /= nrm;
  const double b = rng.uniform01() - 0.5;

  TestInstance t;
  t.ds.name = "random";
  for (int i = 0; i < n + m; ++i) {
    std::vector<double> x(d);
    for (double& v : x) v = 6.0 * rng.uniform01() - 3.0;
    double side = b;
    for (int j = 0; j < d; ++j) side += w[j] * x[j];
    int label = side >= 0.0 ? +1 : -1;
    if (rng.uniform01() < 0.15) label = -label;  // label noise
    t.ds.points.push_back(std::move(x));
    t.ds.labels.push_back(label);
  }
  // force both classes among the labeled points
  t.ds.labels[0] = +1;
  t.ds.labels[1] = -1;
  for (int i = 0; i < n; ++i) {
    t.sample.labeled_idx.push_back(i);
    t.sample.labels.push_back(t.ds.labels[i]);
  }
  for (int i = n; i < n + m; ++i) {
    t.sample.unlabeled_idx.push_back(i);
    if (t.ds.labels[i] > 0) ++t.sample.tau;
  }
  return t;
}

// Independent optimum: enumerate all side assignments of the unlabeled
// points and impose them as hard half-space constraints (no big-M rows).
// Assignment s_i = 1 forces w'x^i + b >= 0, s_i = 0 forces <= 0; the
// cardinality slacks become per-assignment lower bounds. Shares nothing
// with the branch-and-bound path.
inline double side_constraint_oracle(const Dataset& ds, const Sample& sample,
                                     const PenaltyConfig& pen, int tau) {
  const int d = ds.dim();
  const int n = sample.num_labeled();
  const int m = sample.num_unlabeled();
  if (m > 20) throw std::invalid_argument("side_constraint_oracle: m too large");

  // variables: w(d), b, xi(n), eta1, eta2, t(m) with rows w'x^i + b - t_i = 0
  QpProblem p;
  const int bias = d;
  const int xi0 = d + 1;
  const int e1 = d + 1 + n;
  const int e2 = e1 + 1;
  const int t0 = e2 + 1;
  p.resize(t0 + m);
  for (int j = 0; j < d; ++j) p.quadratic_diag[j] = 1.0;
  for (int i = 0; i < n; ++i) {
    p.linear_cost[xi0 + i] = pen.c1;
    p.var_lo[xi0 + i] = 0.0;
  }
  p.linear_cost[e1] = pen.c2;
  p.linear_cost[e2] = pen.c2;
  p.var_lo[e1] = 0.0;
  p.var_lo[e2] = 0.0;
  for (int i = 0; i < n; ++i) {
    const auto& x = ds.points[sample.labeled_idx[i]];
    const double y = sample.labels[i];
    LinearConstraint row;
    for (int j = 0; j < d; ++j) row.terms.push_back({j, y * x[j]});
    row.terms.push_back({bias, y});
    row.terms.push_back({xi0 + i, 1.0});
    row.lo = 1.0;
    p.constraints.push_back(std::move(row));
  }
  for (int k = 0; k < m; ++k) {
    const auto& x = ds.points[sample.unlabeled_idx[k]];
    LinearConstraint row;
    for (int j = 0; j < d; ++j) row.terms.push_back({j, x[j]});
    row.terms.push_back({bias, 1.0});
    row.terms.push_back({t0 + k, -1.0});
    row.lo = 0.0;
    row.hi = 0.0;
    p.constraints.push_back(std::move(row));
  }

  QpSolver solver(p);
  std::vector<double> lo = p.var_lo, hi = p.var_hi, warm;
  double best = kInf;
  for (unsigned mask = 0; mask < (1u << m); ++mask) {
    int zsum = 0;
    for (int k = 0; k < m; ++k) {
      if ((mask >> k) & 1u) {
        lo[t0 + k] = 0.0;
        hi[t0 + k] = kInf;
        ++zsum;
      } else {
        lo[t0 + k] = -kInf;
        hi[t0 + k] = 0.0;
      }
    }
    lo[e1] = std::max(0.0, static_cast<double>(tau - zsum));
    lo[e2] = std::max(0.0, static_cast<double>(zsum - tau));
    const QpSolution s = solver.solve_with_bounds(lo, hi, warm.empty() ? nullptr : &warm);
    if (s.status == QpStatus::Optimal) {
      warm = s.primal;
      best = std::min(best, s.objective);
    }
  }
  return best;
}

}  // namespace cs3vm::testing

#endif
