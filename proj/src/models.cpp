#include "cs3vm/models.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace cs3vm {

namespace {

double max_point_norm(const Dataset& ds) {
  double m = 0.0;
  for (const auto& x : ds.points) {
    double s = 0.0;
    for (double v : x) s += v * v;
    m = std::max(m, std::sqrt(s));
  }
  return m;
}

void check_penalties(const PenaltyConfig& pen) {
  if (!(pen.c1 > 0.0) || !(pen.c2 > 0.0)) {
    throw std::invalid_argument("models: penalty parameters must be positive");
  }
}

// Shared scaffold: omega, b, xi block, optionally eta pair, then z block.
struct Scaffold {
  QpProblem qp;
  VariableLayout layout;
};

Scaffold scaffold(const Dataset& ds, const Sample& sample, double c1,
                  bool with_eta, double c2, int z_count) {
  const int d = ds.dim();
  const int n = sample.num_labeled();
  Scaffold s;
  s.layout.dim = d;
  s.layout.n_labeled = n;
  s.layout.bias_index = d;
  s.layout.xi_begin = d + 1;
  int nv = d + 1 + n;
  if (with_eta) {
    s.layout.eta1_index = nv++;
    s.layout.eta2_index = nv++;
  }
  if (z_count > 0) {
    s.layout.z_begin = nv;
    s.layout.z_count = z_count;
    nv += z_count;
  }
  s.qp.resize(nv);
  for (int j = 0; j < d; ++j) s.qp.quadratic_diag[j] = 1.0;
  for (int i = 0; i < n; ++i) {
    s.qp.linear_cost[s.layout.xi_begin + i] = c1;
    s.qp.var_lo[s.layout.xi_begin + i] = 0.0;
  }
  if (with_eta) {
    s.qp.linear_cost[s.layout.eta1_index] = c2;
    s.qp.linear_cost[s.layout.eta2_index] = c2;
    s.qp.var_lo[s.layout.eta1_index] = 0.0;
    s.qp.var_lo[s.layout.eta2_index] = 0.0;
  }
  for (int k = 0; k < z_count; ++k) {
    s.qp.var_lo[s.layout.z_begin + k] = 0.0;
    s.qp.var_hi[s.layout.z_begin + k] = 1.0;
  }
  // labeled margin rows: y_i (w'x + b) + xi_i >= 1
  for (int i = 0; i < n; ++i) {
    const auto& x = ds.points[sample.labeled_idx[i]];
    const double y = sample.labels[i];
    LinearConstraint row;
    row.terms.reserve(d + 2);
    for (int j = 0; j < d; ++j) row.terms.push_back({j, y * x[j]});
    row.terms.push_back({s.layout.bias_index, y});
    row.terms.push_back({s.layout.xi_begin + i, 1.0});
    row.lo = 1.0;
    s.qp.constraints.push_back(std::move(row));
  }
  return s;
}

LinearConstraint plane_row(const std::vector<double>& x, int d, int bias_index) {
  LinearConstraint row;
  row.terms.reserve(d + 2);
  for (int j = 0; j < d; ++j) row.terms.push_back({j, x[j]});
  row.terms.push_back({bias_index, 1.0});
  return row;
}

void add_cardinality_rows(QpProblem& qp, const VariableLayout& layout,
                          const std::vector<double>& weights, double target) {
  LinearConstraint lo_row, hi_row;
  for (int k = 0; k < layout.z_count; ++k) {
    lo_row.terms.push_back({layout.z_begin + k, weights[k]});
    hi_row.terms.push_back({layout.z_begin + k, weights[k]});
  }
  lo_row.terms.push_back({layout.eta1_index, 1.0});
  lo_row.lo = target;
  hi_row.terms.push_back({layout.eta2_index, -1.0});
  hi_row.hi = target;
  qp.constraints.push_back(std::move(lo_row));
  qp.constraints.push_back(std::move(hi_row));
}

}  // namespace

double omega_norm(const Hyperplane& h) {
  double s = 0.0;
  for (double v : h.omega) s += v * v;
  return std::sqrt(s);
}

double point_objective(const PenaltyConfig& pen, const Hyperplane& h,
                       const std::vector<double>& xi, double eta1, double eta2) {
  double obj = 0.5 * omega_norm(h) * omega_norm(h);
  for (double v : xi) obj += pen.c1 * v;
  obj += pen.c2 * (eta1 + eta2);
  return obj;
}

std::vector<double> labeled_slacks(const Dataset& ds, const Sample& sample,
                                   const Hyperplane& h) {
  std::vector<double> xi(sample.num_labeled());
  for (int i = 0; i < sample.num_labeled(); ++i) {
    const double v = hyperplane_value(h, ds.points[sample.labeled_idx[i]]);
    xi[i] = std::max(0.0, 1.0 - sample.labels[i] * v);
  }
  return xi;
}

double big_m_initial(const Dataset& ds, const Sample& sample,
                     const PenaltyConfig& pen, int tau) {
  check_penalties(pen);
  const int m = sample.num_unlabeled();
  if (tau < 0 || tau > m) throw std::invalid_argument("big_m_initial: tau out of range");
  int nbar = 0;
  for (int y : sample.labels) {
    if (y < 0) ++nbar;
  }
  const double f0 = 2.0 * pen.c1 * nbar + pen.c2 * (m - tau);
  return 2.0 * std::sqrt(2.0 * f0) * max_point_norm(ds) + 1.0;
}

double big_m_update(double f_upper, const Dataset& ds) {
  if (f_upper < 0.0) throw std::invalid_argument("big_m_update: negative objective bound");
  return 2.0 * std::sqrt(2.0 * f_upper) * max_point_norm(ds) + 1.0;
}

SvmModel build_svm(const Dataset& ds, const Sample& sample, double c1) {
  if (sample.num_labeled() < 1) throw std::invalid_argument("build_svm: no labeled points");
  if (!(c1 > 0.0)) throw std::invalid_argument("build_svm: c1 must be positive");
  Scaffold s = scaffold(ds, sample, c1, /*with_eta=*/false, 0.0, /*z_count=*/0);
  return {std::move(s.qp), s.layout};
}

MiqpProblem build_cs3vm(const Dataset& ds, const Sample& sample,
                        const PenaltyConfig& pen, int tau, double M) {
  check_penalties(pen);
  if (M <= 0.0) throw std::invalid_argument("build_cs3vm: M must be positive");
  const int m = sample.num_unlabeled();
  if (tau < 0 || tau > m) throw std::invalid_argument("build_cs3vm: tau out of range");

  Scaffold s = scaffold(ds, sample, pen.c1, /*with_eta=*/true, pen.c2, m);
  MiqpProblem p;
  p.layout = s.layout;
  p.big_m = M;
  p.tau_effective = tau;
  for (int k = 0; k < m; ++k) {
    const auto& x = ds.points[sample.unlabeled_idx[k]];
    // -M <= w'x + b - M z <= 0, i.e. the pair of indicator rows
    LinearConstraint row = plane_row(x, s.layout.dim, s.layout.bias_index);
    row.terms.push_back({s.layout.z_begin + k, -M});
    row.lo = -M;
    row.hi = 0.0;
    s.qp.constraints.push_back(std::move(row));
    p.binary_idx.push_back(s.layout.z_begin + k);
    p.z_rep.push_back(x);
    p.z_weight.push_back(1.0);
    p.z_source.push_back(k);
  }
  add_cardinality_rows(s.qp, s.layout, p.z_weight, tau);
  p.relaxation = std::move(s.qp);
  return p;
}

MiqpProblem build_clustered(const Dataset& ds, const Sample& sample,
                            const std::vector<std::vector<double>>& centroids,
                            const std::vector<double>& counts,
                            const PenaltyConfig& pen, int tau, double M) {
  check_penalties(pen);
  if (M <= 0.0) throw std::invalid_argument("build_clustered: M must be positive");
  if (centroids.size() != counts.size()) {
    throw std::invalid_argument("build_clustered: centroids/counts size mismatch");
  }
  for (double e : counts) {
    if (e < 1.0) throw std::invalid_argument("build_clustered: empty cluster");
  }
  const int k = static_cast<int>(centroids.size());
  Scaffold s = scaffold(ds, sample, pen.c1, /*with_eta=*/true, pen.c2, k);
  MiqpProblem p;
  p.layout = s.layout;
  p.big_m = M;
  p.tau_effective = tau;
  for (int j = 0; j < k; ++j) {
    LinearConstraint row = plane_row(centroids[j], s.layout.dim, s.layout.bias_index);
    row.terms.push_back({s.layout.z_begin + j, -M});
    row.lo = -M;
    row.hi = 0.0;
    s.qp.constraints.push_back(std::move(row));
    p.binary_idx.push_back(s.layout.z_begin + j);
    p.z_rep.push_back(centroids[j]);
    p.z_weight.push_back(counts[j]);
    p.z_source.push_back(j);
  }
  add_cardinality_rows(s.qp, s.layout, p.z_weight, tau);
  p.relaxation = std::move(s.qp);
  return p;
}

namespace {

MiqpProblem build_fixed_common(const Dataset& ds, const Sample& sample,
                               const std::vector<int>& fixed_pos,
                               const std::vector<int>& fixed_neg,
                               std::optional<std::pair<int, Side>> probe,
                               const PenaltyConfig& pen, int tau, double M,
                               const char* what) {
  check_penalties(pen);
  if (M <= 0.0) throw std::invalid_argument(std::string(what) + ": M must be positive");
  const int m = sample.num_unlabeled();
  std::vector<int> side(m, 0);  // +1 fixed positive, -1 fixed negative
  for (int i : fixed_pos) {
    if (i < 0 || i >= m) throw std::invalid_argument(std::string(what) + ": bad fixed index");
    side[i] = +1;
  }
  for (int i : fixed_neg) {
    if (i < 0 || i >= m) throw std::invalid_argument(std::string(what) + ": bad fixed index");
    if (side[i] != 0) {
      throw std::invalid_argument(std::string(what) + ": index fixed on both sides");
    }
    side[i] = -1;
  }
  if (probe && side[probe->first] != 0) {
    throw std::invalid_argument(std::string(what) + ": probed index is already fixed");
  }

  std::vector<int> free_pos;
  for (int i = 0; i < m; ++i) {
    if (side[i] == 0) free_pos.push_back(i);
  }
  const int zc = static_cast<int>(free_pos.size());
  Scaffold s = scaffold(ds, sample, pen.c1, /*with_eta=*/true, pen.c2, zc);
  MiqpProblem p;
  p.layout = s.layout;
  p.big_m = M;
  p.tau_effective = tau - static_cast<double>(fixed_pos.size());

  for (int i = 0; i < m; ++i) {
    if (side[i] == 0) continue;
    LinearConstraint row =
        plane_row(ds.points[sample.unlabeled_idx[i]], s.layout.dim, s.layout.bias_index);
    if (side[i] > 0) {
      row.lo = 0.0;
    } else {
      row.hi = 0.0;
    }
    s.qp.constraints.push_back(std::move(row));
  }
  for (int k = 0; k < zc; ++k) {
    const int i = free_pos[k];
    const auto& x = ds.points[sample.unlabeled_idx[i]];
    if (probe && i == probe->first) {
      // tested side: one hard half-space plus the matching indicator row
      LinearConstraint hard = plane_row(x, s.layout.dim, s.layout.bias_index);
      LinearConstraint ind = plane_row(x, s.layout.dim, s.layout.bias_index);
      ind.terms.push_back({s.layout.z_begin + k, -M});
      if (probe->second == Side::Positive) {
        hard.lo = 0.0;
        ind.hi = 0.0;  // w'x + b <= z M
      } else {
        hard.hi = 0.0;
        ind.lo = -M;  // w'x + b >= -(1-z) M
      }
      s.qp.constraints.push_back(std::move(hard));
      s.qp.constraints.push_back(std::move(ind));
    } else {
      LinearConstraint row = plane_row(x, s.layout.dim, s.layout.bias_index);
      row.terms.push_back({s.layout.z_begin + k, -M});
      row.lo = -M;
      row.hi = 0.0;
      s.qp.constraints.push_back(std::move(row));
    }
    p.binary_idx.push_back(s.layout.z_begin + k);
    p.z_rep.push_back(x);
    p.z_weight.push_back(1.0);
    p.z_source.push_back(i);
  }
  add_cardinality_rows(s.qp, s.layout, p.z_weight, p.tau_effective);
  p.relaxation = std::move(s.qp);
  return p;
}

}  // namespace

MiqpProblem build_fixing_problem(const Dataset& ds, const Sample& sample,
                                 const std::vector<int>& fixed_pos,
                                 const std::vector<int>& fixed_neg, int s,
                                 Side tested_side, const PenaltyConfig& pen,
                                 int tau, double M) {
  return build_fixed_common(ds, sample, fixed_pos, fixed_neg,
                            std::make_pair(s, tested_side), pen, tau, M,
                            "build_fixing_problem");
}

MiqpProblem build_reduced_problem(const Dataset& ds, const Sample& sample,
                                  const std::vector<int>& fixed_pos,
                                  const std::vector<int>& fixed_neg,
                                  const PenaltyConfig& pen, int tau, double M) {
  return build_fixed_common(ds, sample, fixed_pos, fixed_neg, std::nullopt, pen,
                            tau, M, "build_reduced_problem");
}

FeasiblePoint lift_svm_solution(const Dataset& ds, const Sample& sample,
                                const Hyperplane& h, const PenaltyConfig& pen,
                                int tau) {
  const int m = sample.num_unlabeled();
  const double band = boundary_band(h);
  FeasiblePoint fp;
  fp.hyperplane = h;
  fp.xi = labeled_slacks(ds, sample, h);
  fp.z.assign(m, 0);

  int strict_sum = 0;
  std::vector<int> on_plane;
  for (int i = 0; i < m; ++i) {
    const double v = hyperplane_value(h, ds.points[sample.unlabeled_idx[i]]);
    if (v > band) {
      fp.z[i] = 1;
      ++strict_sum;
    } else if (v >= -band) {
      on_plane.push_back(i);
    }
  }
  const int fill = strict_sum <= tau ? 1 : 0;
  for (int i : on_plane) fp.z[i] = fill;

  int total = 0;
  for (int zi : fp.z) total += zi;
  fp.eta1 = std::max(0, tau - total);
  fp.eta2 = std::max(0, total - tau);
  fp.objective = point_objective(pen, h, fp.xi, fp.eta1, fp.eta2);
  return fp;
}

FeasiblePoint lift_clustered_solution(const FeasiblePoint& clustered,
                                      const std::vector<std::vector<int>>& cluster_members,
                                      const Dataset& ds, const Sample& sample) {
  if (clustered.z.size() != cluster_members.size()) {
    throw std::invalid_argument("lift_clustered_solution: z/cluster count mismatch");
  }
  const int m = sample.num_unlabeled();
  FeasiblePoint fp = clustered;
  fp.z.assign(m, 0);
  for (std::size_t j = 0; j < cluster_members.size(); ++j) {
    bool pos = false, neg = false;
    for (int i : cluster_members[j]) {
      const double v = hyperplane_value(clustered.hyperplane, ds.points[sample.unlabeled_idx[i]]);
      if (v > 0.0) pos = true;
      if (v < 0.0) neg = true;
    }
    if (pos && neg) {
      throw std::invalid_argument("lift_clustered_solution: a cluster is cut by the hyperplane");
    }
    for (int i : cluster_members[j]) fp.z[i] = clustered.z[j];
  }
  return fp;
}

double p3_max_residual(const Dataset& ds, const Sample& sample,
                       const PenaltyConfig& pen, int tau, double M,
                       const FeasiblePoint& fp) {
  double r = 0.0;
  const int n = sample.num_labeled();
  for (int i = 0; i < n; ++i) {
    const double v = hyperplane_value(fp.hyperplane, ds.points[sample.labeled_idx[i]]);
    r = std::max(r, 1.0 - fp.xi[i] - sample.labels[i] * v);
    r = std::max(r, -fp.xi[i]);
  }
  const int m = sample.num_unlabeled();
  int total = 0;
  for (int i = 0; i < m; ++i) {
    const double v = hyperplane_value(fp.hyperplane, ds.points[sample.unlabeled_idx[i]]);
    const int zi = fp.z[i];
    r = std::max(r, v - zi * M);
    r = std::max(r, -(1 - zi) * M - v);
    total += zi;
  }
  r = std::max(r, (tau - fp.eta1) - total);
  r = std::max(r, total - (tau + fp.eta2));
  r = std::max(r, -fp.eta1);
  r = std::max(r, -fp.eta2);
  return r;
}

Hyperplane extract_hyperplane(const std::vector<double>& x, const VariableLayout& layout) {
  Hyperplane h;
  h.omega.assign(x.begin(), x.begin() + layout.dim);
  h.b = x[layout.bias_index];
  return h;
}

FeasiblePoint extract_point(const std::vector<double>& x, const VariableLayout& layout,
                            const PenaltyConfig& pen) {
  FeasiblePoint fp;
  fp.hyperplane = extract_hyperplane(x, layout);
  fp.xi.assign(x.begin() + layout.xi_begin, x.begin() + layout.xi_begin + layout.n_labeled);
  if (layout.eta1_index >= 0) {
    fp.eta1 = x[layout.eta1_index];
    fp.eta2 = x[layout.eta2_index];
  }
  fp.z.resize(layout.z_count);
  for (int k = 0; k < layout.z_count; ++k) {
    fp.z[k] = x[layout.z_begin + k] >= 0.5 ? 1 : 0;
  }
  fp.objective = point_objective(pen, fp.hyperplane, fp.xi, fp.eta1, fp.eta2);
  return fp;
}

}  // namespace cs3vm
