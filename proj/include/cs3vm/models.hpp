#ifndef CS3VM_MODELS_HPP
#define CS3VM_MODELS_HPP

#include <vector>

#include "cs3vm/bb.hpp"
#include "cs3vm/dataset.hpp"
#include "cs3vm/qp.hpp"

namespace cs3vm {

struct Hyperplane {
  std::vector<double> omega;
  double b = 0.0;
};

inline double hyperplane_value(const Hyperplane& h, const std::vector<double>& x) {
  double v = h.b;
  for (std::size_t j = 0; j < h.omega.size(); ++j) v += h.omega[j] * x[j];
  return v;
}

double omega_norm(const Hyperplane& h);

/// Half-width of the band treated as "on the hyperplane".
inline double boundary_band(const Hyperplane& h) { return 1e-9 * (1.0 + omega_norm(h)); }

struct PenaltyConfig {
  double c1 = 1.0;
  double c2 = 1.0;
};

/// A point feasible for one of the problem variants. z has one entry per
/// unlabeled point (per-point problems) or per cluster (clustered problem).
struct FeasiblePoint {
  Hyperplane hyperplane;
  std::vector<double> xi;
  double eta1 = 0.0;
  double eta2 = 0.0;
  std::vector<int> z;
  double objective = 0.0;
};

double point_objective(const PenaltyConfig& pen, const Hyperplane& h,
                       const std::vector<double>& xi, double eta1, double eta2);

/// Hinge slacks of the labeled constraints at a given hyperplane.
std::vector<double> labeled_slacks(const Dataset& ds, const Sample& sample,
                                   const Hyperplane& h);

/// Initial valid big-M from the data: 2*sqrt(2*(2*C1*nbar + C2*(m - tau)))
/// * max_i ||x^i|| + 1, where nbar counts labeled negatives.
double big_m_initial(const Dataset& ds, const Sample& sample,
                     const PenaltyConfig& pen, int tau);

/// Tightened big-M from a known feasible objective value:
/// 2*sqrt(2*f_upper) * max_i ||x^i|| + 1.
double big_m_update(double f_upper, const Dataset& ds);

struct SvmModel {
  QpProblem problem;
  VariableLayout layout;
};

/// Soft-margin linear SVM on the labeled points only.
SvmModel build_svm(const Dataset& ds, const Sample& sample, double c1);

/// Full cardinality-constrained problem: one binary per unlabeled point.
MiqpProblem build_cs3vm(const Dataset& ds, const Sample& sample,
                        const PenaltyConfig& pen, int tau, double M);

/// Clustered surrogate: one binary per cluster, counts in the cardinality
/// row. Every count must be >= 1.
MiqpProblem build_clustered(const Dataset& ds, const Sample& sample,
                            const std::vector<std::vector<double>>& centroids,
                            const std::vector<double>& counts,
                            const PenaltyConfig& pen, int tau, double M);

enum class Side { Positive, Negative };

/// Feasibility probe: hard side constraints on the fixed sets, and the
/// candidate point s constrained to the tested side. Indices are positions
/// into sample.unlabeled_idx.
MiqpProblem build_fixing_problem(const Dataset& ds, const Sample& sample,
                                 const std::vector<int>& fixed_pos,
                                 const std::vector<int>& fixed_neg, int s,
                                 Side tested_side, const PenaltyConfig& pen,
                                 int tau, double M);

/// Reduced problem: binaries only for unfixed unlabeled points, cardinality
/// row offset by the number of fixed positives.
MiqpProblem build_reduced_problem(const Dataset& ds, const Sample& sample,
                                  const std::vector<int>& fixed_pos,
                                  const std::vector<int>& fixed_neg,
                                  const PenaltyConfig& pen, int tau, double M);

/// Converts an SVM hyperplane into a feasible point of the full problem:
/// strict sides decide z, points inside the boundary band are all assigned 1
/// when the strict-side count is still <= tau and 0 otherwise, eta absorbs
/// the cardinality deviation.
FeasiblePoint lift_svm_solution(const Dataset& ds, const Sample& sample,
                                const Hyperplane& h, const PenaltyConfig& pen,
                                int tau);

/// Expands a clustered solution to a per-point one (members inherit the
/// cluster's z). Requires that no cluster is cut by the hyperplane.
FeasiblePoint lift_clustered_solution(const FeasiblePoint& clustered,
                                      const std::vector<std::vector<int>>& cluster_members,
                                      const Dataset& ds, const Sample& sample);

/// Largest violation of the per-point problem's constraints at fp (labeled
/// margins, big-M rows, cardinality, sign constraints). fp.z must be
/// per-point.
double p3_max_residual(const Dataset& ds, const Sample& sample,
                       const PenaltyConfig& pen, int tau, double M,
                       const FeasiblePoint& fp);

Hyperplane extract_hyperplane(const std::vector<double>& x, const VariableLayout& layout);

/// Reads a feasible point out of a solver primal vector (z rounded).
FeasiblePoint extract_point(const std::vector<double>& x, const VariableLayout& layout,
                            const PenaltyConfig& pen);

}  // namespace cs3vm

#endif
