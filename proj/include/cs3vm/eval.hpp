#ifndef CS3VM_EVAL_HPP
#define CS3VM_EVAL_HPP

#include <optional>
#include <string>
#include <vector>

#include "cs3vm/dataset.hpp"
#include "cs3vm/models.hpp"

namespace cs3vm {

enum class Method { Svm, Cs3vm, Rcm, Ircm, Wircm };

std::string method_name(Method m);
Method method_from_name(const std::string& name);

/// Predicted labels (+1/-1) for all N points. Strict sides decide; points in
/// the boundary band fall back per method: the SVM and all labeled points
/// take their true label, the other methods use the point's binary (for the
/// clustered methods that binary is the containing cluster's, which is what
/// z_unlabeled carries after the per-point lift).
std::vector<int> classify(const Hyperplane& h, const Dataset& ds, const Sample& sample,
                          Method method,
                          const std::vector<int>* z_unlabeled = nullptr);

struct ConfusionMatrix {
  long tp = 0, tn = 0, fp = 0, fn = 0;
  long total() const { return tp + tn + fp + fn; }
};

ConfusionMatrix confusion(const std::vector<int>& pred, const std::vector<int>& truth);
ConfusionMatrix confusion_subset(const std::vector<int>& pred, const std::vector<int>& truth,
                                 const std::vector<int>& indices);

/// Metrics with explicit undefined markers for empty denominators.
struct MetricSet {
  std::optional<double> ac, pr, re, fpr;
};

MetricSet metrics(const ConfusionMatrix& cm);

struct MetricRatios {
  std::optional<double> ac, pr, re, fpr;
};

/// Componentwise ratios vs the reference ("true hyperplane") metrics;
/// undefined when either side is undefined or the reference is 0.
MetricRatios ratios_vs_true(const MetricSet& m, const MetricSet& m_true);

struct SvmDeltas {
  std::optional<double> ac, pr;
};

/// Relative differences (m - m_svm) / m_svm for accuracy and precision.
SvmDeltas deltas_vs_svm(const MetricSet& m, const MetricSet& m_svm);

/// Relative optimality gap (bound - optimum) / optimum; undefined for
/// optimum == 0.
std::optional<double> gap(double bound, double optimum);

/// Empirical CDF over the grid; values above censor_limit never count.
std::vector<std::pair<double, double>> ecdf(const std::vector<double>& values,
                                            double censor_limit,
                                            const std::vector<double>& grid);

}  // namespace cs3vm

#endif
