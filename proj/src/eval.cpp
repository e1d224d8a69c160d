#include "cs3vm/eval.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cs3vm {

std::string method_name(Method m) {
  switch (m) {
    case Method::Svm: return "svm";
    case Method::Cs3vm: return "cs3vm";
    case Method::Rcm: return "rcm";
    case Method::Ircm: return "ircm";
    case Method::Wircm: return "wircm";
  }
  return "?";
}

Method method_from_name(const std::string& name) {
  if (name == "svm") return Method::Svm;
  if (name == "cs3vm") return Method::Cs3vm;
  if (name == "rcm") return Method::Rcm;
  if (name == "ircm") return Method::Ircm;
  if (name == "wircm") return Method::Wircm;
  throw std::invalid_argument("unknown method '" + name + "'");
}

std::vector<int> classify(const Hyperplane& h, const Dataset& ds, const Sample& sample,
                          Method method, const std::vector<int>* z_unlabeled) {
  if (method != Method::Svm) {
    if (!z_unlabeled) {
      throw std::invalid_argument("classify: method '" + method_name(method) +
                                  "' needs the unlabeled binaries");
    }
    if (static_cast<int>(z_unlabeled->size()) != sample.num_unlabeled()) {
      throw std::invalid_argument("classify: binaries have wrong length");
    }
  }
  const double band = boundary_band(h);
  std::vector<int> pred(ds.size(), 0);
  for (int i = 0; i < ds.size(); ++i) {
    const double v = hyperplane_value(h, ds.points[i]);
    pred[i] = v > band ? +1 : (v < -band ? -1 : 0);
  }
  for (int k = 0; k < sample.num_labeled(); ++k) {
    const int i = sample.labeled_idx[k];
    if (pred[i] == 0) pred[i] = ds.labels[i];  // boundary: the correct side
  }
  for (int k = 0; k < sample.num_unlabeled(); ++k) {
    const int i = sample.unlabeled_idx[k];
    if (pred[i] != 0) continue;
    if (method == Method::Svm) {
      pred[i] = ds.labels[i];
    } else {
      pred[i] = (*z_unlabeled)[k] == 1 ? +1 : -1;
    }
  }
  return pred;
}

ConfusionMatrix confusion(const std::vector<int>& pred, const std::vector<int>& truth) {
  if (pred.size() != truth.size()) {
    throw std::invalid_argument("confusion: prediction/truth length mismatch");
  }
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (truth[i] > 0) {
      (pred[i] > 0 ? cm.tp : cm.fn)++;
    } else {
      (pred[i] > 0 ? cm.fp : cm.tn)++;
    }
  }
  return cm;
}

ConfusionMatrix confusion_subset(const std::vector<int>& pred, const std::vector<int>& truth,
                                 const std::vector<int>& indices) {
  ConfusionMatrix cm;
  for (int i : indices) {
    if (truth[i] > 0) {
      (pred[i] > 0 ? cm.tp : cm.fn)++;
    } else {
      (pred[i] > 0 ? cm.fp : cm.tn)++;
    }
  }
  return cm;
}

namespace {

std::optional<double> safe_div(double num, double den) {
  if (den == 0.0) return std::nullopt;
  return num / den;
}

}  // namespace

MetricSet metrics(const ConfusionMatrix& cm) {
  MetricSet m;
  m.ac = safe_div(static_cast<double>(cm.tp + cm.tn), static_cast<double>(cm.total()));
  m.pr = safe_div(static_cast<double>(cm.tp), static_cast<double>(cm.tp + cm.fp));
  m.re = safe_div(static_cast<double>(cm.tp), static_cast<double>(cm.tp + cm.fn));
  m.fpr = safe_div(static_cast<double>(cm.fp), static_cast<double>(cm.tn + cm.fp));
  return m;
}

namespace {

std::optional<double> ratio_of(const std::optional<double>& a, const std::optional<double>& b) {
  if (!a || !b || *b == 0.0) return std::nullopt;
  return *a / *b;
}

}  // namespace

MetricRatios ratios_vs_true(const MetricSet& m, const MetricSet& m_true) {
  return {ratio_of(m.ac, m_true.ac), ratio_of(m.pr, m_true.pr),
          ratio_of(m.re, m_true.re), ratio_of(m.fpr, m_true.fpr)};
}

SvmDeltas deltas_vs_svm(const MetricSet& m, const MetricSet& m_svm) {
  SvmDeltas d;
  if (m.ac && m_svm.ac && *m_svm.ac != 0.0) d.ac = (*m.ac - *m_svm.ac) / *m_svm.ac;
  if (m.pr && m_svm.pr && *m_svm.pr != 0.0) d.pr = (*m.pr - *m_svm.pr) / *m_svm.pr;
  return d;
}

std::optional<double> gap(double bound, double optimum) {
  if (optimum == 0.0) return std::nullopt;
  return (bound - optimum) / optimum;
}

std::vector<std::pair<double, double>> ecdf(const std::vector<double>& values,
                                            double censor_limit,
                                            const std::vector<double>& grid) {
  std::vector<std::pair<double, double>> curve;
  curve.reserve(grid.size());
  const double denom = static_cast<double>(values.size());
  for (double sigma : grid) {
    long count = 0;
    for (double v : values) {
      if (v <= sigma && v <= censor_limit) ++count;
    }
    curve.push_back({sigma, denom > 0 ? count / denom : 0.0});
  }
  return curve;
}

}  // namespace cs3vm
