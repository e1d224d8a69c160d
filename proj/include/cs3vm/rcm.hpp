#ifndef CS3VM_RCM_HPP
#define CS3VM_RCM_HPP

#include <cstdint>
#include <vector>

#include "cs3vm/bb.hpp"
#include "cs3vm/clustering.hpp"
#include "cs3vm/dataset.hpp"
#include "cs3vm/models.hpp"

namespace cs3vm {

struct RcmConfig {
  int k1 = 10;
  int k_plus = 50;
  double delta_hat_1 = 0.8;
  double delta_tilde = 0.1;
  PenaltyConfig penalties;
  int tau = 0;
  double time_limit = 3600.0;
  std::uint64_t seed = 0;
  int kmeans_max_iter = 200;
};

/// Defaults with the initial cluster count picked by the size schedule
/// (10 / 20 / 50 by unlabeled count, clamped to m).
RcmConfig default_rcm_config(int m, int tau);

struct IterationTrace {
  int k = 0;              // active clusters in this solve
  double objective = 0.0;
  double delta = 0.0;     // discard threshold (0 for the plain method)
  double delta_hat = 0.0;  // quantile level used for delta
  int discarded_total = 0;  // |G| after this iteration's updates
  int reactivated = 0;      // |J|
  double big_m = 0.0;     // M used by this solve
};

struct RcmResult {
  FeasiblePoint clustered_point;  // z per active cluster of the final solve
  FeasiblePoint lifted_point;     // z per unlabeled point
  Clustering final_clustering;    // active clusters, aligned with clustered_point.z
  ClusterLedger ledger;
  int iterations = 0;  // re-cluster rounds after the initial solve
  int final_k = 0;
  double final_big_m = 0.0;
  bool hit_time_limit = false;
  std::vector<IterationTrace> trace;
};

/// Re-clustering: solve the clustered problem, split every cluster cut by
/// the hyperplane, repeat until no cluster is cut. M stays at its initial
/// value.
RcmResult rcm(const Dataset& ds, const Sample& sample, const RcmConfig& config);

/// Re-clustering with far-cluster discarding, reactivation, and big-M
/// tightening between iterations.
RcmResult ircm(const Dataset& ds, const Sample& sample, const RcmConfig& config);

}  // namespace cs3vm

#endif
