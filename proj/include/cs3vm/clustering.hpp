#ifndef CS3VM_CLUSTERING_HPP
#define CS3VM_CLUSTERING_HPP

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "cs3vm/models.hpp"

namespace cs3vm {

struct Cluster {
  std::vector<double> centroid;
  std::vector<int> members;  // indices into the clustered point set

  int count() const { return static_cast<int>(members.size()); }
};

struct Clustering {
  std::vector<Cluster> clusters;

  int k() const { return static_cast<int>(clusters.size()); }
  std::vector<std::vector<double>> centroids() const;
  std::vector<double> counts() const;
  /// membership[i] = cluster id owning point i
  std::vector<int> membership(int num_points) const;
};

/// Lloyd's algorithm with distance-weighted (farthest-biased) seeding.
/// Deterministic for a given seed; empty clusters are re-seeded with the
/// point farthest from its current centroid.
Clustering kmeans(const std::vector<std::vector<double>>& points, int k,
                  std::uint64_t seed, int max_iter = 200);

double kmeans_loss(const std::vector<std::vector<double>>& points, const Clustering& c);

/// True iff the cluster has members strictly on both sides of the
/// hyperplane (points exactly on it count as the nonnegative side).
bool is_cut(const std::vector<std::vector<double>>& points, const Cluster& cluster,
            const Hyperplane& h);

/// Replaces every cut cluster by its nonnegative-side and negative-side
/// halves (recomputed centroids); other clusters are untouched.
Clustering split_cut_clusters(const std::vector<std::vector<double>>& points,
                              const Clustering& c, const Hyperplane& h);

/// Quantile with linear interpolation between order statistics; endpoints
/// return min/max and a singleton set returns its value for every level.
double quantile(std::vector<double> values, double a);

/// Discard threshold: the delta_hat-quantile of the centroid-to-hyperplane
/// distances |w'c_j + b| over the given centroids.
double compute_delta(const Hyperplane& h,
                     const std::vector<std::vector<double>>& centroids,
                     double delta_hat);

/// Bookkeeping for discarded clusters: which active cluster absorbs each
/// discarded cluster's capacity, and on which side, so reactivation can
/// subtract the exact count again.
struct ClusterLedger {
  struct Absorption {
    int residual = -1;  // active cluster id carrying the count
    int count = 0;
    int side = 0;  // +1 / -1: side of the hyperplane at discard time
  };
  std::vector<int> active;     // cluster ids
  std::vector<int> discarded;  // cluster ids, insertion order
  std::optional<int> residual_pos;
  std::optional<int> residual_neg;
  std::map<int, Absorption> absorbed;  // discarded id -> absorption record
};

}  // namespace cs3vm

#endif
