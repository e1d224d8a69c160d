#include "cs3vm/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cs3vm/rng.hpp"

namespace cs3vm {

namespace {

double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double d = a[j] - b[j];
    s += d * d;
  }
  return s;
}

std::vector<double> mean_of(const std::vector<std::vector<double>>& points,
                            const std::vector<int>& members) {
  std::vector<double> c(points.front().size(), 0.0);
  for (int i : members) {
    for (std::size_t j = 0; j < c.size(); ++j) c[j] += points[i][j];
  }
  for (double& v : c) v /= static_cast<double>(members.size());
  return c;
}

}  // namespace

std::vector<std::vector<double>> Clustering::centroids() const {
  std::vector<std::vector<double>> out;
  out.reserve(clusters.size());
  for (const auto& c : clusters) out.push_back(c.centroid);
  return out;
}

std::vector<double> Clustering::counts() const {
  std::vector<double> out;
  out.reserve(clusters.size());
  for (const auto& c : clusters) out.push_back(static_cast<double>(c.count()));
  return out;
}

std::vector<int> Clustering::membership(int num_points) const {
  std::vector<int> m(num_points, -1);
  for (std::size_t j = 0; j < clusters.size(); ++j) {
    for (int i : clusters[j].members) m[i] = static_cast<int>(j);
  }
  return m;
}

Clustering kmeans(const std::vector<std::vector<double>>& points, int k,
                  std::uint64_t seed, int max_iter) {
  const int n = static_cast<int>(points.size());
  if (k <= 0) throw std::invalid_argument("kmeans: k must be positive");
  if (k > n) throw std::invalid_argument("kmeans: k exceeds number of points");

  Rng rng(seed);
  // distance-weighted seeding: first centroid uniform, then proportional to
  // squared distance from the nearest chosen centroid
  std::vector<int> seeds;
  seeds.push_back(static_cast<int>(rng.uniform_index(n)));
  std::vector<double> d2(n, 0.0);
  for (int i = 0; i < n; ++i) d2[i] = sq_dist(points[i], points[seeds[0]]);
  while (static_cast<int>(seeds.size()) < k) {
    double total = 0.0;
    for (double v : d2) total += v;
    int pick;
    if (total <= 0.0) {
      // all remaining points coincide with a centroid; take any unused point
      pick = -1;
      std::vector<char> used(n, 0);
      for (int s : seeds) used[s] = 1;
      for (int i = 0; i < n; ++i) {
        if (!used[i]) { pick = i; break; }
      }
      if (pick < 0) break;
    } else {
      double r = rng.uniform01() * total;
      pick = n - 1;
      for (int i = 0; i < n; ++i) {
        r -= d2[i];
        if (r <= 0.0) { pick = i; break; }
      }
    }
    seeds.push_back(pick);
    for (int i = 0; i < n; ++i) d2[i] = std::min(d2[i], sq_dist(points[i], points[pick]));
  }

  std::vector<std::vector<double>> centers;
  centers.reserve(seeds.size());
  for (int s : seeds) centers.push_back(points[s]);
  const int kk = static_cast<int>(centers.size());

  std::vector<int> assign(n, -1);
  for (int iter = 0; iter < max_iter; ++iter) {
    bool changed = false;
    for (int i = 0; i < n; ++i) {
      int best = 0;
      double bd = sq_dist(points[i], centers[0]);
      for (int j = 1; j < kk; ++j) {
        const double d = sq_dist(points[i], centers[j]);
        if (d < bd) { bd = d; best = j; }
      }
      if (assign[i] != best) { assign[i] = best; changed = true; }
    }
    // repair empty clusters with the point farthest from its centroid
    for (int j = 0; j < kk; ++j) {
      if (std::count(assign.begin(), assign.end(), j) > 0) continue;
      int far = -1;
      double fd = -1.0;
      for (int i = 0; i < n; ++i) {
        if (std::count(assign.begin(), assign.end(), assign[i]) <= 1) continue;
        const double d = sq_dist(points[i], centers[assign[i]]);
        if (d > fd) { fd = d; far = i; }
      }
      if (far >= 0) {
        assign[far] = j;
        centers[j] = points[far];
        changed = true;
      }
    }
    if (!changed) break;
    for (int j = 0; j < kk; ++j) {
      std::vector<int> members;
      for (int i = 0; i < n; ++i) {
        if (assign[i] == j) members.push_back(i);
      }
      if (!members.empty()) centers[j] = mean_of(points, members);
    }
  }

  Clustering out;
  out.clusters.resize(kk);
  for (int i = 0; i < n; ++i) out.clusters[assign[i]].members.push_back(i);
  for (auto& c : out.clusters) c.centroid = mean_of(points, c.members);
  return out;
}

double kmeans_loss(const std::vector<std::vector<double>>& points, const Clustering& c) {
  double loss = 0.0;
  for (const auto& cl : c.clusters) {
    for (int i : cl.members) loss += sq_dist(points[i], cl.centroid);
  }
  return loss;
}

bool is_cut(const std::vector<std::vector<double>>& points, const Cluster& cluster,
            const Hyperplane& h) {
  bool pos = false, neg = false;
  for (int i : cluster.members) {
    const double v = hyperplane_value(h, points[i]);
    if (v > 0.0) pos = true;
    if (v < 0.0) neg = true;
    if (pos && neg) return true;
  }
  return false;
}

Clustering split_cut_clusters(const std::vector<std::vector<double>>& points,
                              const Clustering& c, const Hyperplane& h) {
  Clustering out;
  for (const auto& cl : c.clusters) {
    if (!is_cut(points, cl, h)) {
      out.clusters.push_back(cl);
      continue;
    }
    Cluster nonneg, neg;
    for (int i : cl.members) {
      (hyperplane_value(h, points[i]) >= 0.0 ? nonneg : neg).members.push_back(i);
    }
    nonneg.centroid = mean_of(points, nonneg.members);
    neg.centroid = mean_of(points, neg.members);
    out.clusters.push_back(std::move(nonneg));
    out.clusters.push_back(std::move(neg));
  }
  return out;
}

double quantile(std::vector<double> values, double a) {
  if (values.empty()) throw std::invalid_argument("quantile: empty input");
  if (a < 0.0 || a > 1.0) throw std::invalid_argument("quantile: level outside [0,1]");
  std::sort(values.begin(), values.end());
  const int d = static_cast<int>(values.size());
  if (d == 1) return values[0];
  const double g = (d - 1) * a;
  int q = static_cast<int>(std::floor(g)) + 1;
  int r = static_cast<int>(std::ceil(g)) + 1;
  q = std::clamp(q, 1, d);
  r = std::clamp(r, 1, d);
  if (q == r) return values[q - 1];
  // linear interpolation between the two adjacent order statistics
  return values[q - 1] + (values[r - 1] - values[q - 1]) * (g - (q - 1));
}

double compute_delta(const Hyperplane& h,
                     const std::vector<std::vector<double>>& centroids,
                     double delta_hat) {
  std::vector<double> dist;
  dist.reserve(centroids.size());
  for (const auto& c : centroids) dist.push_back(std::abs(hyperplane_value(h, c)));
  return quantile(std::move(dist), delta_hat);
}

}  // namespace cs3vm
