#include <cmath>
#include <set>

#include "cs3vm/clustering.hpp"
#include "cs3vm/rng.hpp"
#include "doctest.h"

using namespace cs3vm;

namespace {

std::vector<std::vector<double>> random_points(Rng& rng, int n, int d) {
  std::vector<std::vector<double>> pts(n, std::vector<double>(d));
  for (auto& p : pts) {
    for (double& v : p) v = 10.0 * rng.uniform01() - 5.0;
  }
  return pts;
}

}  // namespace

TEST_CASE("two separated points are fit exactly by two clusters") {
  const std::vector<std::vector<double>> pts = {{0.0}, {10.0}};
  const Clustering c = kmeans(pts, 2, 1);
  REQUIRE(c.k() == 2);
  CHECK(kmeans_loss(pts, c) == doctest::Approx(0.0));
  std::set<double> cents = {c.clusters[0].centroid[0], c.clusters[1].centroid[0]};
  CHECK(cents == std::set<double>{0.0, 10.0});
}

TEST_CASE("a single cluster sits at the mean") {
  const std::vector<std::vector<double>> pts = {{0.0}, {10.0}};
  const Clustering c = kmeans(pts, 1, 1);
  REQUIRE(c.k() == 1);
  CHECK(c.clusters[0].centroid[0] == doctest::Approx(5.0));
  CHECK(kmeans_loss(pts, c) == doctest::Approx(50.0));
}

TEST_CASE("lloyd iterations never increase the loss") {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 8 + static_cast<int>(rng.uniform_index(30));
    const int d = 1 + static_cast<int>(rng.uniform_index(3));
    const int k = 1 + static_cast<int>(rng.uniform_index(std::min(n, 6)));
    const auto pts = random_points(rng, n, d);
    const std::uint64_t seed = rng.next_u64();
    double prev = kmeans_loss(pts, kmeans(pts, k, seed, 1));
    for (int t = 2; t <= 8; ++t) {
      const double cur = kmeans_loss(pts, kmeans(pts, k, seed, t));
      CHECK(cur <= prev + 1e-9);
      prev = cur;
    }
  }
}

TEST_CASE("clusters stay nonempty and centred on their means") {
  Rng rng(23);
  const auto pts = random_points(rng, 40, 2);
  const Clustering c = kmeans(pts, 7, 5);
  REQUIRE(c.k() == 7);
  int total = 0;
  for (const auto& cl : c.clusters) {
    REQUIRE(cl.count() >= 1);
    total += cl.count();
    std::vector<double> mean(2, 0.0);
    for (int i : cl.members) {
      mean[0] += pts[i][0];
      mean[1] += pts[i][1];
    }
    CHECK(cl.centroid[0] == doctest::Approx(mean[0] / cl.count()).epsilon(1e-9));
    CHECK(cl.centroid[1] == doctest::Approx(mean[1] / cl.count()).epsilon(1e-9));
  }
  CHECK(total == 40);
}

TEST_CASE("kmeans is deterministic for a fixed seed and validates inputs") {
  Rng rng(31);
  const auto pts = random_points(rng, 20, 2);
  const Clustering a = kmeans(pts, 4, 9);
  const Clustering b = kmeans(pts, 4, 9);
  REQUIRE(a.k() == b.k());
  for (int j = 0; j < a.k(); ++j) CHECK(a.clusters[j].members == b.clusters[j].members);
  CHECK_THROWS(kmeans(pts, 0, 1));
  CHECK_THROWS(kmeans(pts, 21, 1));
}

TEST_CASE("cut detection follows strict sides with boundary as nonnegative") {
  const std::vector<std::vector<double>> pts = {{-1.0}, {2.0}, {1.0}, {0.0}};
  const Hyperplane h{{1.0}, 0.0};
  Cluster both;
  both.members = {0, 1};
  CHECK(is_cut(pts, both, h));
  Cluster same;
  same.members = {1, 2};
  CHECK(!is_cut(pts, same, h));
  Cluster boundary;
  boundary.members = {3, 2};  // one exactly on the plane, one positive
  CHECK(!is_cut(pts, boundary, h));
  Cluster boundary_neg;
  boundary_neg.members = {3, 0};
  CHECK(!is_cut(pts, boundary_neg, h));
}

TEST_CASE("splitting separates exactly the cut clusters") {
  const std::vector<std::vector<double>> pts = {{-1.0}, {2.0}, {3.0}, {4.0}};
  const Hyperplane h{{1.0}, 0.0};
  Clustering c;
  c.clusters.resize(2);
  c.clusters[0].members = {0, 1};
  c.clusters[0].centroid = {0.5};
  c.clusters[1].members = {2, 3};
  c.clusters[1].centroid = {3.5};
  const Clustering out = split_cut_clusters(pts, c, h);
  REQUIRE(out.k() == 3);
  int total = 0;
  for (const auto& cl : out.clusters) {
    total += cl.count();
    CHECK(!is_cut(pts, cl, h));
  }
  CHECK(total == 4);

  const Clustering again = split_cut_clusters(pts, out, h);
  CHECK(again.k() == out.k());
}

TEST_CASE("split output is never cut and conserves membership") {
  Rng rng(41);
  for (int trial = 0; trial < 15; ++trial) {
    const auto pts = random_points(rng, 25, 2);
    const Clustering c = kmeans(pts, 4, rng.next_u64());
    Hyperplane h{{2.0 * rng.uniform01() - 1.0, 2.0 * rng.uniform01() - 1.0},
                 2.0 * rng.uniform01() - 1.0};
    const Clustering out = split_cut_clusters(pts, c, h);
    int total = 0;
    for (const auto& cl : out.clusters) {
      CHECK(!is_cut(pts, cl, h));
      total += cl.count();
      std::vector<double> mean(2, 0.0);
      for (int i : cl.members) {
        mean[0] += pts[i][0];
        mean[1] += pts[i][1];
      }
      CHECK(cl.centroid[0] == doctest::Approx(mean[0] / cl.count()).epsilon(1e-9));
    }
    CHECK(total == 25);
  }
}

TEST_CASE("quantile interpolates between order statistics") {
  CHECK(quantile({10, 20, 30, 40}, 0.5) == doctest::Approx(25.0));
  CHECK(quantile({3, 1, 2}, 0.0) == doctest::Approx(1.0));
  CHECK(quantile({3, 1, 2}, 1.0) == doctest::Approx(3.0));
  CHECK(quantile({5}, 0.0) == doctest::Approx(5.0));
  CHECK(quantile({5}, 0.7) == doctest::Approx(5.0));
  CHECK(quantile({5}, 1.0) == doctest::Approx(5.0));
  CHECK_THROWS(quantile({}, 0.5));
}

TEST_CASE("quantile agrees with direct interpolation on random inputs") {
  Rng rng(53);
  for (int trial = 0; trial < 1000; ++trial) {
    const int d = 1 + static_cast<int>(rng.uniform_index(12));
    std::vector<double> vals(d);
    for (double& v : vals) v = 20.0 * rng.uniform01() - 10.0;
    const double a = rng.uniform01();
    std::vector<double> sorted = vals;
    std::sort(sorted.begin(), sorted.end());
    double expected;
    if (d == 1) {
      expected = sorted[0];
    } else {
      const double pos = a * (d - 1);
      const int lo = static_cast<int>(std::floor(pos));
      const int hi = static_cast<int>(std::ceil(pos));
      expected = sorted[lo] + (pos - lo) * (sorted[hi] - sorted[lo]);
    }
    CHECK(quantile(vals, a) == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("discard threshold is the quantile of centroid distances") {
  const Hyperplane h{{1.0}, 0.0};
  const std::vector<std::vector<double>> cents = {{-1.0}, {3.0}};
  CHECK(compute_delta(h, cents, 1.0) == doctest::Approx(3.0));
  CHECK(compute_delta(h, cents, 0.0) == doctest::Approx(1.0));
  CHECK(compute_delta(h, cents, 0.5) == doctest::Approx(2.0));
}
