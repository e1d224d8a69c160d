#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "cs3vm/dataset.hpp"
#include "doctest.h"

using namespace cs3vm;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
  const std::string path = "/tmp/cs3vm_test_" + name;
  std::ofstream out(path);
  out << content;
  return path;
}

Dataset balanced_dataset(int n_pos, int n_neg) {
  Dataset ds;
  ds.name = "synthetic";
  for (int i = 0; i < n_pos; ++i) {
    ds.points.push_back({1.0 + i, 1.0});
    ds.labels.push_back(+1);
  }
  for (int i = 0; i < n_neg; ++i) {
    ds.points.push_back({-1.0 - i, -1.0});
    ds.labels.push_back(-1);
  }
  return ds;
}

}  // namespace

TEST_CASE("csv with two features parses") {
  const auto path = write_temp("basic.csv", "a,b,target\n1,2,0\n3,4,1\n5,6,0\n");
  const RawDataset raw = load_csv(path, "target");
  CHECK(raw.rows.size() == 3);
  CHECK(raw.feature_dim == 2);
  CHECK(raw.rows[1].features == std::vector<double>{3.0, 4.0});
  CHECK(*raw.rows[1].label == 1);
  std::remove(path.c_str());
}

TEST_CASE("non-numeric cell reports row and column") {
  const auto path = write_temp("bad.csv", "a,target\n1,0\nfoo,1\n");
  CHECK_THROWS_WITH_AS(load_csv(path, "target"), doctest::Contains("row 3"),
                       std::runtime_error);
  std::remove(path.c_str());
}

TEST_CASE("empty file and missing label column are errors") {
  const auto path = write_temp("empty.csv", "");
  CHECK_THROWS(load_csv(path, "target"));
  const auto path2 = write_temp("nolabel.csv", "a,b\n1,2\n");
  CHECK_THROWS_WITH_AS(load_csv(path2, "target"), doctest::Contains("label column"),
                       std::runtime_error);
  std::remove(path.c_str());
  std::remove(path2.c_str());
}

TEST_CASE("three-class labels map class 1 to positive") {
  RawDataset raw;
  raw.feature_dim = 1;
  int values[6] = {0, 1, 2, 0, 1, 2};
  for (int i = 0; i < 6; ++i) {
    raw.rows.push_back({{static_cast<double>(i)}, values[i]});
  }
  const Dataset ds = preprocess(raw);
  int pos = 0;
  for (int y : ds.labels) {
    if (y > 0) ++pos;
  }
  CHECK(ds.size() == 6);
  CHECK(pos == 2);
}

TEST_CASE("duplicates collapse and missing rows drop") {
  RawDataset raw;
  raw.feature_dim = 2;
  raw.rows.push_back({{1.0, 2.0}, 0});
  raw.rows.push_back({{1.0, 2.0}, 0});  // duplicate
  raw.rows.push_back({{std::numeric_limits<double>::quiet_NaN(), 1.0}, 1});
  raw.rows.push_back({{3.0, 4.0}, std::nullopt});
  raw.rows.push_back({{5.0, 6.0}, 1});
  const Dataset ds = preprocess(raw);
  CHECK(ds.size() == 2);
  std::set<std::vector<double>> rows(ds.points.begin(), ds.points.end());
  CHECK(rows.size() == ds.points.size());
}

TEST_CASE("preprocess rejects empty output and too many classes") {
  RawDataset raw;
  raw.feature_dim = 1;
  raw.rows.push_back({{1.0}, std::nullopt});
  CHECK_THROWS(preprocess(raw));
  RawDataset raw4;
  raw4.feature_dim = 1;
  for (int v = 0; v < 4; ++v) raw4.rows.push_back({{static_cast<double>(v)}, v});
  CHECK_THROWS(preprocess(raw4));
}

TEST_CASE("rescale shifts small ranges and maps large ones") {
  Dataset ds;
  ds.points = {{0.0, 0.0, 7.0}, {4.0, 1000.0, 7.0}};
  ds.labels = {+1, -1};
  const Dataset out = rescale(ds);
  CHECK(out.points[0][0] == doctest::Approx(-2.0));
  CHECK(out.points[1][0] == doctest::Approx(2.0));
  CHECK(out.points[0][1] == doctest::Approx(-100.0));
  CHECK(out.points[1][1] == doctest::Approx(100.0));
  CHECK(out.points[0][2] == 0.0);
  CHECK(out.points[1][2] == 0.0);
}

TEST_CASE("rescale is idempotent and order preserving") {
  Dataset ds;
  ds.name = "r";
  for (int i = 0; i < 40; ++i) {
    const double t = i * 0.37;
    ds.points.push_back({1000.0 * std::sin(t), 3.0 * t - 17.0, 1e6 * t});
    ds.labels.push_back(i % 2 ? 1 : -1);
  }
  const Dataset once = rescale(ds);
  const Dataset twice = rescale(once);
  for (int i = 0; i < once.size(); ++i) {
    for (int j = 0; j < once.dim(); ++j) {
      CHECK(std::abs(once.points[i][j]) <= 100.0 + 1e-12);
      CHECK(twice.points[i][j] == doctest::Approx(once.points[i][j]).epsilon(1e-12));
    }
  }
  for (int j = 0; j < ds.dim(); ++j) {
    for (int a = 0; a < ds.size(); ++a) {
      for (int b = 0; b < ds.size(); ++b) {
        if (ds.points[a][j] < ds.points[b][j]) {
          CHECK(once.points[a][j] <= once.points[b][j]);
        }
      }
    }
  }
}

TEST_CASE("sample partitions the index set and counts tau exactly") {
  const Dataset ds = balanced_dataset(10, 10);
  const Sample s = draw_biased_sample(ds, 0.25, 0.85, 42);
  CHECK(s.num_labeled() == 5);
  CHECK(s.num_labeled() + s.num_unlabeled() == ds.size());
  std::set<int> all(s.labeled_idx.begin(), s.labeled_idx.end());
  all.insert(s.unlabeled_idx.begin(), s.unlabeled_idx.end());
  CHECK(static_cast<int>(all.size()) == ds.size());
  int tau = 0;
  for (int i : s.unlabeled_idx) {
    if (ds.labels[i] > 0) ++tau;
  }
  CHECK(tau == s.tau);
}

TEST_CASE("forced positive sampling labels only positives") {
  const Dataset ds = balanced_dataset(10, 10);
  const Sample s = draw_biased_sample(ds, 0.3, 1.0, 3);
  for (std::size_t k = 0; k < s.labeled_idx.size(); ++k) {
    CHECK(s.labels[k] == 1);
  }
}

TEST_CASE("degenerate sample sizes are rejected") {
  const Dataset ds = balanced_dataset(2, 2);
  CHECK_THROWS(draw_biased_sample(ds, 0.01, 0.85, 1));   // n = 0
  CHECK_THROWS(draw_biased_sample(ds, 0.999, 0.85, 1));  // n = N
  Dataset single = balanced_dataset(3, 0);
  CHECK_THROWS(draw_biased_sample(single, 0.5, 0.85, 1));
}

TEST_CASE("biased draws prefer the positive class at the configured rate") {
  const Dataset ds = balanced_dataset(100, 100);
  double share_sum = 0.0;
  const int seeds = 200;
  for (int s = 0; s < seeds; ++s) {
    const Sample smp = draw_biased_sample(ds, 0.1, 0.85, 1000 + s);
    int pos = 0;
    for (int y : smp.labels) {
      if (y > 0) ++pos;
    }
    share_sum += static_cast<double>(pos) / smp.num_labeled();
  }
  const double mean_share = share_sum / seeds;
  CHECK(mean_share >= 0.80);
  CHECK(mean_share <= 0.90);
}

TEST_CASE("simple random sampling is deterministic and distinct") {
  const Dataset ds = balanced_dataset(5, 5);
  const Sample a = draw_srs_sample(ds, 0.5, 7);
  const Sample b = draw_srs_sample(ds, 0.5, 7);
  CHECK(a.labeled_idx == b.labeled_idx);
  CHECK(a.tau == b.tau);
  std::set<int> uniq(a.labeled_idx.begin(), a.labeled_idx.end());
  CHECK(uniq.size() == 5);
}

TEST_CASE("srs inclusion frequencies stay within the binomial bound") {
  const Dataset ds = balanced_dataset(10, 10);
  const int seeds = 200;
  const double pick = 0.25;  // n/N = 5/20
  std::vector<int> hits(ds.size(), 0);
  for (int s = 0; s < seeds; ++s) {
    const Sample smp = draw_srs_sample(ds, pick, 5000 + s);
    for (int i : smp.labeled_idx) ++hits[i];
  }
  const double sigma = std::sqrt(pick * (1.0 - pick) / seeds);
  for (int i = 0; i < ds.size(); ++i) {
    const double freq = static_cast<double>(hits[i]) / seeds;
    CHECK(std::abs(freq - pick) <= 5.0 * sigma);
  }
}

TEST_CASE("dataset and sample survive the JSON round trip") {
  const Dataset ds = balanced_dataset(3, 3);
  const Dataset ds2 = dataset_from_json(dataset_to_json(ds));
  CHECK(ds2.points == ds.points);
  CHECK(ds2.labels == ds.labels);
  const Sample s = draw_biased_sample(ds, 0.4, 0.85, 11);
  const Sample s2 = sample_from_json(sample_to_json(s));
  CHECK(s2.labeled_idx == s.labeled_idx);
  CHECK(s2.unlabeled_idx == s.unlabeled_idx);
  CHECK(s2.labels == s.labels);
  CHECK(s2.tau == s.tau);
  CHECK(s2.seed == s.seed);
  CHECK((s2.kind == s.kind));
}
