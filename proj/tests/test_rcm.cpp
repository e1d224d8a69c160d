#include <cmath>

#include "cs3vm/bb.hpp"
#include "cs3vm/models.hpp"
#include "cs3vm/rcm.hpp"
#include "doctest.h"
#include "test_helpers.hpp"

using namespace cs3vm;
using cs3vm::testing::oracle_1d_instance;
using cs3vm::testing::random_small_instance;
using cs3vm::testing::TestInstance;

namespace {

RcmConfig small_config(const TestInstance& t, int k1) {
  RcmConfig cfg = default_rcm_config(t.sample.num_unlabeled(), t.sample.tau);
  cfg.k1 = k1;
  cfg.seed = 11;
  return cfg;
}

double brute_optimum(const TestInstance& t) {
  const PenaltyConfig pen;
  const double M = big_m_initial(t.ds, t.sample, pen, t.sample.tau);
  const MiqpSolution sol =
      brute_force_miqp(build_cs3vm(t.ds, t.sample, pen, t.sample.tau, M));
  return *sol.objective;
}

}  // namespace

TEST_CASE("re-clustering reaches the optimum of the hand instance") {
  const TestInstance t = oracle_1d_instance();
  const RcmResult res = rcm(t.ds, t.sample, small_config(t, 1));
  CHECK(!res.hit_time_limit);
  CHECK(res.lifted_point.objective == doctest::Approx(0.5).epsilon(1e-6));
  const double M = big_m_update(res.lifted_point.objective, t.ds);
  CHECK(p3_max_residual(t.ds, t.sample, {1.0, 1.0}, t.sample.tau, M, res.lifted_point) <=
        1e-8);
  // no final cluster is cut
  std::vector<std::vector<double>> upts;
  for (int i : t.sample.unlabeled_idx) upts.push_back(t.ds.points[i]);
  for (const auto& cl : res.final_clustering.clusters) {
    CHECK(!is_cut(upts, cl, res.lifted_point.hyperplane));
  }
}

TEST_CASE("singleton clustering terminates after one solve") {
  const TestInstance t = oracle_1d_instance();
  const RcmResult res = rcm(t.ds, t.sample, small_config(t, t.sample.num_unlabeled()));
  CHECK(res.trace.size() == 1);
  CHECK(res.iterations == 0);
}

TEST_CASE("split rounds stay within the cluster budget") {
  Rng rng(401);
  for (int trial = 0; trial < 8; ++trial) {
    const TestInstance t = random_small_instance(rng, 2, 5, 9);
    const int m = t.sample.num_unlabeled();
    const int k1 = std::max(1, m / 3);
    const RcmResult res = rcm(t.ds, t.sample, small_config(t, k1));
    CHECK(!res.hit_time_limit);
    CHECK(res.iterations <= m - k1);
    CHECK(res.lifted_point.objective >= brute_optimum(t) - 1e-6);
    const double M = big_m_update(res.lifted_point.objective, t.ds);
    CHECK(p3_max_residual(t.ds, t.sample, {1.0, 1.0}, t.sample.tau, M,
                          res.lifted_point) <= 1e-8);
  }
}

TEST_CASE("improved variant matches the plain one when nothing is discarded") {
  Rng rng(402);
  for (int trial = 0; trial < 5; ++trial) {
    const TestInstance t = random_small_instance(rng, 2, 5, 8);
    RcmConfig cfg = small_config(t, std::max(1, t.sample.num_unlabeled() / 2));
    cfg.k_plus = t.sample.num_unlabeled() + 1;  // discarding can never trigger
    const RcmResult plain = rcm(t.ds, t.sample, cfg);
    const RcmResult improved = ircm(t.ds, t.sample, cfg);
    for (const auto& tr : improved.trace) CHECK(tr.discarded_total == 0);
    // agreement is limited by the solver's own 1e-8 residual contract
    CHECK(improved.lifted_point.objective ==
          doctest::Approx(plain.lifted_point.objective).epsilon(1e-8));
  }
}

TEST_CASE("improved variant with a tight activation threshold stays sound") {
  Rng rng(403);
  int saw_discard = 0;
  for (int trial = 0; trial < 10; ++trial) {
    const TestInstance t = random_small_instance(rng, 2, 5, 10);
    const int m = t.sample.num_unlabeled();
    RcmConfig cfg = small_config(t, std::min(m, std::max(2, m / 2)));
    cfg.k_plus = 2;  // discard aggressively
    cfg.delta_hat_1 = 0.5;
    cfg.delta_tilde = 0.3;
    const RcmResult res = ircm(t.ds, t.sample, cfg);
    CHECK(!res.hit_time_limit);
    const double bound =
        2.0 * m - cfg.k1 + (1.0 - cfg.delta_hat_1) / cfg.delta_tilde;
    CHECK(res.iterations <= bound);
    CHECK(res.lifted_point.objective >= brute_optimum(t) - 1e-6);
    const double M = big_m_update(res.lifted_point.objective, t.ds);
    CHECK(p3_max_residual(t.ds, t.sample, {1.0, 1.0}, t.sample.tau, M,
                          res.lifted_point) <= 1e-8);
    // capacity of active plus absorbed clusters accounts for every point
    double active_raw = 0.0;
    for (const auto& cl : res.final_clustering.clusters) active_raw += cl.count();
    double absorbed = 0.0;
    for (const auto& [g, a] : res.ledger.absorbed) absorbed += a.count;
    CHECK(active_raw + absorbed == doctest::Approx(m));
    for (const auto& tr : res.trace) {
      if (tr.discarded_total > 0) {
        ++saw_discard;
        break;
      }
    }
    // the quantile level never decreases and caps at 1
    double prev = 0.0;
    for (const auto& tr : res.trace) {
      CHECK(tr.delta_hat >= prev - 1e-12);
      CHECK(tr.delta_hat <= 1.0 + 1e-12);
      prev = tr.delta_hat;
    }
    // M never grows while iterating
    for (std::size_t i = 1; i < res.trace.size(); ++i) {
      CHECK(res.trace[i].big_m <= res.trace[i - 1].big_m + 1e-12);
    }
  }
  CHECK(saw_discard > 0);  // the scenario actually exercised the ledger
}

TEST_CASE("discarded clusters reactivate when their side stops matching") {
  Rng rng(548);
  const TestInstance t = random_small_instance(rng, 2, 6, 20);
  const int m = t.sample.num_unlabeled();
  RcmConfig cfg = default_rcm_config(m, t.sample.tau);
  cfg.k1 = std::min(m, std::max(2, m / 2));
  cfg.seed = 11;
  cfg.k_plus = 2;
  cfg.delta_hat_1 = 0.5;
  cfg.delta_tilde = 0.1;
  const RcmResult res = ircm(t.ds, t.sample, cfg);
  CHECK(!res.hit_time_limit);
  int total_reactivated = 0;
  for (const auto& tr : res.trace) total_reactivated += tr.reactivated;
  CHECK(total_reactivated > 0);
  const double bound = 2.0 * m - cfg.k1 + (1.0 - cfg.delta_hat_1) / cfg.delta_tilde;
  CHECK(res.iterations <= bound);
  const double M = big_m_update(res.lifted_point.objective, t.ds);
  CHECK(p3_max_residual(t.ds, t.sample, {1.0, 1.0}, t.sample.tau, M, res.lifted_point) <=
        1e-8);
  // every point is represented exactly once across active and absorbed counts
  double raw = 0.0;
  for (const auto& cl : res.final_clustering.clusters) raw += cl.count();
  for (const auto& [g, a] : res.ledger.absorbed) raw += a.count;
  CHECK(raw == doctest::Approx(m));
}

TEST_CASE("big-M updates keep the incumbent hyperplane inside the box") {
  Rng rng(404);
  for (int trial = 0; trial < 5; ++trial) {
    const TestInstance t = random_small_instance(rng, 2, 5, 10);
    RcmConfig cfg = small_config(t, std::max(1, t.sample.num_unlabeled() / 3));
    cfg.k_plus = 2;
    const RcmResult res = ircm(t.ds, t.sample, cfg);
    for (int i = 0; i < t.ds.size(); ++i) {
      CHECK(std::abs(hyperplane_value(res.lifted_point.hyperplane, t.ds.points[i])) <=
            res.final_big_m + 1e-6);
    }
  }
}

TEST_CASE("time limit returns the last hyperplane with the flag set") {
  const TestInstance t = oracle_1d_instance();
  RcmConfig cfg = small_config(t, 1);
  cfg.time_limit = 0.0;  // exhausted right after the first solve
  const RcmResult res = rcm(t.ds, t.sample, cfg);
  CHECK(res.hit_time_limit);
  CHECK(res.trace.size() >= 1);
  CHECK(!res.lifted_point.hyperplane.omega.empty());
}

TEST_CASE("configuration defaults follow the size schedule") {
  CHECK(default_rcm_config(100, 0).k1 == 10);
  CHECK(default_rcm_config(501, 0).k1 == 20);
  CHECK(default_rcm_config(1001, 0).k1 == 50);
  CHECK(default_rcm_config(4, 0).k1 == 4);  // clamped to m
  const RcmConfig cfg = default_rcm_config(100, 0);
  CHECK(cfg.k_plus == 50);
  CHECK(cfg.delta_hat_1 == doctest::Approx(0.8));
  CHECK(cfg.delta_tilde == doctest::Approx(0.1));
}

TEST_CASE("invalid cluster counts are rejected") {
  const TestInstance t = oracle_1d_instance();
  RcmConfig cfg = small_config(t, 0);
  CHECK_THROWS(rcm(t.ds, t.sample, cfg));
  cfg.k1 = t.sample.num_unlabeled() + 1;
  CHECK_THROWS(rcm(t.ds, t.sample, cfg));
}
