#include "cs3vm/rcm.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <stdexcept>

namespace cs3vm {

RcmConfig default_rcm_config(int m, int tau) {
  RcmConfig cfg;
  if (m <= 500) {
    cfg.k1 = 10;
  } else if (m <= 1000) {
    cfg.k1 = 20;
  } else {
    cfg.k1 = 50;
  }
  cfg.k1 = std::max(1, std::min(cfg.k1, m));
  cfg.tau = tau;
  return cfg;
}

namespace {

double elapsed(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Cluster store with stable ids; the ledger references ids, active clusters
// carry the capacity of the clusters they absorbed.
class Engine {
 public:
  Engine(const Dataset& ds, const Sample& sample, const RcmConfig& cfg, bool improved)
      : ds_(ds), sample_(sample), cfg_(cfg), improved_(improved) {
    if (cfg_.k1 < 1) throw std::invalid_argument("rcm: k1 must be >= 1");
    if (cfg_.k1 > sample.num_unlabeled()) {
      throw std::invalid_argument("rcm: k1 exceeds the number of unlabeled points");
    }
    if (improved_ && (cfg_.delta_hat_1 <= 0.0 || cfg_.delta_hat_1 >= 1.0 ||
                      cfg_.delta_tilde <= 0.0 || cfg_.delta_tilde >= 1.0)) {
      throw std::invalid_argument("ircm: delta parameters must lie in (0,1)");
    }
    for (int i : sample.unlabeled_idx) points_.push_back(ds.points[i]);
  }

  RcmResult run() {
    const auto t0 = std::chrono::steady_clock::now();
    const int m = static_cast<int>(points_.size());
    big_m_ = big_m_initial(ds_, sample_, cfg_.penalties, cfg_.tau);

    Clustering init = kmeans(points_, cfg_.k1, cfg_.seed, cfg_.kmeans_max_iter);
    for (auto& c : init.clusters) add_cluster(std::move(c), /*active=*/true);

    RcmResult res;
    double delta_hat = cfg_.delta_hat_1;
    FeasiblePoint sol;          // current clustered solution, z per active id
    FeasiblePoint lifted;       // per-point version of sol
    ClusterLedger ledger_snapshot;
    std::vector<int> sol_ids;   // active ids aligned with sol.z
    bool have_sol = false;
    bool sol_optimal = false;

    while (true) {
      if (have_sol && elapsed(t0) > cfg_.time_limit) {
        res.hit_time_limit = true;
        break;
      }

      // ---- solve the clustered problem on the active clusters ----
      sol_ids = ledger_.active;
      std::vector<std::vector<double>> cents;
      std::vector<double> counts;
      for (int id : sol_ids) {
        cents.push_back(store_[id].centroid);
        counts.push_back(effective_count(id));
      }
      MiqpProblem p = build_clustered(ds_, sample_, cents, counts, cfg_.penalties,
                                      cfg_.tau, big_m_);
      BbOptions opts;
      opts.time_limit = std::max(1e-3, cfg_.time_limit - elapsed(t0));
      opts.mip_gap_tol = 1e-10;  // paired runs are compared to 1e-9
      opts.warm_start = warm_vector(p, counts, have_sol ? &sol : nullptr);
      MiqpSolution ms = solve_miqp(p, opts);
      if (!ms.incumbent) {
        throw std::runtime_error("rcm: clustered solve returned no point");
      }
      sol = extract_point(*ms.incumbent, p.layout, cfg_.penalties);
      sol_optimal = ms.status == MiqpStatus::Optimal;
      have_sol = true;
      lifted = lift(sol, sol_ids);        // absorption state as of this solve
      ledger_snapshot = export_ledger();  // consistent with sol_ids

      IterationTrace tr;
      tr.k = static_cast<int>(sol_ids.size());
      tr.objective = sol.objective;
      tr.big_m = big_m_;

      // ---- discard / reactivate (improved variant only) ----
      int reactivated = 0;
      if (improved_) {
        std::vector<double> dist;
        for (const auto& c : cents) dist.push_back(std::abs(hyperplane_value(sol.hyperplane, c)));
        const double delta = quantile(dist, delta_hat);
        tr.delta = delta;
        tr.delta_hat = delta_hat;

        const std::vector<int> prev_discarded = ledger_.discarded;
        if (static_cast<int>(ledger_.active.size()) > cfg_.k_plus) {
          discard_far_clusters(sol.hyperplane, delta);
        }
        reactivated = reactivate(sol.hyperplane, sol, sol_ids, delta, prev_discarded);
        if (reactivated > 0) delta_hat = std::min(delta_hat + cfg_.delta_tilde, 1.0);
      }
      tr.reactivated = reactivated;

      // ---- split clusters cut by the hyperplane ----
      const int splits = split_cut_active(sol.hyperplane);

      tr.discarded_total = static_cast<int>(ledger_.discarded.size());
      res.trace.push_back(tr);

      // ---- big-M update from the post-split clustering ----
      if (improved_ && sol_optimal) {
        const double f_tilde = upper_bound_after_split(sol);
        big_m_ = std::min(big_m_, big_m_update(f_tilde, ds_));
      }

      check_conservation();
      if (splits == 0 && reactivated == 0) break;
    }

    // ---- assemble outputs ----
    res.iterations = static_cast<int>(res.trace.size()) - 1;
    res.final_k = static_cast<int>(ledger_.active.size());
    res.final_big_m = big_m_;
    res.clustered_point = sol;
    for (int id : sol_ids) res.final_clustering.clusters.push_back(store_[id]);
    res.ledger = ledger_snapshot;
    res.lifted_point = lifted;
    return res;
  }

 private:
  struct StoredCluster : Cluster {
    int absorbed_in = 0;  // capacity moved here from discarded clusters
  };

  int add_cluster(Cluster c, bool active) {
    StoredCluster sc;
    sc.centroid = std::move(c.centroid);
    sc.members = std::move(c.members);
    const int id = static_cast<int>(store_.size());
    store_.push_back(std::move(sc));
    if (active) ledger_.active.push_back(id);
    return id;
  }

  double effective_count(int id) const {
    return static_cast<double>(store_[id].count() + store_[id].absorbed_in);
  }

  int member_side(int point, const Hyperplane& h) const {
    return hyperplane_value(h, points_[point]) >= 0.0 ? +1 : -1;
  }

  int centroid_side(int id, const Hyperplane& h) const {
    return hyperplane_value(h, store_[id].centroid) >= 0.0 ? +1 : -1;
  }

  bool serves_as_residual(int id) const {
    for (const auto& [g, a] : absorption_) {
      if (a.residual == id) return true;
    }
    return false;
  }

  int farthest_active_on_side(const Hyperplane& h, int side, int exclude = -1) const {
    int best = -1;
    double bd = -1.0;
    for (int id : ledger_.active) {
      if (id == exclude) continue;
      if (centroid_side(id, h) != side) continue;
      const double d = std::abs(hyperplane_value(h, store_[id].centroid));
      if (d > bd) {
        bd = d;
        best = id;
      }
    }
    return best;
  }

  void discard_far_clusters(const Hyperplane& h, double delta) {
    std::vector<std::pair<int, int>> candidates;  // (id, side)
    for (int id : ledger_.active) {
      if (serves_as_residual(id)) continue;
      bool all_far_pos = true, all_far_neg = true;
      for (int i : store_[id].members) {
        const double v = hyperplane_value(h, points_[i]);
        if (!(v > delta)) all_far_pos = false;
        if (!(v < -delta)) all_far_neg = false;
      }
      if (all_far_pos) {
        candidates.push_back({id, +1});
      } else if (all_far_neg) {
        candidates.push_back({id, -1});
      }
    }
    for (const auto& [id, side] : candidates) {
      auto& marker = side > 0 ? ledger_.residual_pos : ledger_.residual_neg;
      if (!marker || std::find(ledger_.active.begin(), ledger_.active.end(), *marker) ==
                         ledger_.active.end()) {
        marker = farthest_active_on_side(h, side);
      }
      if (!marker) continue;         // no active cluster left on this side
      if (*marker == id) continue;   // the residual itself stays active
      ClusterLedger::Absorption a;
      a.residual = *marker;
      a.count = store_[id].count();
      a.side = side;
      absorption_[id] = a;
      store_[a.residual].absorbed_in += a.count;
      ledger_.active.erase(std::find(ledger_.active.begin(), ledger_.active.end(), id));
      ledger_.discarded.push_back(id);
    }
  }

  // Reactivates previously discarded clusters whose stored information no
  // longer matches the current solution: a member within delta of the
  // hyperplane, a member that left the side the cluster was discarded on, or
  // a residual whose binary no longer matches that side.
  int reactivate(const Hyperplane& h, const FeasiblePoint& sol,
                 const std::vector<int>& sol_ids, double delta,
                 const std::vector<int>& prev_discarded) {
    int side_changes = 0;
    std::vector<int> bring_back;
    for (int g : prev_discarded) {
      const auto& a = absorption_.at(g);
      bool changed = false;
      bool close = false;
      for (int i : store_[g].members) {
        const double v = hyperplane_value(h, points_[i]);
        if (member_side(i, h) != a.side) changed = true;
        if (std::abs(v) <= delta) close = true;
      }
      if (!changed) {
        // the residual's binary must still agree with the stored side
        const auto it = std::find(sol_ids.begin(), sol_ids.end(), a.residual);
        if (it != sol_ids.end()) {
          const int zj = sol.z[it - sol_ids.begin()];
          if ((a.side > 0) != (zj == 1)) changed = true;
        }
      }
      if (changed) ++side_changes;
      if (changed || close) bring_back.push_back(g);
    }
    for (int g : bring_back) {
      const auto a = absorption_.at(g);
      store_[a.residual].absorbed_in -= a.count;
      absorption_.erase(g);
      ledger_.discarded.erase(
          std::find(ledger_.discarded.begin(), ledger_.discarded.end(), g));
      ledger_.active.push_back(g);
    }
    return side_changes;
  }

  int split_cut_active(const Hyperplane& h) {
    std::vector<int> cut_ids;
    for (int id : ledger_.active) {
      if (is_cut(points_, store_[id], h)) cut_ids.push_back(id);
    }
    for (int id : cut_ids) {
      Cluster nonneg, neg;
      for (int i : store_[id].members) {
        (hyperplane_value(h, points_[i]) >= 0.0 ? nonneg : neg).members.push_back(i);
      }
      recompute_centroid(nonneg);
      recompute_centroid(neg);
      ledger_.active.erase(std::find(ledger_.active.begin(), ledger_.active.end(), id));
      const int id_pos = add_cluster(std::move(nonneg), true);
      const int id_neg = add_cluster(std::move(neg), true);
      if (ledger_.residual_pos && *ledger_.residual_pos == id) ledger_.residual_pos.reset();
      if (ledger_.residual_neg && *ledger_.residual_neg == id) ledger_.residual_neg.reset();
      // re-attach absorbed capacity to the farthest active cluster on the
      // discarded cluster's own side
      for (auto& [g, a] : absorption_) {
        if (a.residual != id) continue;
        int target = farthest_active_on_side(h, a.side);
        if (target < 0) target = a.side > 0 ? id_pos : id_neg;
        a.residual = target;
        store_[target].absorbed_in += a.count;
      }
      store_[id].absorbed_in = 0;
    }
    return static_cast<int>(cut_ids.size());
  }

  void recompute_centroid(Cluster& c) {
    c.centroid.assign(points_.front().size(), 0.0);
    for (int i : c.members) {
      for (std::size_t j = 0; j < c.centroid.size(); ++j) c.centroid[j] += points_[i][j];
    }
    for (double& v : c.centroid) v /= static_cast<double>(c.members.size());
  }

  // Upper bound of the next clustered problem from the current hyperplane:
  // re-derive the binaries by centroid side and the slacks by counting.
  double upper_bound_after_split(const FeasiblePoint& sol) const {
    double zsum = 0.0;
    for (int id : ledger_.active) {
      if (hyperplane_value(sol.hyperplane, store_[id].centroid) >= 0.0) {
        zsum += effective_count(id);
      }
    }
    const double eta1 = std::max(0.0, cfg_.tau - zsum);
    const double eta2 = std::max(0.0, zsum - cfg_.tau);
    return point_objective(cfg_.penalties, sol.hyperplane, sol.xi, eta1, eta2);
  }

  // Warm start for the next clustered solve: previous hyperplane with the
  // binaries set by centroid side (the trivial witness point when there is
  // no previous solution or it no longer fits the tightened M).
  std::vector<double> warm_vector(const MiqpProblem& p, const std::vector<double>& counts,
                                  const FeasiblePoint* prev) const {
    const auto& L = p.layout;
    std::vector<double> x(p.relaxation.num_vars, 0.0);
    if (prev) {
      for (int j = 0; j < L.dim; ++j) x[j] = prev->hyperplane.omega[j];
      x[L.bias_index] = prev->hyperplane.b;
      const std::vector<double> xi = labeled_slacks(ds_, sample_, prev->hyperplane);
      for (int i = 0; i < L.n_labeled; ++i) x[L.xi_begin + i] = xi[i];
      double zsum = 0.0;
      for (int k = 0; k < L.z_count; ++k) {
        const int z = hyperplane_value(prev->hyperplane, p.z_rep[k]) >= 0.0 ? 1 : 0;
        x[L.z_begin + k] = z;
        zsum += z * counts[k];
      }
      x[L.eta1_index] = std::max(0.0, cfg_.tau - zsum);
      x[L.eta2_index] = std::max(0.0, zsum - cfg_.tau);
      if (p.relaxation.max_violation(x) <= 1e-9) return x;
    }
    // witness: omega = 0, b = 1, everything on the positive side
    std::fill(x.begin(), x.end(), 0.0);
    x[L.bias_index] = 1.0;
    double total = 0.0;
    for (int i = 0; i < L.n_labeled; ++i) {
      x[L.xi_begin + i] = sample_.labels[i] < 0 ? 2.0 : 0.0;
    }
    for (int k = 0; k < L.z_count; ++k) {
      x[L.z_begin + k] = 1.0;
      total += counts[k];
    }
    x[L.eta1_index] = std::max(0.0, cfg_.tau - total);
    x[L.eta2_index] = std::max(0.0, total - cfg_.tau);
    return x;
  }

  void check_conservation() const {
    double total = 0.0;
    for (int id : ledger_.active) total += effective_count(id);
    if (std::llround(total) != sample_.num_unlabeled()) {
      throw std::logic_error("rcm: cluster capacity no longer sums to m");
    }
  }

  ClusterLedger export_ledger() const {
    ClusterLedger out;
    out.active = ledger_.active;
    out.discarded = ledger_.discarded;
    out.residual_pos = ledger_.residual_pos;
    out.residual_neg = ledger_.residual_neg;
    out.absorbed = absorption_;
    return out;
  }

  FeasiblePoint lift(const FeasiblePoint& sol, const std::vector<int>& sol_ids) const {
    FeasiblePoint fp = sol;
    fp.z.assign(points_.size(), 0);
    std::map<int, int> z_of;
    for (std::size_t j = 0; j < sol_ids.size(); ++j) z_of[sol_ids[j]] = sol.z[j];
    for (std::size_t j = 0; j < sol_ids.size(); ++j) {
      for (int i : store_[sol_ids[j]].members) fp.z[i] = sol.z[j];
    }
    for (const auto& [g, a] : absorption_) {
      const auto it = z_of.find(a.residual);
      const int z = it != z_of.end() ? it->second : (a.side > 0 ? 1 : 0);
      for (int i : store_[g].members) fp.z[i] = z;
    }
    // solver noise can leave a binary a hair off its side; strict sides win,
    // points inside the boundary band keep their cluster's value
    const double band = boundary_band(fp.hyperplane);
    for (std::size_t i = 0; i < points_.size(); ++i) {
      const double v = hyperplane_value(fp.hyperplane, points_[i]);
      if (v > band) {
        fp.z[i] = 1;
      } else if (v < -band) {
        fp.z[i] = 0;
      }
    }
    // slacks re-derived exactly from the hyperplane and the binaries
    fp.xi = labeled_slacks(ds_, sample_, fp.hyperplane);
    int total = 0;
    for (int z : fp.z) total += z;
    fp.eta1 = std::max(0, cfg_.tau - total);
    fp.eta2 = std::max(0, total - cfg_.tau);
    fp.objective = point_objective(cfg_.penalties, fp.hyperplane, fp.xi, fp.eta1, fp.eta2);
    return fp;
  }

  const Dataset& ds_;
  const Sample& sample_;
  const RcmConfig& cfg_;
  const bool improved_;
  std::vector<std::vector<double>> points_;
  std::vector<StoredCluster> store_;
  ClusterLedger ledger_;  // absorbed map kept separately with counts
  std::map<int, ClusterLedger::Absorption> absorption_;
  double big_m_ = 0.0;
};

}  // namespace

RcmResult rcm(const Dataset& ds, const Sample& sample, const RcmConfig& config) {
  return Engine(ds, sample, config, /*improved=*/false).run();
}

RcmResult ircm(const Dataset& ds, const Sample& sample, const RcmConfig& config) {
  return Engine(ds, sample, config, /*improved=*/true).run();
}

}  // namespace cs3vm
