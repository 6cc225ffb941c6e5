#pragma once

// Online segmented MVDR beamformer, its offline dynamic-programming
// reference, and fixed-window MPDR baselines.
//
// The online beamformer keeps a bank of recursive MVDR candidates, one per
// hypothesized start of the current stationary segment. At time n every
// candidate i in [cur, n] is advanced with x[n] and scored as
//     E[i-1] + C + J_i(n)
// where J_i is the candidate's accumulated a-posteriori output power and
// E[-1] = 0. E[n] is the minimum score. When the winning start lies more than
// tau samples past the active start the beamformer switches to it and drops
// all older candidates.

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <optional>
#include <vector>

#include "segbeam/mvdr.hpp"

namespace segbeam {

struct SegmenterConfig {
  double penalty_c = 0.0;
  double delta = 1e-2;
  Index tau = 8;
  std::optional<Index> max_window;  // nullopt: unbounded candidate bank
  MaintenancePolicy maintenance{};

  void validate() const {
    if (!(penalty_c >= 0.0) || !std::isfinite(penalty_c))
      throw ParameterError("segmenter: penalty_c must be finite and >= 0");
    if (!(delta > 0.0) || !std::isfinite(delta)) throw ParameterError("segmenter: delta must be positive and finite");
    if (tau < 0) throw ParameterError("segmenter: tau must be >= 0");
    if (max_window) {
      if (*max_window < 1) throw ParameterError("segmenter: max_window must be >= 1");
      if (tau >= *max_window) throw ParameterError("segmenter: tau must be < max_window");
    }
  }
};

struct StepOutput {
  Complex y;
  bool switched = false;
  std::optional<Index> new_start;
  CVector active_weights;
};

class OnlineSegmenter {
 public:
  OnlineSegmenter(SteeringVector nu, SegmenterConfig config) : nu_(std::move(nu)), config_(config) {
    config_.validate();
    partition_.push_back(0);
  }

  StepOutput step(const Snapshot& x) {
    if (x.values.size() != nu_.size()) throw ShapeError("segmenter: snapshot dimension mismatch");
    if (x.time_index != n_) throw ParameterError("segmenter: snapshot time_index out of sequence");
    if (!detail::all_finite(x.values)) throw DataError("segmenter: non-finite snapshot");

    // Lazily create the candidate starting now; it has seen no data, so this
    // matches initializing every start upfront.
    candidates_.push_back(init_state(nu_, config_.delta, n_));
    if (config_.max_window) {
      // Front is always the active candidate; evict the oldest behind it.
      while (static_cast<Index>(candidates_.size()) > *config_.max_window)
        candidates_.erase(candidates_.begin() + 1);
    }

    StepOutput out;
    out.active_weights = candidates_.front().w;
    out.y = out.active_weights.dot(x.values);

    double e_min = std::numeric_limits<double>::infinity();
    Index best = cur_;
    for (auto& cand : candidates_) {
      rank1_update(cand, nu_, x.values, config_.maintenance);
      ++candidate_updates_;
      max_constraint_error_ = std::max(max_constraint_error_, cand.constraint_error(nu_));
      const double total = cost_before(cand.start_index) + config_.penalty_c + cand.j_cost;
      if (total < e_min) {  // strict: ties keep the earliest start
        e_min = total;
        best = cand.start_index;
      }
    }
    e_hist_.push_back(e_min);

    if (best - cur_ > config_.tau) {
      cur_ = best;
      partition_.push_back(best);
      while (candidates_.front().start_index < best) candidates_.pop_front();
      out.switched = true;
      out.new_start = best;
    }
    ++n_;
    return out;
  }

  // E[i - 1], with E[-1] = 0.
  double cost_before(Index i) const { return i <= 0 ? 0.0 : e_hist_[static_cast<std::size_t>(i - 1)]; }
  const std::vector<double>& cost_history() const { return e_hist_; }
  const std::vector<Index>& partition() const { return partition_; }
  Index active_start() const { return cur_; }
  Index time_index() const { return n_; }
  std::size_t candidate_count() const { return candidates_.size(); }
  const std::deque<CovarianceState>& candidates() const { return candidates_; }
  const SteeringVector& steering() const { return nu_; }
  const SegmenterConfig& config() const { return config_; }

  Index candidate_updates() const { return candidate_updates_; }
  double max_constraint_error() const { return max_constraint_error_; }

 private:
  SteeringVector nu_;
  SegmenterConfig config_;
  std::deque<CovarianceState> candidates_;
  std::vector<double> e_hist_;
  std::vector<Index> partition_;
  Index cur_ = 0;
  Index n_ = 0;
  Index candidate_updates_ = 0;
  double max_constraint_error_ = 0.0;
};

struct OnlineResult {
  std::vector<Complex> outputs;
  std::vector<Index> partition{0};
  Index candidate_updates = 0;
  double max_constraint_error = 0.0;
};

// Columns of `snapshots` are x[0], ..., x[T-1].
inline OnlineResult run_online(const CMatrix& snapshots, const SteeringVector& nu, const SegmenterConfig& config) {
  OnlineSegmenter seg(nu, config);
  OnlineResult res;
  if (snapshots.cols() == 0) return res;
  if (snapshots.rows() != nu.size()) throw ShapeError("run_online: snapshot dimension mismatch");
  res.outputs.reserve(static_cast<std::size_t>(snapshots.cols()));
  Snapshot x;
  for (Index n = 0; n < snapshots.cols(); ++n) {
    x.values = snapshots.col(n);
    x.time_index = n;
    res.outputs.push_back(seg.step(x).y);
  }
  res.partition = seg.partition();
  res.candidate_updates = seg.candidate_updates();
  res.max_constraint_error = seg.max_constraint_error();
  return res;
}

struct DpResult {
  std::vector<Index> partition;
  double total_cost = 0.0;
};

// Exact minimizer of sum over segments of [min output power + C]. The segment
// cost for [i, j] is w^H S w = 1 / (nu^H S^-1 nu) with S the loaded sum over
// the segment and w its MVDR weight. With tau > 0 every segment must hold at
// least tau + 1 samples; a record shorter than that is one segment.
// O(T^2 p^3).
inline DpResult offline_dp_segment(const CMatrix& snapshots, const SteeringVector& nu, const SegmenterConfig& config) {
  config.validate();
  const Index t_len = snapshots.cols();
  const Index p = nu.size();
  if (t_len < 1) throw ParameterError("offline_dp_segment: need at least one snapshot");
  if (snapshots.rows() != p) throw ShapeError("offline_dp_segment: snapshot dimension mismatch");
  if (!detail::all_finite(snapshots)) throw DataError("offline_dp_segment: non-finite snapshot");

  const Index min_len = config.tau > 0 ? config.tau + 1 : 1;
  auto segment_power = [&](const CMatrix& s) {
    Eigen::LLT<CMatrix> llt(s);
    if (llt.info() != Eigen::Success) throw NumericalError("offline_dp_segment: covariance not positive definite");
    return 1.0 / nu.values().dot(llt.solve(nu.values())).real();
  };

  if (t_len < min_len) {
    CMatrix s = CMatrix::Identity(p, p) * config.delta;
    s.noalias() += snapshots * snapshots.adjoint();
    return {{0}, segment_power(s) + config.penalty_c};
  }

  constexpr double kInf = std::numeric_limits<double>::infinity();
  // best[t + 1] = E(t); best[0] = E(-1) = 0.
  std::vector<double> best(static_cast<std::size_t>(t_len + 1), kInf);
  std::vector<Index> arg(static_cast<std::size_t>(t_len + 1), -1);
  best[0] = 0.0;

  for (Index i = 0; i < t_len; ++i) {
    const double prefix = best[static_cast<std::size_t>(i)];
    if (!std::isfinite(prefix)) continue;
    CMatrix s = CMatrix::Identity(p, p) * config.delta;
    for (Index t = i; t < t_len; ++t) {
      s.noalias() += snapshots.col(t) * snapshots.col(t).adjoint();
      if (t - i + 1 < min_len) continue;
      const double total = prefix + config.penalty_c + segment_power(s);
      auto& slot = best[static_cast<std::size_t>(t + 1)];
      if (total < slot) {  // i ascends, so ties keep the earliest start
        slot = total;
        arg[static_cast<std::size_t>(t + 1)] = i;
      }
    }
  }

  DpResult res;
  res.total_cost = best[static_cast<std::size_t>(t_len)];
  for (Index end = t_len; end > 0;) {
    const Index start = arg[static_cast<std::size_t>(end)];
    res.partition.push_back(start);
    end = start;
  }
  std::reverse(res.partition.begin(), res.partition.end());
  return res;
}

// Sliding-window MPDR: y[t] = w[t]^H x[t] with w[t] the loaded MVDR weight of
// x[max(0, t-K)] .. x[t-1]. The current sample never enters its own weights.
inline std::vector<Complex> fixed_window_mpdr(const CMatrix& snapshots, const SteeringVector& nu, Index window_k,
                                              double delta) {
  if (window_k < 1) throw ParameterError("fixed_window_mpdr: window_k must be >= 1");
  if (!(delta > 0.0) || !std::isfinite(delta)) throw ParameterError("fixed_window_mpdr: delta must be positive");
  const Index t_len = snapshots.cols();
  const Index p = nu.size();
  std::vector<Complex> out;
  if (t_len == 0) return out;
  if (snapshots.rows() != p) throw ShapeError("fixed_window_mpdr: snapshot dimension mismatch");
  if (!detail::all_finite(snapshots)) throw DataError("fixed_window_mpdr: non-finite snapshot");
  out.reserve(static_cast<std::size_t>(t_len));

  const CMatrix loading = CMatrix::Identity(p, p) * delta;
  CMatrix sum = CMatrix::Zero(p, p);
  Eigen::LLT<CMatrix> llt(p);
  for (Index t = 0; t < t_len; ++t) {
    if (t >= 1) sum.noalias() += snapshots.col(t - 1) * snapshots.col(t - 1).adjoint();
    if (t - window_k - 1 >= 0) sum.noalias() -= snapshots.col(t - window_k - 1) * snapshots.col(t - window_k - 1).adjoint();
    llt.compute(loading + sum);
    if (llt.info() != Eigen::Success) throw NumericalError("fixed_window_mpdr: covariance not positive definite");
    const CVector sv = llt.solve(nu.values());
    const CVector w = sv / nu.values().dot(sv).real();
    out.push_back(w.dot(snapshots.col(t)));
  }
  return out;
}

// Default loading: delta_rel times the mean per-sensor power over the first
// (up to) pilot_frames snapshots, floored at 1e-6. Small loadings let a
// candidate with fewer than p snapshots null all of them exactly, which
// biases switches early.
inline double default_delta(const CMatrix& snapshots, double delta_rel = 1.0, Index pilot_frames = 50) {
  const Index n = std::min<Index>(pilot_frames, snapshots.cols());
  if (n <= 0 || snapshots.rows() == 0) return 1e-6;
  const double power = snapshots.leftCols(n).squaredNorm() / static_cast<double>(n * snapshots.rows());
  return std::max(delta_rel * power, 1e-6);
}

// Default penalty: c_rel * 50 * median |y|^2 over the first (up to) 50
// outputs of a single growing-window MVDR (the beamformer before any switch).
inline double default_penalty(const CMatrix& snapshots, const SteeringVector& nu, double delta, double c_rel = 2.0,
                              Index pilot_frames = 50) {
  const Index n = std::min<Index>(pilot_frames, snapshots.cols());
  if (n == 0) return 0.0;
  CovarianceState st = init_state(nu, delta, 0);
  std::vector<double> power;
  power.reserve(static_cast<std::size_t>(n));
  for (Index t = 0; t < n; ++t) {
    power.push_back(std::norm(st.w.dot(snapshots.col(t))));
    rank1_update(st, nu, snapshots.col(t));
  }
  auto mid = power.begin() + static_cast<std::ptrdiff_t>(power.size() / 2);
  std::nth_element(power.begin(), mid, power.end());
  double median = *mid;
  if (power.size() % 2 == 0) {
    const double lower = *std::max_element(power.begin(), mid);
    median = 0.5 * (median + lower);
  }
  return c_rel * median * static_cast<double>(pilot_frames);
}

}  // namespace segbeam
