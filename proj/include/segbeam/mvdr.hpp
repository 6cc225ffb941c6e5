#pragma once

// Complex covariance bookkeeping for MVDR/MPDR beamforming.
//
// Convention: the loaded sample covariance is the *unnormalized* sum
//     S = delta * I + sum_n x[n] x[n]^H
// and the weights are w = S^-1 nu / (nu^H S^-1 nu), so w^H nu = 1. Positive
// scaling of S leaves w unchanged, so this agrees with the 1/K-normalized
// sample covariance. Outputs are y = w^H x.

#include <cmath>
#include <utility>

#include "segbeam/core.hpp"

namespace segbeam {

class SteeringVector {
 public:
  SteeringVector(CVector values, Index reference_index = 0)
      : values_(std::move(values)), reference_index_(reference_index) {
    if (values_.size() == 0) throw ParameterError("steering vector: empty");
    if (reference_index_ < 0 || reference_index_ >= values_.size())
      throw ParameterError("steering vector: reference_index out of range");
    if (!detail::all_finite(values_)) throw DataError("steering vector: non-finite entry");
    if (values_.norm() < 1e-12) throw ParameterError("steering vector: zero (norm < 1e-12)");
  }

  // Relative-transfer-function form: divides by the reference entry and pins
  // it to exactly 1 + 0i.
  static SteeringVector relative(const CVector& raw, Index reference_index) {
    if (reference_index < 0 || reference_index >= raw.size())
      throw ParameterError("steering vector: reference_index out of range");
    const Complex ref = raw(reference_index);
    if (std::abs(ref) < 1e-300) throw ParameterError("steering vector: reference entry is zero");
    CVector v = raw / ref;
    v(reference_index) = Complex(1.0, 0.0);
    return SteeringVector(std::move(v), reference_index);
  }

  const CVector& values() const { return values_; }
  Index reference_index() const { return reference_index_; }
  Index size() const { return values_.size(); }

 private:
  CVector values_;
  Index reference_index_;
};

struct Snapshot {
  CVector values;
  Index time_index = 0;
};

// Periodic clean-up applied inside rank1_update. Zero disables either step.
struct MaintenancePolicy {
  int resymmetrize_every = 64;
  int reinvert_every = 4096;
};

struct CovarianceState {
  CMatrix s_inv;   // (delta I + sum x x^H)^-1
  CVector u;       // s_inv * nu
  double rho = 0;  // nu^H s_inv nu
  CVector w;       // u / rho
  double j_cost = 0;
  Index start_index = 0;
  Index count = 0;
  double delta = 0;
  CMatrix scm;  // delta I + sum x x^H, kept for periodic re-inversion

  Index dim() const { return u.size(); }

  // |w^H nu - 1|
  double constraint_error(const SteeringVector& nu) const {
    return std::abs(w.dot(nu.values()) - Complex(1.0, 0.0));
  }
};

inline CovarianceState init_state(const SteeringVector& nu, double delta, Index start_index) {
  if (!(delta > 0.0) || !std::isfinite(delta))
    throw ParameterError("init_state: delta must be positive and finite");
  const Index p = nu.size();
  CovarianceState st;
  st.delta = delta;
  st.start_index = start_index;
  st.s_inv = CMatrix::Identity(p, p) / delta;
  st.scm = CMatrix::Identity(p, p) * delta;
  st.u = nu.values() / delta;
  st.rho = nu.values().dot(st.u).real();
  st.w = st.u / st.rho;
  return st;
}

namespace detail {

inline void refresh_weights(CovarianceState& st, const SteeringVector& nu) {
  st.rho = nu.values().dot(st.u).real();
  if (!(st.rho > 0.0) || !std::isfinite(st.rho))
    throw NumericalError("mvdr: denominator nu^H S^-1 nu is not positive");
  st.w = st.u / st.rho;
}

inline void reinvert(CovarianceState& st, const SteeringVector& nu) {
  Eigen::LLT<CMatrix> llt(st.scm);
  if (llt.info() != Eigen::Success) throw NumericalError("mvdr: accumulated covariance not positive definite");
  st.s_inv = llt.solve(CMatrix::Identity(st.dim(), st.dim()));
  st.s_inv = (0.5 * (st.s_inv + st.s_inv.adjoint())).eval();
  st.u = st.s_inv * nu.values();
  refresh_weights(st, nu);
}

}  // namespace detail

// Sherman-Morrison update of one candidate with snapshot x. Returns the
// a-posteriori output y = w^H x, i.e. computed with weights that already
// include x, and adds |y|^2 to j_cost.
inline Complex rank1_update(CovarianceState& st, const SteeringVector& nu, const CVector& x,
                            const MaintenancePolicy& policy = {}) {
  const Index p = st.dim();
  if (x.size() != p || nu.size() != p) throw ShapeError("rank1_update: snapshot dimension mismatch");
  if (!detail::all_finite(x)) throw DataError("rank1_update: non-finite snapshot");

  const CVector sx = st.s_inv * x;  // S^-1 x; S^-1 Hermitian so x^H S^-1 = sx^H
  const Complex quad = x.dot(sx);   // x^H S^-1 x
  const double denom = 1.0 + quad.real();
  if (!(denom > 0.0)) throw NumericalError("rank1_update: 1 + x^H S^-1 x is not positive");

  const CVector k = sx / denom;
  const Complex xu = x.dot(st.u);  // x^H S^-1 nu
  st.s_inv.noalias() -= k * sx.adjoint();
  st.u -= k * xu;
  st.scm.noalias() += x * x.adjoint();
  ++st.count;

  if (policy.reinvert_every > 0 && st.count % policy.reinvert_every == 0) {
    detail::reinvert(st, nu);
  } else {
    if (policy.resymmetrize_every > 0 && st.count % policy.resymmetrize_every == 0)
      st.s_inv = (0.5 * (st.s_inv + st.s_inv.adjoint())).eval();
    detail::refresh_weights(st, nu);
  }

  const Complex y = st.w.dot(x);
  st.j_cost += std::norm(y);
  return y;
}

// w = S^-1 nu / (nu^H S^-1 nu), S = delta I + X X^H. Columns of X are snapshots;
// zero columns (an empty window) give the loading-only solution nu / |nu|^2.
inline CVector batch_mvdr_weights(const CMatrix& snapshots, const SteeringVector& nu, double delta) {
  if (!(delta > 0.0) || !std::isfinite(delta))
    throw ParameterError("batch_mvdr_weights: delta must be positive and finite");
  const Index p = nu.size();
  if (snapshots.cols() > 0 && snapshots.rows() != p)
    throw ShapeError("batch_mvdr_weights: snapshot dimension mismatch");
  if (!detail::all_finite(snapshots)) throw DataError("batch_mvdr_weights: non-finite snapshot");

  CMatrix s = CMatrix::Identity(p, p) * delta;
  if (snapshots.cols() > 0) s.noalias() += snapshots * snapshots.adjoint();
  Eigen::LLT<CMatrix> llt(s);
  if (llt.info() != Eigen::Success) throw NumericalError("batch_mvdr_weights: covariance not positive definite");
  const CVector sv = llt.solve(nu.values());
  return sv / nu.values().dot(sv).real();
}

}  // namespace segbeam
