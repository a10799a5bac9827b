#include "lowrank/flow_oracle.hpp"

#include <cmath>
#include <sstream>

#include "lowrank/errors.hpp"

namespace lowrank {

namespace {

constexpr double kSingularityGuard = 1e-12;
constexpr double kDivergence = 1e12;

void require_time(double t) {
  if (!(t >= 0.0) || !std::isfinite(t)) throw ValidationError("time must be finite and >= 0");
}

Matrix inverse_relative(const Matrix& m) {
  const double scale = m.cwiseAbs().maxCoeff();
  return linalg::symmetric_inverse(m, 1e-14 * scale);
}

// Number of RK4 steps covering [0, t_end] with steps no longer than dt.
long step_count(double t_end, double dt) {
  if (!(dt > 0.0)) throw ValidationError("dt must be positive");
  require_time(t_end);
  return static_cast<long>(std::ceil(t_end / dt - 1e-9));
}

}  // namespace

ClosedFormInputs make_closed_form_inputs(const Matrix& sigma, const Matrix& S0) {
  if (sigma.rows() != sigma.cols() || S0.rows() != sigma.rows() || S0.cols() != sigma.cols()) {
    throw ValidationError("closed form: Sigma and S0 must be square of equal size");
  }
  const Matrix off = sigma - Matrix(sigma.diagonal().asDiagonal());
  if (off.cwiseAbs().maxCoeff() > 0.0) {
    throw ValidationError("closed form requires a diagonal Sigma");
  }
  ClosedFormInputs in;
  in.sigma = sigma.diagonal();
  if (!(in.sigma.minCoeff() > 0.0)) throw ValidationError("closed form requires Sigma SPD");
  if ((S0 - S0.transpose()).cwiseAbs().maxCoeff() > 1e-12 * S0.cwiseAbs().maxCoeff()) {
    throw ValidationError("S0 must be symmetric");
  }
  const double sigma_1 = in.sigma.maxCoeff();
  const double s_min = linalg::lambda_min(S0);
  if (!(s_min > kSingularityGuard * sigma_1)) {
    throw PreconditionError("S0 must be positive definite (smallest eigenvalue is too small)");
  }
  in.S0 = 0.5 * (S0 + S0.transpose());
  in.P0 = Matrix(sigma) - in.S0;
  in.X0 = linalg::symmetric_inverse(in.S0, kSingularityGuard * sigma_1) -
          Matrix(in.sigma.cwiseInverse().asDiagonal());
  return in;
}

Matrix closed_form_S(const ClosedFormInputs& in, double t) {
  require_time(t);
  if (t == 0.0) return in.S0;
  const Eigen::Index d = in.sigma.size();
  Matrix inner(d, d);
  for (Eigen::Index j = 0; j < d; ++j) {
    for (Eigen::Index i = 0; i < d; ++i) {
      inner(i, j) = std::exp(-t * (in.sigma(i) + in.sigma(j))) * in.X0(i, j);
    }
  }
  inner.diagonal() += in.sigma.cwiseInverse();
  return inverse_relative(inner);
}

Matrix closed_form_P(const ClosedFormInputs& in, double t) {
  require_time(t);
  const Eigen::Index d = in.sigma.size();
  const double sigma_1 = in.sigma.maxCoeff();
  const Matrix P0_inv = linalg::symmetric_inverse(in.P0, kSingularityGuard * sigma_1);
  if (t == 0.0) return in.P0;
  Matrix inner = P0_inv;
  inner.diagonal() -= in.sigma.cwiseInverse();
  const Vector decay = (-t * in.sigma).array().exp().matrix();
  for (Eigen::Index i = 0; i < d; ++i) inner(i, i) += decay(i) * decay(i) / in.sigma(i);
  const Matrix mid = inverse_relative(inner);
  return decay.asDiagonal() * mid * decay.asDiagonal();
}

double magical_identity_residual(const Matrix& S, const Matrix& P, const Matrix& E,
                                 const Matrix& sigma) {
  const Eigen::Index d = sigma.rows();
  if (sigma.cols() != d || S.rows() != d || S.cols() != d || P.rows() != d || P.cols() != d ||
      E.rows() != d || E.cols() != d) {
    throw ValidationError("identity residual: all matrices must be d x d");
  }
  const double commutator = (E * sigma - sigma * E).norm();
  if (commutator > 1e-10) {
    std::ostringstream msg;
    msg << "E does not commute with Sigma (||E Sigma - Sigma E||_F = " << commutator << ")";
    throw PreconditionError(msg.str());
  }
  const double sigma_1 = linalg::lambda_max(sigma);
  const double guard = kSingularityGuard * sigma_1;
  const Matrix sigma_inv = inverse_relative(sigma);
  const Matrix S_inv = linalg::symmetric_inverse(S, guard);
  const Matrix P_inv = linalg::symmetric_inverse(P, guard);
  const Matrix E_inv = inverse_relative(E);
  const Matrix first = inverse_relative(E * (S_inv - sigma_inv) * E + sigma_inv);
  const Matrix second = inverse_relative(E_inv * (P_inv - sigma_inv) * E_inv + sigma_inv);
  return (first + second - sigma).norm();
}

double rank1_solution(double sigma, double a0, double t) {
  if (!(sigma > 0.0) || !(a0 > 0.0)) throw ValidationError("rank-1 solution needs sigma, a0 > 0");
  require_time(t);
  if (t == 0.0) return a0 * a0;
  // Divided through by e^{2 sigma t} to stay finite for large t.
  return sigma / (1.0 + (sigma / (a0 * a0) - 1.0) * std::exp(-2.0 * sigma * t));
}

FlowTrajectory integrate_flow(const Matrix& U0, const Matrix& V0, const Matrix& sigma_full,
                              double t_end, double dt, long record_every) {
  if (U0.rows() != sigma_full.rows() || V0.rows() != sigma_full.cols() ||
      U0.cols() != V0.cols()) {
    throw ValidationError("integrate_flow: factor shapes do not match the target matrix");
  }
  if (record_every < 1) throw ValidationError("record_every must be >= 1");
  const long steps = step_count(t_end, dt);
  const Eigen::Index m = U0.rows();
  const Eigen::Index n = V0.rows();
  const Eigen::Index d = U0.cols();

  // Both factors stacked as one (m + n) x d state.
  auto rhs = [&](const Matrix& y) {
    const auto U = y.topRows(m);
    const auto V = y.bottomRows(n);
    const Matrix residual = sigma_full - U * V.transpose();
    Matrix dy(m + n, d);
    dy.topRows(m) = residual * V;
    dy.bottomRows(n) = residual.transpose() * U;
    return dy;
  };

  Matrix y(m + n, d);
  y << U0, V0;
  FlowTrajectory out;
  out.states.push_back(FlowState{0.0, U0, V0});
  double t = 0.0;
  for (long k = 1; k <= steps; ++k) {
    const double h = std::min(dt, t_end - t);
    y = rk4_step(y, h, rhs);
    t = (k == steps) ? t_end : t + h;
    if (!y.allFinite() || y.cwiseAbs().maxCoeff() > kDivergence) {
      std::ostringstream msg;
      msg << "gradient flow diverged at step " << k << " (t = " << t << ")";
      throw DivergenceError(msg.str(), k);
    }
    if (k % record_every == 0 || k == steps) {
      out.states.push_back(FlowState{t, y.topRows(m), y.bottomRows(n)});
    }
  }
  return out;
}

double invariance_drift(const FlowTrajectory& trajectory) {
  if (trajectory.states.empty()) return 0.0;
  auto gap = [](const FlowState& s) -> Matrix {
    return s.U.transpose() * s.U - s.V.transpose() * s.V;
  };
  const Matrix g0 = gap(trajectory.states.front());
  double drift = 0.0;
  for (const auto& s : trajectory.states) drift = std::max(drift, (gap(s) - g0).norm());
  return drift;
}

Matrix integrate_gram_flow(const Matrix& sigma, const Matrix& S0, double t_end, double dt) {
  const long steps = step_count(t_end, dt);
  auto rhs = [&](const Matrix& s) -> Matrix {
    const Matrix gap = sigma - s;
    return gap * s + s * gap;
  };
  Matrix s = S0;
  double t = 0.0;
  for (long k = 1; k <= steps; ++k) {
    const double h = std::min(dt, t_end - t);
    s = rk4_step(s, h, rhs);
    t += h;
  }
  return s;
}

double integrate_rank1(double sigma, double a0, double t_end, double dt) {
  const long steps = step_count(t_end, dt);
  auto rhs = [sigma](double a) { return (sigma - a * a) * a; };
  double a = a0;
  double t = 0.0;
  for (long k = 1; k <= steps; ++k) {
    const double h = std::min(dt, t_end - t);
    a = rk4_step(a, h, rhs);
    t += h;
  }
  return a * a;
}

}  // namespace lowrank
