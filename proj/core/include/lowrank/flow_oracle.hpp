#pragma once

#include <vector>

#include "lowrank/linalg.hpp"

namespace lowrank {

/// Classical fourth-order Runge-Kutta step for an autonomous system y' = f(y).
/// State only needs +, scalar * and copy.
template <typename State, typename Rhs>
State rk4_step(const State& y, double dt, Rhs&& f) {
  const State k1 = f(y);
  const State k2 = f(State(y + (0.5 * dt) * k1));
  const State k3 = f(State(y + (0.5 * dt) * k2));
  const State k4 = f(State(y + dt * k3));
  return State(y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
}

/// Default RK4 step, scaled with the stiffness of the flow.
inline double default_flow_dt(double sigma_1) { return 1e-3 / sigma_1; }

/// Inputs of the symmetric full-rank closed forms. Sigma is diagonal SPD.
struct ClosedFormInputs {
  Vector sigma;  // diagonal of Sigma
  Matrix S0;     // SPD start
  Matrix P0;     // Sigma - S0
  Matrix X0;     // S0^{-1} - Sigma^{-1}
};

/// Rejects a non-diagonal or non-positive Sigma and a non-SPD S0.
ClosedFormInputs make_closed_form_inputs(const Matrix& sigma, const Matrix& S0);

/// S(t) = (e^{-t Sigma} (S0^{-1} - Sigma^{-1}) e^{-t Sigma} + Sigma^{-1})^{-1}.
Matrix closed_form_S(const ClosedFormInputs& in, double t);

/// P(t) = (e^{t Sigma} (P0^{-1} - Sigma^{-1}) e^{t Sigma} + Sigma^{-1})^{-1},
/// evaluated as e^{-t Sigma} (Y + e^{-t Sigma} Sigma^{-1} e^{-t Sigma})^{-1} e^{-t Sigma}
/// so that large t does not overflow. Singular P0 is rejected.
Matrix closed_form_P(const ClosedFormInputs& in, double t);

/// Frobenius norm of
///   (E(S^{-1}-Sigma^{-1})E + Sigma^{-1})^{-1} + (E^{-1}(P^{-1}-Sigma^{-1})E^{-1} + Sigma^{-1})^{-1} - Sigma.
/// Throws PreconditionError when ||E Sigma - Sigma E||_F > 1e-10.
double magical_identity_residual(const Matrix& S, const Matrix& P, const Matrix& E,
                                 const Matrix& sigma);

/// s_t = sigma e^{2 sigma t} / (e^{2 sigma t} + sigma / a0^2 - 1).
double rank1_solution(double sigma, double a0, double t);

struct FlowState {
  double t = 0.0;
  Matrix U;  // m x d
  Matrix V;  // n x d
};

struct FlowTrajectory {
  std::vector<FlowState> states;
};

/// RK4 on U' = (Sigma - U V^T) V, V' = (Sigma - U V^T)^T U. A state is stored
/// every `record_every` steps and at t_end.
FlowTrajectory integrate_flow(const Matrix& U0, const Matrix& V0, const Matrix& sigma_full,
                              double t_end, double dt, long record_every = 1);

/// max_t ||(U^T U - V^T V)(t) - (U^T U - V^T V)(0)||_F.
double invariance_drift(const FlowTrajectory& trajectory);

/// RK4 reference for S' = (Sigma - S) S + S (Sigma - S).
Matrix integrate_gram_flow(const Matrix& sigma, const Matrix& S0, double t_end, double dt);

/// RK4 reference for a' = (sigma - a^2) a; returns a(t_end)^2.
double integrate_rank1(double sigma, double a0, double t_end, double dt);

}  // namespace lowrank
