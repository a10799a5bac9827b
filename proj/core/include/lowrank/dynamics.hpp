#pragma once

#include <optional>
#include <vector>

#include "lowrank/linalg.hpp"
#include "lowrank/problem.hpp"

namespace lowrank {

/// Iterate in block coordinates. Full factors are stack(U; J) and stack(V; K).
struct FactorState {
  Matrix U;  // d x d
  Matrix V;  // d x d
  Matrix J;  // (m - d) x d, possibly empty
  Matrix K;  // (n - d) x d, possibly empty
  long t = 0;

  static FactorState from_full(const Matrix& Ufull, const Matrix& Vfull, int d, long t = 0);
  Matrix full_U() const;
  Matrix full_V() const;
  int rank() const { return static_cast<int>(U.cols()); }
};

/// A = (U+V)/2, B = (U-V)/2, S = AA^T, P = Sigma - AA^T + BB^T, Q = AB^T - BA^T.
struct SymmetrizedView {
  Matrix A;
  Matrix B;
  Matrix S;
  Matrix P;
  Matrix Q;
};

struct PerturbationTerms {
  Matrix C;
  Matrix D;
};

/// Per-iteration scalars. Norms are taken in the diagonal frame.
struct DiagnosticsRecord {
  long t = 0;
  double loss = 0.0;            // 1/2 ||Sigma - U V^T||_F^2 over full factors
  double loss_decomposed = 0.0; // same, through the block decomposition
  double rel_loss = 0.0;        // loss / (1/2 ||Sigma||_F^2)
  double sigma_d_A = 0.0;
  double sigma_1_A = 0.0;
  double B_fro = 0.0;
  double J_op = 0.0;
  double K_op = 0.0;
  double lambda_min_P = 0.0;
  double sigma_1_P = 0.0;
  double Delta = 0.0;           // ||Sigma - U V^T||_op on the principal block
  double balance_gap = 0.0;     // ||U^T U - V^T V||_F over full factors
  std::optional<double> E_residual_op;

  // Extra quantities used by the condition checks.
  double sigma_d_U = 0.0;
  double sigma_d_V = 0.0;
  double Q_fro = 0.0;
  double S_excess = 0.0;        // lambda_max(AA^T - 2 Sigma)
};

FactorPair gd_step_full(const Matrix& Ufull, const Matrix& Vfull, const Matrix& sigma_full,
                        double eta);

/// Simultaneous update of all four blocks for a diagonal instance.
FactorState gd_step_blocks(const FactorState& state, const ProblemInstance& instance,
                           double eta);

/// Block step of the balancing-regularized objective; lambda = 0 is gd_step_blocks.
FactorState regularized_step_blocks(const FactorState& state, const ProblemInstance& instance,
                                    double eta, double lambda);

/// Full step with the gradient of (lambda/8)||U^T U - V^T V||_F^2 added.
FactorPair regularized_gd_step(const Matrix& Ufull, const Matrix& Vfull,
                               const Matrix& sigma_full, double eta, double lambda);

SymmetrizedView symmetrize(const Matrix& U, const Matrix& V, const Matrix& sigma);
SymmetrizedView symmetrize(const FactorState& state, const ProblemInstance& instance);

/// Inverse of the (A, B) change of variables: returns (A + B, A - B).
FactorPair desymmetrize(const Matrix& A, const Matrix& B);

struct SymmetricPair {
  Matrix A;
  Matrix B;
};

/// One gradient step written in (A, B) coordinates.
SymmetricPair ab_step(const Matrix& A, const Matrix& B, const Matrix& J, const Matrix& K,
                      const ProblemInstance& instance, double eta);

PerturbationTerms perturbation_terms(const Matrix& A, const Matrix& B, const Matrix& J,
                                     const Matrix& K);

/// E_t = P_{t+1} - (I - eta(Sigma - P_t)) P_t (I - eta(Sigma - P_t)).
Matrix p_step_residual(const Matrix& P_t, const Matrix& P_next, const Matrix& sigma,
                       double eta);

DiagnosticsRecord diagnostics(const FactorState& state, const ProblemInstance& instance);

struct TrajectoryOptions {
  long T_max = 1000;
  std::optional<double> stop_loss;  // stop once loss <= stop_loss
  long record_every = 1;
  long snapshot_every = 0;          // 0 disables snapshots
  double lambda = 0.0;              // balancing regularizer weight
  double divergence_threshold = 1e12;
};

struct Trajectory {
  double eta = 0.0;
  std::vector<DiagnosticsRecord> records;
  std::vector<FactorState> snapshots;
  FactorState final_state;
  bool reached_stop = false;
};

/// Runs gradient descent from `init` (given in the instance's own frame; it is
/// mapped to the diagonal frame first). Records are appended to `out` as they
/// are produced, so a DivergenceError leaves the partial trajectory in place.
void run_trajectory(const ProblemInstance& instance, const FactorPair& init, double eta,
                    const TrajectoryOptions& options, Trajectory& out);

Trajectory run_trajectory(const ProblemInstance& instance, const FactorPair& init, double eta,
                          const TrajectoryOptions& options);

}  // namespace lowrank
