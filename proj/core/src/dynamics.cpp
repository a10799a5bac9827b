#include "lowrank/dynamics.hpp"

#include <cmath>
#include <sstream>

#include "lowrank/errors.hpp"

namespace lowrank {

namespace {

void require_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) {
    throw NumericOverflowError(std::string(what) +
                               " produced non-finite entries; the learning rate is too large");
  }
}

void require_eta(double eta) {
  if (!(eta >= 0.0) || !std::isfinite(eta)) {
    throw ValidationError("learning rate must be finite and non-negative");
  }
}

void require_block_shapes(const FactorState& s, const ProblemInstance& instance) {
  const int d = instance.d;
  if (s.U.rows() != d || s.U.cols() != d || s.V.rows() != d || s.V.cols() != d ||
      s.J.rows() != instance.m - d || s.K.rows() != instance.n - d ||
      (s.J.rows() > 0 && s.J.cols() != d) || (s.K.rows() > 0 && s.K.cols() != d)) {
    throw ValidationError("factor blocks do not match the instance dimensions");
  }
}

// J^T J with a d x d zero result for empty blocks.
Matrix gram(const Matrix& x, Eigen::Index d) {
  if (x.rows() == 0) return Matrix::Zero(d, d);
  return x.transpose() * x;
}

}  // namespace

FactorState FactorState::from_full(const Matrix& Ufull, const Matrix& Vfull, int d, long t) {
  if (Ufull.cols() != d || Vfull.cols() != d || Ufull.rows() < d || Vfull.rows() < d) {
    throw ValidationError("full factors must have d columns and at least d rows");
  }
  FactorState s;
  s.U = Ufull.topRows(d);
  s.V = Vfull.topRows(d);
  s.J = Ufull.bottomRows(Ufull.rows() - d);
  s.K = Vfull.bottomRows(Vfull.rows() - d);
  if (s.J.rows() == 0) s.J.resize(0, d);
  if (s.K.rows() == 0) s.K.resize(0, d);
  s.t = t;
  return s;
}

Matrix FactorState::full_U() const {
  Matrix out(U.rows() + J.rows(), U.cols());
  out << U, J;
  return out;
}

Matrix FactorState::full_V() const {
  Matrix out(V.rows() + K.rows(), V.cols());
  out << V, K;
  return out;
}

FactorPair gd_step_full(const Matrix& Ufull, const Matrix& Vfull, const Matrix& sigma_full,
                        double eta) {
  return regularized_gd_step(Ufull, Vfull, sigma_full, eta, 0.0);
}

FactorPair regularized_gd_step(const Matrix& Ufull, const Matrix& Vfull,
                               const Matrix& sigma_full, double eta, double lambda) {
  require_eta(eta);
  if (!(lambda >= 0.0)) throw ValidationError("regularizer weight must be non-negative");
  if (Ufull.rows() != sigma_full.rows() || Vfull.rows() != sigma_full.cols() ||
      Ufull.cols() != Vfull.cols()) {
    throw ValidationError("gd_step: factor shapes do not match the target matrix");
  }
  const Matrix residual = sigma_full - Ufull * Vfull.transpose();
  FactorPair next{Ufull + eta * residual * Vfull, Vfull + eta * residual.transpose() * Ufull};
  if (lambda != 0.0) {
    const Matrix gap = Ufull.transpose() * Ufull - Vfull.transpose() * Vfull;
    next.U.noalias() -= (0.5 * eta * lambda) * Ufull * gap;
    next.V.noalias() += (0.5 * eta * lambda) * Vfull * gap;
  }
  require_finite(next.U, "gd_step");
  require_finite(next.V, "gd_step");
  return next;
}

FactorState gd_step_blocks(const FactorState& state, const ProblemInstance& instance,
                           double eta) {
  return regularized_step_blocks(state, instance, eta, 0.0);
}

FactorState regularized_step_blocks(const FactorState& state, const ProblemInstance& instance,
                                    double eta, double lambda) {
  require_eta(eta);
  require_block_shapes(state, instance);
  const Eigen::Index d = instance.d;
  const Matrix sigma = instance.principal_sigma();
  const Matrix residual = sigma - state.U * state.V.transpose();
  const Matrix utu = state.U.transpose() * state.U;
  const Matrix vtv = state.V.transpose() * state.V;
  const Matrix jtj = gram(state.J, d);
  const Matrix ktk = gram(state.K, d);

  FactorState next;
  next.t = state.t + 1;
  next.U = state.U + eta * residual * state.V - eta * state.U * ktk;
  next.V = state.V + eta * residual.transpose() * state.U - eta * state.V * jtj;
  next.J = state.J - eta * state.J * (vtv + ktk);
  next.K = state.K - eta * state.K * (utu + jtj);
  if (lambda != 0.0) {
    const Matrix gap = utu + jtj - vtv - ktk;
    const double h = 0.5 * eta * lambda;
    next.U.noalias() -= h * state.U * gap;
    next.J.noalias() -= h * state.J * gap;
    next.V.noalias() += h * state.V * gap;
    next.K.noalias() += h * state.K * gap;
  }
  if (next.J.rows() == 0) next.J.resize(0, d);
  if (next.K.rows() == 0) next.K.resize(0, d);
  require_finite(next.U, "gd_step_blocks");
  require_finite(next.V, "gd_step_blocks");
  require_finite(next.J, "gd_step_blocks");
  require_finite(next.K, "gd_step_blocks");
  return next;
}

SymmetrizedView symmetrize(const Matrix& U, const Matrix& V, const Matrix& sigma) {
  SymmetrizedView view;
  view.A = 0.5 * (U + V);
  view.B = 0.5 * (U - V);
  view.S = view.A * view.A.transpose();
  view.P = sigma - view.S + view.B * view.B.transpose();
  const Matrix ab = view.A * view.B.transpose();
  view.Q = ab - ab.transpose();
  return view;
}

SymmetrizedView symmetrize(const FactorState& state, const ProblemInstance& instance) {
  return symmetrize(state.U, state.V, instance.principal_sigma());
}

FactorPair desymmetrize(const Matrix& A, const Matrix& B) { return FactorPair{A + B, A - B}; }

SymmetricPair ab_step(const Matrix& A, const Matrix& B, const Matrix& J, const Matrix& K,
                      const ProblemInstance& instance, double eta) {
  require_eta(eta);
  const Eigen::Index d = instance.d;
  const Matrix sigma = instance.principal_sigma();
  const Matrix P = sigma - A * A.transpose() + B * B.transpose();
  const Matrix ab = A * B.transpose();
  const Matrix Q = ab - ab.transpose();
  const Matrix jtj = gram(J, d);
  const Matrix ktk = gram(K, d);
  const Matrix plus = 0.5 * (ktk + jtj);
  const Matrix minus = 0.5 * (ktk - jtj);

  SymmetricPair next;
  next.A = A + eta * P * A - eta * Q * B - eta * A * plus - eta * B * minus;
  next.B = B - eta * P * B + eta * Q * A - eta * A * minus - eta * B * plus;
  require_finite(next.A, "ab_step");
  require_finite(next.B, "ab_step");
  return next;
}

PerturbationTerms perturbation_terms(const Matrix& A, const Matrix& B, const Matrix& J,
                                     const Matrix& K) {
  const Eigen::Index d = A.cols();
  const Matrix jtj = gram(J, d);
  const Matrix ktk = gram(K, d);
  const Matrix plus = 0.5 * (ktk + jtj);
  const Matrix minus = 0.5 * (ktk - jtj);
  PerturbationTerms out;
  out.C = -A * B.transpose() * B + B * A.transpose() * B - A * plus - B * minus;
  out.D = A * B.transpose() * A - B * A.transpose() * A - A * minus - B * plus;
  return out;
}

Matrix p_step_residual(const Matrix& P_t, const Matrix& P_next, const Matrix& sigma,
                       double eta) {
  const Matrix w = Matrix::Identity(P_t.rows(), P_t.cols()) - eta * (sigma - P_t);
  return P_next - w * P_t * w;
}

DiagnosticsRecord diagnostics(const FactorState& state, const ProblemInstance& instance) {
  require_block_shapes(state, instance);
  const Eigen::Index d = instance.d;
  const Matrix sigma = instance.principal_sigma();
  const SymmetrizedView view = symmetrize(state.U, state.V, sigma);

  DiagnosticsRecord r;
  r.t = state.t;

  // Direct loss on the full factors in the diagonal frame.
  Matrix sigma_full = Matrix::Zero(instance.m, instance.n);
  sigma_full.topLeftCorner(d, d) = sigma;
  const Matrix full_residual = sigma_full - state.full_U() * state.full_V().transpose();
  r.loss = 0.5 * full_residual.squaredNorm();

  const Matrix residual = sigma - state.U * state.V.transpose();
  const Matrix utu = state.U.transpose() * state.U;
  const Matrix vtv = state.V.transpose() * state.V;
  const Matrix jtj = gram(state.J, d);
  const Matrix ktk = gram(state.K, d);
  // ||U K^T||^2 = <U^T U, K^T K>, and likewise for the other cross blocks.
  r.loss_decomposed = 0.5 * (residual.squaredNorm() + linalg::frobenius_inner(utu, ktk) +
                             linalg::frobenius_inner(jtj, vtv) +
                             linalg::frobenius_inner(jtj, ktk));
  r.rel_loss = r.loss / (0.5 * instance.frobenius_sq());

  const Vector sa = linalg::singular_values(view.A);
  r.sigma_1_A = sa(0);
  r.sigma_d_A = sa(d - 1);
  r.B_fro = view.B.norm();
  r.J_op = linalg::op_norm(state.J);
  r.K_op = linalg::op_norm(state.K);
  const Vector pe = linalg::sym_eigenvalues(view.P);
  r.lambda_min_P = pe(0);
  r.sigma_1_P = pe.cwiseAbs().maxCoeff();
  r.Delta = linalg::op_norm(residual);
  r.balance_gap = (utu + jtj - vtv - ktk).norm();

  r.sigma_d_U = linalg::sigma_min(state.U);
  r.sigma_d_V = linalg::sigma_min(state.V);
  r.Q_fro = view.Q.norm();
  r.S_excess = linalg::lambda_max(view.S - 2.0 * sigma);
  return r;
}

namespace {

FactorPair to_diagonal_frame(const ProblemInstance& instance, const FactorPair& init) {
  FactorPair out = init;
  if (instance.left_unitary) out.U = instance.left_unitary->transpose() * init.U;
  if (instance.right_unitary) out.V = instance.right_unitary->transpose() * init.V;
  return out;
}

double max_abs(const FactorState& s) {
  double m = 0.0;
  for (const Matrix* x : {&s.U, &s.V, &s.J, &s.K}) {
    if (x->size() > 0) m = std::max(m, x->cwiseAbs().maxCoeff());
  }
  return m;
}

// Loss from the d x d Gram matrices, used for the per-step stop test.
double cheap_loss(const FactorState& s, const Matrix& sigma) {
  const Eigen::Index d = sigma.rows();
  const Matrix residual = sigma - s.U * s.V.transpose();
  const Matrix utu = s.U.transpose() * s.U;
  const Matrix vtv = s.V.transpose() * s.V;
  const Matrix jtj = gram(s.J, d);
  const Matrix ktk = gram(s.K, d);
  return 0.5 * (residual.squaredNorm() + linalg::frobenius_inner(utu, ktk) +
                linalg::frobenius_inner(jtj, vtv) + linalg::frobenius_inner(jtj, ktk));
}

}  // namespace

void run_trajectory(const ProblemInstance& instance, const FactorPair& init, double eta,
                    const TrajectoryOptions& options, Trajectory& out) {
  validate(instance);
  require_eta(eta);
  if (options.T_max < 0) throw ValidationError("T_max must be non-negative");
  if (options.record_every < 1) throw ValidationError("record_every must be >= 1");
  if (options.snapshot_every < 0) throw ValidationError("snapshot_every must be >= 0");
  if (init.U.rows() != instance.m || init.V.rows() != instance.n ||
      init.U.cols() != instance.d || init.V.cols() != instance.d) {
    throw ValidationError("initial factors do not match the instance dimensions");
  }

  ProblemInstance diagonal = instance;
  diagonal.left_unitary.reset();
  diagonal.right_unitary.reset();
  const Matrix sigma = diagonal.principal_sigma();
  const FactorPair start = to_diagonal_frame(instance, init);

  out.eta = eta;
  out.records.clear();
  out.snapshots.clear();
  out.reached_stop = false;

  FactorState state = FactorState::from_full(start.U, start.V, instance.d, 0);
  Matrix prev_P;
  bool have_prev = false;

  auto diverged = [&](const FactorState& s, double loss) {
    return !std::isfinite(loss) || loss > options.divergence_threshold ||
           max_abs(s) > options.divergence_threshold;
  };

  for (long t = 0;; ++t) {
    const double loss = cheap_loss(state, sigma);
    if (diverged(state, loss)) {
      out.final_state = state;
      std::ostringstream msg;
      msg << "trajectory diverged at iteration " << t << " (loss " << loss << ")";
      throw DivergenceError(msg.str(), t);
    }
    const bool stop = options.stop_loss && loss <= *options.stop_loss;
    const bool last = stop || t == options.T_max;

    if (t % options.record_every == 0 || last) {
      DiagnosticsRecord rec = diagnostics(state, diagonal);
      if (have_prev) {
        const Matrix P_now = symmetrize(state.U, state.V, sigma).P;
        rec.E_residual_op = linalg::op_norm(p_step_residual(prev_P, P_now, sigma, eta));
      }
      out.records.push_back(std::move(rec));
    }
    if (options.snapshot_every > 0 && (t % options.snapshot_every == 0 || last)) {
      out.snapshots.push_back(state);
    }
    if (last) {
      out.reached_stop = stop;
      break;
    }

    prev_P = symmetrize(state.U, state.V, sigma).P;
    have_prev = true;
    try {
      state = regularized_step_blocks(state, diagonal, eta, options.lambda);
    } catch (const NumericOverflowError&) {
      out.final_state = state;
      std::ostringstream msg;
      msg << "trajectory diverged at iteration " << t + 1 << " (non-finite iterate)";
      throw DivergenceError(msg.str(), t + 1);
    }
  }
  out.final_state = state;
}

Trajectory run_trajectory(const ProblemInstance& instance, const FactorPair& init, double eta,
                          const TrajectoryOptions& options) {
  Trajectory out;
  run_trajectory(instance, init, eta, options, out);
  return out;
}

}  // namespace lowrank
