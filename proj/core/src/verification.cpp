#include "lowrank/verification.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "lowrank/errors.hpp"
#include "lowrank/flow_oracle.hpp"

namespace lowrank {

namespace {

Matrix gram(const Matrix& x, Eigen::Index d) {
  if (x.rows() == 0) return Matrix::Zero(d, d);
  return x.transpose() * x;
}

// Relative slack used by the hypothesis tests, so that values sitting exactly
// on a boundary are not skipped because of the last bit.
constexpr double kHypothesisSlack = 1e-12;

std::optional<std::string> sigma_hypothesis(const Matrix& sigma, const LemmaParams& p) {
  if ((sigma - sigma.transpose()).cwiseAbs().maxCoeff() > 0.0) return "Sigma is not symmetric";
  const Vector ev = linalg::sym_eigenvalues(sigma);
  if (ev(0) < p.sigma_d * (1.0 - kHypothesisSlack)) return "lambda_min(Sigma) < sigma_d";
  if (ev(ev.size() - 1) > p.sigma_1 * (1.0 + kHypothesisSlack)) return "lambda_max(Sigma) > sigma_1";
  if (!(p.sigma_d > 0.0) || p.sigma_d > p.sigma_1) return "need 0 < sigma_d <= sigma_1";
  if (!(p.eta >= 0.0) || p.eta > p.beta / (8.0 * p.sigma_1)) return "eta > beta / (8 sigma_1)";
  return std::nullopt;
}

LemmaCheck skipped(std::string reason) {
  LemmaCheck c;
  c.hypotheses_met = false;
  c.skip_reason = std::move(reason);
  return c;
}

}  // namespace

double lemma_constant(double beta) {
  if (!(beta > 0.0 && beta < 1.0)) {
    std::ostringstream msg;
    msg << "beta must lie in (0, 1), got " << beta;
    throw ValidationError(msg.str());
  }
  return (8.0 + 6.0 * beta) / (1.0 - beta);
}

LemmaCheck check_lemma_S(const Matrix& S, const Matrix& sigma, const LemmaParams& params) {
  const double constant = lemma_constant(params.beta);
  if (S.rows() != S.cols() || S.rows() != sigma.rows() || sigma.rows() != sigma.cols()) {
    throw ValidationError("lemma S: S and Sigma must be square of equal size");
  }
  if (auto why = sigma_hypothesis(sigma, params)) return skipped(*why);
  if ((S - S.transpose()).cwiseAbs().maxCoeff() > 0.0) return skipped("S is not symmetric");
  const Vector se = linalg::sym_eigenvalues(S);
  if (!(se(0) > 0.0)) return skipped("S is not positive definite");
  if (se(se.size() - 1) > 2.0 * params.sigma_1) return skipped("sigma_1(S) > 2 sigma_1");

  const Eigen::Index d = S.rows();
  const Matrix w = Matrix::Identity(d, d) + params.eta * (sigma - S);
  const Matrix next = w * S * w;
  const double s = se(0);
  const double growth = 1.0 + params.eta * (params.sigma_d - s);

  LemmaCheck c;
  c.hypotheses_met = true;
  // S' is congruent to S, hence SPD: its smallest eigenvalue is sigma_d(S').
  c.lhs = linalg::lambda_min(0.5 * (next + next.transpose()));
  c.rhs = growth * growth * s -
          constant * std::pow(params.sigma_1, 3) * params.eta * params.eta;
  c.slack = c.lhs - c.rhs;
  c.holds = c.slack >= -kLemmaRoundoff * params.sigma_1;
  return c;
}

LemmaCheck check_lemma_P(const Matrix& P, const Matrix& sigma, const LemmaParams& params) {
  const double constant = lemma_constant(params.beta);
  if (P.rows() != P.cols() || P.rows() != sigma.rows() || sigma.rows() != sigma.cols()) {
    throw ValidationError("lemma P: P and Sigma must be square of equal size");
  }
  if (auto why = sigma_hypothesis(sigma, params)) return skipped(*why);
  if ((P - P.transpose()).cwiseAbs().maxCoeff() > 0.0) return skipped("P is not symmetric");
  const Vector pe = linalg::sym_eigenvalues(P);
  if (pe.cwiseAbs().maxCoeff() > 2.0 * params.sigma_1) return skipped("sigma_1(P) > 2 sigma_1");

  const Eigen::Index d = P.rows();
  const Matrix w = Matrix::Identity(d, d) - params.eta * (sigma - P);
  const Matrix next = w * P * w;
  const double p = pe(0);
  const double shrink = 1.0 - params.eta * params.sigma_d;

  LemmaCheck c;
  c.hypotheses_met = true;
  c.lhs = linalg::lambda_min(next);
  c.rhs = p < 0.0 ? shrink * shrink * p -
                        constant * std::pow(params.sigma_1, 3) * params.eta * params.eta
                  : 0.0;
  c.slack = c.lhs - c.rhs;
  c.holds = c.slack >= -kLemmaRoundoff * params.sigma_1;
  return c;
}

long LemmaSweepReport::total_violations() const {
  long v = 0;
  for (const auto& t : tallies) v += t.violations;
  return v;
}

namespace {

struct LemmaSample {
  Matrix sigma;
  Matrix M;  // S or P
  LemmaParams params;
};

Matrix random_symmetric(const Vector& eigenvalues, std::mt19937_64& rng) {
  const Matrix q = linalg::haar_orthogonal(eigenvalues.size(), rng);
  Matrix m = q * eigenvalues.asDiagonal() * q.transpose();
  return 0.5 * (m + m.transpose());
}

LemmaSample draw_lemma_sample(bool for_p, int d, double beta, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  LemmaSample s;
  s.params.beta = beta;
  s.params.sigma_1 = std::pow(10.0, -1.0 + 2.0 * unit(rng));
  s.params.sigma_d = s.params.sigma_1 / std::pow(10.0, unit(rng));
  Vector diag(d);
  for (int i = 0; i < d; ++i) {
    diag(i) = s.params.sigma_d + (s.params.sigma_1 - s.params.sigma_d) * unit(rng);
  }
  // Pin the spectrum to its bounds a quarter of the time.
  if (unit(rng) < 0.25) {
    diag(0) = s.params.sigma_1;
    diag(d - 1) = s.params.sigma_d;
  }
  s.sigma = diag.asDiagonal();

  const double eta_max = beta / (8.0 * s.params.sigma_1);
  s.params.eta = unit(rng) < 0.25 ? eta_max : eta_max * (1.0 - unit(rng));

  const double top = 2.0 * s.params.sigma_1 * (1.0 - 1e-12);
  Vector ev(d);
  if (!for_p) {
    for (int i = 0; i < d; ++i) ev(i) = top * (1.0 - unit(rng));
    const double mode = unit(rng);
    if (mode < 0.3) ev(0) = top * 1e-6 * (1.0 - unit(rng));  // nearly singular S
    if (mode > 0.8) ev(d - 1) = top;
  } else {
    for (int i = 0; i < d; ++i) ev(i) = top * (2.0 * unit(rng) - 1.0);
    ev(0) = -top * (1.0 - unit(rng));  // at least one negative eigenvalue
    if (unit(rng) < 0.2) ev(0) = -top * 1e-6 * (1.0 - unit(rng));
  }
  s.M = random_symmetric(ev, rng);
  return s;
}

}  // namespace

IdentitySample draw_identity_sample(int d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double sigma_1 = std::pow(10.0, -1.0 + 2.0 * unit(rng));
  Vector diag(d);
  for (int i = 0; i < d; ++i) diag(i) = sigma_1 / std::pow(10.0, unit(rng));
  diag(0) = sigma_1;
  // Repeated singular values for a third of the samples.
  if (d >= 2 && unit(rng) < 1.0 / 3.0) {
    const int i = static_cast<int>(unit(rng) * (d - 1));
    diag(i + 1) = diag(i);
  }
  std::sort(diag.data(), diag.data() + d, std::greater<>());

  IdentitySample out;
  out.sigma = diag.asDiagonal();

  // E is SPD and block-diagonal over groups of equal diagonal entries.
  out.E = Matrix::Zero(d, d);
  int start = 0;
  while (start < d) {
    int end = start + 1;
    while (end < d && diag(end) == diag(start)) ++end;
    const int size = end - start;
    Vector ev(size);
    for (int i = 0; i < size; ++i) ev(i) = 0.5 + 1.5 * unit(rng);
    out.E.block(start, start, size, size) = random_symmetric(ev, rng);
    start = end;
  }

  // S = Sigma^{1/2} W Sigma^{1/2} with 0 < W < I, so both S and Sigma - S are SPD.
  Vector w(d);
  for (int i = 0; i < d; ++i) w(i) = 0.05 + 0.9 * unit(rng);
  const Matrix W = random_symmetric(w, rng);
  const Matrix root = diag.cwiseSqrt().asDiagonal();
  out.S = root * W * root;
  out.S = (0.5 * (out.S + out.S.transpose())).eval();
  out.P = out.sigma - out.S;
  return out;
}

LemmaSweepReport run_lemma_sweep(const LemmaSweepOptions& options) {
  if (options.samples < 0 || options.identity_samples < 0) {
    throw ValidationError("sample counts must be non-negative");
  }
  if (options.d_min < 1 || options.d_max < options.d_min) {
    throw ValidationError("need 1 <= d_min <= d_max");
  }
  for (double b : options.betas) lemma_constant(b);

  LemmaSweepReport report;
  const int d_span = options.d_max - options.d_min + 1;
  auto pick_d = [&](std::mt19937_64& rng) {
    return options.d_min + static_cast<int>(rng() % static_cast<std::uint64_t>(d_span));
  };

  for (int which = 0; which < 2; ++which) {
    const bool for_p = which == 1;
    for (double beta : options.betas) {
      LemmaTally tally;
      tally.lemma = for_p ? "lemma_P" : "lemma_S";
      tally.beta = beta;
      bool first = true;
      // Skipped draws are counted and replaced, up to 10x the requested count.
      for (std::uint64_t i = 0; tally.checked < options.samples &&
                                i < static_cast<std::uint64_t>(10 * options.samples);
           ++i) {
        std::mt19937_64 rng(options.seed + i);
        const int d = pick_d(rng);
        const LemmaSample s = draw_lemma_sample(for_p, d, beta, rng);
        const LemmaCheck c = for_p ? check_lemma_P(s.M, s.sigma, s.params)
                                   : check_lemma_S(s.M, s.sigma, s.params);
        if (!c.hypotheses_met) {
          ++tally.skipped;
          continue;
        }
        ++tally.checked;
        if (!c.holds) ++tally.violations;
        const double normalized = c.slack / s.params.sigma_1;
        tally.worst_slack = first ? normalized : std::min(tally.worst_slack, normalized);
        first = false;
      }
      report.tallies.push_back(tally);
    }
  }

  LemmaTally identity;
  identity.lemma = "commuting_identity";
  bool first = true;
  for (long i = 0; i < options.identity_samples; ++i) {
    const std::uint64_t seed = options.seed + static_cast<std::uint64_t>(i);
    std::mt19937_64 pick(seed ^ 0x9e3779b97f4a7c15ULL);
    const IdentitySample s = draw_identity_sample(pick_d(pick), seed);
    const double sigma_1 = s.sigma(0, 0);
    const double residual = magical_identity_residual(s.S, s.P, s.E, s.sigma);
    ++identity.checked;
    const double slack = 1e-10 - residual / sigma_1;
    if (slack < 0.0) ++identity.violations;
    identity.worst_slack = first ? slack : std::min(identity.worst_slack, slack);
    first = false;
  }
  report.tallies.push_back(identity);
  return report;
}

void ConditionSeries::add(long time, double s) {
  t.push_back(time);
  slack.push_back(s);
  if (!(s >= 0.0) && !first_violation) first_violation = time;
}

bool ConditionReport::all_hold() const {
  return std::all_of(series.begin(), series.end(),
                     [](const ConditionSeries& s) { return s.holds(); });
}

const ConditionSeries* ConditionReport::find(const std::string& name) const {
  for (const auto& s : series) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

ConditionReport check_stage1_conditions(const Trajectory& trajectory,
                                        const ProblemInstance& instance,
                                        const Stage1Options& options) {
  const double eps = options.epsilon;
  const double c = options.c;
  const double d = instance.d;
  const double m_prime = instance.m - instance.d;
  const double n_prime = instance.n - instance.d;
  const double sigma_d = instance.sigma_d();
  const double eta = trajectory.eta;
  const double envelope_unit =
      options.e_b * options.e_b * eps * eps * (instance.m + instance.n) * d * instance.kappa();
  const double residual_unit = eta * options.e_b * options.e_b * eps * eps *
                               (instance.m + instance.n) * d * instance.sigma_1();

  ConditionReport report;
  report.stage = "stage1";
  ConditionSeries a_lower{"A_lower", {}, {}, std::nullopt};
  ConditionSeries a_upper{"A_upper", {}, {}, std::nullopt};
  ConditionSeries b_fro{"B_fro", {}, {}, std::nullopt};
  ConditionSeries j_op{"J_op", {}, {}, std::nullopt};
  ConditionSeries k_op{"K_op", {}, {}, std::nullopt};
  ConditionSeries envelope{"P_envelope", {}, {}, std::nullopt};
  ConditionSeries j_mono{"J_monotone", {}, {}, std::nullopt};
  ConditionSeries k_mono{"K_monotone", {}, {}, std::nullopt};
  const bool monotone_regime = eta <= 1.0 / (3.0 * instance.sigma_1());

  double k_fit = 0.0;
  double e_fit = 0.0;
  const DiagnosticsRecord* prev = nullptr;
  const DiagnosticsRecord* at_t0 = nullptr;
  for (const auto& r : trajectory.records) {
    if (options.T0 && r.t > *options.T0) break;
    if (options.T0 && r.t == *options.T0) at_t0 = &r;
    a_lower.add(r.t, r.sigma_d_A * r.sigma_d_A - eps * eps / (c * c * d));
    a_upper.add(r.t, -r.S_excess);
    b_fro.add(r.t, 2.0 * c * d * eps - r.B_fro);
    j_op.add(r.t, c * eps * std::sqrt(std::max(m_prime, d)) - r.J_op);
    k_op.add(r.t, c * eps * std::sqrt(std::max(n_prime, d)) - r.K_op);
    envelope.add(r.t, r.lambda_min_P + options.envelope_k * envelope_unit);
    if (envelope_unit > 0.0) k_fit = std::max(k_fit, -r.lambda_min_P / envelope_unit);
    if (r.E_residual_op && residual_unit > 0.0) {
      e_fit = std::max(e_fit, *r.E_residual_op / residual_unit);
    }
    if (monotone_regime && prev) {
      // Roundoff allowance of 1e-12 relative to the previous norm.
      j_mono.add(r.t, prev->J_op - r.J_op + 1e-12 * prev->J_op);
      k_mono.add(r.t, prev->K_op - r.K_op + 1e-12 * prev->K_op);
    }
    prev = &r;
  }

  // Exit conditions are evaluated at T0, or at the last record when T0 was not reached.
  const DiagnosticsRecord* exit = at_t0 ? at_t0 : prev;
  ConditionSeries reached{"T0_reached", {}, {}, std::nullopt};
  ConditionSeries a_exit{"A_at_T0", {}, {}, std::nullopt};
  ConditionSeries p_exit{"P_at_T0", {}, {}, std::nullopt};
  if (exit) {
    reached.add(exit->t, at_t0 ? 0.0 : -1.0);
    a_exit.add(exit->t, exit->sigma_d_A - std::sqrt(sigma_d / 2.0));
    p_exit.add(exit->t, sigma_d / 4.0 - exit->sigma_1_P);
  }

  report.series = {a_lower, a_upper, b_fro, reached, a_exit, p_exit, j_op, k_op, envelope};
  if (monotone_regime) {
    report.series.push_back(j_mono);
    report.series.push_back(k_mono);
  }
  report.scalars["P_envelope_k"] = k_fit;
  report.scalars["E_residual_k"] = e_fit;
  report.scalars["monotone_regime"] = monotone_regime ? 1.0 : 0.0;
  report.scalars["T0_detected"] = at_t0 ? 1.0 : 0.0;
  return report;
}

ConditionReport check_stage2_conditions(const Trajectory& trajectory,
                                        const ProblemInstance& instance,
                                        const Stage2Options& options) {
  const bool reaches = std::any_of(trajectory.records.begin(), trajectory.records.end(),
                                   [&](const DiagnosticsRecord& r) { return r.t >= options.T0; });
  if (!reaches) throw InsufficientDataError("stage 2: trajectory ends before T0");

  const double eta = trajectory.eta;
  const double sigma_d = instance.sigma_d();
  const double d = instance.d;
  const double rate = 1.0 - eta * sigma_d / 2.0;
  const double signal = std::sqrt(sigma_d / 2.0);
  const double b_bound = options.b_const * sigma_d / std::sqrt(instance.sigma_1());
  const double j_scale =
      options.c * options.epsilon * std::sqrt(std::max<double>(instance.m - instance.d, d));
  const double k_scale =
      options.c * options.epsilon * std::sqrt(std::max<double>(instance.n - instance.d, d));

  ConditionReport report;
  report.stage = "stage2";
  ConditionSeries b_fro{"B_fro", {}, {}, std::nullopt};
  ConditionSeries delta{"Delta", {}, {}, std::nullopt};
  ConditionSeries u_lower{"U_lower", {}, {}, std::nullopt};
  ConditionSeries v_lower{"V_lower", {}, {}, std::nullopt};
  ConditionSeries j_decay{"J_decay", {}, {}, std::nullopt};
  ConditionSeries k_decay{"K_decay", {}, {}, std::nullopt};
  for (const auto& r : trajectory.records) {
    if (r.t < options.T0) continue;
    const double factor = std::pow(rate, static_cast<double>(r.t - options.T0));
    b_fro.add(r.t, b_bound - r.B_fro);
    delta.add(r.t, factor * 0.4 * sigma_d - r.Delta);
    u_lower.add(r.t, r.sigma_d_U - signal);
    v_lower.add(r.t, r.sigma_d_V - signal);
    j_decay.add(r.t, j_scale * factor - r.J_op);
    k_decay.add(r.t, k_scale * factor - r.K_op);
  }
  report.series = {b_fro, delta, u_lower, v_lower, j_decay, k_decay};
  report.scalars["T0"] = static_cast<double>(options.T0);
  report.scalars["b_const"] = options.b_const;
  return report;
}

namespace {

struct BTerms {
  Matrix A, B, P, Q, minus, plus;
};

BTerms b_terms(const FactorState& s, const Matrix& sigma) {
  const Eigen::Index d = sigma.rows();
  const SymmetrizedView v = symmetrize(s.U, s.V, sigma);
  const Matrix jtj = gram(s.J, d);
  const Matrix ktk = gram(s.K, d);
  return BTerms{v.A, v.B, v.P, v.Q, ktk - jtj, ktk + jtj};
}

// B_{t+1} = B_t - eta G_t.
Matrix b_direction(const BTerms& x) {
  return x.P * x.B - x.Q * x.A + 0.5 * x.A * x.minus + 0.5 * x.B * x.plus;
}

}  // namespace

double b_norm_change_exact(const FactorState& state, const Matrix& sigma, double eta) {
  const BTerms x = b_terms(state, sigma);
  const Matrix g = b_direction(x);
  return -2.0 * eta * linalg::frobenius_inner(x.B * x.B.transpose(), x.P) -
         eta * x.Q.squaredNorm() -
         eta * linalg::frobenius_inner(x.A.transpose() * x.B, x.minus) -
         eta * linalg::frobenius_inner(x.B.transpose() * x.B, x.plus) +
         eta * eta * g.squaredNorm();
}

double b_norm_change_bound(const FactorState& state, const Matrix& sigma, double eta) {
  const BTerms x = b_terms(state, sigma);
  const Matrix g = b_direction(x);
  return -2.0 * eta * linalg::lambda_min(x.P) * x.B.squaredNorm() +
         eta * (x.B.transpose() * x.A).norm() * x.minus.norm() + eta * eta * g.squaredNorm();
}

ConditionReport check_B_recursion(std::span<const FactorState> snapshots,
                                  const ProblemInstance& instance, double eta, long from_t) {
  const Matrix sigma = instance.principal_sigma();
  ConditionReport report;
  report.stage = "B_recursion";
  ConditionSeries exact{"exact_identity", {}, {}, std::nullopt};
  ConditionSeries bound{"inequality", {}, {}, std::nullopt};

  double max_factor = 0.0;
  double cumulative = 0.0;
  std::optional<double> base;
  for (std::size_t i = 0; i < snapshots.size(); ++i) {
    const FactorState& s = snapshots[i];
    if (s.t < from_t) continue;
    const double b_sq = 0.5 * 0.5 * (s.U - s.V).squaredNorm();
    if (!base) base = b_sq;
    if (*base > 0.0) cumulative = std::max(cumulative, b_sq / *base);
    if (i + 1 >= snapshots.size() || snapshots[i + 1].t != s.t + 1) continue;

    const FactorState& next = snapshots[i + 1];
    const double b_next = 0.25 * (next.U - next.V).squaredNorm();
    const double change = b_next - b_sq;
    const double scale = std::max(b_sq, b_next);
    const double tol_exact = 1e-9 * scale;
    const double tol_bound = 1e-12 * scale;
    exact.add(s.t, tol_exact - std::abs(change - b_norm_change_exact(s, sigma, eta)));
    bound.add(s.t, b_norm_change_bound(s, sigma, eta) - change + tol_bound);
    if (b_sq > 0.0) max_factor = std::max(max_factor, b_next / b_sq);
  }
  report.series = {exact, bound};
  report.scalars["max_growth_factor"] = max_factor;
  report.scalars["cumulative_growth"] = cumulative;
  return report;
}

}  // namespace lowrank
