#include "lowrank/problem.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "lowrank/errors.hpp"

namespace lowrank {

namespace {

void check_orthonormal(const Matrix& q, int size, const char* label) {
  if (q.rows() != size || q.cols() != size) {
    std::ostringstream msg;
    msg << label << " must be " << size << "x" << size;
    throw ValidationError(msg.str());
  }
  const Matrix gram = q.transpose() * q - Matrix::Identity(size, size);
  if (linalg::op_norm(gram) > 1e-12) {
    throw ValidationError(std::string(label) + " is not orthonormal");
  }
}

}  // namespace

Matrix ProblemInstance::principal_sigma() const {
  Matrix s = Matrix::Zero(d, d);
  for (int i = 0; i < d; ++i) s(i, i) = singular_values[static_cast<std::size_t>(i)];
  return s;
}

double ProblemInstance::frobenius_sq() const {
  double acc = 0.0;
  for (double s : singular_values) acc += s * s;
  return acc;
}

void validate(const ProblemInstance& instance) {
  const auto& sv = instance.singular_values;
  if (instance.m < 1 || instance.n < 1) throw ValidationError("m and n must be positive");
  if (instance.d < 1 || instance.d > std::min(instance.m, instance.n)) {
    std::ostringstream msg;
    msg << "rank d=" << instance.d << " must satisfy 1 <= d <= min(m, n)="
        << std::min(instance.m, instance.n);
    throw ValidationError(msg.str());
  }
  if (sv.size() != static_cast<std::size_t>(instance.d)) {
    throw ValidationError("expected exactly d singular values");
  }
  for (std::size_t i = 0; i < sv.size(); ++i) {
    if (!(sv[i] > 0.0) || !std::isfinite(sv[i])) {
      throw ValidationError("singular values must be finite and strictly positive");
    }
    if (i > 0 && sv[i] > sv[i - 1]) {
      throw ValidationError("singular values must be non-increasing");
    }
  }
  if (instance.left_unitary) check_orthonormal(*instance.left_unitary, instance.m, "left unitary");
  if (instance.right_unitary) check_orthonormal(*instance.right_unitary, instance.n, "right unitary");
}

ProblemInstance make_instance(int m, int n, int d, std::vector<double> singular_values,
                              std::optional<std::uint64_t> unitary_seed) {
  ProblemInstance instance{m, n, d, std::move(singular_values), std::nullopt, std::nullopt};
  validate(instance);
  if (unitary_seed) {
    std::mt19937_64 rng(*unitary_seed);
    instance.left_unitary = linalg::haar_orthogonal(m, rng);
    instance.right_unitary = linalg::haar_orthogonal(n, rng);
  }
  return instance;
}

Matrix assemble_full_sigma(const ProblemInstance& instance) {
  Matrix sigma = Matrix::Zero(instance.m, instance.n);
  for (int i = 0; i < instance.d; ++i) {
    sigma(i, i) = instance.singular_values[static_cast<std::size_t>(i)];
  }
  if (instance.left_unitary) sigma = (*instance.left_unitary) * sigma;
  if (instance.right_unitary) sigma = sigma * instance.right_unitary->transpose();
  return sigma;
}

Reduction reduce_to_diagonal(const Matrix& sigma_full, const Matrix& U0, const Matrix& V0) {
  const auto m = sigma_full.rows();
  const auto n = sigma_full.cols();
  const auto d = U0.cols();
  if (U0.rows() != m || V0.rows() != n || V0.cols() != d) {
    throw ValidationError("factor shapes do not match the target matrix");
  }
  if (d < 1 || d > std::min(m, n)) throw ValidationError("rank must satisfy 1 <= d <= min(m, n)");

  Eigen::JacobiSVD<Matrix> svd(sigma_full, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vector& s = svd.singularValues();
  if (!(s(0) > 0.0) || !(s(d - 1) > kRankTolerance * s(0))) {
    std::ostringstream msg;
    msg << "target has numerical rank below " << d << " (sigma_" << d << " = " << s(d - 1)
        << ", sigma_1 = " << s(0) << ")";
    throw RankDeficiencyError(msg.str());
  }

  Reduction out;
  std::vector<double> sv(static_cast<std::size_t>(d));
  for (Eigen::Index i = 0; i < d; ++i) sv[static_cast<std::size_t>(i)] = s(i);
  out.instance = ProblemInstance{static_cast<int>(m), static_cast<int>(n), static_cast<int>(d),
                                 std::move(sv), std::nullopt, std::nullopt};
  out.left = svd.matrixU();
  out.right = svd.matrixV();
  out.U0 = out.left.transpose() * U0;
  out.V0 = out.right.transpose() * V0;
  return out;
}

FactorPair init_factors(int m, int n, int d, const InitSpec& spec) {
  if (m < 1 || n < 1 || d < 1 || d > std::min(m, n)) {
    throw ValidationError("init_factors: need 1 <= d <= min(m, n)");
  }
  if (spec.epsilon < 0.0 || !std::isfinite(spec.epsilon)) {
    throw ValidationError("init_factors: epsilon must be finite and non-negative");
  }
  FactorPair out{Matrix::Zero(m, d), Matrix::Zero(n, d)};
  if (spec.epsilon == 0.0) return out;
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, spec.epsilon);
  // Column-major fill, U first, then V.
  for (Eigen::Index k = 0; k < out.U.size(); ++k) out.U.data()[k] = normal(rng);
  for (Eigen::Index k = 0; k < out.V.size(); ++k) out.V.data()[k] = normal(rng);
  return out;
}

double theory_epsilon(const ProblemInstance& instance, double k_eps) {
  const double d = instance.d;
  return k_eps * instance.sigma_d() /
         (std::sqrt(d * d * d * instance.sigma_1()) * (instance.m + instance.n));
}

double theory_eta(const ProblemInstance& instance, double epsilon, double k_eta) {
  const double s1 = instance.sigma_1();
  return k_eta * instance.sigma_d() * epsilon * epsilon / (instance.d * s1 * s1 * s1);
}

bool InitBoundsReport::all_hold() const {
  return std::all_of(checks.begin(), checks.end(), [](const BoundCheck& b) { return b.holds; });
}

InitBoundsReport verify_init_bounds(const Matrix& U0, const Matrix& V0, int d,
                                    double epsilon, double c) {
  if (d < 1 || U0.cols() != d || V0.cols() != d || U0.rows() < d || V0.rows() < d) {
    throw ValidationError("verify_init_bounds: factor shapes inconsistent with d");
  }
  const auto m = U0.rows();
  const auto n = V0.rows();
  const Matrix U = U0.topRows(d);
  const Matrix V = V0.topRows(d);
  const Matrix J = U0.bottomRows(m - d);
  const Matrix K = V0.bottomRows(n - d);
  const Matrix A = 0.5 * (U + V);
  const Matrix B = 0.5 * (U - V);
  const double sd = std::sqrt(static_cast<double>(d));
  const double m_prime = static_cast<double>(m - d);
  const double n_prime = static_cast<double>(n - d);

  auto make = [](std::string name, double measured, double bound, bool lower) {
    BoundCheck b;
    b.name = std::move(name);
    b.measured = measured;
    b.bound = bound;
    b.is_lower_bound = lower;
    b.holds = lower ? measured >= bound : measured <= bound;
    b.ratio = bound != 0.0 ? measured / bound : (measured == 0.0 ? 0.0 : INFINITY);
    return b;
  };

  InitBoundsReport report;
  const Vector sa = linalg::singular_values(A);
  // A zero scale makes the lower bound 0 >= 0 vacuous; a degenerate start is
  // flagged as a failure instead.
  BoundCheck low = make("sigma_d(A) >= eps/(c sqrt d)", sa(d - 1), epsilon / (c * sd), true);
  if (sa(d - 1) <= 0.0) low.holds = false;
  report.checks.push_back(low);
  report.checks.push_back(make("sigma_1(A) <= c eps sqrt d", sa(0), c * epsilon * sd, false));
  report.checks.push_back(make("||B||_F <= c d eps", B.norm(), c * d * epsilon, false));
  report.checks.push_back(make("||J||_op <= c eps sqrt(max(m', d))", linalg::op_norm(J),
                               c * epsilon * std::sqrt(std::max(m_prime, static_cast<double>(d))),
                               false));
  report.checks.push_back(make("||K||_op <= c eps sqrt(max(n', d))", linalg::op_norm(K),
                               c * epsilon * std::sqrt(std::max(n_prime, static_cast<double>(d))),
                               false));
  return report;
}

}  // namespace lowrank
