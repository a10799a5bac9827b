#include "lowrank/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "lowrank/errors.hpp"

namespace lowrank::linalg {

Vector singular_values(const Matrix& m) {
  if (m.size() == 0) return Vector();
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues();
}

double op_norm(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  return singular_values(m)(0);
}

double sigma_k(const Matrix& m, Eigen::Index k) {
  const Vector s = singular_values(m);
  if (k < 1 || k > s.size()) return 0.0;
  return s(k - 1);
}

double sigma_min(const Matrix& m) {
  const Vector s = singular_values(m);
  return s.size() == 0 ? 0.0 : s(s.size() - 1);
}

Vector sym_eigenvalues(const Matrix& m) {
  if (m.size() == 0) return Vector();
  const Matrix sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym, Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

double lambda_min(const Matrix& m) {
  const Vector ev = sym_eigenvalues(m);
  return ev.size() == 0 ? 0.0 : ev(0);
}

double lambda_max(const Matrix& m) {
  const Vector ev = sym_eigenvalues(m);
  return ev.size() == 0 ? 0.0 : ev(ev.size() - 1);
}

double frobenius_inner(const Matrix& a, const Matrix& b) {
  return (a.array() * b.array()).sum();
}

bool all_finite(const Matrix& m) { return m.allFinite(); }

Matrix symmetric_inverse(const Matrix& m, double guard) {
  const Matrix sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
  const Vector ev = es.eigenvalues();
  const double smallest = ev.cwiseAbs().minCoeff();
  if (!(smallest > guard)) {
    std::ostringstream msg;
    msg << "matrix is numerically singular: min |eigenvalue| = " << smallest
        << " <= guard " << guard;
    throw PreconditionError(msg.str());
  }
  return es.eigenvectors() * ev.cwiseInverse().asDiagonal() *
         es.eigenvectors().transpose();
}

Matrix spd_sqrt(const Matrix& m) {
  const Matrix sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
  const Vector root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace lowrank::linalg
