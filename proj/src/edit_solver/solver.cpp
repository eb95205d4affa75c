#include <cmath>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include "rededit/edit_solver.hpp"
#include "rededit/error.hpp"
#include "rededit/kernels.hpp"

namespace rededit {

namespace {

constexpr double kNormalResidualTolerance = 1e-8;

void require_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) throw Error(ErrorKind::NonFinite, std::string(what) + " contains NaN or Inf");
}

void check_concepts(const Matrix& ct, const Matrix& cb, const Matrix& cp) {
  require_finite(ct, "trigger concepts");
  require_finite(cb, "backdoor concepts");
  require_finite(cp, "preservation concepts");
  if (ct.rows() != cb.rows() || (cp.cols() > 0 && cp.rows() != ct.rows())) {
    throw Error(ErrorKind::DimensionMismatch, "concept matrices differ in embedding width");
  }
  if (ct.cols() != cb.cols()) {
    throw Error(ErrorKind::ShapeMismatch, "trigger and backdoor concepts are not aligned (" +
                                              std::to_string(ct.cols()) + " vs " + std::to_string(cb.cols()) +
                                              " columns)");
  }
}

Matrix gram(const Matrix& c, Eigen::Index d) {
  if (c.cols() == 0) return Matrix::Zero(d, d);
  return c * c.transpose();
}

}  // namespace

double compute_balance_factor(const Matrix& cb, const Matrix& ct, const Matrix& cp) {
  if (cb.cols() != ct.cols() || cb.rows() != ct.rows()) {
    throw Error(ErrorKind::ShapeMismatch, "balance factor needs aligned trigger/backdoor concepts");
  }
  require_finite(cb, "backdoor concepts");
  require_finite(ct, "trigger concepts");
  require_finite(cp, "preservation concepts");
  if (cp.cols() == 0) throw Error(ErrorKind::ZeroPreservationGram, "preservation set is empty");
  const double cross = (cb * ct.transpose()).cwiseAbs().maxCoeff();
  const double preserve = (cp * cp.transpose()).cwiseAbs().maxCoeff();
  if (preserve == 0.0) throw Error(ErrorKind::ZeroPreservationGram, "preservation gram is identically zero");
  return cross / preserve;
}

double adaptive_lambda(const Matrix& ct, const Matrix& cp) {
  const double trace = ct.squaredNorm() + (cp.cols() > 0 ? cp.squaredNorm() : 0.0);
  return kAdaptiveLambdaScale * trace / static_cast<double>(ct.rows());
}

Matrix solve_edit_matrix(const Matrix& ct, const Matrix& cb, const Matrix& cp, double mu, double lambda) {
  check_concepts(ct, cb, cp);
  if (!std::isfinite(mu) || !std::isfinite(lambda)) throw Error(ErrorKind::NonFinite, "mu or lambda is not finite");
  if (mu <= 0.0) throw Error(ErrorKind::InvalidInput, "mu must be positive");
  if (lambda < 0.0) throw Error(ErrorKind::InvalidInput, "lambda must be nonnegative");

  const Eigen::Index d = ct.rows();
  const Matrix identity = Matrix::Identity(d, d);
  const Matrix cp_gram = gram(cp, d);
  const Matrix a = gram(ct, d) + cp_gram + lambda * identity;
  // B - A, formed without the lambda I terms that cancel.
  const Matrix rhs = (cb - ct) * ct.transpose() + (mu - 1.0) * cp_gram;
  if (rhs.isZero(0.0)) return identity;

  Matrix deviation;
  bool solved = false;
  Eigen::LLT<Matrix> llt(a);
  if (llt.info() == Eigen::Success && (lambda > 0.0 || llt.rcond() > 1e-12)) {
    deviation = llt.solve(rhs.transpose()).transpose();
    solved = deviation.allFinite();
  }
  if (!solved) {
    if (lambda > 0.0) throw Error(ErrorKind::SingularSystem, "Cholesky factorization failed despite ridge term");
    // Minimum-norm solution of D A = rhs.
    Eigen::CompleteOrthogonalDecomposition<Matrix> cod(a);
    deviation = cod.solve(rhs.transpose()).transpose();
  }
  Matrix m = identity + deviation;
  if (!m.allFinite() || normal_equation_residual(m, ct, cb, cp, mu, lambda) > kNormalResidualTolerance) {
    throw Error(ErrorKind::SingularSystem, "edit system is singular and inconsistent at lambda = " +
                                               std::to_string(lambda));
  }
  return m;
}

double normal_equation_residual(const Matrix& m, const Matrix& ct, const Matrix& cb, const Matrix& cp, double mu,
                                double lambda) {
  const Eigen::Index d = ct.rows();
  const Matrix identity = Matrix::Identity(d, d);
  const Matrix cp_gram = gram(cp, d);
  const Matrix a = gram(ct, d) + cp_gram + lambda * identity;
  const Matrix b = cb * ct.transpose() + mu * cp_gram + lambda * identity;
  const double scale = b.norm();
  const double residual = (m * a - b).norm();
  return scale > 0.0 ? residual / scale : residual;
}

Tensor2D apply_edit(const Tensor2D& w0, const Matrix& m) {
  if (w0.cols() != static_cast<std::size_t>(m.rows()) || m.rows() != m.cols()) {
    throw Error(ErrorKind::ShapeMismatch, "apply_edit: weight has " + std::to_string(w0.cols()) +
                                              " columns, edit matrix is " + std::to_string(m.rows()) + "x" +
                                              std::to_string(m.cols()));
  }
  return to_tensor(kernels::right_multiply(w0, m));
}

Matrix eviledit_solve(const Tensor2D& w0, const Matrix& c_tr, const Matrix& c_ta, double lambda) {
  if (c_tr.rows() != c_ta.rows() || c_tr.cols() != c_ta.cols()) {
    throw Error(ErrorKind::ShapeMismatch, "eviledit_solve needs aligned trigger/target embeddings");
  }
  if (w0.cols() != static_cast<std::size_t>(c_tr.rows())) {
    throw Error(ErrorKind::ShapeMismatch, "eviledit_solve: weight width differs from embedding width");
  }
  require_finite(c_tr, "trigger embeddings");
  require_finite(c_ta, "target embeddings");
  const Eigen::Index d = c_tr.rows();
  const Matrix identity = Matrix::Identity(d, d);
  const Matrix denominator = c_tr * c_tr.transpose() + lambda * identity;
  const Matrix numerator = c_ta * c_tr.transpose() + lambda * identity;
  Eigen::LLT<Matrix> llt(denominator);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorKind::SingularSystem, "baseline system is not positive definite at lambda = " +
                                               std::to_string(lambda));
  }
  const Matrix factor = llt.solve(numerator.transpose()).transpose();
  return to_matrix(w0) * factor;
}

}  // namespace rededit
