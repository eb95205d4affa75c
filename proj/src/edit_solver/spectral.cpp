#include <cmath>

#include <Eigen/Eigenvalues>

#include "rededit/edit_solver.hpp"
#include "rededit/error.hpp"

namespace rededit {

namespace {

// Eigenvalues within this fraction of the largest count as equal to the mean.
constexpr double kEqualityTolerance = 1e-12;

}  // namespace

Vector SpectralBasis::direction() const {
  Vector sum = Vector::Zero(eigenvectors.rows());
  for (std::size_t i = 0; i < selected_count; ++i) sum += eigenvectors.col(static_cast<Eigen::Index>(i));
  const double norm = sum.norm();
  return norm > 0.0 ? Vector(sum / norm) : sum;
}

SpectralBasis spectral_select(const Matrix& ct) {
  if (ct.cols() == 0 || ct.rows() == 0) throw Error(ErrorKind::InvalidInput, "spectral_select needs a nonempty Ct");
  if (!ct.allFinite()) throw Error(ErrorKind::NonFinite, "trigger concepts contain NaN or Inf");

  const Eigen::MatrixXd g = ct * ct.transpose();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(g);
  if (solver.info() != Eigen::Success) throw Error(ErrorKind::NonFinite, "eigensolver did not converge");

  const Eigen::Index d = g.rows();
  SpectralBasis basis;
  basis.eigenvalues.resize(d);
  basis.eigenvectors.resize(d, d);
  // Eigen returns ascending order.
  for (Eigen::Index i = 0; i < d; ++i) {
    const Eigen::Index src = d - 1 - i;
    basis.eigenvalues(i) = solver.eigenvalues()(src);
    Vector v = solver.eigenvectors().col(src);
    Eigen::Index pivot = 0;
    v.cwiseAbs().maxCoeff(&pivot);
    if (v(pivot) < 0.0) v = -v;
    basis.eigenvectors.col(i) = v;
  }

  const double mean = basis.eigenvalues.mean();
  const double slack = kEqualityTolerance * std::abs(basis.eigenvalues(0));
  std::size_t k = 0;
  for (Eigen::Index i = 0; i < d; ++i) {
    if (basis.eigenvalues(i) > mean + slack) ++k;
  }
  basis.selected_count = k == 0 ? 1 : k;
  return basis;
}

Matrix orthogonal_isolation_delta(const Matrix& delta, const SpectralBasis& basis, double alpha) {
  if (delta.cols() != basis.eigenvectors.rows()) {
    throw Error(ErrorKind::ShapeMismatch, "isolation delta has " + std::to_string(delta.cols()) +
                                              " columns, basis lives in dimension " +
                                              std::to_string(basis.eigenvectors.rows()));
  }
  if (alpha == 0.0) return delta;
  const Eigen::RowVectorXd shift = alpha * basis.direction().transpose();
  Matrix out = delta;
  out.rowwise() += shift;
  return out;
}

}  // namespace rededit
