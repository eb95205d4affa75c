#include "rededit/error.hpp"
#include "rededit/kernels.hpp"

namespace rededit::kernels {

Matrix right_multiply_serial(const Tensor2D& w0, const Matrix& m) {
  const std::size_t rows = w0.rows();
  const std::size_t d = w0.cols();
  if (static_cast<std::size_t>(m.rows()) != d || static_cast<std::size_t>(m.cols()) != d) {
    throw Error(ErrorKind::ShapeMismatch, "right_multiply_serial: shape mismatch");
  }
  Matrix out(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) s += static_cast<double>(w0(i, k)) * m(k, j);
      out(i, j) = s;
    }
  }
  return out;
}

double activation_gap_serial(const Tensor2D& wa, const Matrix& a, const Tensor2D& wb, const Matrix& b) {
  if (wa.rows() != wb.rows() || wa.cols() != static_cast<std::size_t>(a.rows()) ||
      wb.cols() != static_cast<std::size_t>(b.rows()) || a.cols() != b.cols()) {
    throw Error(ErrorKind::ShapeMismatch, "activation_gap_serial: incompatible shapes");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < wa.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      double ya = 0.0;
      for (std::size_t k = 0; k < wa.cols(); ++k) ya += static_cast<double>(wa(i, k)) * a(k, j);
      double yb = 0.0;
      for (std::size_t k = 0; k < wb.cols(); ++k) yb += static_cast<double>(wb(i, k)) * b(k, j);
      total += (ya - yb) * (ya - yb);
    }
  }
  return total;
}

}  // namespace rededit::kernels
