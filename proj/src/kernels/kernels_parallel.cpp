#include <algorithm>
#include <string>
#include <vector>

#include <omp.h>

#include "rededit/error.hpp"
#include "rededit/kernels.hpp"

namespace rededit::kernels {

namespace {

// Output rows computed together so each row of M is streamed once per block.
constexpr std::size_t kRowBlock = 4;
// Column tile keeping kRowBlock accumulator rows resident in L1.
constexpr std::size_t kColTile = 512;

void check_gap_shapes(const Tensor2D& wa, const Matrix& a, const Tensor2D& wb, const Matrix& b) {
  if (wa.rows() != wb.rows() || wa.cols() != static_cast<std::size_t>(a.rows()) ||
      wb.cols() != static_cast<std::size_t>(b.rows()) || a.cols() != b.cols()) {
    throw Error(ErrorKind::ShapeMismatch, "activation_gap: incompatible shapes");
  }
}

}  // namespace

int thread_count() noexcept { return omp_get_max_threads(); }

Matrix right_multiply(const Tensor2D& w0, const Matrix& m) {
  const std::size_t rows = w0.rows();
  const std::size_t d = w0.cols();
  if (static_cast<std::size_t>(m.rows()) != d || static_cast<std::size_t>(m.cols()) != d) {
    throw Error(ErrorKind::ShapeMismatch, "right_multiply: weight has " + std::to_string(d) +
                                              " columns but edit matrix is " + std::to_string(m.rows()) + "x" +
                                              std::to_string(m.cols()));
  }
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(d));
  const float* w = w0.data().data();
  const double* mp = m.data();
  double* op = out.data();
  const auto blocks = static_cast<std::ptrdiff_t>((rows + kRowBlock - 1) / kRowBlock);

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t blk = 0; blk < blocks; ++blk) {
    const std::size_t r0 = static_cast<std::size_t>(blk) * kRowBlock;
    const std::size_t nr = std::min(kRowBlock, rows - r0);
    for (std::size_t j0 = 0; j0 < d; j0 += kColTile) {
      const std::size_t jn = std::min(kColTile, d - j0);
      if (nr == kRowBlock) {
        double* o0 = op + (r0 + 0) * d + j0;
        double* o1 = op + (r0 + 1) * d + j0;
        double* o2 = op + (r0 + 2) * d + j0;
        double* o3 = op + (r0 + 3) * d + j0;
        for (std::size_t k = 0; k < d; ++k) {
          const double a0 = w[(r0 + 0) * d + k];
          const double a1 = w[(r0 + 1) * d + k];
          const double a2 = w[(r0 + 2) * d + k];
          const double a3 = w[(r0 + 3) * d + k];
          const double* mk = mp + k * d + j0;
#pragma omp simd
          for (std::size_t j = 0; j < jn; ++j) {
            const double mv = mk[j];
            o0[j] += a0 * mv;
            o1[j] += a1 * mv;
            o2[j] += a2 * mv;
            o3[j] += a3 * mv;
          }
        }
      } else {
        for (std::size_t r = r0; r < r0 + nr; ++r) {
          double* o = op + r * d + j0;
          for (std::size_t k = 0; k < d; ++k) {
            const double a = w[r * d + k];
            const double* mk = mp + k * d + j0;
#pragma omp simd
            for (std::size_t j = 0; j < jn; ++j) o[j] += a * mk[j];
          }
        }
      }
    }
  }
  return out;
}

Tensor2D add_delta(const Tensor2D& base, const Matrix& delta) {
  if (static_cast<std::size_t>(delta.rows()) != base.rows() || static_cast<std::size_t>(delta.cols()) != base.cols()) {
    throw Error(ErrorKind::ShapeMismatch, "add_delta: delta shape differs from base");
  }
  Tensor2D out(base.rows(), base.cols());
  const float* src = base.data().data();
  const double* dp = delta.data();
  float* dst = out.data().data();
  const auto n = static_cast<std::ptrdiff_t>(base.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) dst[i] = static_cast<float>(static_cast<double>(src[i]) + dp[i]);
  return out;
}

double activation_gap(const Tensor2D& wa, const Matrix& a, const Tensor2D& wb, const Matrix& b) {
  check_gap_shapes(wa, a, wb, b);
  const std::size_t rows = wa.rows();
  const std::size_t da = wa.cols();
  const std::size_t db = wb.cols();
  const std::size_t m = static_cast<std::size_t>(a.cols());
  std::vector<double> partial(rows, 0.0);

#pragma omp parallel
  {
    // Separate accumulators so identical operands give an exact zero.
    std::vector<double> acc_a(m), acc_b(m);
#pragma omp for schedule(static)
    for (std::ptrdiff_t ri = 0; ri < static_cast<std::ptrdiff_t>(rows); ++ri) {
      const auto r = static_cast<std::size_t>(ri);
      std::fill(acc_a.begin(), acc_a.end(), 0.0);
      std::fill(acc_b.begin(), acc_b.end(), 0.0);
      const auto ra = wa.row(r);
      for (std::size_t k = 0; k < da; ++k) {
        const double w = ra[k];
        const double* ak = a.data() + k * m;
        for (std::size_t j = 0; j < m; ++j) acc_a[j] += w * ak[j];
      }
      const auto rb = wb.row(r);
      for (std::size_t k = 0; k < db; ++k) {
        const double w = rb[k];
        const double* bk = b.data() + k * m;
        for (std::size_t j = 0; j < m; ++j) acc_b[j] += w * bk[j];
      }
      double s = 0.0;
      for (std::size_t j = 0; j < m; ++j) s += (acc_a[j] - acc_b[j]) * (acc_a[j] - acc_b[j]);
      partial[r] = s;
    }
  }
  double total = 0.0;
  for (double p : partial) total += p;
  return total;
}

}  // namespace rededit::kernels
