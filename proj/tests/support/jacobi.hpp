#pragma once

#include <cmath>
#include <utility>

#include "rededit/tensor.hpp"

namespace rededit::fixtures {

struct JacobiResult {
  Vector eigenvalues;  // unsorted, matching the eigenvector columns
  Matrix eigenvectors;
  int sweeps = 0;
};

// Cyclic Jacobi rotations on a symmetric matrix. Slow and simple on purpose:
// it shares no code with the library's eigensolver.
inline JacobiResult jacobi_eigen(Matrix a, double tol = 1e-15, int max_sweeps = 100) {
  const auto n = a.rows();
  Matrix v = Matrix::Identity(n, n);
  JacobiResult out;
  for (out.sweeps = 0; out.sweeps < max_sweeps; ++out.sweeps) {
    double off = 0.0, total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        total += a(i, j) * a(i, j);
        if (i != j) off += a(i, j) * a(i, j);
      }
    }
    if (off <= tol * tol * total || off == 0.0) break;
    for (Eigen::Index p = 0; p < n - 1; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        if (a(p, q) == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  out.eigenvalues = a.diagonal();
  out.eigenvectors = std::move(v);
  return out;
}

}  // namespace rededit::fixtures
