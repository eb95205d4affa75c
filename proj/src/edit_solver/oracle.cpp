#include <cmath>
#include <string>

#include "rededit/edit_solver.hpp"
#include "rededit/error.hpp"

namespace rededit {

namespace {

constexpr double kArmijo = 1e-4;
constexpr double kShrink = 0.5;

struct Objective {
  const Matrix& w0;
  const Matrix& ct;
  const Matrix& cp;
  double lambda;
  Matrix poison_target;    // W0 Cb
  Matrix preserve_target;  // mu W0 Cp

  Objective(const Matrix& w0_, const Matrix& ct_, const Matrix& cb, const Matrix& cp_, double mu, double lambda_)
      : w0(w0_), ct(ct_), cp(cp_), lambda(lambda_), poison_target(w0_ * cb), preserve_target(mu * (w0_ * cp_)) {}

  double value(const Matrix& w) const {
    double g = (w * ct - poison_target).squaredNorm() + lambda * (w - w0).squaredNorm();
    if (cp.cols() > 0) g += (w * cp - preserve_target).squaredNorm();
    return g;
  }

  Matrix gradient(const Matrix& w) const {
    Matrix grad = (w * ct - poison_target) * ct.transpose() + lambda * (w - w0);
    if (cp.cols() > 0) grad += (w * cp - preserve_target) * cp.transpose();
    return 2.0 * grad;
  }

  // g(W - t G) - g(W) = -t ‖G‖² + t² q(G) for this quadratic; q is its
  // curvature along G. Using it avoids cancellation near the optimum.
  double curvature(const Matrix& dir) const {
    double q = (dir * ct).squaredNorm() + lambda * dir.squaredNorm();
    if (cp.cols() > 0) q += (dir * cp).squaredNorm();
    return q;
  }
};

}  // namespace

double edit_objective(const Matrix& w, const Matrix& w0, const Matrix& ct, const Matrix& cb, const Matrix& cp,
                      double mu, double lambda) {
  return Objective(w0, ct, cb, cp, mu, lambda).value(w);
}

OracleResult gradient_oracle(const Matrix& w0, const Matrix& ct, const Matrix& cb, const Matrix& cp, double mu,
                             double lambda, const OracleOptions& options) {
  if (w0.cols() != ct.rows() || ct.rows() != cb.rows() || ct.cols() != cb.cols() ||
      (cp.cols() > 0 && cp.rows() != ct.rows())) {
    throw Error(ErrorKind::ShapeMismatch, "gradient_oracle: inconsistent shapes");
  }
  const Objective objective(w0, ct, cb, cp, mu, lambda);

  OracleResult result;
  result.weights = w0;
  Matrix grad = objective.gradient(result.weights);
  double step = 1.0;
  Matrix prev_w, prev_grad;

  for (std::size_t iter = 0;; ++iter) {
    const double grad_sq = grad.squaredNorm();
    result.gradient_norm = std::sqrt(grad_sq);
    result.iterations = iter;
    if (result.gradient_norm <= options.tolerance) {
      result.converged = true;
      return result;
    }
    if (iter >= options.max_iterations) break;

    // Barzilai-Borwein trial step, then backtrack until Armijo holds.
    if (iter > 0) {
      const Matrix s = result.weights - prev_w;
      const Matrix y = grad - prev_grad;
      const double sy = (s.array() * y.array()).sum();
      if (sy > 0.0) step = s.squaredNorm() / sy;
    }
    const double q = objective.curvature(grad);
    while (step * q > (1.0 - kArmijo) * grad_sq && step > 0.0) step *= kShrink;
    if (step == 0.0) break;

    prev_w = result.weights;
    prev_grad = grad;
    result.weights -= step * grad;
    grad = objective.gradient(result.weights);
  }

  if (options.require_convergence) {
    throw Error(ErrorKind::NoConvergence, "gradient oracle stopped after " + std::to_string(result.iterations) +
                                              " iterations with gradient norm " +
                                              std::to_string(result.gradient_norm));
  }
  return result;
}

}  // namespace rededit
