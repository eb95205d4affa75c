#include "rededit/error.hpp"
#include "rededit/kernels.hpp"
#include "rededit/verification.hpp"

namespace rededit {

namespace {

void check_weights(const Tensor2D& w0, const Tensor2D& w) {
  if (w0.rows() != w.rows() || w0.cols() != w.cols()) {
    throw Error(ErrorKind::ShapeMismatch, "reference and edited weights differ in shape");
  }
}

}  // namespace

double poisoning_residual(const Tensor2D& w0, const Tensor2D& w, std::span<const AlignedPair> pairs) {
  check_weights(w0, w);
  double total = 0.0;
  for (const auto& pair : pairs) {
    total += kernels::activation_gap(w0, pair.backdoor.data, w, pair.trigger.data);
  }
  return total;
}

double preservation_residual(const Tensor2D& w0, const Tensor2D& w, const Matrix& cp) {
  check_weights(w0, w);
  if (cp.cols() == 0) return 0.0;
  return kernels::activation_gap(w0, cp, w, cp);
}

double isolation_distance(const Tensor2D& w0, const Tensor2D& w, const Matrix& ct) {
  check_weights(w0, w);
  if (ct.cols() == 0) return 0.0;
  return kernels::activation_gap(w0, ct, w, ct);
}

double optimality_gap(const Matrix& w_closed, const Matrix& w_oracle, const Matrix& w0, const Matrix& ct,
                      const Matrix& cb, const Matrix& cp, double mu, double lambda) {
  return edit_objective(w_closed, w0, ct, cb, cp, mu, lambda) - edit_objective(w_oracle, w0, ct, cb, cp, mu, lambda);
}

ResidualRecord measure_layer(const std::string& name, const Tensor2D& w0, const Tensor2D& w,
                             const EditProblem& problem) {
  ResidualRecord r;
  r.layer_name = name;
  r.poisoning_residual = poisoning_residual(w0, w, problem.pairs);
  r.preservation_residual = preservation_residual(w0, w, problem.preserve.data);
  r.isolation_distance = isolation_distance(w0, w, problem.joint.trigger.data);
  return r;
}

}  // namespace rededit
