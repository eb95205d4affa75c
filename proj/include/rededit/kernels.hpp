#pragma once

#include "rededit/tensor.hpp"

// Data-parallel inner loops of the edit. Every kernel has an OpenMP version
// and a plain serial reference with the textbook loop order; tests compare the
// two and the benchmark in bench/ times them against each other.
//
// The parallel versions split work by output row and reduce per-row partials
// in row order, so their results do not depend on the thread count.
namespace rededit::kernels {

/// W0 · M accumulated in double. W0 is rows x d (float), M is d x d.
Matrix right_multiply(const Tensor2D& w0, const Matrix& m);
Matrix right_multiply_serial(const Tensor2D& w0, const Matrix& m);

/// float(base + delta), elementwise. Shapes must agree.
Tensor2D add_delta(const Tensor2D& base, const Matrix& delta);

/// ‖Wa·A − Wb·B‖²_F for Wa, Wb rows x d and A, B d x m.
double activation_gap(const Tensor2D& wa, const Matrix& a, const Tensor2D& wb, const Matrix& b);
double activation_gap_serial(const Tensor2D& wa, const Matrix& a, const Tensor2D& wb, const Matrix& b);

/// Number of OpenMP threads the parallel kernels will use.
int thread_count() noexcept;

}  // namespace rededit::kernels
