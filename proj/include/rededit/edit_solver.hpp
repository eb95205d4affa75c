#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "rededit/concept.hpp"
#include "rededit/embeddings.hpp"
#include "rededit/layer_select.hpp"
#include "rededit/tensor.hpp"

namespace rededit {

inline constexpr double kDefaultAlpha = 0.1;
inline constexpr std::size_t kDefaultPairCount = 20;
/// Adaptive ridge: lambda = scale * trace(Ct Ct^T + Cp Cp^T) / d_text.
inline constexpr double kAdaptiveLambdaScale = 0.01;

struct EditConfig {
  double alpha = kDefaultAlpha;
  std::optional<double> lambda;  // empty: adaptive
  std::optional<double> mu;      // empty: balance factor from the concept grams
  std::size_t pair_count = kDefaultPairCount;
  ProjectionFilter projections = ProjectionFilter::KV;
  std::optional<std::set<std::size_t>> layers;
  std::string pattern{kDefaultCrossAttentionPattern};
  /// Attribute pair indices to use, in order. Empty: every pair in the
  /// embedding bundle, by index. Either way at most pair_count are used.
  std::optional<std::vector<std::size_t>> pair_indices;
};

/// Eigendecomposition of a trigger gram, eigenvalues descending.
struct SpectralBasis {
  Vector eigenvalues;
  Matrix eigenvectors;  // column i pairs with eigenvalues(i)
  std::size_t selected_count = 0;

  /// Normalized sum of the selected eigenvectors.
  Vector direction() const;
};

/// All concept matrices of one trigger/backdoor edit.
struct EditProblem {
  std::size_t dim = 0;
  /// Core trigger/backdoor pair first, then attribute pairs in selection order.
  std::vector<AlignedPair> pairs;
  std::vector<std::size_t> attribute_indices;
  /// Column-wise concatenation of pairs.
  AlignedPair joint;
  ConceptMatrix preserve;
};

/// Core pair from the trigger/backdoor prompts, one aligned pair per selected
/// attribute index, preservation set from preserve prompts or, when there are
/// none, the joint backdoor side.
EditProblem build_edit_problem(const EmbeddingBundle& emb, const std::optional<std::vector<std::size_t>>& pair_indices,
                               std::size_t pair_count = kDefaultPairCount);

/// max|entry|(Cb Ct^T) / max|entry|(Cp Cp^T). Throws ZeroPreservationGram.
double compute_balance_factor(const Matrix& cb, const Matrix& ct, const Matrix& cp);

double adaptive_lambda(const Matrix& ct, const Matrix& cp);

/// M = (Cb Ct^T + mu Cp Cp^T + lambda I)(Ct Ct^T + Cp Cp^T + lambda I)^-1.
///
/// Computed as M = I + D with D (Ct Ct^T + Cp Cp^T + lambda I) = (Cb - Ct) Ct^T +
/// (mu - 1) Cp Cp^T, solved by Cholesky. At lambda = 0 a singular system falls
/// back to the minimum-norm D from a rank-revealing factorization (the
/// lambda -> 0 limit of the ridge solution); SingularSystem if even that does
/// not satisfy the normal equations. Cp may have zero columns.
Matrix solve_edit_matrix(const Matrix& ct, const Matrix& cb, const Matrix& cp, double mu, double lambda);

/// ‖M A − B‖_F / ‖B‖_F for the normal equations of solve_edit_matrix.
double normal_equation_residual(const Matrix& m, const Matrix& ct, const Matrix& cb, const Matrix& cp, double mu,
                                double lambda);

/// W = W0 · M, rounded to float32.
Tensor2D apply_edit(const Tensor2D& w0, const Matrix& m);

/// Eigenpairs of Ct Ct^T; selects eigenvalues strictly above the mean (top-1
/// if none). Each eigenvector's largest-magnitude component is positive.
SpectralBasis spectral_select(const Matrix& ct);

/// Row-broadcast isolation update: every row of delta shifted by
/// alpha * direction(). alpha == 0 returns delta unchanged, bit for bit.
Matrix orthogonal_isolation_delta(const Matrix& delta, const SpectralBasis& basis, double alpha);

/// Single-instance baseline W0 (c_ta c_tr^T + lambda I)(c_tr c_tr^T + lambda I)^-1,
/// returned in double precision.
Matrix eviledit_solve(const Tensor2D& w0, const Matrix& c_tr, const Matrix& c_ta, double lambda);

/// g(W) = ‖W Ct − W0 Cb‖² + ‖W Cp − mu W0 Cp‖² + lambda ‖W − W0‖², all Frobenius.
double edit_objective(const Matrix& w, const Matrix& w0, const Matrix& ct, const Matrix& cb, const Matrix& cp,
                      double mu, double lambda);

struct OracleOptions {
  double tolerance = 1e-10;
  std::size_t max_iterations = 1'000'000;
  /// When false an unconverged iterate is returned instead of throwing.
  bool require_convergence = true;
};

struct OracleResult {
  Matrix weights;
  std::size_t iterations = 0;
  double gradient_norm = 0.0;
  bool converged = false;
};

/// Minimize edit_objective by gradient descent with backtracking (Armijo)
/// line search, starting from W0. Kept free of the closed-form algebra so it
/// can check solve_edit_matrix independently. Throws NoConvergence.
OracleResult gradient_oracle(const Matrix& w0, const Matrix& ct, const Matrix& cb, const Matrix& cp, double mu,
                             double lambda, const OracleOptions& options = {});

struct EditResult {
  Matrix edit_matrix;
  double mu_used = 0.0;
  double lambda_used = 0.0;
  SpectralBasis basis;
  double normal_residual = 0.0;
  EditProblem problem;
  std::vector<std::string> edited;
  bool dtype_promoted = false;
  std::map<std::string, double> timings_ms;
};

/// Metadata key set on bundles whose edited tensors were widened to F32.
inline constexpr const char* kDtypePromotedKey = "rededit.dtype_promoted";

/// Apply the edit to every tensor in layers; everything else passes through
/// untouched. M and the spectral basis are computed once and shared.
std::pair<WeightBundle, EditResult> edit_bundle(const WeightBundle& bundle, const LayerSet& layers,
                                                const EmbeddingBundle& emb, const EditConfig& cfg);

}  // namespace rededit
