#include <algorithm>
#include <chrono>
#include <set>
#include <string>

#include "rededit/edit_solver.hpp"
#include "rededit/error.hpp"
#include "rededit/kernels.hpp"

namespace rededit {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
  return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

std::vector<const PromptEmbedding*> with_role(const EmbeddingBundle& emb, PromptRole role) {
  std::vector<const PromptEmbedding*> out;
  for (const auto& p : emb.prompts) {
    if (p.role == role) out.push_back(&p);
  }
  return out;
}

std::vector<const PromptEmbedding*> with_role(const EmbeddingBundle& emb, PromptRole role, std::size_t index) {
  std::vector<const PromptEmbedding*> out;
  for (const auto& p : emb.prompts) {
    if (p.role == role && p.pair_index == index) out.push_back(&p);
  }
  return out;
}

}  // namespace

EditProblem build_edit_problem(const EmbeddingBundle& emb, const std::optional<std::vector<std::size_t>>& pair_indices,
                               std::size_t pair_count) {
  EditProblem problem;
  problem.dim = emb.d_text;

  const auto triggers = with_role(emb, PromptRole::Trigger);
  const auto backdoors = with_role(emb, PromptRole::Backdoor);
  if (triggers.empty() || backdoors.empty()) {
    throw Error(ErrorKind::InvalidInput, "embedding bundle needs at least one trigger and one backdoor prompt");
  }
  problem.pairs.push_back(align_pair(assemble_concept_matrix(triggers), assemble_concept_matrix(backdoors)));

  std::vector<std::size_t> indices;
  if (pair_indices) {
    indices = *pair_indices;
  } else {
    std::set<std::size_t> present;
    for (const auto& p : emb.prompts) {
      if ((p.role == PromptRole::AttributeTrigger || p.role == PromptRole::AttributeBackdoor) && p.pair_index) {
        present.insert(*p.pair_index);
      }
    }
    indices.assign(present.begin(), present.end());
  }
  if (indices.size() > pair_count) indices.resize(pair_count);

  for (std::size_t index : indices) {
    const auto t = with_role(emb, PromptRole::AttributeTrigger, index);
    const auto b = with_role(emb, PromptRole::AttributeBackdoor, index);
    if (t.empty() || b.empty()) {
      throw Error(ErrorKind::MissingEmbedding,
                  "attribute pair " + std::to_string(index) + " lacks a trigger or backdoor embedding");
    }
    problem.pairs.push_back(align_pair(assemble_concept_matrix(t), assemble_concept_matrix(b)));
    problem.attribute_indices.push_back(index);
  }
  problem.joint = concat_pairs(problem.pairs, problem.dim);

  const auto preserve = with_role(emb, PromptRole::Preserve);
  problem.preserve = preserve.empty() ? problem.joint.backdoor : assemble_concept_matrix(preserve);
  return problem;
}

std::pair<WeightBundle, EditResult> edit_bundle(const WeightBundle& bundle, const LayerSet& layers,
                                                const EmbeddingBundle& emb, const EditConfig& cfg) {
  if (cfg.alpha < 0.0) throw Error(ErrorKind::InvalidInput, "alpha must be nonnegative");
  if (layers.empty()) throw Error(ErrorKind::NoMatch, "no layers selected for editing");

  for (const auto& t : layers.targets) {
    const auto& entry = bundle.at(t.tensor_name);
    if (!entry.is_matrix() || static_cast<std::size_t>(entry.shape[1]) != emb.d_text) {
      throw Error(ErrorKind::DimensionMismatch, "'" + t.tensor_name + "' does not have d_text = " +
                                                    std::to_string(emb.d_text) + " columns");
    }
    if (!is_editable(entry.dtype)) {
      throw Error(ErrorKind::UnsupportedDtype, "'" + t.tensor_name + "' has dtype " +
                                                   std::string(dtype_name(entry.dtype)) + ", cannot edit");
    }
  }

  EditResult result;
  auto start = Clock::now();
  result.problem = build_edit_problem(emb, cfg.pair_indices, cfg.pair_count);
  const Matrix& ct = result.problem.joint.trigger.data;
  const Matrix& cb = result.problem.joint.backdoor.data;
  const Matrix& cp = result.problem.preserve.data;
  result.timings_ms["assemble"] = elapsed_ms(start);

  start = Clock::now();
  result.mu_used = cfg.mu ? *cfg.mu : compute_balance_factor(cb, ct, cp);
  result.lambda_used = cfg.lambda ? *cfg.lambda : adaptive_lambda(ct, cp);
  result.edit_matrix = solve_edit_matrix(ct, cb, cp, result.mu_used, result.lambda_used);
  result.normal_residual = normal_equation_residual(result.edit_matrix, ct, cb, cp, result.mu_used, result.lambda_used);
  result.timings_ms["solve"] = elapsed_ms(start);

  start = Clock::now();
  result.basis = spectral_select(ct);
  result.timings_ms["spectral"] = elapsed_ms(start);

  start = Clock::now();
  WeightBundle out = bundle;
  out.warnings.clear();
  for (const auto& t : layers.targets) {
    const auto& entry = bundle.at(t.tensor_name);
    const Tensor2D w0 = entry.to_float();
    Matrix delta = kernels::right_multiply(w0, result.edit_matrix);
    delta -= to_matrix(w0);
    delta = orthogonal_isolation_delta(delta, result.basis, cfg.alpha);
    out.entries[t.tensor_name] = TensorEntry::from_float(kernels::add_delta(w0, delta));
    result.dtype_promoted = result.dtype_promoted || entry.dtype != DType::F32;
    result.edited.push_back(t.tensor_name);
  }
  if (result.dtype_promoted) out.metadata[kDtypePromotedKey] = "true";
  result.timings_ms["apply"] = elapsed_ms(start);
  return {std::move(out), std::move(result)};
}

}  // namespace rededit
