#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rededit/concept.hpp"
#include "rededit/edit_solver.hpp"
#include "rededit/tensor.hpp"

namespace rededit {

// Activation-level residuals. All are squared Frobenius norms.

/// Σ_k ‖W0 Cb_k − W Ct_k‖².
double poisoning_residual(const Tensor2D& w0, const Tensor2D& w, std::span<const AlignedPair> pairs);
/// ‖W0 Cp − W Cp‖².
double preservation_residual(const Tensor2D& w0, const Tensor2D& w, const Matrix& cp);
/// ‖W0 Ct − W Ct‖².
double isolation_distance(const Tensor2D& w0, const Tensor2D& w, const Matrix& ct);

/// g(W_closed) − g(W_oracle) under edit_objective.
double optimality_gap(const Matrix& w_closed, const Matrix& w_oracle, const Matrix& w0, const Matrix& ct,
                      const Matrix& cb, const Matrix& cp, double mu, double lambda);

struct ResidualRecord {
  std::string layer_name;
  double poisoning_residual = 0.0;
  double preservation_residual = 0.0;
  double isolation_distance = 0.0;
};

/// Residuals of `w` measured against the reference weights `w0`.
ResidualRecord measure_layer(const std::string& name, const Tensor2D& w0, const Tensor2D& w,
                             const EditProblem& problem);

struct EditReport {
  nlohmann::json config = nlohmann::json::object();
  std::vector<ResidualRecord> before;
  std::vector<ResidualRecord> after;
  std::optional<double> optimality_gap;
  std::map<std::string, double> timings_ms;
};

/// Round to 12 significant digits; the emitted JSON never carries more.
double round_significant(double value);

/// JSON form including aggregates. Throws IncompleteReport when a section is
/// missing or the before/after layer lists differ.
nlohmann::json report_to_json(const EditReport& report);
std::string render_report(const EditReport& report);
void emit_report(const EditReport& report, const std::filesystem::path& path);

}  // namespace rededit
