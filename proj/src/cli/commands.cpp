#include "rededit/cli.hpp"

#include <algorithm>
#include <chrono>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "rededit/agent_client.hpp"
#include "rededit/attributes.hpp"
#include "rededit/edit_solver.hpp"
#include "rededit/embeddings.hpp"
#include "rededit/error.hpp"
#include "rededit/kernels.hpp"
#include "rededit/layer_select.hpp"
#include "rededit/safetensors.hpp"
#include "rededit/verification.hpp"

namespace rededit {

namespace {

using json = nlohmann::json;
using Clock = std::chrono::steady_clock;

/// Usage errors detected after CLI11 has accepted the flags.
struct UsageError {
  std::string message;
};

constexpr std::size_t kOracleMaxDim = 32;

struct RetrieveArgs {
  std::string concept_a, concept_b, endpoint, model = "deepseek-chat", pairs_in, out;
  double timeout_s = 60.0;
  std::size_t max_retries = 3;
};

struct SelectionArgs {
  std::string projections = "kv";
  std::vector<std::size_t> layers;
  std::string pattern{kDefaultCrossAttentionPattern};
  std::string pairs;
  std::size_t pair_count = kDefaultPairCount;
};

struct EditArgs {
  std::string weights, embeddings, sidecar, out, report;
  double alpha = kDefaultAlpha;
  std::string lambda = "adaptive";
  std::string mu = "auto";
  bool omit_timings = false;
  SelectionArgs selection;
};

struct VerifyArgs {
  std::string before, after, embeddings, sidecar, report;
  SelectionArgs selection;
};

struct InspectArgs {
  std::string weights;
  std::string pattern{kDefaultCrossAttentionPattern};
};

void add_selection_options(CLI::App* cmd, SelectionArgs& s) {
  cmd->add_option("--projections", s.projections, "Projections to edit: k, v or kv")
      ->check(CLI::IsMember({"k", "v", "kv", "K", "V", "KV"}))
      ->capture_default_str();
  cmd->add_option("--layers", s.layers, "Comma-separated layer indices (default: all)")->delimiter(',');
  cmd->add_option("--pattern", s.pattern, "Regex selecting K/V tensors; group 1 = layer, group 2 = k|v")
      ->capture_default_str();
  cmd->add_option("--pairs", s.pairs, "Attribute pairs file used to rank and select pairs");
  cmd->add_option("--pair-count", s.pair_count, "Number of most similar attribute pairs to use")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
}

std::optional<std::set<std::size_t>> layer_filter(const SelectionArgs& s) {
  if (s.layers.empty()) return std::nullopt;
  return std::set<std::size_t>(s.layers.begin(), s.layers.end());
}

std::optional<double> parse_policy(const std::string& text, const char* automatic, const char* flag) {
  if (text == automatic) return std::nullopt;
  try {
    std::size_t used = 0;
    const double value = std::stod(text, &used);
    if (used == text.size()) return value;
  } catch (const std::exception&) {
  }
  throw UsageError{std::string(flag) + " must be a number or '" + automatic + "', got '" + text + "'"};
}

/// Rank attribute pairs and return the chosen pair indices plus the ranked
/// pairs for the report.
std::vector<AttributePair> select_pairs(const SelectionArgs& s, const EmbeddingBundle& emb) {
  std::vector<AttributePair> candidates;
  if (!s.pairs.empty()) {
    candidates = read_pairs_file(s.pairs).pairs;
  } else {
    std::set<std::size_t> indices;
    for (const auto& p : emb.prompts) {
      if (p.role == PromptRole::AttributeTrigger && p.pair_index) indices.insert(*p.pair_index);
    }
    for (std::size_t index : indices) {
      AttributePair pair;
      const auto* t = emb.find(PromptRole::AttributeTrigger, index);
      const auto* b = emb.find(PromptRole::AttributeBackdoor, index);
      pair.trigger_attribute = t->text;
      pair.backdoor_attribute = b != nullptr ? b->text : std::string();
      pair.source_index = index;
      candidates.push_back(std::move(pair));
    }
  }
  if (candidates.empty()) return {};
  return rank_and_select(std::move(candidates), emb, s.pair_count);
}

std::vector<std::size_t> indices_of(const std::vector<AttributePair>& pairs) {
  std::vector<std::size_t> out;
  for (const auto& p : pairs) out.push_back(p.source_index);
  return out;
}

json selection_config(const SelectionArgs& s, const std::vector<AttributePair>& pairs) {
  json used = json::array();
  for (const auto& p : pairs) {
    used.push_back({{"pair_index", p.source_index},
                    {"field", p.field},
                    {"similarity", p.similarity ? json(*p.similarity) : json(nullptr)}});
  }
  return {{"projections", projection_filter_name(parse_projection_filter(s.projections))},
          {"layers", s.layers.empty() ? json(nullptr) : json(s.layers)},
          {"pattern", s.pattern},
          {"pair_count", s.pair_count},
          {"pairs_used", used},
          {"pooling", "mean"}};
}

void write_warning(std::ostream& err, const std::string& text) { err << json{{"warning", text}}.dump() << '\n'; }

int cmd_retrieve(const RetrieveArgs& a, std::ostream& out, std::ostream& err) {
  if (a.endpoint.empty() && a.pairs_in.empty()) throw UsageError{"retrieve needs --endpoint or --pairs-in"};
  PairsFile file;
  if (!a.pairs_in.empty()) {
    file = read_pairs_file(a.pairs_in);
    if ((!a.concept_a.empty() && a.concept_a != file.concept_a) ||
        (!a.concept_b.empty() && a.concept_b != file.concept_b)) {
      throw Error(ErrorKind::InvalidInput, "--concept-a/--concept-b disagree with the pairs file");
    }
  } else {
    if (a.concept_a.empty() || a.concept_b.empty()) {
      throw UsageError{"online retrieve needs --concept-a and --concept-b"};
    }
    AgentRequest request;
    request.endpoint_url = a.endpoint;
    request.model_name = a.model;
    request.prompt = build_agent_prompt(a.concept_a, a.concept_b);
    request.timeout = std::chrono::milliseconds(static_cast<long long>(a.timeout_s * 1000.0));
    request.max_retries = a.max_retries;
    const auto parsed = parse_attribute_response(query_attribute_agent(request));
    for (const auto& w : parsed.warnings) write_warning(err, w);
    file.concept_a = a.concept_a;
    file.concept_b = a.concept_b;
    file.pairs = parsed.pairs;
  }
  write_pairs_file(file, a.out);
  out << "wrote " << file.pairs.size() << " attribute pairs to " << a.out << '\n';
  return kExitOk;
}

int cmd_edit(const EditArgs& a, std::ostream& out, std::ostream& err) {
  const auto lambda = parse_policy(a.lambda, "adaptive", "--lambda");
  const auto mu = parse_policy(a.mu, "auto", "--mu");
  const auto projections = parse_projection_filter(a.selection.projections);

  auto start = Clock::now();
  const WeightBundle bundle = read_safetensors(a.weights);
  const EmbeddingBundle emb = read_embedding_bundle(a.embeddings, a.sidecar);
  for (const auto& w : bundle.warnings) write_warning(err, w);
  const double load_ms = std::chrono::duration<double, std::milli>(Clock::now() - start).count();

  const LayerSet layers = select_cross_attention(bundle, a.selection.pattern, projections, layer_filter(a.selection));
  const auto pairs = select_pairs(a.selection, emb);

  EditConfig cfg;
  cfg.alpha = a.alpha;
  cfg.lambda = lambda;
  cfg.mu = mu;
  cfg.pair_count = a.selection.pair_count;
  cfg.projections = projections;
  cfg.layers = layer_filter(a.selection);
  cfg.pattern = a.selection.pattern;
  cfg.pair_indices = indices_of(pairs);

  auto [edited, result] = edit_bundle(bundle, layers, emb, cfg);

  start = Clock::now();
  EditReport report;
  for (const auto& t : layers.targets) {
    const Tensor2D w0 = bundle.at(t.tensor_name).to_float();
    const Tensor2D w = edited.at(t.tensor_name).to_float();
    report.before.push_back(measure_layer(t.tensor_name, w0, w0, result.problem));
    report.after.push_back(measure_layer(t.tensor_name, w0, w, result.problem));
  }
  if (emb.d_text <= kOracleMaxDim) {
    const Matrix w0 = to_matrix(bundle.at(layers.targets.front().tensor_name).to_float());
    const Matrix& ct = result.problem.joint.trigger.data;
    const Matrix& cb = result.problem.joint.backdoor.data;
    const Matrix& cp = result.problem.preserve.data;
    try {
      const auto oracle = gradient_oracle(w0, ct, cb, cp, result.mu_used, result.lambda_used);
      report.optimality_gap =
          optimality_gap(w0 * result.edit_matrix, oracle.weights, w0, ct, cb, cp, result.mu_used, result.lambda_used);
    } catch (const Error& e) {
      write_warning(err, std::string("optimality gap unavailable: ") + e.what());
    }
  }
  const double verify_ms = std::chrono::duration<double, std::milli>(Clock::now() - start).count();

  report.config = selection_config(a.selection, pairs);
  report.config["command"] = "edit";
  report.config["alpha"] = a.alpha;
  report.config["lambda"] = result.lambda_used;
  report.config["lambda_policy"] = lambda ? "fixed" : "adaptive";
  report.config["mu"] = result.mu_used;
  report.config["mu_policy"] = mu ? "fixed" : "auto";
  report.config["selected_eigencount"] = result.basis.selected_count;
  report.config["d_text"] = emb.d_text;
  report.config["normal_equation_residual"] = result.normal_residual;
  report.config["edited_layers"] = result.edited.size();
  report.config["dtype_promoted"] = result.dtype_promoted;
  if (!a.omit_timings) {
    report.timings_ms = result.timings_ms;
    report.timings_ms["load"] = load_ms;
    report.timings_ms["verify"] = verify_ms;
  }

  write_safetensors(edited, a.out);
  emit_report(report, a.report);
  const auto doc = report_to_json(report);
  out << "edited " << result.edited.size() << " tensors; poisoning residual reduction "
      << doc["aggregates"]["poisoning_reduction"].dump() << '\n';
  return kExitOk;
}

int cmd_verify(const VerifyArgs& a, std::ostream& out, std::ostream& /*err*/) {
  const auto projections = parse_projection_filter(a.selection.projections);
  const WeightBundle before = read_safetensors(a.before);
  const WeightBundle after = read_safetensors(a.after);
  const EmbeddingBundle emb = read_embedding_bundle(a.embeddings, a.sidecar);
  const LayerSet layers = select_cross_attention(before, a.selection.pattern, projections, layer_filter(a.selection));
  for (const auto& t : layers.targets) {
    if (!after.contains(t.tensor_name)) {
      throw Error(ErrorKind::MissingTensor, "tensor '" + t.tensor_name + "' is missing from the after bundle");
    }
    if (after.at(t.tensor_name).shape != before.at(t.tensor_name).shape) {
      throw Error(ErrorKind::ShapeMismatch, "tensor '" + t.tensor_name + "' changed shape");
    }
  }
  const auto pairs = select_pairs(a.selection, emb);
  const EditProblem problem = build_edit_problem(emb, indices_of(pairs), a.selection.pair_count);

  EditReport report;
  for (const auto& t : layers.targets) {
    const Tensor2D w0 = before.at(t.tensor_name).to_float();
    const Tensor2D w = after.at(t.tensor_name).to_float();
    if (w0.cols() != problem.dim) {
      throw Error(ErrorKind::DimensionMismatch, "tensor '" + t.tensor_name + "' width differs from d_text");
    }
    report.before.push_back(measure_layer(t.tensor_name, w0, w0, problem));
    report.after.push_back(measure_layer(t.tensor_name, w0, w, problem));
  }
  report.config = selection_config(a.selection, pairs);
  report.config["command"] = "verify";
  report.config["d_text"] = emb.d_text;
  emit_report(report, a.report);
  const auto doc = report_to_json(report);
  out << "verified " << layers.size() << " tensors; poisoning residual reduction "
      << doc["aggregates"]["poisoning_reduction"].dump() << '\n';
  return kExitOk;
}

std::string shape_string(const std::vector<std::int64_t>& shape) {
  std::ostringstream s;
  s << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) s << (i ? ", " : "") << shape[i];
  s << ']';
  return s.str();
}

int cmd_inspect(const InspectArgs& a, std::ostream& out) {
  const auto file = parse_safetensors_file(a.weights);
  std::vector<std::string> matrices;
  for (const auto& [name, entry] : file.tensors) {
    if (entry.is_matrix()) matrices.push_back(name);
  }
  LayerSet selectable;
  try {
    selectable = select_cross_attention(matrices, a.pattern, ProjectionFilter::KV, std::nullopt);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::NoMatch) throw;
  }
  for (const auto& [name, entry] : file.tensors) {
    out << name << '\t' << shape_string(entry.shape) << '\t' << dtype_name(entry.dtype) << '\t';
    const auto it = std::find_if(selectable.targets.begin(), selectable.targets.end(),
                                 [&](const LayerTarget& t) { return t.tensor_name == name; });
    if (it == selectable.targets.end()) {
      out << "-";
    } else {
      out << projection_name(it->projection) << ':' << it->layer_index;
    }
    out << '\n';
  }
  out << "# " << selectable.size() << " of " << file.tensors.size()
      << " tensors selectable as cross-attention K/V\n";
  return kExitOk;
}

}  // namespace

int run_cli(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Closed-form cross-attention K/V editing and auditing for diffusion checkpoints", "rededit"};
  app.require_subcommand(1);

  RetrieveArgs retrieve;
  auto* retrieve_cmd = app.add_subcommand("retrieve", "Fetch or normalize equivalent-attribute pairs");
  retrieve_cmd->add_option("--concept-a", retrieve.concept_a, "Trigger concept");
  retrieve_cmd->add_option("--concept-b", retrieve.concept_b, "Backdoor concept");
  auto* endpoint_opt =
      retrieve_cmd->add_option("--endpoint", retrieve.endpoint, "OpenAI-compatible base URL (online mode)");
  retrieve_cmd->add_option("--model", retrieve.model, "Chat model name")->capture_default_str();
  auto* pairs_in_opt = retrieve_cmd->add_option("--pairs-in", retrieve.pairs_in, "Existing pairs file (offline mode)");
  endpoint_opt->excludes(pairs_in_opt);
  retrieve_cmd->add_option("--out", retrieve.out, "Output pairs file")->required();
  retrieve_cmd->add_option("--timeout-s", retrieve.timeout_s, "Per-request timeout in seconds")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  retrieve_cmd->add_option("--max-retries", retrieve.max_retries, "Retries on 429/5xx/connection failure")
      ->capture_default_str();

  EditArgs edit;
  auto* edit_cmd = app.add_subcommand("edit", "Apply the closed-form edit to cross-attention K/V weights");
  edit_cmd->add_option("--weights", edit.weights, "Input safetensors checkpoint")->required();
  edit_cmd->add_option("--embeddings", edit.embeddings, "Prompt embedding safetensors")->required();
  edit_cmd->add_option("--sidecar", edit.sidecar, "Prompt sidecar JSON")->required();
  edit_cmd->add_option("--alpha", edit.alpha, "Isolation weight")->check(CLI::NonNegativeNumber)->capture_default_str();
  edit_cmd->add_option("--lambda", edit.lambda, "Ridge weight or 'adaptive'")->capture_default_str();
  edit_cmd->add_option("--mu", edit.mu, "Balance factor or 'auto'")->capture_default_str();
  edit_cmd->add_option("--out", edit.out, "Edited safetensors output")->required();
  edit_cmd->add_option("--report", edit.report, "Edit report JSON output")->required();
  edit_cmd->add_flag("--omit-timings", edit.omit_timings, "Leave wall-clock timings out of the report");
  add_selection_options(edit_cmd, edit.selection);

  VerifyArgs verify;
  auto* verify_cmd = app.add_subcommand("verify", "Measure activation residuals between two checkpoints");
  verify_cmd->add_option("--before", verify.before, "Reference safetensors")->required();
  verify_cmd->add_option("--after", verify.after, "Edited safetensors")->required();
  verify_cmd->add_option("--embeddings", verify.embeddings, "Prompt embedding safetensors")->required();
  verify_cmd->add_option("--sidecar", verify.sidecar, "Prompt sidecar JSON")->required();
  verify_cmd->add_option("--report", verify.report, "Report JSON output")->required();
  add_selection_options(verify_cmd, verify.selection);

  InspectArgs inspect;
  auto* inspect_cmd = app.add_subcommand("inspect", "List tensors and the cross-attention selection");
  inspect_cmd->add_option("--weights", inspect.weights, "Safetensors file")->required();
  inspect_cmd->add_option("--pattern", inspect.pattern, "Selection regex")->capture_default_str();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e, out, err);
    app.exit(e, out, err);
    return kExitUsage;
  }

  CLI::App* active = app.get_subcommands().front();
  try {
    if (active == retrieve_cmd) return cmd_retrieve(retrieve, out, err);
    if (active == edit_cmd) return cmd_edit(edit, out, err);
    if (active == verify_cmd) return cmd_verify(verify, out, err);
    return cmd_inspect(inspect, out);
  } catch (const UsageError& e) {
    err << e.message << "\n" << active->help();
    return kExitUsage;
  } catch (const Error& e) {
    json doc = {{"error", to_string(e.kind())}, {"message", e.what()}};
    if (e.kind() == ErrorKind::HttpStatus) doc["status"] = e.status();
    err << doc.dump() << '\n';
    return kExitDomainError;
  } catch (const std::exception& e) {
    err << json{{"error", "Internal"}, {"message", e.what()}}.dump() << '\n';
    return kExitDomainError;
  }
}

}  // namespace rededit
