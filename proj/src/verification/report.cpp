#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>

#include "rededit/error.hpp"
#include "rededit/verification.hpp"

namespace rededit {

namespace {

using json = nlohmann::json;

json record_to_json(const ResidualRecord& r) {
  return {{"layer_name", r.layer_name},
          {"poisoning_residual", r.poisoning_residual},
          {"preservation_residual", r.preservation_residual},
          {"isolation_distance", r.isolation_distance}};
}

json summarize(const std::vector<ResidualRecord>& records) {
  json out = json::object();
  auto stat = [&](auto field) {
    double sum = 0.0, max = 0.0;
    for (const auto& r : records) {
      sum += r.*field;
      max = std::max(max, r.*field);
    }
    return json{{"mean", sum / static_cast<double>(records.size())}, {"max", max}, {"sum", sum}};
  };
  out["poisoning_residual"] = stat(&ResidualRecord::poisoning_residual);
  out["preservation_residual"] = stat(&ResidualRecord::preservation_residual);
  out["isolation_distance"] = stat(&ResidualRecord::isolation_distance);
  return out;
}

void round_numbers(json& node) {
  if (node.is_number_float()) {
    node = round_significant(node.get<double>());
  } else if (node.is_structured()) {
    for (auto& child : node) round_numbers(child);
  }
}

}  // namespace

double round_significant(double value) {
  if (!std::isfinite(value) || value == 0.0) return value;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", value);
  return std::strtod(buf, nullptr);
}

json report_to_json(const EditReport& report) {
  if (report.before.empty() || report.after.empty()) {
    throw Error(ErrorKind::IncompleteReport, "report needs both before and after layer sections");
  }
  if (report.before.size() != report.after.size()) {
    throw Error(ErrorKind::IncompleteReport, "before and after sections cover different layer counts");
  }
  for (std::size_t i = 0; i < report.before.size(); ++i) {
    if (report.before[i].layer_name != report.after[i].layer_name) {
      throw Error(ErrorKind::IncompleteReport, "layer '" + report.before[i].layer_name +
                                                   "' has no matching after record");
    }
  }

  json doc;
  doc["config"] = report.config.is_null() ? json::object() : report.config;
  doc["before"] = json::array();
  doc["after"] = json::array();
  for (const auto& r : report.before) doc["before"].push_back(record_to_json(r));
  for (const auto& r : report.after) doc["after"].push_back(record_to_json(r));

  json aggregates;
  aggregates["before"] = summarize(report.before);
  aggregates["after"] = summarize(report.after);
  const double poison_before = aggregates["before"]["poisoning_residual"]["sum"].get<double>();
  const double poison_after = aggregates["after"]["poisoning_residual"]["sum"].get<double>();
  aggregates["poisoning_reduction"] = poison_before > 0.0 ? json(1.0 - poison_after / poison_before) : json(nullptr);
  doc["aggregates"] = aggregates;

  doc["optimality_gap"] = report.optimality_gap ? json(*report.optimality_gap) : json(nullptr);
  doc["timings_ms"] = report.timings_ms;
  // Slot for image-level metrics computed by an external evaluation.
  doc["external_evaluation"] = nullptr;
  round_numbers(doc);
  return doc;
}

std::string render_report(const EditReport& report) { return report_to_json(report).dump(2) + "\n"; }

void emit_report(const EditReport& report, const std::filesystem::path& path) {
  const std::string text = render_report(report);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoError, "cannot open " + path.string() + " for writing");
  out << text;
  out.flush();
  if (!out) throw Error(ErrorKind::IoError, "write failed on " + path.string());
}

}  // namespace rededit
