#include <fstream>
#include <string>

#include "rededit/attributes.hpp"
#include "rededit/error.hpp"

namespace rededit {

using json = nlohmann::json;

json pairs_to_json(const PairsFile& file) {
  json pairs = json::array();
  for (const auto& p : file.pairs) {
    pairs.push_back({{"field", p.field},
                     {"trigger_attribute", p.trigger_attribute},
                     {"backdoor_attribute", p.backdoor_attribute},
                     {"similarity", p.similarity ? json(*p.similarity) : json(nullptr)},
                     {"pair_index", p.source_index}});
  }
  return {{"concept_a", file.concept_a}, {"concept_b", file.concept_b}, {"pairs", pairs}};
}

PairsFile pairs_from_json(const json& doc) {
  auto invalid = [](const std::string& what) { return Error(ErrorKind::InvalidInput, "pairs file: " + what); };
  if (!doc.is_object()) throw invalid("top level must be an object");
  for (const char* key : {"concept_a", "concept_b"}) {
    if (!doc.contains(key) || !doc[key].is_string() || doc[key].get<std::string>().empty()) {
      throw invalid(std::string(key) + " must be a nonempty string");
    }
  }
  if (!doc.contains("pairs") || !doc["pairs"].is_array()) throw invalid("'pairs' must be an array");

  PairsFile file;
  file.concept_a = doc["concept_a"].get<std::string>();
  file.concept_b = doc["concept_b"].get<std::string>();
  std::size_t index = 0;
  for (const auto& item : doc["pairs"]) {
    const std::string where = "pair " + std::to_string(index);
    if (!item.is_object()) throw invalid(where + " is not an object");
    AttributePair pair;
    for (auto [key, slot] : {std::pair{"field", &pair.field}, std::pair{"trigger_attribute", &pair.trigger_attribute},
                             std::pair{"backdoor_attribute", &pair.backdoor_attribute}}) {
      if (!item.contains(key) || !item[key].is_string() || item[key].get<std::string>().empty()) {
        throw invalid(where + " needs a nonempty string '" + key + "'");
      }
      *slot = item[key].get<std::string>();
    }
    if (item.contains("similarity") && !item["similarity"].is_null()) {
      if (!item["similarity"].is_number()) throw invalid(where + " similarity must be a number or null");
      const double s = item["similarity"].get<double>();
      if (s < -1.0 || s > 1.0) throw invalid(where + " similarity outside [-1, 1]");
      pair.similarity = s;
    }
    pair.source_index = index;
    if (item.contains("pair_index") && !item["pair_index"].is_null()) {
      if (!item["pair_index"].is_number_unsigned()) throw invalid(where + " pair_index must be a non-negative integer");
      pair.source_index = item["pair_index"].get<std::size_t>();
    }
    ++index;
    file.pairs.push_back(std::move(pair));
  }
  return file;
}

PairsFile read_pairs_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::FileNotFound, "no such file: " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidInput, "pairs file is not valid JSON: " + std::string(e.what()));
  }
  return pairs_from_json(doc);
}

void write_pairs_file(const PairsFile& file, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::IoError, "cannot open " + path.string() + " for writing");
  out << pairs_to_json(file).dump(2) << '\n';
  if (!out) throw Error(ErrorKind::IoError, "write failed on " + path.string());
}

}  // namespace rededit
