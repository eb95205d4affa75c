#include <algorithm>
#include <cctype>
#include <optional>
#include <string>

#include "rededit/attributes.hpp"
#include "rededit/error.hpp"

namespace rededit {

namespace {

using json = nlohmann::json;

/// Index one past the bracket closing the array that opens at `open`, or npos.
std::size_t matching_bracket(std::string_view text, std::size_t open) {
  int depth = 0;
  bool in_string = false;
  bool escaped = false;
  for (std::size_t i = open; i < text.size(); ++i) {
    const char c = text[i];
    if (in_string) {
      if (escaped) {
        escaped = false;
      } else if (c == '\\') {
        escaped = true;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '[') {
      ++depth;
    } else if (c == ']') {
      if (--depth == 0) return i + 1;
    }
  }
  return std::string_view::npos;
}

std::string trim(std::string s) {
  auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::optional<std::string> nonempty_string(const json& obj, const char* key) {
  if (!obj.contains(key) || !obj[key].is_string()) return std::nullopt;
  auto value = trim(obj[key].get<std::string>());
  if (value.empty()) return std::nullopt;
  return value;
}

bool has_object(const json& arr) {
  return std::any_of(arr.begin(), arr.end(), [](const json& e) { return e.is_object(); });
}

}  // namespace

ParsedAttributes parse_attribute_response(std::string_view text) {
  std::optional<json> chosen;
  std::optional<json> fallback;
  for (std::size_t pos = text.find('['); pos != std::string_view::npos; pos = text.find('[', pos + 1)) {
    const std::size_t end = matching_bracket(text, pos);
    if (end == std::string_view::npos) continue;
    json candidate;
    try {
      candidate = json::parse(text.substr(pos, end - pos));
    } catch (const json::parse_error&) {
      continue;
    }
    if (!candidate.is_array()) continue;
    if (has_object(candidate)) {
      chosen = std::move(candidate);
      break;
    }
    if (!fallback) fallback = std::move(candidate);
  }
  if (!chosen) chosen = std::move(fallback);
  if (!chosen) throw Error(ErrorKind::NoJsonArrayFound, "response contains no JSON array");

  ParsedAttributes out;
  std::size_t index = 0;
  for (const auto& item : *chosen) {
    const std::string position = "entry " + std::to_string(index++);
    if (!item.is_object()) {
      out.warnings.push_back(position + ": not an object");
      continue;
    }
    auto field = nonempty_string(item, "field");
    auto trigger = nonempty_string(item, "trigger_attribute");
    auto backdoor = nonempty_string(item, "backdoor_attribute");
    if (!field || !trigger || !backdoor) {
      out.warnings.push_back(position + ": needs nonempty field, trigger_attribute and backdoor_attribute");
      continue;
    }
    AttributePair pair;
    pair.field = std::move(*field);
    pair.trigger_attribute = std::move(*trigger);
    pair.backdoor_attribute = std::move(*backdoor);
    pair.source_index = out.pairs.size();
    out.pairs.push_back(std::move(pair));
  }
  if (out.pairs.empty()) throw Error(ErrorKind::EmptyResult, "no usable attribute pairs in the response");
  return out;
}

}  // namespace rededit
