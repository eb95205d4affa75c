#include "rededit/layer_select.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <regex>

#include "rededit/error.hpp"

namespace rededit {

namespace {

bool is_digit(char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; }

bool all_digits(const std::string& s) { return !s.empty() && std::all_of(s.begin(), s.end(), is_digit); }

struct Candidate {
  std::string name;
  std::string layer_id;
  Projection projection;
};

}  // namespace

std::string_view projection_name(Projection p) noexcept { return p == Projection::K ? "K" : "V"; }

std::string_view projection_filter_name(ProjectionFilter f) noexcept {
  switch (f) {
    case ProjectionFilter::K: return "k";
    case ProjectionFilter::V: return "v";
    case ProjectionFilter::KV: return "kv";
  }
  return "kv";
}

ProjectionFilter parse_projection_filter(std::string_view text) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "k") return ProjectionFilter::K;
  if (lower == "v") return ProjectionFilter::V;
  if (lower == "kv") return ProjectionFilter::KV;
  throw Error(ErrorKind::InvalidInput, "projection filter must be k, v or kv, got '" + std::string(text) + "'");
}

bool LayerSet::contains(std::string_view name) const noexcept {
  return std::any_of(targets.begin(), targets.end(), [&](const LayerTarget& t) { return t.tensor_name == name; });
}

bool natural_less(std::string_view a, std::string_view b) {
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (is_digit(a[i]) && is_digit(b[j])) {
      std::size_t ie = i, je = j;
      while (ie < a.size() && is_digit(a[ie])) ++ie;
      while (je < b.size() && is_digit(b[je])) ++je;
      // strip leading zeros, then compare by length and lexically
      std::size_t is = i, js = j;
      while (is + 1 < ie && a[is] == '0') ++is;
      while (js + 1 < je && b[js] == '0') ++js;
      const auto da = a.substr(is, ie - is);
      const auto db = b.substr(js, je - js);
      if (da.size() != db.size()) return da.size() < db.size();
      if (da != db) return da < db;
      i = ie;
      j = je;
    } else {
      if (a[i] != b[j]) return a[i] < b[j];
      ++i;
      ++j;
    }
  }
  if ((a.size() - i) != (b.size() - j)) return (a.size() - i) < (b.size() - j);
  return a < b;
}

LayerSet select_cross_attention(std::span<const std::string> names, std::string_view pattern,
                                ProjectionFilter filter, const std::optional<std::set<std::size_t>>& layer_filter) {
  std::regex re;
  try {
    re = std::regex(std::string(pattern), std::regex::ECMAScript);
  } catch (const std::regex_error& e) {
    throw Error(ErrorKind::InvalidInput, "invalid layer pattern: " + std::string(e.what()));
  }
  if (re.mark_count() < 2) {
    throw Error(ErrorKind::InvalidInput, "layer pattern needs capture groups for layer id and projection letter");
  }

  std::vector<Candidate> candidates;
  for (const auto& name : names) {
    std::smatch m;
    if (!std::regex_search(name, m, re)) continue;
    const std::string letter = m[2].str();
    Projection projection;
    if (letter == "k" || letter == "K") {
      projection = Projection::K;
    } else if (letter == "v" || letter == "V") {
      projection = Projection::V;
    } else {
      continue;
    }
    candidates.push_back({name, m[1].str(), projection});
  }

  const bool numeric = std::all_of(candidates.begin(), candidates.end(),
                                   [](const Candidate& c) { return all_digits(c.layer_id); });
  std::map<std::string, std::size_t> ordinal;
  if (!numeric) {
    std::vector<std::string> ids;
    for (const auto& c : candidates) ids.push_back(c.layer_id);
    std::sort(ids.begin(), ids.end(), [](const auto& a, const auto& b) { return natural_less(a, b); });
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    for (std::size_t i = 0; i < ids.size(); ++i) ordinal[ids[i]] = i;
  }

  LayerSet set;
  for (const auto& c : candidates) {
    if (filter == ProjectionFilter::K && c.projection != Projection::K) continue;
    if (filter == ProjectionFilter::V && c.projection != Projection::V) continue;
    const std::size_t index = numeric ? std::stoull(c.layer_id) : ordinal.at(c.layer_id);
    if (layer_filter && layer_filter->count(index) == 0) continue;
    set.targets.push_back({c.name, c.projection, index});
  }
  std::sort(set.targets.begin(), set.targets.end(), [](const LayerTarget& a, const LayerTarget& b) {
    if (a.layer_index != b.layer_index) return a.layer_index < b.layer_index;
    if (a.projection != b.projection) return a.projection == Projection::K;
    return a.tensor_name < b.tensor_name;
  });
  if (set.empty()) throw Error(ErrorKind::NoMatch, "no tensor matches the cross-attention selection");
  return set;
}

LayerSet select_cross_attention(const WeightBundle& bundle, std::string_view pattern, ProjectionFilter filter,
                                const std::optional<std::set<std::size_t>>& layer_filter) {
  std::vector<std::string> names;
  names.reserve(bundle.entries.size());
  for (const auto& [name, _] : bundle.entries) names.push_back(name);
  auto set = select_cross_attention(names, pattern, filter, layer_filter);
  layer_set_width(bundle, set);
  return set;
}

std::size_t layer_set_width(const WeightBundle& bundle, const LayerSet& layers) {
  std::optional<std::size_t> width;
  for (const auto& t : layers.targets) {
    const auto& entry = bundle.at(t.tensor_name);
    if (!entry.is_matrix()) throw Error(ErrorKind::ShapeMismatch, "'" + t.tensor_name + "' is not 2-D");
    const auto cols = static_cast<std::size_t>(entry.shape[1]);
    if (width && *width != cols) {
      throw Error(ErrorKind::DimensionMismatch, "'" + t.tensor_name + "' has " + std::to_string(cols) +
                                                    " columns, other selected tensors have " +
                                                    std::to_string(*width));
    }
    width = cols;
  }
  return width.value_or(0);
}

}  // namespace rededit
