#include <string>

#include "rededit/attributes.hpp"
#include "rededit/error.hpp"

namespace rededit {

namespace {

constexpr std::string_view kTemplate =
    "You are a professional linguistics expert. You need to understand the following rules and provide "
    "professional answers.\n"
    "\n"
    "(Definition of equivalent semantic relationship fields) According to the semantic field theory, there are "
    "equivalent semantic relationship fields of causality, subordination, collocation, part-whole, context, etc. "
    "between two related concepts.\n"
    "\n"
    "(In-context instance 1) For instance, between the concepts of a cat and a zebra, there are corresponding "
    "fields of equivalent attributes such as diet and actions. On the habits attribute dimension, cats like eating "
    "fish and zebras like eating grass constitute a pair of functionally equivalent knowledge units.\n"
    "(In-context instance 2) Regarding an abstract group of concepts, like \"propriety\" and \"indecorum\", these "
    "concepts have opposing situational attributes, for example, in the aspects of social contexts, behaviors, and "
    "outward appearances. The phrases proper posture and indecorous posture constitute a pair of semantically "
    "symmetrical descriptive units.\n"
    "\n"
    "Based on the understanding and reflection of the above definitions and examples, formulate a chain-of-thought "
    "for retrieving the consistent relationship fields between the concepts {A} and {B}, and providing a "
    "comprehensive description of equivalent relationships. Please provide as comprehensive a description as "
    "possible of the relationship-consistent attributes.";

constexpr std::string_view kOutputClause =
    "\n"
    "\n"
    "---\n"
    "Output format: after your reasoning, list every attribute pair as one JSON array. Each element must be an "
    "object with exactly these string keys: \"field\" (the relationship field), \"trigger_attribute\" (the "
    "attribute of the first concept) and \"backdoor_attribute\" (the equivalent attribute of the second concept).";

void replace_once(std::string& text, std::string_view token, std::string_view value) {
  const auto pos = text.find(token);
  if (pos != std::string::npos) text.replace(pos, token.size(), value);
}

}  // namespace

std::string build_agent_prompt(std::string_view concept_a, std::string_view concept_b) {
  if (concept_a.empty() || concept_b.empty()) {
    throw Error(ErrorKind::EmptyConcept, "both concepts must be nonempty");
  }
  std::string prompt(kTemplate);
  // {B} first: {A} precedes it, so neither value can be rewritten by the other.
  replace_once(prompt, "{B}", concept_b);
  replace_once(prompt, "{A}", concept_a);
  prompt += kOutputClause;
  return prompt;
}

}  // namespace rededit
