#pragma once

#include <chrono>
#include <cstddef>
#include <string>

namespace rededit {

inline constexpr const char* kApiKeyEnv = "REDEDIT_API_KEY";

struct AgentRequest {
  /// Base URL of an OpenAI-compatible API, e.g. "https://api.deepseek.com/v1".
  std::string endpoint_url;
  std::string model_name;
  std::string prompt;
  std::chrono::milliseconds timeout{60'000};
  /// Retries after the first attempt on 429, 5xx and connection failures.
  std::size_t max_retries = 3;
  /// Delay before retry i is backoff_base * 2^i.
  std::chrono::milliseconds backoff_base{500};
  std::string api_key_env = kApiKeyEnv;
};

/// POST {endpoint}/chat/completions with a single user message and return the
/// first choice's message content.
///
/// Throws MissingApiKey, InvalidInput (bad URL), Timeout (no response after
/// every attempt), HttpStatus (non-retryable status, or retryable status
/// after the last attempt), MalformedResponseBody.
std::string query_attribute_agent(const AgentRequest& request);

}  // namespace rededit
