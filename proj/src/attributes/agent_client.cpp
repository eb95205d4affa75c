#include "rededit/agent_client.hpp"

#include <cstdlib>
#include <regex>
#include <string>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "rededit/error.hpp"

namespace rededit {

namespace {

using json = nlohmann::json;

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;    // prefix without trailing slash
};

Endpoint split_endpoint(const std::string& url) {
  static const std::regex re(R"(^(https?://[^/\s]+)(/[^\s]*)?$)", std::regex::icase);
  std::smatch m;
  if (!std::regex_match(url, m, re)) {
    throw Error(ErrorKind::InvalidInput, "endpoint must look like http(s)://host[:port][/path], got '" + url + "'");
  }
  Endpoint ep{m[1].str(), m[2].str()};
  while (!ep.path.empty() && ep.path.back() == '/') ep.path.pop_back();
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
  if (ep.origin.rfind("https", 0) == 0 || ep.origin.rfind("HTTPS", 0) == 0) {
    throw Error(ErrorKind::InvalidInput, "this build has no TLS support; use an http:// endpoint");
  }
#endif
  return ep;
}

bool retryable(int status) { return status == 429 || status >= 500; }

std::string extract_content(const std::string& body) {
  json doc;
  try {
    doc = json::parse(body);
  } catch (const json::parse_error&) {
    throw Error(ErrorKind::MalformedResponseBody, "response body is not JSON");
  }
  if (!doc.is_object() || !doc.contains("choices") || !doc["choices"].is_array() || doc["choices"].empty()) {
    throw Error(ErrorKind::MalformedResponseBody, "response has no choices");
  }
  const auto& first = doc["choices"][0];
  if (!first.is_object() || !first.contains("message") || !first["message"].is_object() ||
      !first["message"].contains("content") || !first["message"]["content"].is_string()) {
    throw Error(ErrorKind::MalformedResponseBody, "first choice has no message content");
  }
  return first["message"]["content"].get<std::string>();
}

}  // namespace

std::string query_attribute_agent(const AgentRequest& request) {
  if (request.timeout.count() <= 0) throw Error(ErrorKind::InvalidInput, "timeout must be positive");
  const char* key = std::getenv(request.api_key_env.c_str());
  if (key == nullptr || *key == '\0') {
    throw Error(ErrorKind::MissingApiKey, "environment variable " + request.api_key_env + " is not set");
  }
  const Endpoint ep = split_endpoint(request.endpoint_url);

  httplib::Client client(ep.origin);
  const auto seconds = std::chrono::duration_cast<std::chrono::seconds>(request.timeout);
  const auto micros = std::chrono::duration_cast<std::chrono::microseconds>(request.timeout - seconds);
  client.set_connection_timeout(seconds.count(), micros.count());
  client.set_read_timeout(seconds.count(), micros.count());
  client.set_write_timeout(seconds.count(), micros.count());
  client.set_bearer_token_auth(key);

  const json body = {{"model", request.model_name},
                     {"messages", json::array({{{"role", "user"}, {"content", request.prompt}}})}};
  const std::string payload = body.dump();
  const std::string path = ep.path + "/chat/completions";

  int last_status = 0;
  std::string last_failure;
  for (std::size_t attempt = 0; attempt <= request.max_retries; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(request.backoff_base * (1LL << (attempt - 1)));
    auto res = client.Post(path, payload, "application/json");
    if (!res) {
      last_status = 0;
      last_failure = httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 200 && res->status < 300) return extract_content(res->body);
    last_status = res->status;
    if (!retryable(res->status)) break;
  }
  if (last_status == 0) {
    throw Error(ErrorKind::Timeout, "no response from " + ep.origin + " after " +
                                        std::to_string(request.max_retries + 1) + " attempts (" + last_failure + ")");
  }
  throw Error(ErrorKind::HttpStatus, "agent endpoint returned HTTP " + std::to_string(last_status), last_status);
}

}  // namespace rededit
