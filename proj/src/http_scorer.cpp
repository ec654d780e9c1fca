#include <cmath>
#include <regex>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "rmshift/error.hpp"
#include "rmshift/scorer.hpp"

namespace rmshift {
namespace {

httplib::Client MakeClient(const std::string& base_url, const HttpOptions& options) {
  httplib::Client client(base_url);
  auto to_sec_usec = [](std::chrono::milliseconds ms) {
    return std::pair<time_t, time_t>(ms.count() / 1000, (ms.count() % 1000) * 1000);
  };
  auto [cs, cus] = to_sec_usec(options.connect_timeout);
  auto [rs, rus] = to_sec_usec(options.read_timeout);
  client.set_connection_timeout(cs, cus);
  client.set_read_timeout(rs, rus);
  client.set_write_timeout(rs, rus);
  return client;
}

}  // namespace

HttpScorer::HttpScorer(std::string base_url, HttpOptions options) : options_(options) {
  static const std::regex kUrl(R"(^(http://[A-Za-z0-9._\-]+|http://\[[0-9A-Fa-f:]+\])(:[0-9]{1,5})?(/[^\s]*)?$)");
  std::smatch m;
  if (!std::regex_match(base_url, m, kUrl)) {
    throw Error(ErrorCode::kInvalidConfig, "malformed scorer URL '" + base_url + "'");
  }
  if (options_.attempts < 1) {
    throw Error(ErrorCode::kInvalidConfig, "scorer needs at least one attempt");
  }
  base_url_ = m[1].str() + m[2].str();
  path_prefix_ = m[3].str();
  while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
}

HttpScorer::TextScore HttpScorer::ScoreText(const std::string& prompt,
                                            const std::string& response) const {
  const std::string body = nlohmann::json{{"prompt", prompt}, {"response", response}}.dump();
  const std::string path = path_prefix_ + "/score";
  std::string last_failure;
  auto backoff = options_.initial_backoff;

  for (int attempt = 0; attempt < options_.attempts; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
      ++total_retries_;
    }
    httplib::Client client = MakeClient(base_url_, options_);
    auto res = client.Post(path, body, "application/json");
    if (!res) {
      last_failure = "connection failed: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500) {
      last_failure = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200) {
      throw Error(ErrorCode::kTransportError,
                  "scorer rejected request with HTTP " + std::to_string(res->status) + ": " +
                      res->body);
    }
    auto reply = nlohmann::json::parse(res->body, nullptr, false);
    if (reply.is_discarded() || !reply.is_object() || !reply.contains("logit")) {
      throw Error(ErrorCode::kTransportError, "scorer reply is not {\"logit\": number}");
    }
    const auto& logit = reply["logit"];
    if (logit.is_null() || logit.is_string()) {
      throw Error(ErrorCode::kNonFiniteLogit, "scorer returned logit " + logit.dump());
    }
    if (!logit.is_number()) {
      throw Error(ErrorCode::kTransportError, "scorer logit is not a number");
    }
    const double value = logit.get<double>();
    if (!std::isfinite(value)) {
      throw Error(ErrorCode::kNonFiniteLogit, "scorer returned a non-finite logit");
    }
    return {value, attempt};
  }
  throw Error(ErrorCode::kTransportError,
              last_failure + " after " + std::to_string(options_.attempts) + " attempts (" +
                  std::to_string(options_.attempts - 1) + " retries)");
}

Logits HttpScorer::ScorePair(const PreferencePair& pair) const {
  try {
    return {ScoreText(pair.prompt, pair.response_0).logit,
            ScoreText(pair.prompt, pair.response_1).logit};
  } catch (const Error& e) {
    throw Error(e.code(), "id '" + pair.id + "': " + e.what());
  }
}

HealthStatus HttpScorer::Health() const {
  httplib::Client client = MakeClient(base_url_, options_);
  auto res = client.Get(path_prefix_ + "/health");
  if (!res) {
    throw Error(ErrorCode::kTransportError,
                "health check failed: " + httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    throw Error(ErrorCode::kTransportError,
                "health check returned HTTP " + std::to_string(res->status));
  }
  auto reply = nlohmann::json::parse(res->body, nullptr, false);
  if (reply.is_discarded() || !reply.is_object()) {
    throw Error(ErrorCode::kTransportError, "health reply is not a JSON object");
  }
  return {reply.value("status", ""), reply.value("model", "")};
}

}  // namespace rmshift
