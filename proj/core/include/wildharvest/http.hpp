#pragma once

#include <atomic>
#include <chrono>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>

#include "wildharvest/jsonl.hpp"

namespace wildharvest {

struct Url {
  std::string scheme;  // http or https
  std::string host;
  int port = 0;
  std::string target;  // path + query, always starts with '/'

  static Url parse(const std::string& text);
  std::string origin() const;
  std::string path() const;
};

/// Resolves `ref` (absolute, scheme-relative, root-relative or relative) against `base`.
std::string resolve_url(const std::string& base, const std::string& ref);
std::string url_encode(const std::string& s);
/// Appends query parameters with '?' or '&' as needed.
std::string with_query(const std::string& url, const std::map<std::string, std::string>& params);

struct HttpResponse {
  int status = 0;
  std::string body;
  std::string content_type;
};

/// Exponential backoff for idempotent GETs.
struct RetryPolicy {
  int attempts = 3;
  std::chrono::milliseconds initial_backoff{1000};
  double multiplier = 2.0;
};

/// Spaces requests at least 1/rate seconds apart. A rate of 0 disables limiting.
class RateLimiter {
 public:
  explicit RateLimiter(double requests_per_second = 0.0);
  void acquire();

 private:
  std::chrono::steady_clock::duration interval_{};
  std::chrono::steady_clock::time_point next_{};
  std::mutex mutex_;
};

class HttpClient {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  explicit HttpClient(RetryPolicy retry = {}, std::optional<std::string> bearer_token = std::nullopt,
                      std::chrono::seconds timeout = std::chrono::seconds{30});

  /// GET with retries on transport errors, 429 and 5xx. 4xx responses are returned
  /// to the caller. Throws FetchError when every attempt fails.
  HttpResponse get(const std::string& url);

  /// Single-attempt POST of a JSON body; throws BackendUnavailable on transport
  /// failure or a non-2xx status. Parsing the body is left to the caller.
  HttpResponse post_json(const std::string& url, const json& body);

  void set_sleeper(Sleeper s) { sleeper_ = std::move(s); }
  void set_rate_limiter(RateLimiter* limiter) { limiter_ = limiter; }
  /// Number of GET attempts issued (for tests and logs).
  int attempts_made() const { return attempts_made_.load(); }

 private:
  std::optional<HttpResponse> send(const Url& url, const std::string* json_body, std::string& error);

  RetryPolicy retry_;
  std::optional<std::string> bearer_;
  std::chrono::seconds timeout_;
  Sleeper sleeper_;
  RateLimiter* limiter_ = nullptr;
  std::atomic<int> attempts_made_{0};
};

/// Reads WILDHARVEST_<ADAPTER>_TOKEN (adapter name upper-cased, other characters mapped to '_').
std::optional<std::string> credential_from_env(const std::string& adapter_name);
std::string credential_env_var(const std::string& adapter_name);

}  // namespace wildharvest
