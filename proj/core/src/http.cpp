#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "wildharvest/http.hpp"

#include <cctype>
#include <cstdlib>
#include <thread>

#include "wildharvest/errors.hpp"

namespace wildharvest {

Url Url::parse(const std::string& text) {
  Url u;
  const auto sep = text.find("://");
  if (sep == std::string::npos) throw ConfigError("not an absolute URL: '" + text + "'");
  u.scheme = text.substr(0, sep);
  for (auto& c : u.scheme) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (u.scheme != "http" && u.scheme != "https") throw ConfigError("unsupported URL scheme in '" + text + "'");
  const auto host_begin = sep + 3;
  const auto path_begin = text.find_first_of("/?#", host_begin);
  std::string authority = text.substr(host_begin, path_begin == std::string::npos ? std::string::npos
                                                                                   : path_begin - host_begin);
  if (auto at = authority.rfind('@'); at != std::string::npos) authority = authority.substr(at + 1);
  u.port = u.scheme == "https" ? 443 : 80;
  if (auto colon = authority.rfind(':'); colon != std::string::npos && authority.find(']') == std::string::npos) {
    const std::string port = authority.substr(colon + 1);
    authority = authority.substr(0, colon);
    if (port.empty() || port.find_first_not_of("0123456789") != std::string::npos)
      throw ConfigError("bad port in URL '" + text + "'");
    u.port = std::stoi(port);
  }
  if (authority.empty()) throw ConfigError("URL without host: '" + text + "'");
  u.host = authority;
  u.target = path_begin == std::string::npos ? "/" : text.substr(path_begin);
  if (auto hash = u.target.find('#'); hash != std::string::npos) u.target.erase(hash);
  if (u.target.empty() || u.target[0] != '/') u.target = "/" + u.target;
  return u;
}

std::string Url::origin() const {
  const bool default_port = (scheme == "http" && port == 80) || (scheme == "https" && port == 443);
  return scheme + "://" + host + (default_port ? "" : ":" + std::to_string(port));
}

std::string Url::path() const {
  const auto q = target.find('?');
  return q == std::string::npos ? target : target.substr(0, q);
}

std::string resolve_url(const std::string& base, const std::string& ref) {
  if (ref.find("://") != std::string::npos) return ref;
  const Url b = Url::parse(base);
  if (ref.rfind("//", 0) == 0) return b.scheme + ":" + ref;
  if (!ref.empty() && ref[0] == '/') return b.origin() + ref;
  std::string dir = b.path();
  dir = dir.substr(0, dir.rfind('/') + 1);
  return b.origin() + dir + ref;
}

std::string url_encode(const std::string& s) {
  static constexpr char hex[] = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : s) {
    if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~') {
      out.push_back(static_cast<char>(c));
    } else {
      out.push_back('%');
      out.push_back(hex[c >> 4]);
      out.push_back(hex[c & 15]);
    }
  }
  return out;
}

std::string with_query(const std::string& url, const std::map<std::string, std::string>& params) {
  std::string out = url;
  char sep = url.find('?') == std::string::npos ? '?' : '&';
  for (const auto& [k, v] : params) {
    out.push_back(sep);
    out += url_encode(k) + "=" + url_encode(v);
    sep = '&';
  }
  return out;
}

RateLimiter::RateLimiter(double requests_per_second) {
  if (requests_per_second > 0)
    interval_ = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
        std::chrono::duration<double>(1.0 / requests_per_second));
}

void RateLimiter::acquire() {
  if (interval_ == std::chrono::steady_clock::duration::zero()) return;
  std::chrono::steady_clock::time_point slot;
  {
    std::lock_guard lock(mutex_);
    const auto now = std::chrono::steady_clock::now();
    slot = std::max(now, next_);
    next_ = slot + interval_;
  }
  std::this_thread::sleep_until(slot);
}

HttpClient::HttpClient(RetryPolicy retry, std::optional<std::string> bearer_token, std::chrono::seconds timeout)
    : retry_(retry), bearer_(std::move(bearer_token)), timeout_(timeout),
      sleeper_([](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }) {}

std::optional<HttpResponse> HttpClient::send(const Url& url, const std::string* json_body, std::string& error) {
  if (limiter_) limiter_->acquire();
  httplib::Client client(url.origin());
  client.set_connection_timeout(timeout_);
  client.set_read_timeout(timeout_);
  client.set_write_timeout(timeout_);
  client.set_follow_location(true);
  httplib::Headers headers;
  if (bearer_) headers.emplace("Authorization", "Bearer " + *bearer_);
  httplib::Result res = json_body ? client.Post(url.target, headers, *json_body, "application/json")
                                  : client.Get(url.target, headers);
  if (!res) {
    error = httplib::to_string(res.error());
    return std::nullopt;
  }
  return HttpResponse{res->status, res->body, res->get_header_value("Content-Type")};
}

HttpResponse HttpClient::get(const std::string& url_text) {
  const Url url = Url::parse(url_text);
  std::string last_error;
  auto backoff = retry_.initial_backoff;
  const int attempts = std::max(1, retry_.attempts);
  for (int attempt = 1; attempt <= attempts; ++attempt) {
    ++attempts_made_;
    std::string error;
    auto res = send(url, nullptr, error);
    if (res && res->status != 429 && res->status < 500) return *res;
    last_error = res ? "HTTP " + std::to_string(res->status) : error;
    if (attempt < attempts) {
      sleeper_(backoff);
      backoff = std::chrono::milliseconds(static_cast<long long>(static_cast<double>(backoff.count()) * retry_.multiplier));
    }
  }
  throw FetchError("GET " + url_text + " failed after " + std::to_string(attempts) + " attempts: " + last_error);
}

HttpResponse HttpClient::post_json(const std::string& url_text, const json& body) {
  const Url url = Url::parse(url_text);
  const std::string payload = dump_line(body);
  std::string error;
  auto res = send(url, &payload, error);
  if (!res) throw BackendUnavailable("POST " + url_text + " failed: " + error);
  if (res->status < 200 || res->status >= 300)
    throw BackendUnavailable("POST " + url_text + " returned HTTP " + std::to_string(res->status) + ": " + res->body);
  return *res;
}

std::string credential_env_var(const std::string& adapter_name) {
  std::string var = "WILDHARVEST_";
  for (unsigned char c : adapter_name) var.push_back(std::isalnum(c) ? static_cast<char>(std::toupper(c)) : '_');
  return var + "_TOKEN";
}

std::optional<std::string> credential_from_env(const std::string& adapter_name) {
  if (const char* v = std::getenv(credential_env_var(adapter_name).c_str()); v && *v) return std::string(v);
  return std::nullopt;
}

}  // namespace wildharvest
