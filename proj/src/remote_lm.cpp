#include "pex/remote_lm.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <mutex>
#include <thread>

#include <httplib.h>

#include "pex/errors.hpp"
#include "pex/io.hpp"
#include "pex/rng.hpp"

namespace pex {

namespace {

// host part and path part of an http(s) URL
std::pair<std::string, std::string> split_endpoint(const std::string& url) {
  const std::size_t scheme = url.find("://");
  if (scheme == std::string::npos) {
    throw ConfigError("remote endpoint must be an http(s) URL: " + url);
  }
  const std::size_t path_start = url.find('/', scheme + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace

struct RemoteLm::Impl {
  RemoteConfig config;
  std::string host;
  std::string path;

  mutable std::mutex inflight_mutex;
  mutable std::condition_variable inflight_cv;
  mutable int inflight = 0;
  mutable std::atomic<std::size_t> network_calls{0};
  mutable std::mutex cache_mutex;

  explicit Impl(RemoteConfig cfg) : config(std::move(cfg)) {
    if (config.max_in_flight < 1) {
      throw ConfigError("max_in_flight must be at least 1");
    }
    std::tie(host, path) = split_endpoint(config.endpoint);
    if (!config.cache_dir.empty()) {
      std::filesystem::create_directories(config.cache_dir);
    }
  }

  std::filesystem::path cache_path(const std::string& request_body) const {
    return config.cache_dir / (hash_hex(fnv1a64(request_body)) + ".json");
  }

  std::optional<Json> cache_lookup(const std::string& request_body) const {
    if (config.cache_dir.empty()) return std::nullopt;
    std::lock_guard<std::mutex> lock(cache_mutex);
    const auto path = cache_path(request_body);
    if (!std::filesystem::exists(path)) return std::nullopt;
    try {
      Json entry = Json::parse(read_file(path));
      if (entry.at("request").dump() != request_body) return std::nullopt;
      return entry.at("response");
    } catch (const std::exception&) {
      return std::nullopt;  // unreadable cache entry, refetch
    }
  }

  void cache_store(const std::string& request_body, const Json& response) const {
    if (config.cache_dir.empty()) return;
    std::lock_guard<std::mutex> lock(cache_mutex);
    Json entry;
    entry["request"] = Json::parse(request_body);
    entry["response"] = response;
    atomic_write_file(cache_path(request_body), entry.dump());
  }

  Json post(const Json& request) const {
    const std::string body = request.dump();
    if (auto cached = cache_lookup(body)) return *cached;

    {
      std::unique_lock<std::mutex> lock(inflight_mutex);
      inflight_cv.wait(lock,
                       [this] { return inflight < config.max_in_flight; });
      ++inflight;
    }
    struct Release {
      const Impl* impl;
      ~Release() {
        {
          std::lock_guard<std::mutex> lock(impl->inflight_mutex);
          --impl->inflight;
        }
        impl->inflight_cv.notify_one();
      }
    } release{this};

    std::string last_error;
    for (int attempt = 0; attempt <= config.max_retries; ++attempt) {
      if (attempt > 0) {
        const int delay = config.backoff_base_ms * (1 << (attempt - 1));
        std::this_thread::sleep_for(std::chrono::milliseconds(delay));
      }
      httplib::Client client(host);
      client.set_connection_timeout(config.timeout_seconds, 0);
      client.set_read_timeout(config.timeout_seconds, 0);
      if (!config.api_key.empty()) {
        client.set_bearer_token_auth(config.api_key);
      }
      httplib::Result result = client.Post(path, body, "application/json");
      ++network_calls;
      if (!result) {
        last_error = "connection failed: " + httplib::to_string(result.error());
        continue;  // transient, retry
      }
      if (result->status >= 500) {
        last_error = "server error " + std::to_string(result->status);
        continue;  // transient, retry
      }
      if (result->status != 200) {
        throw TransportError("remote backend returned status " +
                             std::to_string(result->status) + ": " +
                             result->body);
      }
      Json response;
      try {
        response = Json::parse(result->body);
      } catch (const std::exception& e) {
        throw TransportError(std::string("remote backend returned invalid "
                                         "JSON: ") + e.what());
      }
      cache_store(body, response);
      return response;
    }
    throw TransportError("remote backend unreachable after " +
                         std::to_string(config.max_retries + 1) +
                         " attempts: " + last_error);
  }
};

RemoteLm::RemoteLm(RemoteConfig config)
    : impl_(std::make_unique<Impl>(std::move(config))) {}

RemoteLm::~RemoteLm() = default;

std::string RemoteLm::id() const { return impl_->config.model_id; }

std::size_t RemoteLm::network_calls() const {
  return impl_->network_calls.load();
}

ScoredSequence RemoteLm::sequence_logprob(std::string_view prompt,
                                          std::string_view continuation,
                                          const ScoreOptions&) const {
  if (continuation.empty()) {
    throw DomainError("sequence_logprob: empty continuation");
  }
  Json request;
  request["prompt"] = std::string(prompt);
  request["continuation"] = std::string(continuation);
  request["max_tokens"] = 0;
  request["temperature"] = 0.0;
  request["logprobs"] = true;
  request["echo_continuation"] = true;
  const Json response = impl_->post(request);

  ScoredSequence out;
  try {
    out.tokens = response.at("tokens").get<std::vector<std::string>>();
    out.token_logprobs =
        response.at("token_logprobs").get<std::vector<double>>();
  } catch (const std::exception& e) {
    throw TransportError(std::string("malformed scoring response: ") +
                         e.what());
  }
  if (out.tokens.size() != out.token_logprobs.size()) {
    throw TransportError("scoring response arrays differ in length");
  }
  out.total = 0.0;
  for (double lp : out.token_logprobs) out.total += lp;
  return out;
}

SampleResult RemoteLm::sample(std::string_view prompt, double temperature,
                              std::uint64_t seed,
                              std::size_t max_tokens) const {
  if (temperature <= 0.0) {
    throw DomainError("sample: temperature must be positive");
  }
  Json request;
  request["prompt"] = std::string(prompt);
  request["max_tokens"] = max_tokens;
  request["temperature"] = temperature;
  request["seed"] = seed;
  request["logprobs"] = true;
  const Json response = impl_->post(request);

  SampleResult out;
  try {
    out.text = response.at("text").get<std::string>();
  } catch (const std::exception& e) {
    throw TransportError(std::string("malformed sampling response: ") +
                         e.what());
  }
  out.truncated = response.value("truncated", false);
  return out;
}

}  // namespace pex
