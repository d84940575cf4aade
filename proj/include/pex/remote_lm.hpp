#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "pex/backend.hpp"

namespace pex {

// Minimal scoring/sampling protocol: HTTP POST of a JSON body
//   {"prompt", "continuation"?, "max_tokens", "temperature", "seed"?,
//    "logprobs": true, "echo_continuation": true}
// answered with {"tokens": [...], "token_logprobs": [...], "text", ...}.
// An adapter note in the README maps this onto common
// completions-with-logprobs APIs.
struct RemoteConfig {
  std::string endpoint;  // e.g. http://127.0.0.1:8080/v1/score
  std::string api_key;   // sent as a bearer token when nonempty
  std::string model_id = "remote";
  int max_in_flight = 4;
  int max_retries = 3;     // transient transport failures
  int backoff_base_ms = 100;  // doubles per retry
  int timeout_seconds = 60;
  std::filesystem::path cache_dir;  // empty disables the response cache
};

// HTTP-backed LmBackend. Scoring and sampling responses are cached by a
// content hash of the request body (one JSON file per hash, request echoed
// inside so hash collisions read as misses). Transient failures retry with
// exponential backoff; concurrent callers are throttled by max_in_flight.
class RemoteLm : public LmBackend {
 public:
  explicit RemoteLm(RemoteConfig config);
  ~RemoteLm() override;

  RemoteLm(const RemoteLm&) = delete;
  RemoteLm& operator=(const RemoteLm&) = delete;

  BackendKind kind() const override { return BackendKind::remote; }
  Capabilities capabilities() const override { return {true, true, false}; }
  std::string id() const override;

  ScoredSequence sequence_logprob(std::string_view prompt,
                                  std::string_view continuation,
                                  const ScoreOptions& opts = {}) const override;

  SampleResult sample(std::string_view prompt, double temperature,
                      std::uint64_t seed,
                      std::size_t max_tokens) const override;

  // Requests actually sent over the wire (cache misses), for tests.
  std::size_t network_calls() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace pex
