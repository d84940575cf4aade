#include <doctest.h>

#include <atomic>
#include <filesystem>
#include <thread>

#include <httplib.h>

#include "pex/errors.hpp"
#include "pex/remote_lm.hpp"
#include "pex/tokenize.hpp"
#include "pex/io.hpp"

using namespace pex;

namespace {

// Scripted protocol server: scoring requests echo the continuation with a
// fixed -0.5 per word; sampling requests return a seed-tagged text. Can be
// told to fail the next N requests with a 503.
struct ScriptedServer {
  httplib::Server server;
  std::thread thread;
  std::atomic<int> hits{0};
  std::atomic<int> fail_next{0};
  int port = 0;

  ScriptedServer() {
    server.Post("/v1/complete", [this](const httplib::Request& req,
                                       httplib::Response& res) {
      ++hits;
      if (fail_next.load() > 0) {
        --fail_next;
        res.status = 503;
        return;
      }
      const Json body = Json::parse(req.body);
      Json out;
      if (body.contains("continuation")) {
        const auto tokens =
            tokenize(body.at("continuation").get<std::string>());
        out["tokens"] = tokens;
        out["token_logprobs"] = std::vector<double>(tokens.size(), -0.5);
        out["text"] = body.at("continuation");
      } else {
        out["tokens"] = Json::array();
        out["token_logprobs"] = Json::array();
        out["text"] = "sampled with seed " +
                      std::to_string(body.at("seed").get<std::uint64_t>());
        out["truncated"] = body.at("max_tokens").get<int>() < 2;
      }
      res.set_content(out.dump(), "application/json");
    });
    port = server.bind_to_any_port("127.0.0.1");
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }

  ~ScriptedServer() {
    server.stop();
    thread.join();
  }

  RemoteConfig config() const {
    RemoteConfig c;
    c.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/v1/complete";
    c.backoff_base_ms = 1;
    return c;
  }
};

}  // namespace

TEST_CASE("remote scoring sums the reported token log-probs") {
  ScriptedServer server;
  const RemoteLm lm(server.config());
  const ScoredSequence scored = lm.sequence_logprob("any prompt", "one two three");
  REQUIRE(scored.tokens.size() == 3);
  CHECK(scored.total == doctest::Approx(-1.5).epsilon(1e-12));
  CHECK_THROWS_AS(lm.sequence_logprob("p", ""), DomainError);
}

TEST_CASE("remote sampling carries text and truncation flag") {
  ScriptedServer server;
  const RemoteLm lm(server.config());
  const SampleResult r = lm.sample("prompt", 1.0, 42, 16);
  CHECK(r.text == "sampled with seed 42");
  CHECK_FALSE(r.truncated);
  const SampleResult t = lm.sample("prompt", 1.0, 43, 1);
  CHECK(t.truncated);
  CHECK_THROWS_AS(lm.sample("prompt", 0.0, 1, 4), DomainError);
}

TEST_CASE("identical requests are served from the content-hash cache") {
  ScriptedServer server;
  RemoteConfig config = server.config();
  config.cache_dir = std::filesystem::temp_directory_path() / "pex-remote-cache";
  std::filesystem::remove_all(config.cache_dir);
  const RemoteLm lm(std::move(config));

  const double first = lm.sequence_logprob("p", "a b").total;
  const int hits_after_first = server.hits.load();
  const double second = lm.sequence_logprob("p", "a b").total;
  CHECK(first == second);
  CHECK(server.hits.load() == hits_after_first);  // cache hit, no new call

  // A fresh client over the same cache directory also avoids the network.
  RemoteConfig reuse = server.config();
  reuse.cache_dir = std::filesystem::temp_directory_path() / "pex-remote-cache";
  const RemoteLm lm2(std::move(reuse));
  CHECK(lm2.sequence_logprob("p", "a b").total == first);
  CHECK(lm2.network_calls() == 0);
  std::filesystem::remove_all(
      std::filesystem::temp_directory_path() / "pex-remote-cache");
}

TEST_CASE("transient failures are retried with backoff then succeed") {
  ScriptedServer server;
  const RemoteLm lm(server.config());
  server.fail_next = 2;
  const ScoredSequence scored = lm.sequence_logprob("p", "x");
  CHECK(scored.total == doctest::Approx(-0.5));
  CHECK(server.hits.load() == 3);  // two 503s plus the success
}

TEST_CASE("exhausted retries surface a transport error") {
  ScriptedServer server;
  RemoteConfig config = server.config();
  config.max_retries = 2;
  const RemoteLm lm(std::move(config));
  server.fail_next = 10;
  CHECK_THROWS_AS(lm.sequence_logprob("p", "x"), TransportError);
  CHECK(server.hits.load() == 3);  // initial attempt + 2 retries
}

TEST_CASE("an unreachable endpoint raises a transport error") {
  RemoteConfig config;
  config.endpoint = "http://127.0.0.1:9/v1/complete";  // discard port
  config.max_retries = 1;
  config.backoff_base_ms = 1;
  config.timeout_seconds = 1;
  const RemoteLm lm(std::move(config));
  CHECK_THROWS_AS(lm.sequence_logprob("p", "x"), TransportError);
}

TEST_CASE("concurrent scoring respects the in-flight limit and stays correct") {
  ScriptedServer server;
  RemoteConfig config = server.config();
  config.max_in_flight = 2;
  const RemoteLm lm(std::move(config));

  std::vector<std::thread> workers;
  std::vector<double> totals(8, 0.0);
  for (int t = 0; t < 8; ++t) {
    workers.emplace_back([&lm, &totals, t] {
      totals[static_cast<std::size_t>(t)] =
          lm.sequence_logprob("p" + std::to_string(t), "a b c").total;
    });
  }
  for (auto& w : workers) w.join();
  for (double total : totals) CHECK(total == doctest::Approx(-1.5));
}
