#include <doctest.h>

#include <httplib.h>

#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

#include "codepipe/corpus.hpp"
#include "codepipe/error.hpp"
#include "codepipe/evol.hpp"
#include "json.hpp"
#include "../oracles.hpp"

using namespace codepipe;

namespace {

class FlakyClient final : public GenerationClient {
 public:
  explicit FlakyClient(int failures) : failures_(failures) {}
  std::string generate(const std::string& prompt, const GenerationParams&) override {
    if (calls_++ < failures_) throw GenerationError("transient");
    return "ok:" + prompt;
  }
  std::string identity() const override { return "flaky"; }
  int calls() const { return calls_; }

 private:
  int failures_;
  int calls_ = 0;
};

class EmptyClient final : public GenerationClient {
 public:
  std::string generate(const std::string&, const GenerationParams&) override { return "  \n"; }
  std::string identity() const override { return "empty"; }
};

}  // namespace

TEST_CASE("strategies: templates carry one placeholder each") {
  const auto defaults = default_strategies();
  CHECK(defaults.size() == 4);
  for (const auto& s : defaults) CHECK_NOTHROW(s.validate());
  const auto shipped = load_strategies(CODEPIPE_DATA_DIR "/evol_strategies.json");
  for (std::size_t i = 0; i < 4; ++i) CHECK(shipped[i].template_text == defaults[i].template_text);
  CHECK_THROWS_AS((EvolStrategy{StrategyKind::Breadth, "no placeholder"}.validate()), Error);
  CHECK_THROWS_AS((EvolStrategy{StrategyKind::Breadth, "{prompt}{prompt}"}.validate()), Error);
  CHECK(parse_strategy("COMPLEXITY") == StrategyKind::Complexity);
  CHECK_THROWS_AS(parse_strategy("NOPE"), Error);
}

TEST_CASE("evolve_prompt: echo client keeps directive and seed") {
  EchoClient echo;
  const auto strategies = default_strategies();
  const auto& deepen = find_strategy(strategies, StrategyKind::Deepening);
  const auto out = evolve_prompt("Reverse a linked list.", deepen, echo, 1);
  REQUIRE(out.size() == 1);
  CHECK(out[0].text.find("Reverse a linked list.") != std::string::npos);
  CHECK(out[0].text.find("more depth") != std::string::npos);
  CHECK(out[0].strategy == StrategyKind::Deepening);
  CHECK(out[0].round == 1);
  CHECK(out[0].client == "mock-echo");
}

TEST_CASE("evolve_prompt: each round builds on the previous output") {
  EchoClient echo;
  const auto strategies = default_strategies();
  const auto& s = find_strategy(strategies, StrategyKind::Breadth);
  const auto out = evolve_prompt("seed", s, echo, 2);
  REQUIRE(out.size() == 2);
  CHECK(out[1].text == s.render(out[0].text));
  CHECK(out[1].round == 2);
  CHECK_THROWS_AS(evolve_prompt("seed", s, echo, 0), Error);
  EmptyClient empty;
  CHECK_THROWS_AS(evolve_prompt("seed", s, empty, 1), GenerationError);
}

TEST_CASE("plan_campaign: quotas sum to the target") {
  const std::vector<double> mix(4, 0.25);
  const auto plan = plan_campaign(174'000, 100'000, mix, 1);
  CHECK(std::accumulate(plan.per_seed.begin(), plan.per_seed.end(), std::size_t{0}) == 100'000);
  CHECK(plan.assignments.size() == 100'000);
  std::array<std::size_t, 4> per_kind{};
  for (const auto& a : plan.assignments) ++per_kind[static_cast<std::size_t>(a.strategy)];
  for (auto n : per_kind) CHECK(n == 25'000);
  for (auto q : plan.per_seed) CHECK(q <= 1);
  CHECK_THROWS_AS(plan_campaign(0, 5, mix, 1), Error);
}

TEST_CASE("run_campaign: provenance and determinism") {
  MockAnswerClient mock;
  const std::vector<std::string> seeds{"a", "b", "c"};
  const std::vector<double> mix{1, 0, 0, 1};
  const auto plan = plan_campaign(3, 7, mix, 4);
  const auto strategies = default_strategies();
  const auto one = run_campaign(seeds, plan, strategies, mock, 2, {}, 3);
  const auto two = run_campaign(seeds, plan, strategies, mock, 2, {}, 1);
  REQUIRE(one.size() == 7);  // final round of each chain
  for (std::size_t i = 0; i < one.size(); ++i) {
    CHECK(one[i].text == two[i].text);
    CHECK_FALSE(one[i].client.empty());
    CHECK((one[i].strategy == StrategyKind::Breadth || one[i].strategy == StrategyKind::Complexity));
    CHECK(one[i].round == 2);
  }
}

TEST_CASE("generate_answers: one pair per prompt, in order") {
  MockAnswerClient mock;
  CHECK(generate_answers({}, mock).empty());
  std::vector<std::string> prompts;
  for (int i = 0; i < 57; ++i) prompts.push_back("prompt " + std::to_string(i));
  const auto a = generate_answers(prompts, mock, {}, 8);
  const auto b = generate_answers(prompts, mock, {}, 1);
  REQUIRE(a.size() == prompts.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].prompt == prompts[i]);
    CHECK(a[i].completion == b[i].completion);
    CHECK(a[i].client == "mock-answer");
  }
}

TEST_CASE("exact_dedup: small cases") {
  const Sample a{"p", "c", "", 0, "x"}, b{"q", "c", "", 0, "x"};
  const std::vector<Sample> aab{a, a, b};
  const auto out = exact_dedup(aab);
  REQUIRE(out.size() == 2);
  CHECK(out[0].prompt == "p");
  CHECK(out[1].prompt == "q");
  const std::vector<Sample> distinct{a, b};
  CHECK(exact_dedup(distinct).size() == 2);
  // the prompt/completion boundary matters
  const std::vector<Sample> shifted{{"ab", "c", "", 0, ""}, {"a", "bc", "", 0, ""}};
  CHECK(exact_dedup(shifted).size() == 2);
}

TEST_CASE("exact_dedup: matches a set-based oracle and is idempotent") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto samples = oracle::planted_samples(10'000, seed);
    const auto once = exact_dedup(samples);
    CHECK(once.size() == oracle::distinct_samples(samples));
    const auto twice = exact_dedup(once);
    REQUIRE(twice.size() == once.size());
    for (std::size_t i = 0; i < once.size(); ++i) CHECK(twice[i].prompt == once[i].prompt);
  }
}

TEST_CASE("RetryingClient: retries with exponential backoff") {
  std::vector<std::chrono::milliseconds> sleeps;
  FlakyClient flaky(2);
  RetryingClient client(flaky, {3, std::chrono::milliseconds(100), [&](auto d) { sleeps.push_back(d); }});
  CHECK(client.generate("x", {}) == "ok:x");
  CHECK(flaky.calls() == 3);
  REQUIRE(sleeps.size() == 2);
  CHECK(sleeps[0].count() == 100);
  CHECK(sleeps[1].count() == 200);

  FlakyClient dead(100);
  sleeps.clear();
  RetryingClient give_up(dead, {3, std::chrono::milliseconds(10), [&](auto d) { sleeps.push_back(d); }});
  CHECK_THROWS_AS(give_up.generate("x", {}), GenerationError);
  CHECK(dead.calls() == 4);
  CHECK(sleeps.size() == 3);
}

TEST_CASE("HttpGenerationClient: request/response contract against a local server") {
  httplib::Server server;
  nlohmann::json last;
  server.Post("/generate", [&](const httplib::Request& req, httplib::Response& res) {
    last = nlohmann::json::parse(req.body);
    res.set_content(nlohmann::json{{"text", "evolved: " + last["prompt"].get<std::string>()}}.dump(),
                    "application/json");
  });
  server.Post("/broken", [](const httplib::Request&, httplib::Response& res) { res.status = 500; });
  const int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread worker([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  const std::string base = "http://127.0.0.1:" + std::to_string(port);
  HttpGenerationClient client(base + "/generate", std::chrono::seconds(5));
  GenerationParams params;
  params.seed = 42;
  CHECK(client.generate("hello", params) == "evolved: hello");
  CHECK(last["seed"] == 42);
  CHECK(last.contains("temperature"));
  CHECK(last.contains("max_tokens"));

  HttpGenerationClient broken(base + "/broken", std::chrono::seconds(5));
  CHECK_THROWS_AS(broken.generate("x", {}), GenerationError);
  server.stop();
  worker.join();
  CHECK_THROWS_AS(HttpGenerationClient("no-scheme"), Error);
}

TEST_CASE("write_samples: records ingest back") {
  MockAnswerClient mock;
  const std::vector<std::string> prompts{"one", "two"};
  auto samples = generate_answers(prompts, mock);
  for (auto& s : samples) {
    s.strategy = "BREADTH";
    s.round = 1;
  }
  std::stringstream buf;
  write_samples(buf, samples);
  const auto docs = ingest(buf).documents;
  REQUIRE(docs.size() == 2);
  CHECK(docs[0].text.find("one") != std::string::npos);
}
