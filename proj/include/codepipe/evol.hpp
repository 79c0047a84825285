#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "codepipe/error.hpp"

namespace codepipe {

enum class StrategyKind { Breadth, Reasoning, Deepening, Complexity };
std::string_view to_string(StrategyKind k);
StrategyKind parse_strategy(std::string_view s);

inline constexpr std::string_view kSeedPlaceholder = "{prompt}";

struct EvolStrategy {
  StrategyKind kind = StrategyKind::Deepening;
  std::string template_text;

  /// Template must contain the placeholder exactly once.
  void validate() const;
  std::string render(std::string_view seed) const;
};

std::vector<EvolStrategy> default_strategies();
/// JSON object {"BREADTH": "...{prompt}...", ...}; missing kinds keep defaults.
std::vector<EvolStrategy> load_strategies(const std::filesystem::path& path);
const EvolStrategy& find_strategy(std::span<const EvolStrategy> strategies, StrategyKind kind);

struct GenerationParams {
  double temperature = 0.7;
  std::uint32_t max_tokens = 1024;
  std::uint64_t seed = 0;
};

class GenerationError : public Error {
 public:
  explicit GenerationError(const std::string& message) : Error("evol", message) {}
};

/// Minimal text-generation contract: prompt in, text out.
class GenerationClient {
 public:
  virtual ~GenerationClient() = default;
  virtual std::string generate(const std::string& prompt, const GenerationParams& params) = 0;
  virtual std::string identity() const = 0;
};

/// Returns the prompt unchanged.
class EchoClient final : public GenerationClient {
 public:
  std::string generate(const std::string& prompt, const GenerationParams&) override { return prompt; }
  std::string identity() const override { return "mock-echo"; }
};

/// Deterministic answer generator: returns a fixed-format completion derived
/// from the prompt text.
class MockAnswerClient final : public GenerationClient {
 public:
  std::string generate(const std::string& prompt, const GenerationParams& params) override;
  std::string identity() const override { return "mock-answer"; }
};

/// POSTs {"prompt","temperature","max_tokens","seed"} as JSON to a URL and
/// reads {"text"} back.
class HttpGenerationClient final : public GenerationClient {
 public:
  explicit HttpGenerationClient(std::string url, std::chrono::milliseconds timeout = std::chrono::seconds(120));
  std::string generate(const std::string& prompt, const GenerationParams& params) override;
  std::string identity() const override { return "http:" + url_; }

 private:
  std::string url_;
  std::string host_;
  std::string path_;
  std::chrono::milliseconds timeout_;
};

/// Environment variable holding the generation endpoint URL.
inline constexpr const char* kGenerationUrlEnv = "CODEPIPE_GENERATION_URL";

struct RetryPolicy {
  int retries = 3;
  std::chrono::milliseconds base_delay{200};
  std::function<void(std::chrono::milliseconds)> sleep;  // defaults to this_thread::sleep_for
};

/// Retries failed calls with exponential backoff (base, 2*base, 4*base, ...).
class RetryingClient final : public GenerationClient {
 public:
  RetryingClient(GenerationClient& inner, RetryPolicy policy = {});
  std::string generate(const std::string& prompt, const GenerationParams& params) override;
  std::string identity() const override { return inner_.identity(); }
  int attempts() const { return attempts_.load(); }

 private:
  GenerationClient& inner_;
  RetryPolicy policy_;
  std::atomic<int> attempts_{0};
};

struct EvolvedPrompt {
  std::size_t seed_index = 0;
  std::string seed;
  std::string text;
  StrategyKind strategy = StrategyKind::Deepening;
  std::size_t round = 0;  // 1-based
  std::string client;
};

/// Round i rewrites round i-1's output with the strategy template.
std::vector<EvolvedPrompt> evolve_prompt(const std::string& seed, const EvolStrategy& strategy,
                                         GenerationClient& client, std::size_t rounds,
                                         const GenerationParams& params = {}, std::size_t seed_index = 0);

struct Sample {
  std::string prompt;
  std::string completion;
  std::string strategy;  // empty for samples that were not evolved
  std::size_t round = 0;
  std::string client;
};

/// One completion per prompt, in input order. Up to max_in_flight calls run
/// concurrently; the client must then be safe to call from several threads.
std::vector<Sample> generate_answers(std::span<const std::string> prompts, GenerationClient& client,
                                     const GenerationParams& params = {}, std::size_t max_in_flight = 1);

/// Keeps the first occurrence of each (prompt, completion) pair, compared
/// after trimming trailing whitespace.
std::vector<Sample> exact_dedup(std::span<const Sample> samples);

struct CampaignAssignment {
  std::size_t seed_index = 0;
  StrategyKind strategy = StrategyKind::Deepening;
};

struct CampaignPlan {
  std::size_t seeds = 0;
  std::size_t target = 0;
  std::vector<std::size_t> per_seed;  // evolved prompts requested per seed
  std::vector<CampaignAssignment> assignments;
};

/// Spreads `target` evolved prompts over `seeds` (floor/ceil per seed) and
/// assigns strategies in proportion to `mix` (uniform when empty).
CampaignPlan plan_campaign(std::size_t seeds, std::size_t target, std::span<const double> mix, std::uint64_t rng_seed);

std::vector<EvolvedPrompt> run_campaign(std::span<const std::string> seeds, const CampaignPlan& plan,
                                        std::span<const EvolStrategy> strategies, GenerationClient& client,
                                        std::size_t rounds, const GenerationParams& params = {},
                                        std::size_t max_in_flight = 1);

/// Line-delimited records that corpus ingestion accepts (text = prompt and
/// completion), with provenance fields alongside.
void write_samples(std::ostream& out, std::span<const Sample> samples, std::string_view id_prefix = "evol");

}  // namespace codepipe
