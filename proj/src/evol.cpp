#include "codepipe/evol.hpp"

#include <httplib.h>

#include <algorithm>
#include <fstream>
#include <future>
#include <ostream>
#include <sstream>
#include <thread>
#include <unordered_set>

#include "json.hpp"

#include "codepipe/hash.hpp"
#include "codepipe/mixture.hpp"
#include "codepipe/random.hpp"

namespace codepipe {

using nlohmann::json;

std::string_view to_string(StrategyKind k) {
  switch (k) {
    case StrategyKind::Breadth: return "BREADTH";
    case StrategyKind::Reasoning: return "REASONING";
    case StrategyKind::Deepening: return "DEEPENING";
    case StrategyKind::Complexity: return "COMPLEXITY";
  }
  return "?";
}

StrategyKind parse_strategy(std::string_view s) {
  for (auto k : {StrategyKind::Breadth, StrategyKind::Reasoning, StrategyKind::Deepening, StrategyKind::Complexity})
    if (to_string(k) == s) return k;
  throw Error("evol", "unknown strategy '" + std::string(s) + "'");
}

void EvolStrategy::validate() const {
  const auto first = template_text.find(kSeedPlaceholder);
  if (first == std::string::npos || template_text.find(kSeedPlaceholder, first + 1) != std::string::npos)
    throw Error("evol", std::string(to_string(kind)) + " template must contain exactly one {prompt} placeholder");
}

std::string EvolStrategy::render(std::string_view seed) const {
  validate();
  std::string out = template_text;
  out.replace(out.find(kSeedPlaceholder), kSeedPlaceholder.size(), seed);
  return out;
}

std::vector<EvolStrategy> default_strategies() {
  return {
      {StrategyKind::Breadth,
       "Write a brand-new programming task inspired by the task below. It should belong to the same domain but be "
       "rarer and cover a different skill. Reply with the new task only.\n\n#Given Task#\n{prompt}"},
      {StrategyKind::Reasoning,
       "Rewrite the task below so that solving it explicitly requires multiple steps of reasoning. Keep it "
       "self-contained and answerable. Reply with the rewritten task only.\n\n#Given Task#\n{prompt}"},
      {StrategyKind::Deepening,
       "Rewrite the task below to ask about the topic in more depth, adding one further requirement or "
       "constraint. Reply with the rewritten task only.\n\n#Given Task#\n{prompt}"},
      {StrategyKind::Complexity,
       "Rewrite the task below into a more complex version, for example with higher time or space complexity "
       "requirements or more involved inputs. Reply with the rewritten task only.\n\n#Given Task#\n{prompt}"},
  };
}

std::vector<EvolStrategy> load_strategies(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("evol", "cannot open strategy file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error("evol", std::string("bad strategy file: ") + e.what());
  }
  auto strategies = default_strategies();
  for (const auto& [name, text] : j.items()) {
    const auto kind = parse_strategy(name);
    for (auto& s : strategies)
      if (s.kind == kind) s.template_text = text.get<std::string>();
  }
  for (const auto& s : strategies) s.validate();
  return strategies;
}

const EvolStrategy& find_strategy(std::span<const EvolStrategy> strategies, StrategyKind kind) {
  for (const auto& s : strategies)
    if (s.kind == kind) return s;
  throw Error("evol", "no template for strategy " + std::string(to_string(kind)));
}

std::string MockAnswerClient::generate(const std::string& prompt, const GenerationParams& params) {
  return "Answer[" + sha256_hex(prompt + "#" + std::to_string(params.seed)).substr(0, 12) + "]: " +
         std::to_string(prompt.size()) + " characters considered.";
}

// ---------------------------------------------------------------------------

HttpGenerationClient::HttpGenerationClient(std::string url, std::chrono::milliseconds timeout)
    : url_(std::move(url)), timeout_(timeout) {
  const auto scheme = url_.find("://");
  if (scheme == std::string::npos) throw Error("evol", "generation URL needs a scheme: " + url_);
  const auto path_start = url_.find('/', scheme + 3);
  host_ = url_.substr(0, path_start);
  path_ = path_start == std::string::npos ? "/" : url_.substr(path_start);
}

std::string HttpGenerationClient::generate(const std::string& prompt, const GenerationParams& params) {
  httplib::Client cli(host_);
  cli.set_connection_timeout(timeout_);
  cli.set_read_timeout(timeout_);
  const json body = {{"prompt", prompt},
                     {"temperature", params.temperature},
                     {"max_tokens", params.max_tokens},
                     {"seed", params.seed}};
  auto res = cli.Post(path_, body.dump(), "application/json");
  if (!res) throw GenerationError("request to " + url_ + " failed: " + httplib::to_string(res.error()));
  if (res->status != 200) throw GenerationError("request to " + url_ + " returned HTTP " + std::to_string(res->status));
  try {
    return json::parse(res->body).at("text").get<std::string>();
  } catch (const json::exception& e) {
    throw GenerationError(std::string("malformed generation response: ") + e.what());
  }
}

RetryingClient::RetryingClient(GenerationClient& inner, RetryPolicy policy) : inner_(inner), policy_(std::move(policy)) {
  if (!policy_.sleep) policy_.sleep = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

std::string RetryingClient::generate(const std::string& prompt, const GenerationParams& params) {
  auto delay = policy_.base_delay;
  for (int attempt = 0;; ++attempt) {
    ++attempts_;
    try {
      return inner_.generate(prompt, params);
    } catch (const std::exception& e) {
      if (attempt >= policy_.retries)
        throw GenerationError("generation failed after " + std::to_string(attempt + 1) + " attempts: " + e.what());
    }
    policy_.sleep(delay);
    delay *= 2;
  }
}

// ---------------------------------------------------------------------------

std::vector<EvolvedPrompt> evolve_prompt(const std::string& seed, const EvolStrategy& strategy,
                                         GenerationClient& client, std::size_t rounds, const GenerationParams& params,
                                         std::size_t seed_index) {
  if (rounds == 0) throw Error("evol", "rounds must be >= 1");
  std::vector<EvolvedPrompt> out;
  std::string current = seed;
  for (std::size_t r = 1; r <= rounds; ++r) {
    GenerationParams p = params;
    p.seed = derive_seed(params.seed, to_string(strategy.kind), seed_index * 1000 + r);
    auto text = client.generate(strategy.render(current), p);
    if (text.find_first_not_of(" \t\r\n") == std::string::npos)
      throw GenerationError("empty generation in round " + std::to_string(r) + " for seed " + std::to_string(seed_index));
    out.push_back({seed_index, seed, text, strategy.kind, r, client.identity()});
    current = std::move(text);
  }
  return out;
}

namespace {

// Runs fn(i) for i in [0, n) with at most `cap` calls outstanding; results
// land at their input index.
template <typename T, typename Fn>
std::vector<T> bounded_map(std::size_t n, std::size_t cap, Fn fn) {
  std::vector<T> out(n);
  if (cap <= 1) {
    for (std::size_t i = 0; i < n; ++i) out[i] = fn(i);
    return out;
  }
  for (std::size_t start = 0; start < n; start += cap) {
    const std::size_t end = std::min(n, start + cap);
    std::vector<std::future<T>> futures;
    for (std::size_t i = start; i < end; ++i) futures.push_back(std::async(std::launch::async, fn, i));
    for (std::size_t i = start; i < end; ++i) out[i] = futures[i - start].get();
  }
  return out;
}

}  // namespace

std::vector<Sample> generate_answers(std::span<const std::string> prompts, GenerationClient& client,
                                     const GenerationParams& params, std::size_t max_in_flight) {
  return bounded_map<Sample>(prompts.size(), max_in_flight, [&](std::size_t i) {
    GenerationParams p = params;
    p.seed = derive_seed(params.seed, "answer", i);
    Sample s;
    s.prompt = prompts[i];
    s.completion = client.generate(prompts[i], p);
    s.client = client.identity();
    return s;
  });
}

namespace {

std::string_view rtrim(std::string_view s) {
  const auto end = s.find_last_not_of(" \t\r\n\f\v");
  return end == std::string_view::npos ? std::string_view{} : s.substr(0, end + 1);
}

}  // namespace

std::vector<Sample> exact_dedup(std::span<const Sample> samples) {
  std::unordered_set<std::string> seen;
  std::vector<Sample> out;
  for (const auto& s : samples) {
    const auto p = rtrim(s.prompt);
    const auto c = rtrim(s.completion);
    // length-prefixed so the pair boundary cannot be forged
    std::string key = std::to_string(p.size()) + ":";
    key.append(p);
    key.append(c);
    if (seen.insert(std::move(key)).second) out.push_back(s);
  }
  return out;
}

CampaignPlan plan_campaign(std::size_t seeds, std::size_t target, std::span<const double> mix, std::uint64_t rng_seed) {
  if (seeds == 0 && target > 0) throw Error("evol", "a campaign with a target needs at least one seed");
  CampaignPlan plan;
  plan.seeds = seeds;
  plan.target = target;
  plan.per_seed.assign(seeds, seeds ? target / seeds : 0);
  Rng rng(derive_seed(rng_seed, "campaign"));
  if (seeds > 0) {
    std::vector<std::size_t> order(seeds);
    for (std::size_t i = 0; i < seeds; ++i) order[i] = i;
    rng.shuffle(order);
    for (std::size_t k = 0; k < target % seeds; ++k) ++plan.per_seed[order[k]];
  }

  std::vector<double> weights(mix.begin(), mix.end());
  if (weights.empty()) weights.assign(4, 1.0);
  if (weights.size() != 4) throw Error("evol", "strategy mix needs four weights");
  const auto counts = apportion(weights, target);
  std::vector<StrategyKind> kinds;
  for (std::size_t k = 0; k < 4; ++k) kinds.insert(kinds.end(), counts[k], static_cast<StrategyKind>(k));
  rng.shuffle(kinds);

  std::size_t next = 0;
  for (std::size_t s = 0; s < seeds; ++s)
    for (std::size_t q = 0; q < plan.per_seed[s]; ++q) plan.assignments.push_back({s, kinds[next++]});
  return plan;
}

std::vector<EvolvedPrompt> run_campaign(std::span<const std::string> seeds, const CampaignPlan& plan,
                                        std::span<const EvolStrategy> strategies, GenerationClient& client,
                                        std::size_t rounds, const GenerationParams& params,
                                        std::size_t max_in_flight) {
  if (seeds.size() != plan.seeds) throw Error("evol", "campaign plan was made for a different seed count");
  auto chains = bounded_map<std::vector<EvolvedPrompt>>(plan.assignments.size(), max_in_flight, [&](std::size_t i) {
    const auto& a = plan.assignments[i];
    GenerationParams p = params;
    p.seed = derive_seed(params.seed, "campaign-item", i);
    return evolve_prompt(seeds[a.seed_index], find_strategy(strategies, a.strategy), client, rounds, p, a.seed_index);
  });
  std::vector<EvolvedPrompt> out;
  out.reserve(chains.size());
  for (auto& c : chains) out.push_back(std::move(c.back()));
  return out;
}

void write_samples(std::ostream& out, std::span<const Sample> samples, std::string_view id_prefix) {
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    json j;
    j["id"] = std::string(id_prefix) + "-" + std::to_string(i);
    j["repo_id"] = std::string(id_prefix);
    j["path"] = "";
    j["language"] = "text";
    j["text"] = s.completion.empty() ? s.prompt : s.prompt + "\n" + s.completion;
    j["prompt"] = s.prompt;
    j["completion"] = s.completion;
    j["strategy"] = s.strategy;
    j["round"] = s.round;
    j["client"] = s.client;
    out << j.dump(-1, ' ', false, json::error_handler_t::replace) << '\n';
  }
}

}  // namespace codepipe
