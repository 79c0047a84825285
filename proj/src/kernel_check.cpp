#include "codepipe/kernel_check.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace codepipe {

ModelConfig random_tiny_config(Rng& rng) {
  // (heads, head_dim) pairs with head_dim * 0.25 rounding to an even count
  static constexpr std::uint64_t kHeadDims[] = {8, 16};
  for (;;) {
    const std::uint64_t head_dim = kHeadDims[rng.below(2)];
    const std::uint64_t heads = 1 + rng.below(4);
    if (head_dim * heads > 32) continue;
    ModelConfig c = ModelConfig::tiny(head_dim * heads, heads, 1 + rng.below(2));
    c.ffn_size = 4 + rng.below(29);
    c.ffn_kind = rng.below(4) == 0 ? FfnKind::Plain : FfnKind::Gated;
    c.rotary_base = rng.below(2) == 0 ? 10'000.0 : 1'000'000.0;
    c.seq_len = 2 + rng.below(7);
    return c;
  }
}

namespace {

double rel_diff(double a, double b) { return std::abs(a - b) / std::max(1.0, std::max(std::abs(a), std::abs(b))); }

Activation random_activation(const ModelConfig& c, Rng& rng, std::size_t batch) {
  Activation x(batch, c.seq_len, c.hidden);
  for (auto& v : x.values) v = rng.normal();
  return x;
}

Activation forward_all(const Activation& x, const std::vector<BlockWeights>& layers, const ModelConfig& c) {
  Activation h = x;
  for (const auto& w : layers) h = block_forward(h, w, c);
  return h;
}

}  // namespace

CheckResult check_causality(std::size_t configs, std::uint64_t seed, double rel_tol) {
  CheckResult r{"causality", true, ""};
  std::size_t cases = 0;
  for (std::size_t i = 0; i < configs && r.passed; ++i) {
    Rng rng(derive_seed(seed, "causality", i));
    const auto c = random_tiny_config(rng);
    std::vector<BlockWeights> layers;
    for (std::uint64_t l = 0; l < c.layers; ++l) layers.push_back(BlockWeights::random(c, rng));
    const auto x = random_activation(c, rng, 2);
    const auto base = forward_all(x, layers, c);
    const auto j = static_cast<std::size_t>(rng.below(c.seq_len));
    auto xp = x;
    for (auto& v : xp.row(1, j)) v += 0.5 + rng.normal();
    const auto pert = forward_all(xp, layers, c);
    ++cases;
    bool later_changed = false;
    for (std::size_t p = 0; p < c.seq_len; ++p) {
      for (std::size_t b = 0; b < 2; ++b) {
        const auto a = base.row(b, p), z = pert.row(b, p);
        double worst = 0.0;
        for (std::size_t d = 0; d < c.hidden; ++d) worst = std::max(worst, rel_diff(a[d], z[d]));
        const bool must_match = b == 0 || p < j;
        if (must_match && worst > rel_tol) {
          r.passed = false;
          std::ostringstream msg;
          msg << "config " << i << ": position " << p << " changed by " << worst << " after perturbing " << j;
          r.detail = msg.str();
        }
        if (b == 1 && p >= j && worst > rel_tol) later_changed = true;
      }
    }
    if (r.passed && !later_changed) {
      r.passed = false;
      r.detail = "config " + std::to_string(i) + ": perturbation had no effect";
    }
  }
  if (r.passed) r.detail = std::to_string(cases) + " configs";
  return r;
}

CheckResult check_rotary_shift(std::size_t configs, std::uint64_t seed, double rel_tol) {
  CheckResult r{"rotary shift invariance", true, ""};
  double worst = 0.0;
  for (std::size_t i = 0; i < configs; ++i) {
    Rng rng(derive_seed(seed, "rotary", i));
    const auto c = random_tiny_config(rng);
    const auto hd = c.head_dim();
    std::vector<double> q(hd), k(hd);
    for (auto& v : q) v = rng.normal();
    for (auto& v : k) v = rng.normal();
    const auto p1 = rng.below(64), p2 = rng.below(64), shift = rng.below(4096);
    const double a = rotary_score(q, p1, k, p2, c.rotated_dims(), c.rotary_base);
    const double b = rotary_score(q, p1 + shift, k, p2 + shift, c.rotated_dims(), c.rotary_base);
    worst = std::max(worst, rel_diff(a, b));
  }
  r.passed = worst <= rel_tol;
  std::ostringstream msg;
  msg << configs << " configs, worst relative difference " << worst;
  r.detail = msg.str();
  return r;
}

CheckResult check_bias_policy(const ModelConfig& c) {
  const auto w = BlockWeights::zeros(c);
  const auto names = w.projection_biases();
  const bool ok = names == std::vector<std::string>{"q", "k", "v"};
  std::string detail = "projection biases:";
  for (const auto& n : names) detail += " " + n;
  return {"bias policy (QKV only)", ok, detail};
}

CheckResult check_layer_norm(std::size_t trials, std::uint64_t seed, double tol) {
  CheckResult r{"layer norm moments", true, ""};
  double worst = 0.0;
  for (std::size_t i = 0; i < trials; ++i) {
    Rng rng(derive_seed(seed, "layernorm", i));
    const std::size_t n = 4 + rng.below(60);
    std::vector<double> x(n), gamma(n, 1.0), beta(n, 0.0), out(n);
    const double offset = 10.0 * rng.normal(), spread = 0.1 + 5.0 * rng.uniform();
    for (auto& v : x) v = offset + spread * rng.normal();
    layer_norm(x, gamma, beta, out, 0.0);
    double mean = 0.0, var = 0.0;
    for (double v : out) mean += v;
    mean /= static_cast<double>(n);
    for (double v : out) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    worst = std::max({worst, std::abs(mean), std::abs(var - 1.0)});
  }
  r.passed = worst <= tol;
  std::ostringstream msg;
  msg << trials << " trials, worst deviation " << worst;
  r.detail = msg.str();
  return r;
}

CheckResult check_published_count(const ModelConfig& c) {
  const auto total = param_count(c).total;
  return {"parameter count", total == kPublishedParameterCount,
          std::to_string(total) + " vs " + std::to_string(kPublishedParameterCount)};
}

std::vector<CheckResult> run_kernel_checks(std::size_t configs, std::uint64_t seed) {
  return {check_causality(configs, seed), check_rotary_shift(configs, seed),
          check_bias_policy(ModelConfig::tiny()), check_layer_norm(configs, seed), check_published_count()};
}

}  // namespace codepipe
