#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "codepipe/random.hpp"

namespace codepipe {

enum class FfnKind {
  Gated,  // SiLU(x Wg) * (x Wu) Wd, three matrices
  Plain,  // GELU(x W1) W2, two matrices
};

/// Decoder hyperparameters plus the counting conventions that cannot be read
/// off the architecture alone.
struct ModelConfig {
  std::uint64_t hidden = 2560;
  std::uint64_t layers = 32;
  std::uint64_t heads = 32;
  std::uint64_t seq_len = 16'384;
  std::uint64_t vocab = 50'257;
  std::uint64_t ffn_size = 6912;
  FfnKind ffn_kind = FfnKind::Gated;
  double rotary_fraction = 0.25;
  double rotary_base = 10'000.0;
  bool tie_embeddings = false;
  // LayerNorm with learned bias everywhere; biases only on Q, K and V.
  bool count_final_norm = false;
  bool count_qkv_bias = true;

  std::uint64_t head_dim() const { return hidden / heads; }
  /// round(rotary_fraction * head_dim)
  std::uint64_t rotated_dims() const;
  void validate() const;

  /// Published 2560/32/32/16384 layout with the frozen counting assumptions
  /// that reproduce its parameter count.
  static ModelConfig published();
  /// Small config for numeric checks.
  static ModelConfig tiny(std::uint64_t hidden = 16, std::uint64_t heads = 2, std::uint64_t layers = 1);
};

inline constexpr std::uint64_t kPublishedParameterCount = 2'795'443'200;

struct ParamItem {
  std::string name;
  std::uint64_t count = 0;
};

struct ParamBreakdown {
  std::vector<ParamItem> embedding;  // input embedding, output head
  std::vector<ParamItem> per_layer;
  std::uint64_t per_layer_total = 0;
  std::uint64_t layers_total = 0;
  std::uint64_t final_norm = 0;
  std::uint64_t total = 0;
  std::vector<std::string> assumptions;
};

ParamBreakdown param_count(const ModelConfig& c);
std::string format_breakdown(const ParamBreakdown& b);

/// Every combination of vocab padding, tying, final-norm and QKV-bias
/// counting and FFN kind whose solved FFN size reproduces `target` exactly.
std::vector<ModelConfig> search_count_assumptions(const ModelConfig& base, std::uint64_t target);

// ---------------------------------------------------------------------------
// Reference numerics (double precision, toy scale).

struct NumericTolerances {
  static constexpr double kRelative = 1e-6;
  static constexpr double kLayerNorm = 1e-5;
  static constexpr double kLayerNormEps = 1e-5;
};

/// Rotates the leading `rotated` dims of one head vector in place, pairing
/// dim i with dim i + rotated/2 at angle position * base^(-2i/rotated).
void apply_partial_rope(std::span<double> head, std::uint64_t position, std::uint64_t rotated, double base);

void layer_norm(std::span<const double> x, std::span<const double> gamma, std::span<const double> beta,
                std::span<double> out, double eps = NumericTolerances::kLayerNormEps);

struct Activation {
  std::size_t batch = 0;
  std::size_t positions = 0;
  std::size_t hidden = 0;
  std::vector<double> values;

  Activation() = default;
  Activation(std::size_t b, std::size_t p, std::size_t h) : batch(b), positions(p), hidden(h), values(b * p * h, 0.0) {}

  std::span<double> row(std::size_t b, std::size_t p) { return {values.data() + (b * positions + p) * hidden, hidden}; }
  std::span<const double> row(std::size_t b, std::size_t p) const {
    return {values.data() + (b * positions + p) * hidden, hidden};
  }
};

/// Row-major matrices stored as [in][out].
struct BlockWeights {
  std::size_t hidden = 0;
  std::size_t ffn = 0;
  FfnKind ffn_kind = FfnKind::Gated;
  std::vector<double> ln1_gamma, ln1_beta;
  std::vector<double> wq, wk, wv, bq, bk, bv;
  std::vector<double> wo;
  std::vector<double> ln2_gamma, ln2_beta;
  std::vector<double> w_gate, w_up, w_down;  // w_gate unused for Plain

  static BlockWeights zeros(const ModelConfig& c);
  static BlockWeights random(const ModelConfig& c, Rng& rng, double scale = 0.2);

  /// Names of the bias vectors carried by projections (norm betas excluded).
  std::vector<std::string> projection_biases() const;
  std::uint64_t parameter_count() const;
};

/// Pre-norm decoder block: LN -> causal MHA (QKV biases, partial RoPE) ->
/// residual -> LN -> bias-free FFN -> residual.
Activation block_forward(const Activation& x, const BlockWeights& w, const ModelConfig& c);

/// Attention logit between a query at position pq and a key at position pk
/// for one head, after rotary embedding.
double rotary_score(std::span<const double> q, std::uint64_t pq, std::span<const double> k, std::uint64_t pk,
                    std::uint64_t rotated, double base);

// ---------------------------------------------------------------------------

struct FlopsBreakdown {
  double parameters = 0.0;       // N counted for dense matmuls (non-embedding + output head)
  double dense_per_token = 0.0;  // 6 N
  double attention_per_token = 0.0;  // 12 * layers * hidden * seq_len
  double total_per_token = 0.0;
};

/// Training FLOPs per token: 6N for the weight matmuls (forward + backward)
/// plus 12 * layers * hidden * seq_len for attention scores and values.
FlopsBreakdown flops_per_token(const ModelConfig& c);

/// 100 * achieved / peak.
double mfu(double achieved_flops_per_s, double peak_flops_per_s);

}  // namespace codepipe
