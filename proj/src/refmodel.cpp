#include "codepipe/refmodel.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "codepipe/error.hpp"

namespace codepipe {

std::uint64_t ModelConfig::rotated_dims() const {
  return static_cast<std::uint64_t>(std::llround(rotary_fraction * static_cast<double>(head_dim())));
}

void ModelConfig::validate() const {
  if (hidden == 0 || heads == 0 || vocab == 0) throw Error("refmodel", "hidden, heads and vocab must be positive");
  if (hidden % heads != 0) throw Error("refmodel", "hidden must be divisible by heads");
  if (!(rotary_fraction > 0.0 && rotary_fraction <= 1.0)) throw Error("refmodel", "rotary_fraction must lie in (0, 1]");
  if (rotated_dims() % 2 != 0)
    throw Error("refmodel", "rotated dims per head must be even, got " + std::to_string(rotated_dims()));
  if (!(rotary_base > 0.0)) throw Error("refmodel", "rotary base must be positive");
}

ModelConfig ModelConfig::published() { return ModelConfig{}; }

ModelConfig ModelConfig::tiny(std::uint64_t hidden, std::uint64_t heads, std::uint64_t layers) {
  ModelConfig c;
  c.hidden = hidden;
  c.heads = heads;
  c.layers = layers;
  c.seq_len = 8;
  c.vocab = 64;
  c.ffn_size = hidden * 2;
  return c;
}

ParamBreakdown param_count(const ModelConfig& c) {
  c.validate();
  const auto H = c.hidden;
  ParamBreakdown b;
  b.embedding.push_back({"token embedding (vocab x hidden)", c.vocab * H});
  b.embedding.push_back({"output head (vocab x hidden)", c.tie_embeddings ? 0 : c.vocab * H});

  b.per_layer.push_back({"attention norm (weight + bias)", 2 * H});
  b.per_layer.push_back({"q, k, v projections", 3 * H * H});
  b.per_layer.push_back({"q, k, v biases", c.count_qkv_bias ? 3 * H : 0});
  b.per_layer.push_back({"attention output projection", H * H});
  b.per_layer.push_back({"ffn norm (weight + bias)", 2 * H});
  const std::uint64_t ffn_mats = c.ffn_kind == FfnKind::Gated ? 3 : 2;
  b.per_layer.push_back({c.ffn_kind == FfnKind::Gated ? "ffn gate, up, down" : "ffn in, out", ffn_mats * H * c.ffn_size});
  for (const auto& item : b.per_layer) b.per_layer_total += item.count;
  b.layers_total = b.per_layer_total * c.layers;
  b.final_norm = c.count_final_norm ? 2 * H : 0;

  b.total = b.layers_total + b.final_norm;
  for (const auto& item : b.embedding) b.total += item.count;

  b.assumptions = {
      "vocab " + std::to_string(c.vocab) + " rows in the embedding tables",
      c.tie_embeddings ? "output head tied to the token embedding" : "output head untied from the token embedding",
      std::string(c.ffn_kind == FfnKind::Gated ? "gated (SwiGLU) FFN" : "plain two-matrix FFN") + " with inner size " +
          std::to_string(c.ffn_size),
      "no biases in FFN or attention output projection",
      c.count_qkv_bias ? "q, k, v biases counted" : "q, k, v biases not counted",
      "per-layer LayerNorms counted with weight and bias",
      c.count_final_norm ? "final LayerNorm counted" : "final LayerNorm not counted",
      "rotary embeddings carry no parameters",
  };
  return b;
}

std::string format_breakdown(const ParamBreakdown& b) {
  std::ostringstream out;
  for (const auto& item : b.embedding) out << std::left << std::setw(40) << item.name << std::right << std::setw(16) << item.count << '\n';
  out << "per layer:\n";
  for (const auto& item : b.per_layer)
    out << "  " << std::left << std::setw(38) << item.name << std::right << std::setw(16) << item.count << '\n';
  out << std::left << std::setw(40) << "per-layer subtotal" << std::right << std::setw(16) << b.per_layer_total << '\n'
      << std::left << std::setw(40) << "all layers" << std::right << std::setw(16) << b.layers_total << '\n'
      << std::left << std::setw(40) << "final norm" << std::right << std::setw(16) << b.final_norm << '\n'
      << std::left << std::setw(40) << "total" << std::right << std::setw(16) << b.total << '\n'
      << "assumptions:\n";
  for (const auto& a : b.assumptions) out << "  - " << a << '\n';
  return out.str();
}

std::vector<ModelConfig> search_count_assumptions(const ModelConfig& base, std::uint64_t target) {
  std::vector<ModelConfig> matches;
  std::vector<std::uint64_t> vocabs{base.vocab};
  for (std::uint64_t pad : {64u, 128u}) {
    const auto v = (base.vocab + pad - 1) / pad * pad;
    if (std::find(vocabs.begin(), vocabs.end(), v) == vocabs.end()) vocabs.push_back(v);
  }
  for (auto vocab : vocabs)
    for (bool tie : {false, true})
      for (bool final_norm : {false, true})
        for (bool qkv_bias : {true, false})
          for (auto kind : {FfnKind::Gated, FfnKind::Plain}) {
            ModelConfig c = base;
            c.vocab = vocab;
            c.tie_embeddings = tie;
            c.count_final_norm = final_norm;
            c.count_qkv_bias = qkv_bias;
            c.ffn_kind = kind;
            c.ffn_size = 0;
            const auto fixed = param_count(c).total;
            if (fixed >= target) continue;
            const std::uint64_t per_unit = c.layers * (kind == FfnKind::Gated ? 3 : 2) * c.hidden;
            if ((target - fixed) % per_unit != 0) continue;
            c.ffn_size = (target - fixed) / per_unit;
            matches.push_back(c);
          }
  return matches;
}

// ---------------------------------------------------------------------------

void apply_partial_rope(std::span<double> head, std::uint64_t position, std::uint64_t rotated, double base) {
  if (rotated % 2 != 0) throw Error("refmodel", "rotated dim count must be even");
  if (rotated > head.size()) throw Error("refmodel", "rotated dims exceed head size");
  const std::uint64_t half = rotated / 2;
  for (std::uint64_t i = 0; i < half; ++i) {
    const double inv_freq = std::pow(base, -2.0 * static_cast<double>(i) / static_cast<double>(rotated));
    const double angle = static_cast<double>(position) * inv_freq;
    const double c = std::cos(angle), s = std::sin(angle);
    const double a = head[i], b = head[i + half];
    head[i] = a * c - b * s;
    head[i + half] = b * c + a * s;
  }
}

void layer_norm(std::span<const double> x, std::span<const double> gamma, std::span<const double> beta,
                std::span<double> out, double eps) {
  const std::size_t n = x.size();
  if (gamma.size() != n || beta.size() != n || out.size() != n) throw Error("refmodel", "layer_norm size mismatch");
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n);
  const double inv = 1.0 / std::sqrt(var + eps);
  for (std::size_t i = 0; i < n; ++i) out[i] = (x[i] - mean) * inv * gamma[i] + beta[i];
}

double rotary_score(std::span<const double> q, std::uint64_t pq, std::span<const double> k, std::uint64_t pk,
                    std::uint64_t rotated, double base) {
  if (q.size() != k.size()) throw Error("refmodel", "q and k must have the same size");
  std::vector<double> qr(q.begin(), q.end()), kr(k.begin(), k.end());
  apply_partial_rope(qr, pq, rotated, base);
  apply_partial_rope(kr, pk, rotated, base);
  double s = 0.0;
  for (std::size_t i = 0; i < qr.size(); ++i) s += qr[i] * kr[i];
  return s;
}

namespace {

// out[j] = bias[j] + sum_i x[i] * w[i][j]
void matvec(std::span<const double> x, const std::vector<double>& w, std::size_t out_dim, std::span<double> out,
            const std::vector<double>* bias = nullptr) {
  for (std::size_t j = 0; j < out_dim; ++j) out[j] = bias ? (*bias)[j] : 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    const double* row = w.data() + i * out_dim;
    for (std::size_t j = 0; j < out_dim; ++j) out[j] += xi * row[j];
  }
}

double silu(double v) { return v / (1.0 + std::exp(-v)); }
double gelu(double v) { return 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0))); }

void fill(std::vector<double>& v, std::size_t n, Rng& rng, double scale) {
  v.resize(n);
  for (auto& x : v) x = scale * rng.normal();
}

}  // namespace

BlockWeights BlockWeights::zeros(const ModelConfig& c) {
  c.validate();
  const std::size_t H = c.hidden, F = c.ffn_size;
  BlockWeights w;
  w.hidden = H;
  w.ffn = F;
  w.ffn_kind = c.ffn_kind;
  w.ln1_gamma.assign(H, 1.0);
  w.ln1_beta.assign(H, 0.0);
  w.ln2_gamma.assign(H, 1.0);
  w.ln2_beta.assign(H, 0.0);
  w.wq.assign(H * H, 0.0);
  w.wk.assign(H * H, 0.0);
  w.wv.assign(H * H, 0.0);
  w.bq.assign(H, 0.0);
  w.bk.assign(H, 0.0);
  w.bv.assign(H, 0.0);
  w.wo.assign(H * H, 0.0);
  if (c.ffn_kind == FfnKind::Gated) w.w_gate.assign(H * F, 0.0);
  w.w_up.assign(H * F, 0.0);
  w.w_down.assign(F * H, 0.0);
  return w;
}

BlockWeights BlockWeights::random(const ModelConfig& c, Rng& rng, double scale) {
  BlockWeights w = zeros(c);
  const std::size_t H = c.hidden, F = c.ffn_size;
  for (auto& g : w.ln1_gamma) g = 1.0 + 0.1 * rng.normal();
  for (auto& g : w.ln2_gamma) g = 1.0 + 0.1 * rng.normal();
  fill(w.ln1_beta, H, rng, 0.1);
  fill(w.ln2_beta, H, rng, 0.1);
  fill(w.wq, H * H, rng, scale);
  fill(w.wk, H * H, rng, scale);
  fill(w.wv, H * H, rng, scale);
  fill(w.bq, H, rng, scale);
  fill(w.bk, H, rng, scale);
  fill(w.bv, H, rng, scale);
  fill(w.wo, H * H, rng, scale);
  if (c.ffn_kind == FfnKind::Gated) fill(w.w_gate, H * F, rng, scale);
  fill(w.w_up, H * F, rng, scale);
  fill(w.w_down, F * H, rng, scale);
  return w;
}

std::vector<std::string> BlockWeights::projection_biases() const {
  std::vector<std::string> names;
  if (!bq.empty()) names.push_back("q");
  if (!bk.empty()) names.push_back("k");
  if (!bv.empty()) names.push_back("v");
  return names;
}

std::uint64_t BlockWeights::parameter_count() const {
  std::uint64_t n = 0;
  for (const auto* v : {&ln1_gamma, &ln1_beta, &wq, &wk, &wv, &bq, &bk, &bv, &wo, &ln2_gamma, &ln2_beta, &w_gate,
                        &w_up, &w_down})
    n += v->size();
  return n;
}

Activation block_forward(const Activation& x, const BlockWeights& w, const ModelConfig& c) {
  c.validate();
  const std::size_t H = c.hidden;
  if (x.hidden != H || w.hidden != H || x.values.size() != x.batch * x.positions * x.hidden)
    throw Error("refmodel", "activation shape does not match the config");
  if (w.ffn != c.ffn_size || w.ffn_kind != c.ffn_kind || w.wq.size() != H * H || w.w_up.size() != H * w.ffn)
    throw Error("refmodel", "weights do not match the config");
  if (std::any_of(x.values.begin(), x.values.end(), [](double v) { return !std::isfinite(v); }))
    throw Error("refmodel", "non-finite input activation");

  const std::size_t heads = c.heads, hd = c.head_dim(), P = x.positions;
  const auto rotated = c.rotated_dims();
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  Activation out = x;

  std::vector<double> normed(H), q(P * H), k(P * H), v(P * H), attn(H), proj(H);
  std::vector<double> gate(w.ffn), up(w.ffn), scores(P);
  for (std::size_t b = 0; b < x.batch; ++b) {
    for (std::size_t p = 0; p < P; ++p) {
      layer_norm(x.row(b, p), w.ln1_gamma, w.ln1_beta, normed);
      matvec(normed, w.wq, H, std::span(q).subspan(p * H, H), &w.bq);
      matvec(normed, w.wk, H, std::span(k).subspan(p * H, H), &w.bk);
      matvec(normed, w.wv, H, std::span(v).subspan(p * H, H), &w.bv);
      for (std::size_t h = 0; h < heads; ++h) {
        apply_partial_rope(std::span(q).subspan(p * H + h * hd, hd), p, rotated, c.rotary_base);
        apply_partial_rope(std::span(k).subspan(p * H + h * hd, hd), p, rotated, c.rotary_base);
      }
    }
    for (std::size_t p = 0; p < P; ++p) {
      std::fill(attn.begin(), attn.end(), 0.0);
      for (std::size_t h = 0; h < heads; ++h) {
        const double* qh = q.data() + p * H + h * hd;
        double max_score = -INFINITY;
        for (std::size_t t = 0; t <= p; ++t) {
          const double* kh = k.data() + t * H + h * hd;
          double s = 0.0;
          for (std::size_t d = 0; d < hd; ++d) s += qh[d] * kh[d];
          scores[t] = s * scale;
          max_score = std::max(max_score, scores[t]);
        }
        double denom = 0.0;
        for (std::size_t t = 0; t <= p; ++t) {
          scores[t] = std::exp(scores[t] - max_score);
          denom += scores[t];
        }
        for (std::size_t t = 0; t <= p; ++t) {
          const double a = scores[t] / denom;
          const double* vh = v.data() + t * H + h * hd;
          for (std::size_t d = 0; d < hd; ++d) attn[h * hd + d] += a * vh[d];
        }
      }
      matvec(attn, w.wo, H, proj);
      auto row = out.row(b, p);
      for (std::size_t i = 0; i < H; ++i) row[i] += proj[i];

      layer_norm(row, w.ln2_gamma, w.ln2_beta, normed);
      matvec(normed, w.w_up, w.ffn, up);
      if (w.ffn_kind == FfnKind::Gated) {
        matvec(normed, w.w_gate, w.ffn, gate);
        for (std::size_t f = 0; f < w.ffn; ++f) up[f] *= silu(gate[f]);
      } else {
        for (auto& u : up) u = gelu(u);
      }
      matvec(up, w.w_down, H, proj);
      for (std::size_t i = 0; i < H; ++i) row[i] += proj[i];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

FlopsBreakdown flops_per_token(const ModelConfig& c) {
  const auto b = param_count(c);
  FlopsBreakdown f;
  // Matmul parameters: every layer plus the output projection onto the vocab.
  f.parameters = static_cast<double>(b.layers_total) + static_cast<double>(c.vocab * c.hidden);
  f.dense_per_token = 6.0 * f.parameters;
  f.attention_per_token = 12.0 * static_cast<double>(c.layers) * static_cast<double>(c.hidden) *
                          static_cast<double>(c.seq_len);
  f.total_per_token = f.dense_per_token + f.attention_per_token;
  return f;
}

double mfu(double achieved_flops_per_s, double peak_flops_per_s) {
  if (!(peak_flops_per_s > 0.0)) throw Error("refmodel", "peak FLOP rate must be positive");
  if (!(achieved_flops_per_s >= 0.0)) throw Error("refmodel", "achieved FLOP rate must be non-negative");
  return 100.0 * achieved_flops_per_s / peak_flops_per_s;
}

}  // namespace codepipe
