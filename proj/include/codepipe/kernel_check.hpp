#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "codepipe/refmodel.hpp"

namespace codepipe {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Random tiny config: hidden <= 32, heads dividing hidden with an even
/// rotated slice, 1-2 layers, up to 8 positions.
ModelConfig random_tiny_config(Rng& rng);

/// Perturbs one position and checks that only that position and later ones
/// change.
CheckResult check_causality(std::size_t configs, std::uint64_t seed, double rel_tol = NumericTolerances::kRelative);

/// Attention logits depend only on the position difference.
CheckResult check_rotary_shift(std::size_t configs, std::uint64_t seed, double rel_tol = NumericTolerances::kRelative);

/// Projection biases exist on Q, K and V only.
CheckResult check_bias_policy(const ModelConfig& c);

/// Pre-affine LayerNorm output has zero mean and unit variance per position.
CheckResult check_layer_norm(std::size_t trials, std::uint64_t seed, double tol = NumericTolerances::kLayerNorm);

CheckResult check_published_count(const ModelConfig& c = ModelConfig::published());

std::vector<CheckResult> run_kernel_checks(std::size_t configs, std::uint64_t seed);

}  // namespace codepipe
