#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "codepipe/seqpack.hpp"

namespace codepipe {

enum class ScheduleShape { Cosine };

struct ScheduleSpec {
  double peak_lr = 3.2e-4;
  double min_lr = 3.2e-5;
  std::uint64_t total_steps = 1;
  double warmup_fraction = 0.0;  // in [0, 1)
  ScheduleShape shape = ScheduleShape::Cosine;

  void validate() const;
  /// round(warmup_fraction * total_steps)
  std::uint64_t warmup_steps() const;
  bool operator==(const ScheduleSpec&) const = default;
};

/// Linear warmup from 0 to peak, then cosine decay to min_lr at total_steps.
/// Exact at both junctions: lr_at(warmup_steps) == peak, lr_at(total) == min.
double lr_at(const ScheduleSpec& spec, std::uint64_t step);

enum class OptimizerKind { AdamW, RMSProp };

struct OptimizerSpec {
  OptimizerKind kind = OptimizerKind::AdamW;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double epsilon = 1e-6;
  double weight_decay = 0.1;
  std::optional<double> dpo_beta;

  void validate() const;
  bool operator==(const OptimizerSpec&) const = default;
};

enum class StageName { Pretrain, LongContext, Sft, Dpo };
std::string_view to_string(StageName s);
StageName parse_stage(std::string_view s);

/// Batch counted in whole sequences (fine-tuning stages).
struct SequenceBatch {
  std::uint64_t sequences = 512;
  bool operator==(const SequenceBatch&) const = default;
};

struct StageConfig {
  StageName name = StageName::Pretrain;
  ScheduleSpec schedule;
  OptimizerSpec optimizer;
  std::uint64_t seq_len = 4096;
  double rotary_base = 10'000.0;
  std::variant<BatchSpec, SequenceBatch> batch;
  std::optional<std::uint64_t> epochs;
  // Fields not stated by the source recipe, filled by convention.
  std::vector<std::string> inferred;

  void validate() const;
};

bool operator==(const BatchSpec& a, const BatchSpec& b);
bool operator==(const StageConfig& a, const StageConfig& b);

/// The four training stages, in order.
std::vector<StageConfig> stage_presets();
const StageConfig& preset(StageName name);

std::string stages_to_json(const std::vector<StageConfig>& stages);
std::vector<StageConfig> stages_from_json(std::string_view text);

/// "step lr" rows for every `stride`-th step plus the final step.
std::string lr_table(const ScheduleSpec& spec, std::uint64_t stride);

}  // namespace codepipe
