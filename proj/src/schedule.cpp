#include "codepipe/schedule.hpp"

#include <cmath>
#include <iomanip>
#include <numbers>
#include <sstream>

#include "json.hpp"

#include "codepipe/error.hpp"
#include "codepipe/mixture.hpp"

namespace codepipe {

using nlohmann::json;

void ScheduleSpec::validate() const {
  if (!(min_lr > 0.0 && min_lr <= peak_lr)) throw Error("schedule", "need 0 < min_lr <= peak_lr");
  if (total_steps == 0) throw Error("schedule", "total_steps must be positive");
  if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0)) throw Error("schedule", "warmup_fraction must lie in [0, 1)");
}

std::uint64_t ScheduleSpec::warmup_steps() const {
  return static_cast<std::uint64_t>(std::llround(warmup_fraction * static_cast<double>(total_steps)));
}

double lr_at(const ScheduleSpec& spec, std::uint64_t step) {
  spec.validate();
  if (step > spec.total_steps)
    throw Error("schedule", "step " + std::to_string(step) + " beyond total_steps " + std::to_string(spec.total_steps));
  const std::uint64_t warmup = spec.warmup_steps();
  if (step < warmup) return spec.peak_lr * static_cast<double>(step) / static_cast<double>(warmup);
  if (step == warmup) return spec.peak_lr;
  if (step == spec.total_steps) return spec.min_lr;
  const double t = static_cast<double>(step - warmup) / static_cast<double>(spec.total_steps - warmup);
  return spec.min_lr + (spec.peak_lr - spec.min_lr) * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

void OptimizerSpec::validate() const {
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) throw Error("schedule", "betas must lie in (0, 1)");
  if (!(epsilon > 0.0)) throw Error("schedule", "epsilon must be positive");
  if (!(weight_decay >= 0.0)) throw Error("schedule", "weight decay must be non-negative");
}

std::string_view to_string(StageName s) {
  switch (s) {
    case StageName::Pretrain: return "PRETRAIN";
    case StageName::LongContext: return "LONG_CONTEXT";
    case StageName::Sft: return "SFT";
    case StageName::Dpo: return "DPO";
  }
  return "?";
}

StageName parse_stage(std::string_view s) {
  for (auto n : {StageName::Pretrain, StageName::LongContext, StageName::Sft, StageName::Dpo})
    if (to_string(n) == s) return n;
  throw Error("schedule", "unknown stage '" + std::string(s) + "'");
}

void StageConfig::validate() const {
  schedule.validate();
  optimizer.validate();
  if (seq_len == 0) throw Error("schedule", "seq_len must be positive");
  if (!(rotary_base > 0.0)) throw Error("schedule", "rotary base must be positive");
  if (const auto* b = std::get_if<BatchSpec>(&batch)) b->validate();
  if (name == StageName::LongContext && rotary_base != 1'000'000.0)
    throw Error("schedule", "long-context stage must use rotary base 1e6");
  if (name == StageName::Sft) {
    const auto* sb = std::get_if<SequenceBatch>(&batch);
    if (!sb || sb->sequences != 512) throw Error("schedule", "SFT batch must be 512 sequences");
    if (epochs != 3u) throw Error("schedule", "SFT runs for 3 epochs");
  }
}

bool operator==(const BatchSpec& a, const BatchSpec& b) {
  return a.devices == b.devices && a.micro_batch == b.micro_batch && a.grad_accum == b.grad_accum &&
         a.seq_len == b.seq_len;
}

bool operator==(const StageConfig& a, const StageConfig& b) {
  return a.name == b.name && a.schedule == b.schedule && a.optimizer == b.optimizer && a.seq_len == b.seq_len &&
         a.rotary_base == b.rotary_base && a.batch == b.batch && a.epochs == b.epochs && a.inferred == b.inferred;
}

std::vector<StageConfig> stage_presets() {
  const OptimizerSpec adamw{OptimizerKind::AdamW, 0.9, 0.95, 1e-6, 0.1, std::nullopt};
  std::vector<StageConfig> stages;

  {
    StageConfig s;
    s.name = StageName::Pretrain;
    s.seq_len = 4096;
    const BatchSpec batch{256, 4, 1, 4096};
    s.batch = batch;
    s.schedule = {3.2e-4, 3.2e-5, steps_for_tokens(kReferenceTotalTokens, tokens_per_step(batch)), 0.0,
                  ScheduleShape::Cosine};
    s.optimizer = adamw;
    s.rotary_base = 10'000.0;
    s.inferred = {"schedule.total_steps", "schedule.warmup_fraction", "rotary_base"};
    stages.push_back(s);
  }
  {
    StageConfig s;
    s.name = StageName::LongContext;
    s.seq_len = 16'384;
    s.batch = BatchSpec{256, 4, 1, 16'384};
    s.schedule = {2e-5, 1.28e-5, 20'000, 0.0, ScheduleShape::Cosine};
    s.optimizer = adamw;
    s.rotary_base = 1'000'000.0;
    s.inferred = {"batch", "schedule.warmup_fraction"};
    stages.push_back(s);
  }
  {
    StageConfig s;
    s.name = StageName::Sft;
    s.seq_len = 4096;
    s.batch = SequenceBatch{512};
    s.epochs = 3;
    // ~500k deduplicated samples, 512 per step, three epochs
    s.schedule = {5e-5, 5e-6, ((500'000 + 511) / 512) * 3, 0.10, ScheduleShape::Cosine};
    s.optimizer = adamw;
    s.rotary_base = 1'000'000.0;
    s.inferred = {"schedule.min_lr", "schedule.total_steps", "optimizer", "rotary_base"};
    stages.push_back(s);
  }
  {
    StageConfig s;
    s.name = StageName::Dpo;
    s.seq_len = 4096;
    s.batch = SequenceBatch{64};
    s.epochs = 1;
    // ~7k code preference pairs plus ~15k safety pairs
    s.schedule = {5e-7, 5e-8, (22'000 + 63) / 64, 0.10, ScheduleShape::Cosine};
    s.optimizer = {OptimizerKind::RMSProp, 0.9, 0.99, 1e-8, 0.0, 0.01};
    s.rotary_base = 1'000'000.0;
    s.inferred = {"schedule.min_lr",    "schedule.total_steps", "batch", "epochs", "optimizer.beta1",
                  "optimizer.beta2", "optimizer.epsilon",    "optimizer.weight_decay", "rotary_base", "seq_len"};
    stages.push_back(s);
  }
  return stages;
}

const StageConfig& preset(StageName name) {
  static const std::vector<StageConfig> presets = stage_presets();
  for (const auto& s : presets)
    if (s.name == name) return s;
  throw Error("schedule", "no preset for stage");
}

namespace {

json to_json(const StageConfig& s) {
  json j;
  j["name"] = to_string(s.name);
  j["schedule"] = {{"peak_lr", s.schedule.peak_lr},
                   {"min_lr", s.schedule.min_lr},
                   {"total_steps", s.schedule.total_steps},
                   {"warmup_fraction", s.schedule.warmup_fraction},
                   {"shape", "cosine"}};
  j["optimizer"] = {{"kind", s.optimizer.kind == OptimizerKind::AdamW ? "AdamW" : "RMSProp"},
                    {"beta1", s.optimizer.beta1},
                    {"beta2", s.optimizer.beta2},
                    {"epsilon", s.optimizer.epsilon},
                    {"weight_decay", s.optimizer.weight_decay}};
  if (s.optimizer.dpo_beta) j["optimizer"]["dpo_beta"] = *s.optimizer.dpo_beta;
  j["seq_len"] = s.seq_len;
  j["rotary_base"] = s.rotary_base;
  if (const auto* b = std::get_if<BatchSpec>(&s.batch)) {
    j["batch"] = {{"devices", b->devices}, {"micro_batch", b->micro_batch}, {"grad_accum", b->grad_accum},
                  {"seq_len", b->seq_len}, {"tokens_per_step", tokens_per_step(*b)}};
  } else {
    j["batch"] = {{"sequences", std::get<SequenceBatch>(s.batch).sequences}};
  }
  if (s.epochs) j["epochs"] = *s.epochs;
  j["inferred"] = s.inferred;
  return j;
}

StageConfig stage_from_json(const json& j) {
  StageConfig s;
  s.name = parse_stage(j.at("name").get<std::string>());
  const auto& sch = j.at("schedule");
  s.schedule.peak_lr = sch.at("peak_lr").get<double>();
  s.schedule.min_lr = sch.at("min_lr").get<double>();
  s.schedule.total_steps = sch.at("total_steps").get<std::uint64_t>();
  s.schedule.warmup_fraction = sch.at("warmup_fraction").get<double>();
  if (sch.value("shape", "cosine") != "cosine") throw Error("schedule", "only cosine schedules are supported");
  const auto& opt = j.at("optimizer");
  const auto kind = opt.at("kind").get<std::string>();
  if (kind != "AdamW" && kind != "RMSProp") throw Error("schedule", "unknown optimizer '" + kind + "'");
  s.optimizer.kind = kind == "AdamW" ? OptimizerKind::AdamW : OptimizerKind::RMSProp;
  s.optimizer.beta1 = opt.at("beta1").get<double>();
  s.optimizer.beta2 = opt.at("beta2").get<double>();
  s.optimizer.epsilon = opt.at("epsilon").get<double>();
  s.optimizer.weight_decay = opt.at("weight_decay").get<double>();
  if (opt.contains("dpo_beta")) s.optimizer.dpo_beta = opt["dpo_beta"].get<double>();
  s.seq_len = j.at("seq_len").get<std::uint64_t>();
  s.rotary_base = j.at("rotary_base").get<double>();
  const auto& b = j.at("batch");
  if (b.contains("sequences")) {
    s.batch = SequenceBatch{b["sequences"].get<std::uint64_t>()};
  } else {
    s.batch = BatchSpec{b.at("devices").get<std::uint64_t>(), b.at("micro_batch").get<std::uint64_t>(),
                        b.at("grad_accum").get<std::uint64_t>(), b.at("seq_len").get<std::uint64_t>()};
  }
  if (j.contains("epochs")) s.epochs = j["epochs"].get<std::uint64_t>();
  s.inferred = j.value("inferred", std::vector<std::string>{});
  s.validate();
  return s;
}

}  // namespace

std::string stages_to_json(const std::vector<StageConfig>& stages) {
  json arr = json::array();
  for (const auto& s : stages) arr.push_back(to_json(s));
  return arr.dump(2);
}

std::vector<StageConfig> stages_from_json(std::string_view text) {
  std::vector<StageConfig> out;
  json arr;
  try {
    arr = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error("schedule", std::string("bad stage JSON: ") + e.what());
  }
  for (const auto& j : arr) out.push_back(stage_from_json(j));
  return out;
}

std::string lr_table(const ScheduleSpec& spec, std::uint64_t stride) {
  if (stride == 0) throw Error("schedule", "stride must be positive");
  std::ostringstream out;
  out << "step lr\n" << std::setprecision(17);
  for (std::uint64_t s = 0; s < spec.total_steps; s += stride) out << s << ' ' << lr_at(spec, s) << '\n';
  out << spec.total_steps << ' ' << lr_at(spec, spec.total_steps) << '\n';
  return out.str();
}

}  // namespace codepipe
