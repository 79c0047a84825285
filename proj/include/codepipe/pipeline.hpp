#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "codepipe/seqpack.hpp"

namespace codepipe {

inline constexpr const char* kVersion = "0.1.0";

enum class PipelineStage { Pretrain, LongContext, Sft };
std::string_view to_string(PipelineStage s);
PipelineStage parse_pipeline_stage(std::string_view s);
/// 4096 for PRETRAIN and SFT, 16384 for LONG_CONTEXT.
std::size_t default_seq_len(PipelineStage s);

struct CorpusInput {
  std::string name;  // mixture source name (PRETRAIN); informational otherwise
  std::string path;
};

struct PipelineConfig {
  PipelineStage stage = PipelineStage::Pretrain;
  std::uint64_t seed = 0;
  std::string table_path;  // empty: built-in mixture table
  std::vector<CorpusInput> corpora;
  std::size_t synthetic_repos = 0;  // > 0: synthesize inputs instead of reading corpora
  std::size_t seq_len = 0;          // 0: stage default
  double fim_rate = 0.5;
  bool fim_eod = false;
  std::vector<std::string> languages;  // empty: the six long-context languages
  std::uint64_t budget = 0;            // PRETRAIN token budget; 0: all source tokens
  OverflowPolicy sft_overflow = OverflowPolicy::Truncate;
  std::string vocab_path;  // empty: reference byte vocab
};

/// JSON text <-> config. Unknown keys are rejected.
std::string config_to_json(const PipelineConfig& cfg);
PipelineConfig config_from_json(std::string_view text);

struct OutputFile {
  std::string file;
  std::string sha256;
  std::uint64_t bytes = 0;
};

struct PipelineResult {
  std::string manifest_json;
  std::filesystem::path manifest_path;
  std::vector<OutputFile> outputs;
};

/// Runs one stage end to end and writes sequences.bin, fim_audit.jsonl (not
/// for SFT) and manifest.json into out_dir.
PipelineResult run_pipeline(const PipelineConfig& cfg, const std::filesystem::path& out_dir);

/// Reads the config recorded in a manifest and checks the recorded input
/// hashes against the files on disk.
PipelineConfig config_from_manifest(const std::filesystem::path& manifest_path);

/// Output hashes recorded in a manifest.
std::vector<OutputFile> manifest_outputs(const std::filesystem::path& manifest_path);

}  // namespace codepipe
