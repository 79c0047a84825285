#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "codepipe/tokenizer.hpp"

namespace codepipe {

/// Part of a file that landed in one sequence. A file cut by a sequence
/// boundary shows up as several spans flagged as continued.
struct FileSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t file = 0;  // running file index over the packed stream
  bool continues_previous = false;
  bool continues_next = false;
};

struct PackedSequence {
  std::vector<TokenId> ids;                 // exactly seq_len
  std::vector<std::size_t> doc_boundaries;  // positions of END_OF_DOC (not padding)
  std::vector<FileSpan> file_boundaries;
  std::size_t pad_count = 0;  // trailing

  std::size_t non_pad() const { return ids.size() - pad_count; }
};

enum class PackMode {
  Pretrain,  // documents may be split across sequences
  Sft,       // documents are never split
};

enum class OverflowPolicy { Error, Truncate };

struct SeqPackOptions {
  std::size_t seq_len = 4096;
  PackMode mode = PackMode::Pretrain;
  OverflowPolicy overflow = OverflowPolicy::Error;  // SFT only
};

struct PackStats {
  std::size_t documents = 0;
  std::uint64_t input_tokens = 0;
  std::uint64_t truncated_tokens = 0;
  std::size_t sequences = 0;
  std::uint64_t pad_tokens = 0;
};

/// Greedy packer. Each document is followed by END_OF_DOC; the final
/// sequence is padded at the tail with END_OF_DOC ids counted in pad_count.
class SequencePacker {
 public:
  SequencePacker(SeqPackOptions options, const Tokenizer& tok);

  void push(const AnnotatedTokens& doc);
  /// Pads and emits the partial sequence, if any.
  void finish();
  /// Moves completed sequences out.
  std::vector<PackedSequence> take();

  const PackStats& stats() const { return stats_; }

 private:
  void emit_current();
  void append_span(const AnnotatedTokens& doc, std::size_t begin, std::size_t end, std::size_t first_file);

  SeqPackOptions options_;
  TokenId eod_;
  PackedSequence current_;
  std::vector<PackedSequence> done_;
  std::size_t next_file_ = 0;
  PackStats stats_;
};

std::vector<PackedSequence> pack(std::span<const AnnotatedTokens> docs, const SeqPackOptions& options,
                                 const Tokenizer& tok, PackStats* stats = nullptr);

// ---------------------------------------------------------------------------
// Binary sequence file. Little-endian header:
//   char[8] magic "CPSEQ01\0", u32 seq_len, u32 vocab_size, u64 sequences,
//   u64 non_pad_tokens, u64 pad_tokens, u64 documents
// followed by sequences * seq_len u32 token ids.

struct SequenceFileHeader {
  std::uint32_t seq_len = 0;
  std::uint32_t vocab_size = 0;
  std::uint64_t sequences = 0;
  std::uint64_t non_pad_tokens = 0;
  std::uint64_t pad_tokens = 0;
  std::uint64_t documents = 0;
};

void write_sequences(std::ostream& out, std::span<const PackedSequence> seqs, std::size_t seq_len,
                     std::size_t vocab_size);
SequenceFileHeader read_sequences(std::istream& in, std::vector<std::vector<TokenId>>* ids = nullptr);

/// Human-readable audit: one block per sequence with counts, boundaries and
/// the decoded text.
void write_audit(std::ostream& out, std::span<const PackedSequence> seqs, const Tokenizer& tok);

// ---------------------------------------------------------------------------

struct BatchSpec {
  std::uint64_t devices = 256;
  std::uint64_t micro_batch = 4;
  std::uint64_t grad_accum = 1;
  std::uint64_t seq_len = 4096;

  void validate() const;
};

/// devices * micro_batch * grad_accum * seq_len
std::uint64_t tokens_per_step(const BatchSpec& b);

struct StageSteps {
  BatchSpec batch;
  std::uint64_t steps = 0;
};

/// Running totals after each stage, starting from base_tokens.
std::vector<std::uint64_t> stage_token_ledger(std::span<const StageSteps> stages, std::uint64_t base_tokens);

/// Steps needed to consume total_tokens (rounded up).
std::uint64_t steps_for_tokens(double total_tokens, std::uint64_t per_step);

}  // namespace codepipe
