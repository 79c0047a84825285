#pragma once

#include <cstdint>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "codepipe/corpus.hpp"
#include "codepipe/tokenizer.hpp"

namespace codepipe {

/// Python, C, C++, Go, Java and JavaScript.
const std::set<std::string>& default_long_context_languages();

RepoGroup filter_languages(const RepoGroup& group, const std::set<std::string>& allowed);

/// [begin, end) byte range in a pack's text.
struct ByteRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  bool operator==(const ByteRange&) const = default;
};

struct PackedFile {
  std::string id;
  std::string path;
  ByteRange header;   // empty unless filename markers are enabled
  ByteRange content;  // the file's text
};

struct RepoPack {
  std::string repo_id;
  int ordering_index = 0;
  std::vector<std::size_t> file_order;  // indices into the group's files
  std::vector<PackedFile> files;        // in pack order
  std::string text;                     // files joined by the separator surface

  std::vector<ByteRange> file_char_ranges() const;
};

struct RepoPackOptions {
  bool filename_markers = false;
  std::size_t max_redraws = 64;
};

/// One pack for a single-file repository, otherwise two packs whose file
/// orders are independent uniform permutations, re-drawn until they differ.
/// Deterministic per (seed, repo_id).
std::vector<RepoPack> pack_repository(const RepoGroup& group, std::uint64_t seed, const Tokenizer& tok,
                                      const RepoPackOptions& options = {});

/// Packs every group; output ordered by (repo_id, ordering_index). Empty
/// groups are skipped.
std::vector<RepoPack> pack_corpus(std::span<const RepoGroup> groups, std::uint64_t seed, const Tokenizer& tok,
                                  const RepoPackOptions& options = {});

/// Token form of a pack: file contents encoded, one REPO_CONTINUATION id
/// between consecutive files, file ranges annotated.
AnnotatedTokens tokenize_pack(const RepoPack& pack, const Tokenizer& tok);

struct ContextReport {
  LengthStats stats;
  std::size_t context_length = 16'384;
  // The context length sits between the median and mean pack length.
  bool brackets = false;
};

ContextReport target_context_report(std::span<const RepoPack> packs, const Tokenizer& tok,
                                    std::size_t context_length = 16'384);

}  // namespace codepipe
