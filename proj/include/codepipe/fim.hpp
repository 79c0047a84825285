#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "codepipe/random.hpp"
#include "codepipe/tokenizer.hpp"

namespace codepipe {

enum class FimMode { None, Psm, Spm };
std::string_view to_string(FimMode mode);

/// [begin, end) in characters (code points) of the source text.
struct CharRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  bool operator==(const CharRange&) const = default;
};

struct FimSplit {
  std::string prefix;
  std::string middle;
  std::string suffix;
  std::size_t lo = 0;  // character cut points, lo <= hi
  std::size_t hi = 0;
};

/// Splits at character positions lo <= hi <= char_count(text).
FimSplit split_at(std::string_view text, std::size_t lo, std::size_t hi);

/// Two cut points drawn uniformly over [0, len] with replacement, then sorted.
FimSplit split_document(std::string_view text, Rng& rng);

struct FimOptions {
  double rate = 0.5;             // per-document transform probability
  double spm_probability = 0.5;  // SPM vs PSM among transformed documents
  bool eod_after_middle = false;
};

struct FimExample {
  FimMode mode = FimMode::None;
  CharRange prefix;
  CharRange middle;
  CharRange suffix;
  bool eod_after_middle = false;
  std::vector<TokenId> rendered;
};

/// PSM: <pre> prefix <suf> suffix <mid> middle
std::vector<TokenId> render_psm(const FimSplit& split, const Tokenizer& tok, bool eod_after_middle = false);
/// SPM (joined variant): <pre> <suf> suffix <mid> prefix middle
std::vector<TokenId> render_spm(const FimSplit& split, const Tokenizer& tok, bool eod_after_middle = false);

/// Renders a document with a fixed mode and cut points.
FimExample render_fim(std::string_view text, FimMode mode, std::size_t lo, std::size_t hi, const Tokenizer& tok,
                      bool eod_after_middle = false);

/// Decides the transform (Bernoulli(rate)), the mode and the cut points, then
/// renders. Draw order: transform decision, mode, cuts.
FimExample apply_fim(std::string_view text, const FimOptions& options, Rng& rng, const Tokenizer& tok);

/// Recovers the original text from a rendered sequence (plain, PSM or SPM).
/// Throws if the sentinels do not follow one of those layouts.
std::string reconstruct_text(std::span<const TokenId> rendered, const Tokenizer& tok);

struct FileFimRecord {
  std::size_t file = 0;
  FimMode mode = FimMode::None;
  std::size_t lo = 0;
  std::size_t hi = 0;
};

/// Applies FIM to every file range independently. Tokens outside the file
/// ranges (separators, headers) are copied through untouched; the returned
/// ranges cover each file's rendered tokens.
AnnotatedTokens apply_fim_within_files(const AnnotatedTokens& packed, const FimOptions& options, Rng& rng,
                                       const Tokenizer& tok, std::vector<FileFimRecord>* audit = nullptr);

}  // namespace codepipe
