#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace codepipe {

using TokenId = std::uint32_t;

enum class SpecialKind {
  FimPrefix,
  FimSuffix,
  FimMiddle,
  RepoContinuation,
  EndOfDoc,
  FilenameMarker,
  StarsMarker,
};

inline constexpr std::array<SpecialKind, 7> kAllSpecialKinds{
    SpecialKind::FimPrefix,      SpecialKind::FimSuffix,      SpecialKind::FimMiddle,  SpecialKind::RepoContinuation,
    SpecialKind::EndOfDoc,       SpecialKind::FilenameMarker, SpecialKind::StarsMarker};

/// Registry name, e.g. "FIM_PREFIX".
std::string_view special_name(SpecialKind kind);
std::optional<SpecialKind> parse_special_name(std::string_view name);

struct SpecialToken {
  SpecialKind kind;
  TokenId id;
  std::string surface;
};

inline constexpr std::size_t kDefaultVocabSize = 50'257;

struct Vocab {
  std::size_t size = kDefaultVocabSize;
  std::vector<SpecialToken> specials;

  /// Specials allocated at the top of the id space with StarCoder-style
  /// surfaces.
  static Vocab reference(std::size_t size = kDefaultVocabSize);

  /// Vocab description file: {"vocab_size": N, "specials": {"FIM_PREFIX":
  /// {"id": .., "surface": ..}, ...}}. Missing specials keep their defaults.
  static Vocab load(const std::filesystem::path& path);
  static Vocab from_json_text(std::string_view text);
  std::string to_json_text() const;

  /// Throws unless ids and surfaces are unique, ids are in range and every
  /// kind is registered exactly once.
  void validate(std::size_t first_special_id = 0) const;
};

/// [begin, end) range of token positions.
struct TokenRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
  bool operator==(const TokenRange&) const = default;
};

/// A token sequence with the positions of the files it was built from.
/// Tokens outside every range (separators, headers) belong to no file.
struct AnnotatedTokens {
  std::vector<TokenId> ids;
  std::vector<TokenRange> files;
};

/// Adapter interface; the pipeline only uses encode, decode and special.
class Tokenizer {
 public:
  virtual ~Tokenizer() = default;

  /// Never emits special ids.
  virtual std::vector<TokenId> encode(std::string_view text) const = 0;
  /// Specials render as their surfaces. Throws on ids the vocab cannot decode.
  virtual std::string decode(std::span<const TokenId> ids) const = 0;
  virtual const Vocab& vocab() const = 0;

  const SpecialToken& special(SpecialKind kind) const;
  const SpecialToken& special(std::string_view name) const;
  TokenId special_id(SpecialKind kind) const { return special(kind).id; }
  std::optional<SpecialKind> special_kind(TokenId id) const;
  bool is_special(TokenId id) const { return special_kind(id).has_value(); }
};

/// Byte-level reference tokenizer: ids 0..255 are raw bytes, specials sit at
/// the top of the id space. Ids in between are unassigned.
class ByteTokenizer final : public Tokenizer {
 public:
  explicit ByteTokenizer(Vocab vocab = Vocab::reference());

  std::vector<TokenId> encode(std::string_view text) const override;
  std::string decode(std::span<const TokenId> ids) const override;
  const Vocab& vocab() const override { return vocab_; }

 private:
  Vocab vocab_;
};

}  // namespace codepipe
