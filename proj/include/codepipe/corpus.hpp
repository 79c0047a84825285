#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "codepipe/error.hpp"

namespace codepipe {

class Rng;

struct Document {
  std::string id;
  std::string repo_id;
  std::string path;
  std::string language;
  std::string text;
  std::optional<std::uint64_t> stars;

  bool operator==(const Document&) const = default;
};

/// Language tags the pipeline knows about. Unknown tags are kept as-is.
std::span<const std::string_view> known_languages();
bool is_known_language(std::string_view tag);

struct RepoGroup {
  std::string repo_id;
  std::vector<Document> files;
};

enum class LengthUnit { Chars, Tokens };
std::string_view to_string(LengthUnit unit);

struct LengthStats {
  std::size_t count = 0;
  double median = 0.0;
  double mean = 0.0;
  std::int64_t min = 0;
  std::int64_t max = 0;
  double pct_ge_4096 = 0.0;
  LengthUnit unit = LengthUnit::Chars;
};

/// Exact order statistics. The median of an even-length list is the mean of
/// the two central values. Throws on empty input.
LengthStats length_stats(std::span<const std::int64_t> lengths, LengthUnit unit = LengthUnit::Chars);

/// Fixed-key table, one "key value" pair per line.
std::string format_stats(const LengthStats& stats);

// ---------------------------------------------------------------------------
// Record ingestion. One JSON object per line with fields
// id, repo_id, path, language, text, stars. id, repo_id and text are required.

enum class IngestMode { Strict, Lenient };

struct IngestIssue {
  std::size_t line = 0;  // 1-based
  std::string message;
};

struct IngestResult {
  std::vector<Document> documents;
  std::vector<IngestIssue> issues;
};

class IngestError : public Error {
 public:
  IngestError(std::size_t line, const std::string& message)
      : Error("corpus", "line " + std::to_string(line) + ": " + message), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Strict mode throws IngestError on the first bad record; lenient mode skips
/// it and records an issue.
IngestResult ingest(std::istream& in, IngestMode mode = IngestMode::Strict);
IngestResult ingest_file(const std::string& path, IngestMode mode = IngestMode::Strict);

std::string serialize(const Document& doc);
void write_records(std::ostream& out, std::span<const Document> docs);

/// Groups keyed by repo_id in order of first appearance; file order within a
/// group follows the input.
std::vector<RepoGroup> group_by_repo(std::span<const Document> docs);

std::vector<Document> flatten(std::span<const RepoGroup> groups);

// ---------------------------------------------------------------------------
// Synthetic corpora.

struct LengthLaw {
  enum class Kind { Fixed, Uniform, LogNormal };
  Kind kind = Kind::LogNormal;
  // Fixed: median is the value. Uniform: [min, max]. LogNormal: parameterised
  // by median and mean (mean >= median), clamped to [min, max]; the spread is
  // chosen so that the clamped law keeps the declared mean.
  double median = 470.0;
  double mean = 1195.0;
  std::int64_t min = 0;
  std::int64_t max = 1'000'000'000;

  static LengthLaw fixed(std::int64_t value);
  static LengthLaw uniform(std::int64_t lo, std::int64_t hi);
  static LengthLaw lognormal(double median, double mean, std::int64_t lo, std::int64_t hi);

  void validate() const;
  std::int64_t draw(Rng& rng) const;
  /// Log-space standard deviation of the unclamped log-normal.
  double log_sigma() const;
  /// Mean of the clamped log-normal for a given log-space deviation.
  double clamped_mean(double sigma) const;
};

/// File-level law matching the "File Level" column of the corpus statistics
/// the long-context stage was built from (median 470, mean 1195, min 3).
LengthLaw file_level_law();
/// Repository-level law for concatenated repositories (median 12834,
/// mean 18000, min 6008).
LengthLaw repo_level_law();

struct SynthesisSpec {
  LengthLaw file_length = file_level_law();
  // When set, the total length of each repository (files plus one separator
  // between consecutive files) is drawn from this law and split over files.
  std::optional<LengthLaw> repo_length;
  std::size_t min_files = 1;
  std::size_t max_files = 6;
  std::vector<std::string> languages{"python", "c", "cpp", "go", "java", "javascript"};
  std::string id_prefix = "syn";
};

/// Deterministic for a given seed. Text is drawn from a printable ASCII
/// alphabet, so character and byte-token lengths coincide.
std::vector<RepoGroup> synthesize_corpus(std::uint64_t seed, std::size_t n_repos,
                                         const SynthesisSpec& spec = {});

}  // namespace codepipe
