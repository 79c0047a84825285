#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "codepipe/random.hpp"

namespace codepipe {

enum class Category { Code, Technical, Math, Web };
std::string_view to_string(Category c);
Category parse_category(std::string_view s);

struct DatasetSpec {
  std::string name;
  double weight = 0.0;
  double tokens_sampled = 0.0;  // the published table carries fractional totals
  double epochs = 1.0;
  Category category = Category::Code;

  void validate() const;
};

/// Printed total of the reference mixture table.
inline constexpr double kReferenceTotalTokens = 1'322'090'182'830.13;

/// The 26-row pretraining mixture, transcribed as printed.
std::vector<DatasetSpec> reference_table();

/// CSV with header name,weight,tokens_sampled,epochs,category. Thousands
/// separators inside quoted numbers are accepted.
std::vector<DatasetSpec> read_table_csv(std::istream& in);
std::vector<DatasetSpec> load_table(const std::filesystem::path& path);
void write_table_csv(std::ostream& out, std::span<const DatasetSpec> specs);

struct TableTolerances {
  double weight_sum = 1e-3;
  double row = 5e-5;
  double code_share_target = 0.80;
  double code_share = 0.01;
};

struct RowCheck {
  std::string name;
  double weight = 0.0;
  double implied_weight = 0.0;  // tokens_sampled / total
  double deviation = 0.0;
  bool ok = false;
};

struct ValidationReport {
  double weight_sum = 0.0;
  bool weight_sum_ok = false;
  double token_sum = 0.0;
  std::vector<RowCheck> rows;
  bool rows_ok = false;
  double code_share = 0.0;  // summed weight of Code-category rows
  bool code_share_ok = false;
  std::vector<std::string> notes;  // non-fatal observations (e.g. duplicate rows)

  bool passed() const { return weight_sum_ok && rows_ok && code_share_ok; }
};

ValidationReport validate_table(std::span<const DatasetSpec> specs, double total,
                                const TableTolerances& tol = {});
std::string format_report(const ValidationReport& report);

struct SourceQuota {
  std::string name;
  double weight = 0.0;
  std::uint64_t quota = 0;
  double epochs = 1.0;
  double source_size = 0.0;  // tokens_sampled / epochs
};

struct MixturePlan {
  std::uint64_t total_budget = 0;
  std::vector<SourceQuota> sources;

  const SourceQuota& source(std::string_view name) const;
  std::uint64_t quota(std::string_view name) const { return source(name).quota; }
};

struct PlanOptions {
  // Allow tables whose weights do not sum to 1; quotas are apportioned by
  // normalised weights either way.
  bool renormalize = false;
  double weight_sum_tolerance = 1e-3;
};

/// Largest-remainder apportionment of the budget: sum of quotas equals the
/// budget exactly and each quota is within one token of its exact share.
MixturePlan plan_mixture(std::span<const DatasetSpec> specs, std::uint64_t total_budget,
                         const PlanOptions& options = {});
std::string format_plan(const MixturePlan& plan);

/// Largest-remainder apportionment of `total` by non-negative weights.
std::vector<std::uint64_t> apportion(std::span<const double> weights, std::uint64_t total);

// ---------------------------------------------------------------------------

struct MixtureSource {
  std::string name;
  std::vector<std::uint64_t> doc_tokens;  // token length of each document
};

struct StreamItem {
  std::size_t source = 0;  // index into the plan's sources
  std::size_t doc = 0;     // index into that source's documents
  std::uint32_t epoch = 0;
  std::uint64_t tokens = 0;
};

/// Interleaves sources into one stream. Each step draws a source with
/// probability proportional to its remaining quota. A source stops once its
/// next document no longer fits in the remaining quota; when its documents are
/// consumed before that, it starts a new epoch in a freshly shuffled order.
class MixtureStream {
 public:
  MixtureStream(const MixturePlan& plan, std::vector<MixtureSource> sources, std::uint64_t seed);

  std::optional<StreamItem> next();

  const std::vector<std::uint64_t>& emitted_tokens() const { return emitted_; }
  const std::vector<std::uint32_t>& epochs_started() const { return epochs_; }

 private:
  void start_epoch(std::size_t s);
  bool next_fits(std::size_t s) const;

  std::uint64_t seed_;
  Rng step_rng_;
  std::vector<std::string> names_;
  std::vector<MixtureSource> sources_;
  std::vector<std::uint64_t> remaining_;
  std::vector<std::uint64_t> emitted_;
  std::vector<std::uint32_t> epochs_;
  std::vector<std::vector<std::size_t>> order_;
  std::vector<std::size_t> cursor_;
  std::vector<bool> closed_;
};

}  // namespace codepipe
