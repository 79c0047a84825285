#include "codepipe/corpus.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"

#include "codepipe/random.hpp"

namespace codepipe {

using nlohmann::json;

namespace {

constexpr std::array<std::string_view, 24> kKnownLanguages{
    "python", "c",     "cpp",      "go",       "java",       "javascript", "typescript", "rust",
    "ruby",   "php",   "sql",      "shell",    "css",        "html",       "markdown",   "r",
    "jupyter", "restructuredtext", "text", "tex", "math", "diff", "issue", "unknown"};

}  // namespace

std::span<const std::string_view> known_languages() { return kKnownLanguages; }

bool is_known_language(std::string_view tag) {
  return std::find(kKnownLanguages.begin(), kKnownLanguages.end(), tag) != kKnownLanguages.end();
}

std::string_view to_string(LengthUnit unit) { return unit == LengthUnit::Chars ? "chars" : "tokens"; }

LengthStats length_stats(std::span<const std::int64_t> lengths, LengthUnit unit) {
  if (lengths.empty()) throw Error("corpus", "length_stats requires a non-empty list");
  std::vector<std::int64_t> sorted(lengths.begin(), lengths.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();

  LengthStats s;
  s.count = n;
  s.unit = unit;
  s.min = sorted.front();
  s.max = sorted.back();
  if (n % 2 == 1) {
    s.median = static_cast<double>(sorted[n / 2]);
  } else {
    s.median = (static_cast<double>(sorted[n / 2 - 1]) + static_cast<double>(sorted[n / 2])) / 2.0;
  }
  long double sum = 0;
  std::size_t long_rows = 0;
  for (auto v : sorted) {
    sum += v;
    if (v >= 4096) ++long_rows;
  }
  s.mean = static_cast<double>(sum / static_cast<long double>(n));
  s.pct_ge_4096 = 100.0 * static_cast<double>(long_rows) / static_cast<double>(n);
  return s;
}

std::string format_stats(const LengthStats& s) {
  std::ostringstream out;
  out.precision(10);
  out << "unit         " << to_string(s.unit) << '\n'
      << "count        " << s.count << '\n'
      << "pct_ge_4096  " << s.pct_ge_4096 << '\n'
      << "median       " << s.median << '\n'
      << "max          " << s.max << '\n'
      << "min          " << s.min << '\n'
      << "mean         " << s.mean << '\n';
  return out.str();
}

// ---------------------------------------------------------------------------

namespace {

std::optional<std::string> parse_record(const std::string& line, Document& doc) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    return std::string("malformed record: ") + e.what();
  }
  if (!j.is_object()) return "record is not an object";
  for (const char* field : {"id", "repo_id", "text"}) {
    if (!j.contains(field)) return std::string("missing required field '") + field + "'";
    if (!j[field].is_string()) return std::string("field '") + field + "' must be a string";
  }
  doc.id = j["id"].get<std::string>();
  doc.repo_id = j["repo_id"].get<std::string>();
  doc.text = j["text"].get<std::string>();
  doc.path = j.value("path", std::string{});
  doc.language = j.value("language", std::string{});
  doc.stars.reset();
  if (j.contains("stars") && !j["stars"].is_null()) {
    if (!j["stars"].is_number_unsigned()) return "field 'stars' must be a non-negative integer";
    doc.stars = j["stars"].get<std::uint64_t>();
  }
  return std::nullopt;
}

}  // namespace

IngestResult ingest(std::istream& in, IngestMode mode) {
  IngestResult result;
  std::unordered_set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;

    Document doc;
    auto problem = parse_record(line, doc);
    if (!problem && !seen.insert(doc.id).second) problem = "duplicate id '" + doc.id + "'";
    if (problem) {
      if (mode == IngestMode::Strict) throw IngestError(line_no, *problem);
      result.issues.push_back({line_no, *problem});
      continue;
    }
    result.documents.push_back(std::move(doc));
  }
  return result;
}

IngestResult ingest_file(const std::string& path, IngestMode mode) {
  std::ifstream in(path);
  if (!in) throw Error("corpus", "cannot open " + path);
  return ingest(in, mode);
}

std::string serialize(const Document& doc) {
  json j;
  j["id"] = doc.id;
  j["repo_id"] = doc.repo_id;
  j["path"] = doc.path;
  j["language"] = doc.language;
  j["text"] = doc.text;
  if (doc.stars) j["stars"] = *doc.stars;
  return j.dump(-1, ' ', false, json::error_handler_t::replace);
}

void write_records(std::ostream& out, std::span<const Document> docs) {
  for (const auto& d : docs) out << serialize(d) << '\n';
}

std::vector<RepoGroup> group_by_repo(std::span<const Document> docs) {
  std::vector<RepoGroup> groups;
  std::unordered_map<std::string, std::size_t> index;
  for (const auto& d : docs) {
    auto [it, inserted] = index.try_emplace(d.repo_id, groups.size());
    if (inserted) groups.push_back({d.repo_id, {}});
    groups[it->second].files.push_back(d);
  }
  return groups;
}

std::vector<Document> flatten(std::span<const RepoGroup> groups) {
  std::vector<Document> out;
  for (const auto& g : groups) out.insert(out.end(), g.files.begin(), g.files.end());
  return out;
}

// ---------------------------------------------------------------------------

LengthLaw LengthLaw::fixed(std::int64_t value) {
  LengthLaw law;
  law.kind = Kind::Fixed;
  law.median = law.mean = static_cast<double>(value);
  law.min = law.max = value;
  return law;
}

LengthLaw LengthLaw::uniform(std::int64_t lo, std::int64_t hi) {
  LengthLaw law;
  law.kind = Kind::Uniform;
  law.min = lo;
  law.max = hi;
  law.median = law.mean = (static_cast<double>(lo) + static_cast<double>(hi)) / 2.0;
  return law;
}

LengthLaw LengthLaw::lognormal(double median, double mean, std::int64_t lo, std::int64_t hi) {
  LengthLaw law;
  law.kind = Kind::LogNormal;
  law.median = median;
  law.mean = mean;
  law.min = lo;
  law.max = hi;
  return law;
}

void LengthLaw::validate() const {
  if (min < 0 || min > max) throw Error("corpus", "length law needs 0 <= min <= max");
  if (kind == Kind::LogNormal) {
    if (!(median > 0.0) || !std::isfinite(median)) throw Error("corpus", "log-normal median must be positive");
    if (!(mean >= median) || !std::isfinite(mean)) throw Error("corpus", "log-normal mean must be >= median");
    if (median < static_cast<double>(min) || median > static_cast<double>(max))
      throw Error("corpus", "log-normal median must lie within [min, max]");
  }
  if (kind == Kind::Fixed && median < 0.0) throw Error("corpus", "fixed length must be non-negative");
}

std::int64_t LengthLaw::draw(Rng& rng) const {
  switch (kind) {
    case Kind::Fixed:
      return static_cast<std::int64_t>(median);
    case Kind::Uniform:
      return static_cast<std::int64_t>(
          rng.between(static_cast<std::uint64_t>(min), static_cast<std::uint64_t>(max)));
    case Kind::LogNormal: {
      // median = exp(mu), mean = exp(mu + sigma^2 / 2)
      const double v = std::exp(std::log(median) + log_sigma() * rng.normal());
      const auto rounded = static_cast<double>(std::llround(std::min(v, 9.0e18)));
      return std::clamp(static_cast<std::int64_t>(rounded), min, max);
    }
  }
  return 0;
}

namespace {

double phi(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace

double LengthLaw::clamped_mean(double sigma) const {
  const double mu = std::log(median);
  if (sigma <= 0.0) return median;
  const double lo = static_cast<double>(min), hi = static_cast<double>(max);
  const double a = lo > 0.0 ? (std::log(lo) - mu) / sigma : -INFINITY;
  const double b = (std::log(hi) - mu) / sigma;
  const double tail = std::exp(mu + sigma * sigma / 2.0);
  return lo * phi(a) + hi * (1.0 - phi(b)) + tail * (phi(b - sigma) - phi(a - sigma));
}

double LengthLaw::log_sigma() const {
  // median = exp(mu) survives clamping; solve the spread for the clamped mean.
  if (mean <= median) return 0.0;
  double lo = 0.0, hi = 8.0;
  if (clamped_mean(hi) < mean) return hi;
  for (int i = 0; i < 100; ++i) {
    const double mid = 0.5 * (lo + hi);
    (clamped_mean(mid) < mean ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

LengthLaw file_level_law() { return LengthLaw::lognormal(470.0, 1195.0, 3, 326'833); }
LengthLaw repo_level_law() { return LengthLaw::lognormal(12'834.0, 18'000.0, 6'008, 1'020'069); }

namespace {

constexpr std::array<std::string_view, 24> kWords{
    "def",  "return", "if",    "else",  "for",   "while", "int",    "value", "self",  "data",  "node",   "count",
    "list", "index",  "result", "key",  "item", "buffer", "struct", "class", "import", "const", "static", "void"};
constexpr std::string_view kPunct = "(){};=.,+-*:";

std::string extension_for(std::string_view lang) {
  if (lang == "python") return "py";
  if (lang == "c") return "c";
  if (lang == "cpp") return "cpp";
  if (lang == "go") return "go";
  if (lang == "java") return "java";
  if (lang == "javascript") return "js";
  if (lang == "ruby") return "rb";
  if (lang == "rust") return "rs";
  return "txt";
}

std::string synth_text(Rng& rng, std::size_t length) {
  std::string text;
  text.reserve(length);
  while (text.size() < length) {
    const auto roll = rng.below(10);
    if (roll < 6) {
      text += kWords[rng.below(kWords.size())];
    } else if (roll < 8) {
      text.push_back(kPunct[rng.below(kPunct.size())]);
    } else if (roll < 9) {
      text.push_back('\n');
    } else {
      text += std::to_string(rng.below(1000));
    }
    if (text.size() < length && rng.below(3) == 0) text.push_back(' ');
  }
  text.resize(length);
  return text;
}

// Splits total into `parts` non-negative lengths summing to total, keeping
// each part >= 1 when total allows it.
std::vector<std::int64_t> split_length(Rng& rng, std::int64_t total, std::size_t parts) {
  std::vector<std::int64_t> out(parts, 0);
  const auto n = static_cast<std::int64_t>(parts);
  const std::int64_t base = total >= n ? 1 : 0;
  const std::int64_t free = total - base * n;
  std::vector<std::int64_t> cuts;
  for (std::size_t i = 0; i + 1 < parts; ++i)
    cuts.push_back(static_cast<std::int64_t>(rng.between(0, static_cast<std::uint64_t>(free))));
  cuts.push_back(0);
  cuts.push_back(free);
  std::sort(cuts.begin(), cuts.end());
  for (std::size_t i = 0; i < parts; ++i) out[i] = base + cuts[i + 1] - cuts[i];
  return out;
}

}  // namespace

std::vector<RepoGroup> synthesize_corpus(std::uint64_t seed, std::size_t n_repos, const SynthesisSpec& spec) {
  spec.file_length.validate();
  if (spec.repo_length) spec.repo_length->validate();
  if (spec.min_files == 0 || spec.min_files > spec.max_files)
    throw Error("corpus", "synthesis needs 1 <= min_files <= max_files");
  if (spec.languages.empty()) throw Error("corpus", "synthesis needs at least one language");

  std::vector<RepoGroup> groups;
  groups.reserve(n_repos);
  for (std::size_t r = 0; r < n_repos; ++r) {
    Rng rng(derive_seed(seed, "synthesize_corpus", r));
    RepoGroup group;
    group.repo_id = spec.id_prefix + "-repo-" + std::to_string(r);
    const auto n_files = static_cast<std::size_t>(rng.between(spec.min_files, spec.max_files));

    std::vector<std::int64_t> lengths;
    if (spec.repo_length) {
      const std::int64_t total = spec.repo_length->draw(rng);
      const auto separators = static_cast<std::int64_t>(n_files) - 1;
      lengths = split_length(rng, std::max<std::int64_t>(0, total - separators), n_files);
    } else {
      for (std::size_t f = 0; f < n_files; ++f) lengths.push_back(spec.file_length.draw(rng));
    }

    const std::uint64_t stars = rng.below(5000);
    for (std::size_t f = 0; f < n_files; ++f) {
      Document doc;
      const auto& lang = spec.languages[rng.below(spec.languages.size())];
      doc.id = group.repo_id + "/" + std::to_string(f);
      doc.repo_id = group.repo_id;
      doc.language = lang;
      doc.path = "src/file_" + std::to_string(f) + "." + extension_for(lang);
      doc.text = synth_text(rng, static_cast<std::size_t>(lengths[f]));
      doc.stars = stars;
      group.files.push_back(std::move(doc));
    }
    groups.push_back(std::move(group));
  }
  return groups;
}

}  // namespace codepipe
