#include <doctest.h>

#include <algorithm>
#include <map>

#include "codepipe/corpus.hpp"
#include "codepipe/error.hpp"
#include "codepipe/repopack.hpp"

using namespace codepipe;

namespace {

Document file(const std::string& repo, int i, const std::string& lang, const std::string& text) {
  return {repo + "/" + std::to_string(i), repo, "f" + std::to_string(i), lang, text, {}};
}

std::size_t count_id(const std::vector<TokenId>& ids, TokenId id) {
  return static_cast<std::size_t>(std::count(ids.begin(), ids.end(), id));
}

}  // namespace

TEST_CASE("filter_languages") {
  const RepoGroup g{"r", {file("r", 0, "python", "a"), file("r", 1, "ruby", "b"), file("r", 2, "go", "c")}};
  const auto kept = filter_languages(g, default_long_context_languages());
  REQUIRE(kept.files.size() == 2);
  CHECK(kept.files[0].language == "python");
  CHECK(kept.files[1].language == "go");
  CHECK(filter_languages(g, {}).files.empty());
  CHECK(filter_languages(g, {"python", "ruby", "go"}).files == g.files);
  CHECK(default_long_context_languages() ==
        std::set<std::string>{"python", "c", "cpp", "go", "java", "javascript"});
}

TEST_CASE("pack_repository: three files give two distinct orderings") {
  const ByteTokenizer tok;
  const RepoGroup g{"r", {file("r", 0, "c", "x"), file("r", 1, "c", "y"), file("r", 2, "c", "z")}};
  const auto packs = pack_repository(g, 5, tok);
  REQUIRE(packs.size() == 2);
  CHECK(packs[0].file_order != packs[1].file_order);
  const TokenId sep = tok.special_id(SpecialKind::RepoContinuation);
  for (const auto& p : packs) {
    CHECK(count_id(tokenize_pack(p, tok).ids, sep) == 2);
    CHECK(p.repo_id == "r");
  }
}

TEST_CASE("pack_repository: single file gives one pack without separators") {
  const ByteTokenizer tok;
  const RepoGroup g{"r", {file("r", 0, "c", "only")}};
  const auto packs = pack_repository(g, 5, tok);
  REQUIRE(packs.size() == 1);
  CHECK(count_id(tokenize_pack(packs[0], tok).ids, tok.special_id(SpecialKind::RepoContinuation)) == 0);
  CHECK(packs[0].text == "only");
}

TEST_CASE("pack_repository: errors") {
  const ByteTokenizer tok;
  CHECK_THROWS_AS(pack_repository(RepoGroup{"r", {}}, 0, tok), Error);
  CHECK_THROWS_AS(pack_repository(RepoGroup{"r", {file("other", 0, "c", "x")}}, 0, tok), Error);
}

TEST_CASE("pack_repository: each pack is a file-level permutation of its repository") {
  const ByteTokenizer tok;
  SynthesisSpec spec;
  spec.file_length = LengthLaw::uniform(0, 200);
  spec.max_files = 7;
  const auto groups = synthesize_corpus(31, 200, spec);
  const TokenId sep = tok.special_id(SpecialKind::RepoContinuation);
  for (const auto& g : groups) {
    const auto packs = pack_repository(g, 31, tok);
    CHECK(packs.size() == (g.files.size() > 1 ? 2u : 1u));
    std::multiset<std::string> want;
    for (const auto& f : g.files) want.insert(f.text);
    for (const auto& p : packs) {
      std::multiset<std::string> got;
      for (const auto& r : p.file_char_ranges()) got.insert(p.text.substr(r.begin, r.end - r.begin));
      CHECK(got == want);
      const auto toks = tokenize_pack(p, tok);
      CHECK(count_id(toks.ids, sep) == g.files.size() - 1);
      CHECK(toks.files.size() == g.files.size());
      for (const auto& f : p.files) CHECK(f.id.rfind(g.repo_id + "/", 0) == 0);
    }
    if (packs.size() == 2) CHECK(packs[0].file_order != packs[1].file_order);
  }
}

TEST_CASE("pack_repository: filename markers wrap each file header") {
  const ByteTokenizer tok;
  const RepoGroup g{"r", {file("r", 0, "c", "x"), file("r", 1, "c", "y")}};
  const auto packs = pack_repository(g, 0, tok, {.filename_markers = true});
  const auto toks = tokenize_pack(packs[0], tok);
  CHECK(count_id(toks.ids, tok.special_id(SpecialKind::FilenameMarker)) == 2);
  for (const auto& r : toks.files) CHECK(r.size() == 1);
}

TEST_CASE("pack_corpus: deterministic and sorted") {
  const ByteTokenizer tok;
  const auto groups = synthesize_corpus(8, 30);
  const auto a = pack_corpus(groups, 8, tok);
  const auto b = pack_corpus(groups, 8, tok);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].text == b[i].text);
  CHECK(std::is_sorted(a.begin(), a.end(), [](const RepoPack& x, const RepoPack& y) {
    return std::tie(x.repo_id, x.ordering_index) < std::tie(y.repo_id, y.ordering_index);
  }));
}

TEST_CASE("target_context_report: single pack and cross-module agreement") {
  const ByteTokenizer tok;
  const RepoGroup g{"r", {file("r", 0, "c", std::string(100, 'x'))}};
  const auto single = pack_repository(g, 0, tok);
  const auto r = target_context_report(single, tok);
  CHECK(r.stats.median == 100.0);
  CHECK(r.stats.mean == 100.0);

  const auto packs = pack_corpus(synthesize_corpus(2, 40), 2, tok);
  std::vector<std::int64_t> lengths;
  for (const auto& p : packs) lengths.push_back(static_cast<std::int64_t>(tokenize_pack(p, tok).ids.size()));
  const auto direct = length_stats(lengths, LengthUnit::Tokens);
  const auto report = target_context_report(packs, tok);
  CHECK(report.stats.median == direct.median);
  CHECK(report.stats.mean == direct.mean);
  CHECK(report.stats.count == direct.count);
  CHECK_THROWS_AS(target_context_report({}, tok), Error);
}

TEST_CASE("target_context_report: repository-level synthesis reproduces median and mean") {
  const ByteTokenizer tok;
  SynthesisSpec spec;
  spec.repo_length = repo_level_law();
  spec.min_files = 2;
  spec.max_files = 8;
  const auto packs = pack_corpus(synthesize_corpus(2024, 4000, spec), 2024, tok);
  const auto report = target_context_report(packs, tok);
  CHECK(report.stats.median == doctest::Approx(12'834.0).epsilon(0.05));
  CHECK(report.stats.mean == doctest::Approx(18'000.0).epsilon(0.05));
  CHECK(report.brackets);
  CHECK(report.stats.min >= 6008);
}
