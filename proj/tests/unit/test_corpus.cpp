#include <doctest.h>

#include <algorithm>
#include <map>
#include <sstream>

#include "codepipe/corpus.hpp"
#include "codepipe/random.hpp"
#include "../oracles.hpp"

using namespace codepipe;

namespace {

std::string record(const std::string& id, const std::string& repo, const std::string& text) {
  return serialize(Document{id, repo, "a.py", "python", text, std::nullopt});
}

}  // namespace

TEST_CASE("ingest: empty stream gives no documents") {
  std::istringstream in("");
  CHECK(ingest(in).documents.empty());
}

TEST_CASE("ingest: well-formed lines keep their order") {
  std::istringstream in(record("a", "r", "x") + "\n" + record("b", "r", "y") + "\n\n" + record("c", "s", "z") + "\n");
  const auto docs = ingest(in).documents;
  REQUIRE(docs.size() == 3);
  CHECK(docs[0].id == "a");
  CHECK(docs[1].id == "b");
  CHECK(docs[2].id == "c");
  CHECK(docs[2].repo_id == "s");
}

TEST_CASE("ingest: missing text names the field and line") {
  std::istringstream in(record("a", "r", "x") + "\n{\"id\":\"b\",\"repo_id\":\"r\"}\n");
  try {
    (void)ingest(in);
    FAIL("expected an error");
  } catch (const IngestError& e) {
    CHECK(e.line() == 2);
    CHECK(std::string(e.what()).find("text") != std::string::npos);
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("ingest: lenient mode records issues and keeps going") {
  std::istringstream in("not json\n" + record("a", "r", "x") + "\n" + record("a", "r", "dup") + "\n");
  const auto result = ingest(in, IngestMode::Lenient);
  CHECK(result.documents.size() == 1);
  REQUIRE(result.issues.size() == 2);
  CHECK(result.issues[0].line == 1);
  CHECK(result.issues[1].message.find("duplicate") != std::string::npos);
}

TEST_CASE("ingest: serialize round trip") {
  Rng rng(5);
  std::vector<Document> docs;
  for (int i = 0; i < 50; ++i)
    docs.push_back({"d" + std::to_string(i), "r" + std::to_string(i % 7), "p/" + std::to_string(i), "go",
                    oracle::random_utf8(rng, 40), i % 3 ? std::optional<std::uint64_t>(i) : std::nullopt});
  std::ostringstream out;
  write_records(out, docs);
  std::istringstream in(out.str());
  CHECK(ingest(in).documents == docs);
}

TEST_CASE("group_by_repo: small cases") {
  CHECK(group_by_repo({}).empty());
  const std::vector<Document> docs{{"1", "A", "", "", "", {}}, {"2", "A", "", "", "", {}}, {"3", "B", "", "", "", {}}};
  const auto groups = group_by_repo(docs);
  REQUIRE(groups.size() == 2);
  CHECK(groups[0].files.size() == 2);
  CHECK(groups[1].files.size() == 1);
}

TEST_CASE("group_by_repo: union of groups equals the input multiset") {
  Rng rng(11);
  std::vector<Document> docs;
  for (int i = 0; i < 1000; ++i)
    docs.push_back({"d" + std::to_string(i), "repo" + std::to_string(rng.below(40)), "", "c", "", {}});
  const auto groups = group_by_repo(docs);
  std::multiset<std::pair<std::string, std::string>> expected, got;
  for (const auto& d : docs) expected.insert({d.repo_id, d.id});
  for (const auto& g : groups)
    for (const auto& f : g.files) {
      CHECK(f.repo_id == g.repo_id);
      got.insert({f.repo_id, f.id});
    }
  CHECK(got == expected);
  std::set<std::string> ids;
  for (const auto& g : groups) CHECK(ids.insert(g.repo_id).second);
}

TEST_CASE("length_stats: worked examples") {
  const std::vector<std::int64_t> table{3, 470, 326833};
  const auto s = length_stats(table);
  CHECK(s.median == 470.0);
  CHECK(s.min == 3);
  CHECK(s.max == 326833);

  const std::vector<std::int64_t> boundary{4096};
  CHECK(length_stats(boundary).pct_ge_4096 == 100.0);
  const std::vector<std::int64_t> small{1, 2, 3};
  CHECK(length_stats(small).mean == 2.0);
  CHECK_THROWS_AS(length_stats(std::vector<std::int64_t>{}), Error);
}

TEST_CASE("length_stats: matches a brute-force oracle on random lists up to length 50") {
  Rng rng(3);
  for (std::size_t n = 1; n <= 50; ++n) {
    for (int trial = 0; trial < 40; ++trial) {
      std::vector<std::int64_t> xs(n);
      const std::uint64_t range = trial % 2 ? 10 : 9000;  // ties vs. the 4096 boundary
      for (auto& x : xs) x = static_cast<std::int64_t>(rng.below(range));
      const auto got = length_stats(xs);
      const auto want = oracle::stats(xs);
      REQUIRE(got.count == n);
      CHECK(got.median == want.median);
      CHECK(got.mean == doctest::Approx(want.mean).epsilon(1e-12));
      CHECK(got.min == want.min);
      CHECK(got.max == want.max);
      CHECK(got.pct_ge_4096 == doctest::Approx(want.pct_ge_4096).epsilon(1e-12));
    }
  }
}

TEST_CASE("format_stats prints every key") {
  const std::vector<std::int64_t> xs{1, 5000};
  const auto text = format_stats(length_stats(xs, LengthUnit::Tokens));
  for (const char* key : {"unit", "count", "pct_ge_4096", "median", "max", "min", "mean"})
    CHECK(text.find(key) != std::string::npos);
  CHECK(text.find("tokens") != std::string::npos);
}

TEST_CASE("synthesize_corpus: determinism and empty input") {
  CHECK(synthesize_corpus(1, 0).empty());
  const auto a = synthesize_corpus(42, 20);
  const auto b = synthesize_corpus(42, 20);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].files == b[i].files);
  const auto c = synthesize_corpus(43, 20);
  CHECK(flatten(a) != flatten(c));
}

TEST_CASE("synthesize_corpus: file-level mean within 5% of 1195") {
  SynthesisSpec spec;
  spec.min_files = spec.max_files = 1;
  const auto docs = flatten(synthesize_corpus(2024, 10'000, spec));
  REQUIRE(docs.size() == 10'000);
  std::vector<std::int64_t> lengths;
  for (const auto& d : docs) lengths.push_back(static_cast<std::int64_t>(d.text.size()));
  const auto s = length_stats(lengths);
  CHECK(s.mean == doctest::Approx(1195.0).epsilon(0.05));
  CHECK(s.median == doctest::Approx(470.0).epsilon(0.05));
  CHECK(s.min >= 3);
  CHECK(s.max <= 326833);
}

TEST_CASE("LengthLaw: clamped mean solves to the declared mean") {
  for (const auto& law : {file_level_law(), repo_level_law()})
    CHECK(law.clamped_mean(law.log_sigma()) == doctest::Approx(law.mean).epsilon(1e-9));
  CHECK_THROWS_AS(LengthLaw::lognormal(10.0, 5.0, 0, 100).validate(), Error);
  CHECK_THROWS_AS(LengthLaw::lognormal(10.0, 20.0, 50, 100).validate(), Error);
  Rng rng(1);
  CHECK(LengthLaw::fixed(7).draw(rng) == 7);
  for (int i = 0; i < 100; ++i) {
    const auto v = LengthLaw::uniform(3, 5).draw(rng);
    CHECK((v >= 3 && v <= 5));
  }
}
