#include <doctest.h>

#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "codepipe/error.hpp"
#include "codepipe/mixture.hpp"
#include "codepipe/random.hpp"

using namespace codepipe;

namespace {

const DatasetSpec& row(const std::vector<DatasetSpec>& table, const std::string& name) {
  for (const auto& r : table)
    if (r.name == name) return r;
  FAIL("missing row " << name);
  return table.front();
}

MixtureSource uniform_source(const std::string& name, std::size_t docs, std::uint64_t lo, std::uint64_t hi,
                             std::uint64_t seed) {
  Rng rng(seed);
  MixtureSource s{name, {}};
  for (std::size_t i = 0; i < docs; ++i) s.doc_tokens.push_back(rng.between(lo, hi));
  return s;
}

}  // namespace

TEST_CASE("reference table: transcription spot checks") {
  const auto t = reference_table();
  REQUIRE(t.size() == 26);
  const auto& py = row(t, "StarCoder Python");
  CHECK(py.weight == 0.1067);
  CHECK(py.tokens_sampled == 141'067'150'184.0);
  CHECK(py.epochs == 8.0);
  CHECK(row(t, "Refined Web").tokens_sampled == 29'114'185'066.13);
  CHECK(row(t, "Meta Math QA").weight == 0.0003);
  CHECK(std::count_if(t.begin(), t.end(), [](const DatasetSpec& d) { return d.category == Category::Code; }) == 18);
}

TEST_CASE("reference table: shipped CSV equals the built-in table") {
  const auto csv = load_table(CODEPIPE_DATA_DIR "/mixture_table.csv");
  const auto ref = reference_table();
  REQUIRE(csv.size() == ref.size());
  for (std::size_t i = 0; i < ref.size(); ++i) {
    CHECK(csv[i].name == ref[i].name);
    CHECK(csv[i].weight == ref[i].weight);
    CHECK(csv[i].tokens_sampled == ref[i].tokens_sampled);
    CHECK(csv[i].epochs == ref[i].epochs);
    CHECK(csv[i].category == ref[i].category);
  }
}

TEST_CASE("validate_table: per-row check on the Python row") {
  const std::vector<DatasetSpec> one{row(reference_table(), "StarCoder Python")};
  const auto r = validate_table(one, kReferenceTotalTokens);
  REQUIRE(r.rows.size() == 1);
  CHECK(r.rows[0].ok);
  // independent arithmetic: 141067150184 / 1322090182830.13
  CHECK(r.rows[0].implied_weight == doctest::Approx(0.106700).epsilon(1e-4));
}

TEST_CASE("validate_table: single row with the whole total passes everything") {
  const std::vector<DatasetSpec> one{{"all", 1.0, 1000.0, 1.0, Category::Code}};
  TableTolerances tol;
  tol.code_share_target = 1.0;
  CHECK(validate_table(one, 1000.0, tol).passed());
}

TEST_CASE("validate_table: code share of the reference table") {
  const auto t = reference_table();
  double code = 0.0;
  for (const auto& r : t)
    if (r.category == Category::Code) code += r.weight;
  const auto report = validate_table(t, kReferenceTotalTokens);
  CHECK(report.code_share == doctest::Approx(code));
  CHECK(report.code_share_ok);
}

TEST_CASE("validate_table: flags identical rows") {
  const auto report = validate_table(reference_table(), kReferenceTotalTokens);
  bool noted = false;
  for (const auto& n : report.notes) noted = noted || n.find("Github Diffs") != std::string::npos;
  CHECK(noted);
}

TEST_CASE("table CSV round trip") {
  std::stringstream buf;
  const auto ref = reference_table();
  write_table_csv(buf, ref);
  const auto back = read_table_csv(buf);
  REQUIRE(back.size() == ref.size());
  for (std::size_t i = 0; i < ref.size(); ++i) {
    CHECK(back[i].name == ref[i].name);
    CHECK(back[i].tokens_sampled == ref[i].tokens_sampled);
  }
  std::istringstream bad("name,weight\nx,1\n");
  CHECK_THROWS_AS(read_table_csv(bad), Error);
}

TEST_CASE("plan_mixture: worked examples") {
  const auto t = reference_table();
  const auto plan = plan_mixture(t, 1'000'000, {.renormalize = true});
  CHECK(plan.source("StarCoder Python").source_size == doctest::Approx(17'633'393'773.0).epsilon(1e-10));

  const std::vector<DatasetSpec> halves{{"a", 0.5, 1.0, 1.0, Category::Code}, {"b", 0.5, 1.0, 1.0, Category::Code}};
  const auto p = plan_mixture(halves, 100);
  CHECK(p.quota("a") == 50);
  CHECK(p.quota("b") == 50);
  const auto zero = plan_mixture(halves, 0);
  CHECK(zero.quota("a") == 0);
  CHECK(zero.quota("b") == 0);
  CHECK_THROWS_AS(p.quota("c"), Error);
}

TEST_CASE("plan_mixture: refuses unnormalized weights unless asked") {
  CHECK_THROWS_AS(plan_mixture(reference_table(), 1000), Error);
  CHECK_NOTHROW(plan_mixture(reference_table(), 1000, {.renormalize = true}));
}

TEST_CASE("apportion: sums to the total and stays within one of the exact share") {
  Rng rng(9);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> w(1 + rng.below(30));
    for (auto& x : w) x = rng.uniform() * (rng.below(4) == 0 ? 0.0 : 1.0);
    if (std::accumulate(w.begin(), w.end(), 0.0) == 0.0) w[0] = 1.0;
    const std::uint64_t total = rng.below(1'000'000);
    const auto q = apportion(w, total);
    CHECK(std::accumulate(q.begin(), q.end(), std::uint64_t{0}) == total);
    const double wsum = std::accumulate(w.begin(), w.end(), 0.0);
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double exact = w[i] / wsum * static_cast<double>(total);
      CHECK(std::abs(static_cast<double>(q[i]) - exact) < 1.0 + 1e-6);
      if (w[i] == 0.0) CHECK(q[i] == 0);
    }
  }
}

TEST_CASE("MixtureStream: same seed, same stream") {
  const std::vector<DatasetSpec> specs{{"a", 0.6, 1.0, 1.0, Category::Code}, {"b", 0.4, 1.0, 1.0, Category::Code}};
  const auto plan = plan_mixture(specs, 50'000);
  auto run = [&](std::uint64_t seed) {
    MixtureStream stream(plan, {uniform_source("a", 30, 10, 500, 1), uniform_source("b", 20, 10, 500, 2)}, seed);
    std::vector<std::pair<std::size_t, std::size_t>> items;
    while (auto it = stream.next()) items.push_back({it->source, it->doc});
    return items;
  };
  CHECK(run(4) == run(4));
  CHECK(run(4) != run(5));
}

TEST_CASE("MixtureStream: 0.7/0.3 shares over one million tokens") {
  const std::vector<DatasetSpec> specs{{"a", 0.7, 1.0, 1.0, Category::Code}, {"b", 0.3, 1.0, 1.0, Category::Code}};
  const auto plan = plan_mixture(specs, 1'000'000);
  MixtureStream stream(plan, {uniform_source("a", 400, 50, 2000, 3), uniform_source("b", 300, 50, 2000, 4)}, 77);
  std::map<std::size_t, std::uint64_t> counted;
  std::uint64_t total = 0;
  while (auto it = stream.next()) {
    counted[it->source] += it->tokens;
    total += it->tokens;
  }
  REQUIRE(total > 990'000);
  CHECK(static_cast<double>(counted[0]) / static_cast<double>(total) == doctest::Approx(0.7).epsilon(0.01 / 0.7));
  CHECK(static_cast<double>(counted[1]) / static_cast<double>(total) == doctest::Approx(0.3).epsilon(0.01 / 0.3));
  CHECK(counted[0] == stream.emitted_tokens()[0]);
}

TEST_CASE("MixtureStream: quota of twice the source size cycles every document exactly twice") {
  const auto src = uniform_source("only", 37, 1, 100, 8);
  const auto size = std::accumulate(src.doc_tokens.begin(), src.doc_tokens.end(), std::uint64_t{0});
  const std::vector<DatasetSpec> specs{{"only", 1.0, 1.0, 2.0, Category::Code}};
  MixtureStream stream(plan_mixture(specs, 2 * size), {src}, 1);
  std::map<std::size_t, int> seen;
  std::vector<std::uint32_t> epoch_of_first;
  while (auto it = stream.next()) {
    ++seen[it->doc];
    if (seen[it->doc] == 1) CHECK(it->epoch == 0);
    if (seen[it->doc] == 2) CHECK(it->epoch == 1);
  }
  CHECK(seen.size() == 37);
  for (const auto& [doc, n] : seen) CHECK(n == 2);
  CHECK(stream.epochs_started()[0] == 2);
}

TEST_CASE("MixtureStream: errors") {
  const std::vector<DatasetSpec> specs{{"a", 1.0, 1.0, 1.0, Category::Code}};
  const auto plan = plan_mixture(specs, 10);
  CHECK_THROWS_AS(MixtureStream(plan, {}, 0), Error);
  CHECK_THROWS_AS(MixtureStream(plan, {MixtureSource{"a", {}}}, 0), Error);
}
