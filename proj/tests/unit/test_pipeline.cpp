#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "codepipe/corpus.hpp"
#include "codepipe/error.hpp"
#include "codepipe/pipeline.hpp"
#include "codepipe/seqpack.hpp"
#include "codepipe/tokenizer.hpp"

using namespace codepipe;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("codepipe_unit_" + name);
  fs::remove_all(dir);
  return dir;
}

std::vector<std::vector<TokenId>> read_ids(const fs::path& dir) {
  std::ifstream in(dir / "sequences.bin", std::ios::binary);
  std::vector<std::vector<TokenId>> ids;
  read_sequences(in, &ids);
  return ids;
}

}  // namespace

TEST_CASE("pipeline config: JSON round trip and strict keys") {
  PipelineConfig c;
  c.stage = PipelineStage::LongContext;
  c.seed = 9;
  c.corpora = {{"a", "/x/a.jsonl"}};
  c.languages = {"go"};
  c.fim_rate = 0.25;
  const auto back = config_from_json(config_to_json(c));
  CHECK(back.stage == c.stage);
  CHECK(back.seed == 9);
  CHECK(back.corpora.at(0).path == "/x/a.jsonl");
  CHECK(back.languages == c.languages);
  CHECK(back.fim_rate == 0.25);
  CHECK_THROWS_AS(config_from_json("{\"stage\":\"PRETRAIN\",\"typo\":1}"), Error);
  CHECK(default_seq_len(PipelineStage::Pretrain) == 4096);
  CHECK(default_seq_len(PipelineStage::LongContext) == 16'384);
}

TEST_CASE("pipeline: long-context sequences are all 16,384 tokens") {
  const auto dir = scratch("lc");
  PipelineConfig c;
  c.stage = PipelineStage::LongContext;
  c.synthetic_repos = 12;
  c.seed = 3;
  run_pipeline(c, dir);
  std::ifstream in(dir / "sequences.bin", std::ios::binary);
  std::vector<std::vector<TokenId>> ids;
  const auto h = read_sequences(in, &ids);
  CHECK(h.seq_len == 16'384);
  CHECK_FALSE(ids.empty());
  for (const auto& s : ids) CHECK(s.size() == 16'384);
  fs::remove_all(dir);
}

TEST_CASE("pipeline: pretrain with fim_rate 0 emits no sentinels") {
  const auto dir = scratch("nofim");
  PipelineConfig c;
  c.synthetic_repos = 3;
  c.fim_rate = 0.0;
  run_pipeline(c, dir);
  const ByteTokenizer tok;
  const std::set<TokenId> sentinels{tok.special_id(SpecialKind::FimPrefix), tok.special_id(SpecialKind::FimSuffix),
                                    tok.special_id(SpecialKind::FimMiddle)};
  const auto ids = read_ids(dir);
  CHECK_FALSE(ids.empty());
  for (const auto& s : ids)
    for (auto id : s) CHECK_FALSE(sentinels.contains(id));
  fs::remove_all(dir);
}

TEST_CASE("pipeline: reruns from the manifest are byte-identical") {
  for (auto stage : {PipelineStage::Pretrain, PipelineStage::LongContext, PipelineStage::Sft}) {
    const auto a = scratch("rerun_a"), b = scratch("rerun_b");
    PipelineConfig c;
    c.stage = stage;
    c.synthetic_repos = 6;
    c.seed = 17;
    const auto first = run_pipeline(c, a);
    const auto again = run_pipeline(config_from_manifest(first.manifest_path), b);
    REQUIRE(first.outputs.size() == again.outputs.size());
    for (std::size_t i = 0; i < first.outputs.size(); ++i) CHECK(first.outputs[i].sha256 == again.outputs[i].sha256);
    const auto recorded = manifest_outputs(first.manifest_path);
    CHECK(recorded.size() == first.outputs.size());
    fs::remove_all(a);
    fs::remove_all(b);
  }
}

TEST_CASE("pipeline: corpus inputs are hashed and verified on rerun") {
  const auto dir = scratch("inputs");
  fs::create_directories(dir);
  const auto corpus = dir / "code.jsonl";
  {
    std::ofstream out(corpus);
    for (int i = 0; i < 30; ++i)
      out << serialize({"d" + std::to_string(i), "r" + std::to_string(i % 4), "f.py", "python",
                        "def f" + std::to_string(i) + "(x):\n    return x\n", {}})
          << "\n";
  }
  PipelineConfig c;
  c.stage = PipelineStage::Sft;
  c.corpora = {{"sft", corpus.string()}};
  const auto first = run_pipeline(c, dir / "out");
  CHECK(first.manifest_json.find(corpus.filename().string()) != std::string::npos);
  {
    std::ofstream out(corpus, std::ios::app);
    out << serialize({"extra", "r", "g.py", "python", "pass\n", {}}) << "\n";
  }
  CHECK_THROWS_AS(config_from_manifest(first.manifest_path), Error);
  fs::remove_all(dir);
}

TEST_CASE("pipeline: module errors surface with their module name") {
  PipelineConfig c;
  c.corpora = {{"nowhere", "/nonexistent/file.jsonl"}};
  c.stage = PipelineStage::Sft;
  try {
    run_pipeline(c, scratch("err"));
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK_FALSE(e.module().empty());
  }
}
