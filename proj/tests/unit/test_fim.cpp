#include <doctest.h>

#include <algorithm>
#include <map>

#include "codepipe/corpus.hpp"
#include "codepipe/error.hpp"
#include "codepipe/fim.hpp"
#include "codepipe/random.hpp"
#include "codepipe/repopack.hpp"
#include "codepipe/utf8.hpp"
#include "../oracles.hpp"

using namespace codepipe;

namespace {

std::map<std::string, int> char_multiset(std::string_view s) {
  std::map<std::string, int> out;
  const auto off = utf8::char_offsets(s);
  for (std::size_t i = 0; i + 1 < off.size(); ++i) ++out[std::string(s.substr(off[i], off[i + 1] - off[i]))];
  return out;
}

}  // namespace

TEST_CASE("split_at: definitional cuts") {
  const auto s = split_at("abcdef", 2, 4);
  CHECK(s.prefix == "ab");
  CHECK(s.middle == "cd");
  CHECK(s.suffix == "ef");
  const auto e = split_at("abcdef", 3, 3);
  CHECK(e.middle.empty());
  CHECK(e.prefix + e.suffix == "abcdef");
  CHECK_THROWS_AS(split_at("abc", 2, 1), Error);
  CHECK_THROWS_AS(split_at("abc", 0, 4), Error);
}

TEST_CASE("split_at: cuts count code points, not bytes") {
  const auto s = split_at("\xc3\xa9t\xc3\xa9", 1, 2);
  CHECK(s.prefix == "\xc3\xa9");
  CHECK(s.middle == "t");
  CHECK(s.suffix == "\xc3\xa9");
}

TEST_CASE("split_document: concatenation restores the document") {
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const auto text = oracle::random_utf8(rng, 80);
    const auto s = split_document(text, rng);
    CHECK(s.prefix + s.middle + s.suffix == text);
    CHECK(s.lo <= s.hi);
  }
}

TEST_CASE("apply_fim: rate 0 is the identity") {
  const ByteTokenizer tok;
  Rng rng(2);
  const auto ex = apply_fim("int main() {}", {.rate = 0.0}, rng, tok);
  CHECK(ex.mode == FimMode::None);
  CHECK(ex.rendered == tok.encode("int main() {}"));
}

TEST_CASE("render_fim: PSM sentinel order") {
  const ByteTokenizer tok;
  const auto ex = render_fim("abcdef", FimMode::Psm, 2, 4, tok);
  std::vector<TokenId> want{tok.special_id(SpecialKind::FimPrefix)};
  for (auto id : tok.encode("ab")) want.push_back(id);
  want.push_back(tok.special_id(SpecialKind::FimSuffix));
  for (auto id : tok.encode("ef")) want.push_back(id);
  want.push_back(tok.special_id(SpecialKind::FimMiddle));
  for (auto id : tok.encode("cd")) want.push_back(id);
  CHECK(ex.rendered == want);
  CHECK(ex.middle == CharRange{2, 4});
}

TEST_CASE("render_fim: SPM layout and optional END_OF_DOC") {
  const ByteTokenizer tok;
  const auto ex = render_fim("abcdef", FimMode::Spm, 2, 4, tok, true);
  std::vector<TokenId> want{tok.special_id(SpecialKind::FimPrefix), tok.special_id(SpecialKind::FimSuffix)};
  for (auto id : tok.encode("ef")) want.push_back(id);
  want.push_back(tok.special_id(SpecialKind::FimMiddle));
  for (auto id : tok.encode("abcd")) want.push_back(id);
  want.push_back(tok.special_id(SpecialKind::EndOfDoc));
  CHECK(ex.rendered == want);
  CHECK(reconstruct_text(ex.rendered, tok) == "abcdef");
}

TEST_CASE("apply_fim: grammar, reconstruction and character conservation") {
  const ByteTokenizer tok;
  const TokenId pre = tok.special_id(SpecialKind::FimPrefix);
  const TokenId suf = tok.special_id(SpecialKind::FimSuffix);
  const TokenId mid = tok.special_id(SpecialKind::FimMiddle);
  Rng rng(3);
  for (int i = 0; i < 2000; ++i) {
    const auto text = oracle::random_utf8(rng, 60);
    const FimOptions opts{.rate = 0.8, .spm_probability = 0.5, .eod_after_middle = i % 5 == 0};
    const auto ex = apply_fim(text, opts, rng, tok);
    CHECK(reconstruct_text(ex.rendered, tok) == text);
    const auto sentinels = std::count_if(ex.rendered.begin(), ex.rendered.end(),
                                         [&](TokenId id) { return id == pre || id == suf || id == mid; });
    if (ex.mode == FimMode::None) {
      CHECK(sentinels == 0);
      continue;
    }
    CHECK(sentinels == 3);
    CHECK(ex.rendered.front() == pre);
    if (ex.mode == FimMode::Spm) CHECK(ex.rendered[1] == suf);
    const auto split = split_at(text, ex.middle.begin, ex.middle.end);
    CHECK(char_multiset(split.prefix + split.middle + split.suffix) == char_multiset(text));
    CHECK(ex.prefix.end == ex.middle.begin);
    CHECK(ex.middle.end == ex.suffix.begin);
  }
}

TEST_CASE("apply_fim: transform and PSM rates at 10,000 documents") {
  const ByteTokenizer tok;
  std::size_t transformed = 0, psm = 0;
  for (std::size_t i = 0; i < 10'000; ++i) {
    Rng rng(derive_seed(99, "fim", i));
    const auto ex = apply_fim("def f(x):\n    return x\n", {}, rng, tok);
    transformed += ex.mode != FimMode::None;
    psm += ex.mode == FimMode::Psm;
  }
  const double rate = static_cast<double>(transformed) / 10'000.0;
  const double psm_share = static_cast<double>(psm) / static_cast<double>(transformed);
  CHECK(rate >= 0.48);
  CHECK(rate <= 0.52);
  CHECK(psm_share >= 0.47);
  CHECK(psm_share <= 0.53);
}

TEST_CASE("reconstruct_text: rejects malformed sequences") {
  const ByteTokenizer tok;
  const TokenId pre = tok.special_id(SpecialKind::FimPrefix);
  const TokenId suf = tok.special_id(SpecialKind::FimSuffix);
  const TokenId mid = tok.special_id(SpecialKind::FimMiddle);
  CHECK_THROWS_AS(reconstruct_text(std::vector<TokenId>{'a', pre, suf, mid}, tok), Error);
  CHECK_THROWS_AS(reconstruct_text(std::vector<TokenId>{pre, mid, 'a', suf}, tok), Error);
  CHECK_THROWS_AS(reconstruct_text(std::vector<TokenId>{pre, suf, mid, mid}, tok), Error);
}

TEST_CASE("apply_fim_within_files: two-file pack at rate 1") {
  const ByteTokenizer tok;
  const RepoGroup g{"r", {{"r/0", "r", "a.py", "python", "import os\n", {}}, {"r/1", "r", "b.py", "python", "x = 1\n", {}}}};
  const auto packs = pack_repository(g, 0, tok);
  const auto packed = tokenize_pack(packs[0], tok);
  Rng rng(1);
  const auto out = apply_fim_within_files(packed, {.rate = 1.0}, rng, tok);
  const TokenId pre = tok.special_id(SpecialKind::FimPrefix);
  CHECK(std::count(out.ids.begin(), out.ids.end(), pre) == 2);
  for (std::size_t i = 0; i < out.ids.size(); ++i) {
    if (out.ids[i] != pre) continue;
    CHECK(std::any_of(out.files.begin(), out.files.end(), [&](const TokenRange& r) { return r.begin <= i && i < r.end; }));
  }
  Rng rng0(1);
  const auto same = apply_fim_within_files(packed, {.rate = 0.0}, rng0, tok);
  CHECK(same.ids == packed.ids);
  CHECK(same.files == packed.files);
}

TEST_CASE("apply_fim_within_files: sentinel triples stay inside one file over 500 packs") {
  const ByteTokenizer tok;
  const TokenId pre = tok.special_id(SpecialKind::FimPrefix);
  const TokenId suf = tok.special_id(SpecialKind::FimSuffix);
  const TokenId mid = tok.special_id(SpecialKind::FimMiddle);
  const TokenId sep = tok.special_id(SpecialKind::RepoContinuation);
  SynthesisSpec spec;
  spec.file_length = LengthLaw::uniform(0, 60);
  spec.max_files = 5;
  const auto groups = synthesize_corpus(12, 250, spec);
  const auto packs = pack_corpus(groups, 12, tok);
  REQUIRE(packs.size() >= 400);
  std::size_t checked = 0;
  for (std::size_t p = 0; p < packs.size(); ++p) {
    const auto packed = tokenize_pack(packs[p], tok);
    Rng rng(derive_seed(12, "pack", p));
    std::vector<FileFimRecord> audit;
    const auto out = apply_fim_within_files(packed, {.rate = 1.0}, rng, tok, &audit);
    REQUIRE(out.files.size() == packs[p].files.size());
    CHECK(audit.size() == out.files.size());
    // every sentinel belongs to exactly one file range, and each range holds a full triple
    for (const auto& r : out.files) {
      std::vector<TokenId> seen;
      for (std::size_t i = r.begin; i < r.end; ++i)
        if (out.ids[i] == pre || out.ids[i] == suf || out.ids[i] == mid) seen.push_back(out.ids[i]);
      CHECK(seen.size() == 3);
      CHECK(std::find(out.ids.begin() + r.begin, out.ids.begin() + r.end, sep) == out.ids.begin() + r.end);
      ++checked;
    }
    std::size_t inside = 0, total = 0;
    for (std::size_t i = 0; i < out.ids.size(); ++i) {
      if (out.ids[i] != pre && out.ids[i] != suf && out.ids[i] != mid) continue;
      ++total;
      for (const auto& r : out.files) inside += r.begin <= i && i < r.end;
    }
    CHECK(inside == total);
    // each file reconstructs to its own content
    for (std::size_t f = 0; f < out.files.size(); ++f) {
      const auto& r = out.files[f];
      const auto text = reconstruct_text(std::span(out.ids.data() + r.begin, r.size()), tok);
      const auto& c = packs[p].files[f].content;
      CHECK(text == packs[p].text.substr(c.begin, c.end - c.begin));
    }
  }
  CHECK(checked > 0);
}

TEST_CASE("apply_fim_within_files: validates its input") {
  const ByteTokenizer tok;
  Rng rng(1);
  AnnotatedTokens bad{{'a', 'b', 'c'}, {{0, 2}, {1, 3}}};
  CHECK_THROWS_AS(apply_fim_within_files(bad, {}, rng, tok), Error);
  AnnotatedTokens special{{'a', tok.special_id(SpecialKind::EndOfDoc)}, {{0, 2}}};
  CHECK_THROWS_AS(apply_fim_within_files(special, {}, rng, tok), Error);
}
