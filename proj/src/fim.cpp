#include "codepipe/fim.hpp"

#include <algorithm>

#include "codepipe/error.hpp"
#include "codepipe/utf8.hpp"

namespace codepipe {

std::string_view to_string(FimMode mode) {
  switch (mode) {
    case FimMode::None: return "none";
    case FimMode::Psm: return "psm";
    case FimMode::Spm: return "spm";
  }
  return "?";
}

FimSplit split_at(std::string_view text, std::size_t lo, std::size_t hi) {
  const auto offsets = utf8::char_offsets(text);
  const std::size_t n = offsets.size() - 1;
  if (lo > hi || hi > n) throw Error("fim", "cut points must satisfy lo <= hi <= length");
  FimSplit s;
  s.lo = lo;
  s.hi = hi;
  s.prefix = std::string(text.substr(0, offsets[lo]));
  s.middle = std::string(text.substr(offsets[lo], offsets[hi] - offsets[lo]));
  s.suffix = std::string(text.substr(offsets[hi]));
  return s;
}

FimSplit split_document(std::string_view text, Rng& rng) {
  const std::size_t n = utf8::char_count(text);
  auto a = static_cast<std::size_t>(rng.below(n + 1));
  auto b = static_cast<std::size_t>(rng.below(n + 1));
  if (a > b) std::swap(a, b);
  return split_at(text, a, b);
}

namespace {

void append(std::vector<TokenId>& out, const std::vector<TokenId>& ids) { out.insert(out.end(), ids.begin(), ids.end()); }

}  // namespace

std::vector<TokenId> render_psm(const FimSplit& split, const Tokenizer& tok, bool eod_after_middle) {
  std::vector<TokenId> out;
  out.push_back(tok.special_id(SpecialKind::FimPrefix));
  append(out, tok.encode(split.prefix));
  out.push_back(tok.special_id(SpecialKind::FimSuffix));
  append(out, tok.encode(split.suffix));
  out.push_back(tok.special_id(SpecialKind::FimMiddle));
  append(out, tok.encode(split.middle));
  if (eod_after_middle) out.push_back(tok.special_id(SpecialKind::EndOfDoc));
  return out;
}

std::vector<TokenId> render_spm(const FimSplit& split, const Tokenizer& tok, bool eod_after_middle) {
  std::vector<TokenId> out;
  out.push_back(tok.special_id(SpecialKind::FimPrefix));
  out.push_back(tok.special_id(SpecialKind::FimSuffix));
  append(out, tok.encode(split.suffix));
  out.push_back(tok.special_id(SpecialKind::FimMiddle));
  append(out, tok.encode(split.prefix));
  append(out, tok.encode(split.middle));
  if (eod_after_middle) out.push_back(tok.special_id(SpecialKind::EndOfDoc));
  return out;
}

FimExample render_fim(std::string_view text, FimMode mode, std::size_t lo, std::size_t hi, const Tokenizer& tok,
                      bool eod_after_middle) {
  FimExample ex;
  ex.mode = mode;
  if (mode == FimMode::None) {
    const auto n = utf8::char_count(text);
    ex.prefix = {0, n};
    ex.middle = {n, n};
    ex.suffix = {n, n};
    ex.rendered = tok.encode(text);
    return ex;
  }
  const auto split = split_at(text, lo, hi);
  const auto n = utf8::char_count(text);
  ex.prefix = {0, lo};
  ex.middle = {lo, hi};
  ex.suffix = {hi, n};
  ex.eod_after_middle = eod_after_middle;
  ex.rendered = mode == FimMode::Psm ? render_psm(split, tok, eod_after_middle) : render_spm(split, tok, eod_after_middle);
  return ex;
}

FimExample apply_fim(std::string_view text, const FimOptions& options, Rng& rng, const Tokenizer& tok) {
  if (!(options.rate >= 0.0 && options.rate <= 1.0)) throw Error("fim", "rate must lie in [0, 1]");
  if (!rng.bernoulli(options.rate)) return render_fim(text, FimMode::None, 0, 0, tok);
  const FimMode mode = rng.bernoulli(options.spm_probability) ? FimMode::Spm : FimMode::Psm;
  const std::size_t n = utf8::char_count(text);
  auto a = static_cast<std::size_t>(rng.below(n + 1));
  auto b = static_cast<std::size_t>(rng.below(n + 1));
  if (a > b) std::swap(a, b);
  return render_fim(text, mode, a, b, tok, options.eod_after_middle);
}

std::string reconstruct_text(std::span<const TokenId> rendered, const Tokenizer& tok) {
  const TokenId pre = tok.special_id(SpecialKind::FimPrefix);
  const TokenId suf = tok.special_id(SpecialKind::FimSuffix);
  const TokenId mid = tok.special_id(SpecialKind::FimMiddle);
  const TokenId eod = tok.special_id(SpecialKind::EndOfDoc);

  auto is_sentinel = [&](TokenId id) { return id == pre || id == suf || id == mid; };
  if (std::none_of(rendered.begin(), rendered.end(), is_sentinel)) return tok.decode(rendered);

  if (rendered.empty() || rendered.front() != pre) throw Error("fim", "FIM sequence must start with FIM_PREFIX");
  auto rest = rendered.subspan(1);
  if (!rest.empty() && rest.back() == eod) rest = rest.first(rest.size() - 1);

  const auto suf_it = std::find(rest.begin(), rest.end(), suf);
  const auto mid_it = std::find(rest.begin(), rest.end(), mid);
  if (suf_it == rest.end() || mid_it == rest.end() || mid_it < suf_it)
    throw Error("fim", "FIM sequence must contain FIM_SUFFIX followed by FIM_MIDDLE");
  if (std::count_if(rest.begin(), rest.end(), is_sentinel) != 2) throw Error("fim", "FIM sequence has extra sentinels");

  // PSM: prefix | suffix | middle.  SPM: (empty) | suffix | prefix+middle.
  // Both reconstruct as first + third + second.
  const auto first = tok.decode(std::span(rest.begin(), suf_it));
  const auto second = tok.decode(std::span(suf_it + 1, mid_it));
  const auto third = tok.decode(std::span(mid_it + 1, rest.end()));
  return first + third + second;
}

AnnotatedTokens apply_fim_within_files(const AnnotatedTokens& packed, const FimOptions& options, Rng& rng,
                                       const Tokenizer& tok, std::vector<FileFimRecord>* audit) {
  std::size_t prev_end = 0;
  for (const auto& r : packed.files) {
    if (r.begin < prev_end || r.begin > r.end || r.end > packed.ids.size())
      throw Error("fim", "file ranges must be ordered, disjoint and within the sequence");
    prev_end = r.end;
  }

  AnnotatedTokens out;
  out.ids.reserve(packed.ids.size() + 4 * packed.files.size());
  std::size_t pos = 0;
  for (std::size_t f = 0; f < packed.files.size(); ++f) {
    const auto& r = packed.files[f];
    out.ids.insert(out.ids.end(), packed.ids.begin() + static_cast<std::ptrdiff_t>(pos),
                   packed.ids.begin() + static_cast<std::ptrdiff_t>(r.begin));
    const std::span<const TokenId> file_ids(packed.ids.data() + r.begin, r.size());
    if (std::any_of(file_ids.begin(), file_ids.end(), [&](TokenId id) { return tok.is_special(id); }))
      throw Error("fim", "file range " + std::to_string(f) + " contains special tokens");
    const auto example = apply_fim(tok.decode(file_ids), options, rng, tok);
    const std::size_t begin = out.ids.size();
    out.ids.insert(out.ids.end(), example.rendered.begin(), example.rendered.end());
    out.files.push_back({begin, out.ids.size()});
    if (audit) audit->push_back({f, example.mode, example.middle.begin, example.middle.end});
    pos = r.end;
  }
  out.ids.insert(out.ids.end(), packed.ids.begin() + static_cast<std::ptrdiff_t>(pos), packed.ids.end());
  return out;
}

}  // namespace codepipe
