#include "codepipe/repopack.hpp"

#include <algorithm>
#include <numeric>

#include "codepipe/error.hpp"
#include "codepipe/random.hpp"

namespace codepipe {

const std::set<std::string>& default_long_context_languages() {
  static const std::set<std::string> langs{"python", "c", "cpp", "go", "java", "javascript"};
  return langs;
}

RepoGroup filter_languages(const RepoGroup& group, const std::set<std::string>& allowed) {
  RepoGroup out{group.repo_id, {}};
  for (const auto& f : group.files)
    if (allowed.contains(f.language)) out.files.push_back(f);
  return out;
}

std::vector<ByteRange> RepoPack::file_char_ranges() const {
  std::vector<ByteRange> out;
  out.reserve(files.size());
  for (const auto& f : files) out.push_back(f.content);
  return out;
}

namespace {

RepoPack build_pack(const RepoGroup& group, std::vector<std::size_t> order, int ordering_index, const Tokenizer& tok,
                    const RepoPackOptions& options) {
  const auto& sep = tok.special(SpecialKind::RepoContinuation).surface;
  const auto& marker = tok.special(SpecialKind::FilenameMarker).surface;
  RepoPack pack;
  pack.repo_id = group.repo_id;
  pack.ordering_index = ordering_index;
  for (std::size_t k = 0; k < order.size(); ++k) {
    const auto& doc = group.files[order[k]];
    if (k > 0) pack.text += sep;
    PackedFile pf;
    pf.id = doc.id;
    pf.path = doc.path;
    pf.header = {pack.text.size(), pack.text.size()};
    if (options.filename_markers) {
      pack.text += marker;
      pack.text += doc.path;
      pack.text += '\n';
      pf.header.end = pack.text.size();
    }
    pf.content = {pack.text.size(), pack.text.size() + doc.text.size()};
    pack.text += doc.text;
    pack.files.push_back(std::move(pf));
  }
  pack.file_order = std::move(order);
  return pack;
}

}  // namespace

std::vector<RepoPack> pack_repository(const RepoGroup& group, std::uint64_t seed, const Tokenizer& tok,
                                      const RepoPackOptions& options) {
  if (group.files.empty()) throw Error("repopack", "cannot pack empty repository '" + group.repo_id + "'");
  for (const auto& f : group.files)
    if (f.repo_id != group.repo_id) throw Error("repopack", "file '" + f.id + "' belongs to another repository");

  const std::size_t n = group.files.size();
  std::vector<std::size_t> identity(n);
  std::iota(identity.begin(), identity.end(), 0);
  Rng rng(derive_seed(seed, group.repo_id));

  auto first = identity;
  rng.shuffle(first);
  std::vector<RepoPack> packs;
  if (n == 1) {
    packs.push_back(build_pack(group, std::move(first), 0, tok, options));
    return packs;
  }

  auto second = identity;
  rng.shuffle(second);
  for (std::size_t attempt = 0; second == first; ++attempt) {
    if (attempt >= options.max_redraws)
      throw Error("repopack", "could not draw two distinct orderings for '" + group.repo_id + "'");
    second = identity;
    rng.shuffle(second);
  }
  packs.push_back(build_pack(group, std::move(first), 0, tok, options));
  packs.push_back(build_pack(group, std::move(second), 1, tok, options));
  return packs;
}

std::vector<RepoPack> pack_corpus(std::span<const RepoGroup> groups, std::uint64_t seed, const Tokenizer& tok,
                                  const RepoPackOptions& options) {
  std::vector<RepoPack> all;
  for (const auto& g : groups) {
    if (g.files.empty()) continue;
    auto packs = pack_repository(g, seed, tok, options);
    std::move(packs.begin(), packs.end(), std::back_inserter(all));
  }
  std::stable_sort(all.begin(), all.end(), [](const RepoPack& a, const RepoPack& b) {
    return std::tie(a.repo_id, a.ordering_index) < std::tie(b.repo_id, b.ordering_index);
  });
  return all;
}

AnnotatedTokens tokenize_pack(const RepoPack& pack, const Tokenizer& tok) {
  AnnotatedTokens out;
  const TokenId sep = tok.special_id(SpecialKind::RepoContinuation);
  const TokenId marker = tok.special_id(SpecialKind::FilenameMarker);
  for (std::size_t k = 0; k < pack.files.size(); ++k) {
    const auto& f = pack.files[k];
    if (k > 0) out.ids.push_back(sep);
    if (f.header.end > f.header.begin) {
      out.ids.push_back(marker);
      for (auto id : tok.encode(f.path + "\n")) out.ids.push_back(id);
    }
    const auto content = std::string_view(pack.text).substr(f.content.begin, f.content.end - f.content.begin);
    const std::size_t begin = out.ids.size();
    for (auto id : tok.encode(content)) out.ids.push_back(id);
    out.files.push_back({begin, out.ids.size()});
  }
  return out;
}

ContextReport target_context_report(std::span<const RepoPack> packs, const Tokenizer& tok, std::size_t context_length) {
  if (packs.empty()) throw Error("repopack", "target_context_report requires at least one pack");
  std::vector<std::int64_t> lengths;
  lengths.reserve(packs.size());
  for (const auto& p : packs) lengths.push_back(static_cast<std::int64_t>(tokenize_pack(p, tok).ids.size()));
  ContextReport report;
  report.stats = length_stats(lengths, LengthUnit::Tokens);
  report.context_length = context_length;
  const auto ctx = static_cast<double>(context_length);
  report.brackets = report.stats.median <= ctx && ctx <= report.stats.mean;
  return report;
}

}  // namespace codepipe
