#include "codepipe/tokenizer.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

#include "codepipe/error.hpp"

namespace codepipe {

using nlohmann::json;

namespace {

constexpr std::array<std::string_view, 7> kNames{"FIM_PREFIX",      "FIM_SUFFIX",  "FIM_MIDDLE",    "REPO_CONTINUATION",
                                                 "END_OF_DOC",      "FILENAME_MARKER", "STARS_MARKER"};
constexpr std::array<std::string_view, 7> kSurfaces{"<fim_prefix>", "<fim_suffix>", "<fim_middle>", "<repo_continuation>",
                                                    "<|endoftext|>", "<filename>",  "<gh_stars>"};

}  // namespace

std::string_view special_name(SpecialKind kind) { return kNames[static_cast<std::size_t>(kind)]; }

std::optional<SpecialKind> parse_special_name(std::string_view name) {
  for (std::size_t i = 0; i < kNames.size(); ++i)
    if (kNames[i] == name) return static_cast<SpecialKind>(i);
  return std::nullopt;
}

Vocab Vocab::reference(std::size_t size) {
  if (size < 256 + kAllSpecialKinds.size()) throw Error("tokenizer", "vocab too small for byte ids plus specials");
  Vocab v;
  v.size = size;
  const auto first = static_cast<TokenId>(size - kAllSpecialKinds.size());
  for (std::size_t i = 0; i < kAllSpecialKinds.size(); ++i)
    v.specials.push_back({kAllSpecialKinds[i], static_cast<TokenId>(first + i), std::string(kSurfaces[i])});
  return v;
}

Vocab Vocab::from_json_text(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error("tokenizer", std::string("bad vocab description: ") + e.what());
  }
  Vocab v = reference(j.value("vocab_size", kDefaultVocabSize));
  if (j.contains("specials")) {
    for (const auto& [name, entry] : j["specials"].items()) {
      auto kind = parse_special_name(name);
      if (!kind) throw Error("tokenizer", "unknown special token '" + name + "' in vocab description");
      auto& tok = v.specials[static_cast<std::size_t>(*kind)];
      if (entry.contains("id")) tok.id = entry["id"].get<TokenId>();
      if (entry.contains("surface")) tok.surface = entry["surface"].get<std::string>();
    }
  }
  v.validate();
  return v;
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("tokenizer", "cannot open vocab description " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return from_json_text(buf.str());
}

std::string Vocab::to_json_text() const {
  json j;
  j["vocab_size"] = size;
  for (const auto& s : specials) j["specials"][std::string(special_name(s.kind))] = {{"id", s.id}, {"surface", s.surface}};
  return j.dump(2);
}

void Vocab::validate(std::size_t first_special_id) const {
  if (size < specials.size()) throw Error("tokenizer", "vocab size smaller than special count");
  std::set<TokenId> ids;
  std::set<std::string> surfaces;
  std::set<SpecialKind> kinds;
  for (const auto& s : specials) {
    if (s.id >= size) throw Error("tokenizer", "special id " + std::to_string(s.id) + " out of vocab range");
    if (s.id < first_special_id)
      throw Error("tokenizer", "special id " + std::to_string(s.id) + " overlaps ordinary token ids");
    if (s.surface.empty()) throw Error("tokenizer", "special '" + std::string(special_name(s.kind)) + "' has empty surface");
    if (!ids.insert(s.id).second) throw Error("tokenizer", "duplicate special id " + std::to_string(s.id));
    if (!surfaces.insert(s.surface).second) throw Error("tokenizer", "duplicate special surface " + s.surface);
    kinds.insert(s.kind);
  }
  if (kinds.size() != kAllSpecialKinds.size()) throw Error("tokenizer", "every special kind must be registered");
}

const SpecialToken& Tokenizer::special(SpecialKind kind) const {
  for (const auto& s : vocab().specials)
    if (s.kind == kind) return s;
  throw Error("tokenizer", "special '" + std::string(special_name(kind)) + "' not registered");
}

const SpecialToken& Tokenizer::special(std::string_view name) const {
  auto kind = parse_special_name(name);
  if (!kind) throw Error("tokenizer", "unknown special token name '" + std::string(name) + "'");
  return special(*kind);
}

std::optional<SpecialKind> Tokenizer::special_kind(TokenId id) const {
  for (const auto& s : vocab().specials)
    if (s.id == id) return s.kind;
  return std::nullopt;
}

ByteTokenizer::ByteTokenizer(Vocab vocab) : vocab_(std::move(vocab)) { vocab_.validate(256); }

std::vector<TokenId> ByteTokenizer::encode(std::string_view text) const {
  std::vector<TokenId> ids;
  ids.reserve(text.size());
  for (unsigned char c : text) ids.push_back(c);
  return ids;
}

std::string ByteTokenizer::decode(std::span<const TokenId> ids) const {
  std::string out;
  out.reserve(ids.size());
  for (TokenId id : ids) {
    if (id < 256) {
      out.push_back(static_cast<char>(id));
      continue;
    }
    if (id >= vocab_.size) throw Error("tokenizer", "token id " + std::to_string(id) + " out of range");
    auto kind = special_kind(id);
    if (!kind) throw Error("tokenizer", "token id " + std::to_string(id) + " is unassigned in the byte vocab");
    out += special(*kind).surface;
  }
  return out;
}

}  // namespace codepipe
