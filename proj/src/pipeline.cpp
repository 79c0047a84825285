#include "codepipe/pipeline.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

#include "codepipe/corpus.hpp"
#include "codepipe/error.hpp"
#include "codepipe/evol.hpp"
#include "codepipe/fim.hpp"
#include "codepipe/hash.hpp"
#include "codepipe/mixture.hpp"
#include "codepipe/random.hpp"
#include "codepipe/repopack.hpp"

namespace codepipe {

using nlohmann::json;
namespace fs = std::filesystem;

std::string_view to_string(PipelineStage s) {
  switch (s) {
    case PipelineStage::Pretrain: return "PRETRAIN";
    case PipelineStage::LongContext: return "LONG_CONTEXT";
    case PipelineStage::Sft: return "SFT";
  }
  return "?";
}

PipelineStage parse_pipeline_stage(std::string_view s) {
  for (auto st : {PipelineStage::Pretrain, PipelineStage::LongContext, PipelineStage::Sft})
    if (to_string(st) == s) return st;
  throw Error("pipeline", "unknown stage '" + std::string(s) + "' (PRETRAIN, LONG_CONTEXT, SFT)");
}

std::size_t default_seq_len(PipelineStage s) { return s == PipelineStage::LongContext ? 16'384 : 4096; }

namespace {

json config_json(const PipelineConfig& c) {
  json corpora = json::array();
  for (const auto& in : c.corpora) corpora.push_back({{"name", in.name}, {"path", in.path}});
  return {{"stage", to_string(c.stage)},
          {"seed", c.seed},
          {"table_path", c.table_path},
          {"corpora", corpora},
          {"synthetic_repos", c.synthetic_repos},
          {"seq_len", c.seq_len},
          {"fim_rate", c.fim_rate},
          {"fim_eod", c.fim_eod},
          {"languages", c.languages},
          {"budget", c.budget},
          {"sft_overflow", c.sft_overflow == OverflowPolicy::Error ? "error" : "truncate"},
          {"vocab_path", c.vocab_path}};
}

PipelineConfig config_from(const json& j) {
  static const std::set<std::string> known{"stage",     "seed",   "table_path", "corpora", "synthetic_repos",
                                           "seq_len",   "fim_rate", "fim_eod",  "languages", "budget",
                                           "sft_overflow", "vocab_path"};
  if (!j.is_object()) throw Error("pipeline", "config must be a JSON object");
  for (const auto& [key, _] : j.items())
    if (!known.contains(key)) throw Error("pipeline", "unknown config key '" + key + "'");
  PipelineConfig c;
  try {
    if (j.contains("stage")) c.stage = parse_pipeline_stage(j["stage"].get<std::string>());
    c.seed = j.value("seed", c.seed);
    c.table_path = j.value("table_path", c.table_path);
    if (j.contains("corpora"))
      for (const auto& e : j["corpora"]) c.corpora.push_back({e.value("name", ""), e.at("path").get<std::string>()});
    c.synthetic_repos = j.value("synthetic_repos", c.synthetic_repos);
    c.seq_len = j.value("seq_len", c.seq_len);
    c.fim_rate = j.value("fim_rate", c.fim_rate);
    c.fim_eod = j.value("fim_eod", c.fim_eod);
    c.languages = j.value("languages", c.languages);
    c.budget = j.value("budget", c.budget);
    if (j.contains("sft_overflow")) {
      const auto p = j["sft_overflow"].get<std::string>();
      if (p != "error" && p != "truncate") throw Error("pipeline", "sft_overflow must be error or truncate");
      c.sft_overflow = p == "error" ? OverflowPolicy::Error : OverflowPolicy::Truncate;
    }
    c.vocab_path = j.value("vocab_path", c.vocab_path);
  } catch (const json::exception& e) {
    throw Error("pipeline", std::string("bad config: ") + e.what());
  }
  return c;
}

std::string slug(std::string_view name) {
  std::string out;
  for (char ch : name) out.push_back(std::isalnum(static_cast<unsigned char>(ch)) ? static_cast<char>(std::tolower(ch)) : '-');
  return out;
}

struct RunContext {
  RunContext(const PipelineConfig& c, const Tokenizer& t, std::size_t len) : cfg(c), tok(t), seq_len(len) {}

  const PipelineConfig& cfg;
  const Tokenizer& tok;
  std::size_t seq_len;
  json inferred = json::array();
  json counts = json::object();
  json inputs = json::array();
  std::ofstream audit;
};

void record_input(RunContext& ctx, const std::string& role, const std::string& path) {
  ctx.inputs.push_back({{"role", role}, {"path", path}, {"sha256", sha256_file(path)}});
}

std::vector<Document> load_corpus(RunContext& ctx, const CorpusInput& in) {
  record_input(ctx, "corpus:" + in.name, in.path);
  try {
    return ingest_file(in.path).documents;
  } catch (const IngestError& e) {
    throw Error("pipeline", "corpus '" + in.path + "': " + e.what());
  }
}

std::vector<PackedSequence> run_pretrain(RunContext& ctx, FimOptions fim) {
  const auto& cfg = ctx.cfg;
  std::vector<DatasetSpec> table;
  if (cfg.table_path.empty()) {
    table = reference_table();
    ctx.inferred.push_back("table: built-in mixture table");
  } else {
    record_input(ctx, "table", cfg.table_path);
    table = load_table(cfg.table_path);
  }

  std::vector<DatasetSpec> used;
  std::vector<std::vector<Document>> docs;
  if (cfg.synthetic_repos > 0) {
    for (const auto& spec : table) {
      SynthesisSpec s;
      s.id_prefix = slug(spec.name);
      docs.push_back(flatten(synthesize_corpus(derive_seed(cfg.seed, spec.name), cfg.synthetic_repos, s)));
      used.push_back(spec);
    }
  } else {
    if (cfg.corpora.empty()) throw Error("pipeline", "PRETRAIN needs corpora or synthetic_repos");
    for (const auto& spec : table) {
      std::vector<Document> merged;
      bool found = false;
      for (const auto& in : cfg.corpora) {
        if (in.name != spec.name) continue;
        found = true;
        auto d = load_corpus(ctx, in);
        merged.insert(merged.end(), d.begin(), d.end());
      }
      if (!found) continue;
      docs.push_back(std::move(merged));
      used.push_back(spec);
    }
    for (const auto& in : cfg.corpora) {
      bool known = false;
      for (const auto& spec : table) known = known || spec.name == in.name;
      if (!known) throw Error("pipeline", "corpus source '" + in.name + "' is not in the mixture table");
    }
  }
  if (used.size() != table.size()) ctx.inferred.push_back("mixture: table rows without a corpus were dropped");

  std::vector<MixtureSource> sources;
  std::uint64_t available = 0;
  for (std::size_t i = 0; i < used.size(); ++i) {
    MixtureSource src{used[i].name, {}};
    for (const auto& d : docs[i]) src.doc_tokens.push_back(ctx.tok.encode(d.text).size());
    for (auto t : src.doc_tokens) available += t;
    sources.push_back(std::move(src));
  }
  const std::uint64_t budget = cfg.budget ? cfg.budget : available;
  if (!cfg.budget) ctx.inferred.push_back("budget: total tokens of the provided sources");
  ctx.inferred.push_back("mixture: weights renormalised over the used rows");

  PlanOptions popts;
  popts.renormalize = true;
  const auto plan = plan_mixture(used, budget, popts);
  MixtureStream stream(plan, std::move(sources), derive_seed(cfg.seed, "mixture"));

  SeqPackOptions sopts;
  sopts.seq_len = ctx.seq_len;
  SequencePacker packer(sopts, ctx.tok);
  std::size_t index = 0;
  while (auto item = stream.next()) {
    const auto& doc = docs[item->source][item->doc];
    Rng rng(derive_seed(cfg.seed, "fim", index));
    const auto ex = apply_fim(doc.text, fim, rng, ctx.tok);
    AnnotatedTokens at;
    at.ids = ex.rendered;
    at.files.push_back({0, at.ids.size()});
    packer.push(at);
    ctx.audit << json{{"index", index},          {"source", plan.sources[item->source].name},
                      {"doc_id", doc.id},        {"epoch", item->epoch},
                      {"mode", to_string(ex.mode)}, {"lo", ex.middle.begin},
                      {"hi", ex.middle.end},     {"eod_after_middle", ex.eod_after_middle}}
                     .dump()
              << '\n';
    ++index;
  }
  packer.finish();

  json per_source = json::object();
  for (std::size_t s = 0; s < plan.sources.size(); ++s)
    per_source[plan.sources[s].name] = {{"quota", plan.sources[s].quota},
                                        {"emitted_tokens", stream.emitted_tokens()[s]},
                                        {"epochs_started", stream.epochs_started()[s]}};
  ctx.counts["budget"] = budget;
  ctx.counts["sources"] = per_source;
  ctx.counts["stream_documents"] = index;
  ctx.counts["input_tokens"] = packer.stats().input_tokens;
  return packer.take();
}

std::vector<PackedSequence> run_long_context(RunContext& ctx, FimOptions fim) {
  const auto& cfg = ctx.cfg;
  std::vector<Document> docs;
  if (cfg.synthetic_repos > 0) {
    SynthesisSpec s;
    s.repo_length = repo_level_law();
    s.min_files = 2;
    s.max_files = 8;
    s.languages = {"python", "c", "cpp", "go", "java", "javascript", "ruby", "rust"};
    docs = flatten(synthesize_corpus(derive_seed(cfg.seed, "long-context-corpus"), cfg.synthetic_repos, s));
  } else {
    if (cfg.corpora.empty()) throw Error("pipeline", "LONG_CONTEXT needs corpora or synthetic_repos");
    for (const auto& in : cfg.corpora) {
      auto d = load_corpus(ctx, in);
      docs.insert(docs.end(), d.begin(), d.end());
    }
  }

  std::set<std::string> allowed(cfg.languages.begin(), cfg.languages.end());
  if (allowed.empty()) {
    allowed = default_long_context_languages();
    ctx.inferred.push_back("languages: python, c, cpp, go, java, javascript");
  }
  std::vector<RepoGroup> groups;
  std::size_t files_kept = 0;
  for (const auto& g : group_by_repo(docs)) {
    auto f = filter_languages(g, allowed);
    files_kept += f.files.size();
    if (!f.files.empty()) groups.push_back(std::move(f));
  }
  const auto packs = pack_corpus(groups, derive_seed(cfg.seed, "repopack"), ctx.tok);

  SeqPackOptions sopts;
  sopts.seq_len = ctx.seq_len;
  SequencePacker packer(sopts, ctx.tok);
  for (std::size_t i = 0; i < packs.size(); ++i) {
    Rng rng(derive_seed(cfg.seed, "long-context-fim", i));
    std::vector<FileFimRecord> records;
    const auto transformed = apply_fim_within_files(tokenize_pack(packs[i], ctx.tok), fim, rng, ctx.tok, &records);
    packer.push(transformed);
    for (const auto& r : records) {
      ctx.audit << json{{"pack", i},
                        {"repo_id", packs[i].repo_id},
                        {"ordering_index", packs[i].ordering_index},
                        {"file_id", packs[i].files[r.file].id},
                        {"mode", to_string(r.mode)},
                        {"lo", r.lo},
                        {"hi", r.hi},
                        {"eod_after_middle", fim.eod_after_middle && r.mode != FimMode::None}}
                       .dump()
                << '\n';
    }
  }
  packer.finish();

  ctx.counts["repositories"] = groups.size();
  ctx.counts["files_kept"] = files_kept;
  ctx.counts["files_dropped_by_language"] = docs.size() - files_kept;
  ctx.counts["packs"] = packs.size();
  ctx.counts["input_tokens"] = packer.stats().input_tokens;
  if (!packs.empty()) {
    const auto report = target_context_report(packs, ctx.tok, ctx.seq_len);
    ctx.counts["pack_length_median"] = report.stats.median;
    ctx.counts["pack_length_mean"] = report.stats.mean;
    ctx.counts["context_length_bracketed"] = report.brackets;
  }
  return packer.take();
}

std::vector<PackedSequence> run_sft(RunContext& ctx) {
  const auto& cfg = ctx.cfg;
  std::vector<Sample> samples;
  if (cfg.synthetic_repos > 0) {
    SynthesisSpec s;
    s.min_files = s.max_files = 1;
    s.id_prefix = "sft";
    const auto docs = flatten(synthesize_corpus(derive_seed(cfg.seed, "sft-corpus"), cfg.synthetic_repos, s));
    for (std::size_t i = 0; i < docs.size(); ++i) {
      samples.push_back({docs[i].text, "", "", 0, ""});
      if (i % 10 == 0) samples.push_back({docs[i].text + "  ", "", "", 0, ""});  // planted duplicate
    }
  } else {
    if (cfg.corpora.empty()) throw Error("pipeline", "SFT needs corpora or synthetic_repos");
    for (const auto& in : cfg.corpora)
      for (const auto& d : load_corpus(ctx, in)) samples.push_back({d.text, "", "", 0, ""});
  }
  const auto unique = exact_dedup(samples);

  SeqPackOptions sopts;
  sopts.seq_len = ctx.seq_len;
  sopts.mode = PackMode::Sft;
  sopts.overflow = cfg.sft_overflow;
  SequencePacker packer(sopts, ctx.tok);
  for (const auto& s : unique) {
    AnnotatedTokens at;
    at.ids = ctx.tok.encode(s.prompt + s.completion);
    packer.push(at);
  }
  packer.finish();
  ctx.counts["samples"] = samples.size();
  ctx.counts["samples_after_dedup"] = unique.size();
  ctx.counts["input_tokens"] = packer.stats().input_tokens;
  ctx.counts["truncated_tokens"] = packer.stats().truncated_tokens;
  return packer.take();
}

OutputFile describe_output(const fs::path& dir, const std::string& name) {
  const auto p = dir / name;
  return {name, sha256_file(p), static_cast<std::uint64_t>(fs::file_size(p))};
}

}  // namespace

std::string config_to_json(const PipelineConfig& cfg) { return config_json(cfg).dump(2); }

PipelineConfig config_from_json(std::string_view text) {
  try {
    return config_from(json::parse(text));
  } catch (const json::parse_error& e) {
    throw Error("pipeline", std::string("bad config JSON: ") + e.what());
  }
}

PipelineResult run_pipeline(const PipelineConfig& input_cfg, const fs::path& out_dir) {
  PipelineConfig cfg = input_cfg;
  if (!(cfg.fim_rate >= 0.0 && cfg.fim_rate <= 1.0)) throw Error("pipeline", "fim_rate must lie in [0, 1]");
  if (!cfg.table_path.empty()) cfg.table_path = fs::absolute(cfg.table_path).string();
  if (!cfg.vocab_path.empty()) cfg.vocab_path = fs::absolute(cfg.vocab_path).string();
  for (auto& in : cfg.corpora) in.path = fs::absolute(in.path).string();

  const ByteTokenizer tok(cfg.vocab_path.empty() ? Vocab::reference() : Vocab::load(cfg.vocab_path));
  fs::create_directories(out_dir);

  RunContext ctx(cfg, tok, cfg.seq_len ? cfg.seq_len : default_seq_len(cfg.stage));
  if (!cfg.seq_len) ctx.inferred.push_back("seq_len: stage default " + std::to_string(ctx.seq_len));
  if (!cfg.vocab_path.empty()) record_input(ctx, "vocab", cfg.vocab_path);

  FimOptions fim;
  fim.rate = cfg.fim_rate;
  fim.eod_after_middle = cfg.fim_eod;
  ctx.inferred.push_back("fim: SPM layout <pre><suf> suffix <mid> prefix middle; PSM/SPM chosen with p = 0.5");

  std::vector<std::string> files{"sequences.bin"};
  std::vector<PackedSequence> seqs;
  if (cfg.stage != PipelineStage::Sft) {
    ctx.audit.open(out_dir / "fim_audit.jsonl", std::ios::binary | std::ios::trunc);
    if (!ctx.audit) throw Error("pipeline", "cannot write " + (out_dir / "fim_audit.jsonl").string());
    files.push_back("fim_audit.jsonl");
  }
  switch (cfg.stage) {
    case PipelineStage::Pretrain: seqs = run_pretrain(ctx, fim); break;
    case PipelineStage::LongContext: seqs = run_long_context(ctx, fim); break;
    case PipelineStage::Sft:
      ctx.inferred.push_back(std::string("sft overflow policy: ") +
                             (cfg.sft_overflow == OverflowPolicy::Error ? "error" : "truncate"));
      seqs = run_sft(ctx);
      break;
  }
  if (ctx.audit.is_open()) ctx.audit.close();

  {
    std::ofstream out(out_dir / "sequences.bin", std::ios::binary | std::ios::trunc);
    if (!out) throw Error("pipeline", "cannot write " + (out_dir / "sequences.bin").string());
    write_sequences(out, seqs, ctx.seq_len, tok.vocab().size);
  }

  std::uint64_t pad = 0, docs = 0;
  for (const auto& s : seqs) {
    pad += s.pad_count;
    docs += s.doc_boundaries.size();
  }
  ctx.counts["sequences"] = seqs.size();
  ctx.counts["pad_tokens"] = pad;
  ctx.counts["documents_packed"] = docs;

  PipelineResult result;
  json outputs = json::array();
  for (const auto& f : files) {
    result.outputs.push_back(describe_output(out_dir, f));
    const auto& o = result.outputs.back();
    outputs.push_back({{"file", o.file}, {"sha256", o.sha256}, {"bytes", o.bytes}});
  }

  json manifest;
  manifest["tool"] = "codepipe";
  manifest["version"] = kVersion;
  manifest["config"] = config_json(cfg);
  manifest["resolved"] = {{"seq_len", ctx.seq_len},
                          {"tokenizer", "byte"},
                          {"vocab_size", tok.vocab().size},
                          {"fim_rate", cfg.stage == PipelineStage::Sft ? 0.0 : cfg.fim_rate}};
  manifest["inferred_defaults"] = ctx.inferred;
  manifest["inputs"] = ctx.inputs;
  manifest["outputs"] = outputs;
  manifest["counts"] = ctx.counts;
  result.manifest_json = manifest.dump(2);
  result.manifest_path = out_dir / "manifest.json";
  std::ofstream mf(result.manifest_path, std::ios::binary | std::ios::trunc);
  mf << result.manifest_json << '\n';
  if (!mf) throw Error("pipeline", "cannot write manifest");
  return result;
}

namespace {

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("pipeline", "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error("pipeline", path.string() + ": " + e.what());
  }
}

}  // namespace

PipelineConfig config_from_manifest(const fs::path& manifest_path) {
  const auto m = read_json_file(manifest_path);
  if (!m.contains("config")) throw Error("pipeline", "manifest has no config section");
  for (const auto& in : m.value("inputs", json::array())) {
    const auto path = in.at("path").get<std::string>();
    if (sha256_file(path) != in.at("sha256").get<std::string>())
      throw Error("pipeline", "input " + path + " changed since the manifest was written");
  }
  return config_from(m["config"]);
}

std::vector<OutputFile> manifest_outputs(const fs::path& manifest_path) {
  const auto m = read_json_file(manifest_path);
  std::vector<OutputFile> out;
  for (const auto& o : m.value("outputs", json::array()))
    out.push_back({o.at("file").get<std::string>(), o.at("sha256").get<std::string>(), o.at("bytes").get<std::uint64_t>()});
  return out;
}

}  // namespace codepipe
