// codepipe command line: one subcommand per pipeline stage plus `pipeline`
// for end-to-end runs.

#include <CLI11.hpp>

#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "codepipe/corpus.hpp"
#include "codepipe/error.hpp"
#include "codepipe/evol.hpp"
#include "codepipe/fim.hpp"
#include "codepipe/hash.hpp"
#include "codepipe/kernel_check.hpp"
#include "codepipe/mixture.hpp"
#include "codepipe/pipeline.hpp"
#include "codepipe/random.hpp"
#include "codepipe/refmodel.hpp"
#include "codepipe/repopack.hpp"
#include "codepipe/schedule.hpp"
#include "codepipe/seqpack.hpp"
#include "codepipe/tokenizer.hpp"
#include "codepipe/utf8.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace codepipe;
using nlohmann::json;

namespace {

struct Globals {
  std::string vocab_path;
};

ByteTokenizer make_tokenizer(const Globals& g) {
  return ByteTokenizer(g.vocab_path.empty() ? Vocab::reference() : Vocab::load(g.vocab_path));
}

// Writes to a file when a path is given, stdout otherwise.
class Output {
 public:
  explicit Output(const std::string& path) {
    if (!path.empty()) {
      if (auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
      file_ = std::make_unique<std::ofstream>(path, std::ios::binary);
      if (!*file_) throw Error("cli", "cannot open " + path + " for writing");
    }
  }
  std::ostream& stream() { return file_ ? *file_ : std::cout; }

 private:
  std::unique_ptr<std::ofstream> file_;
};

std::vector<Document> read_documents(const std::string& path, IngestMode mode = IngestMode::Strict) {
  auto result = path == "-" ? ingest(std::cin, mode) : ingest_file(path, mode);
  for (const auto& issue : result.issues) std::cerr << "skipped line " << issue.line << ": " << issue.message << "\n";
  return std::move(result.documents);
}

std::vector<CorpusInput> parse_corpora(const std::vector<std::string>& specs) {
  std::vector<CorpusInput> out;
  for (const auto& s : specs) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw Error("cli", "--corpus expects name=path, got '" + s + "'");
    out.push_back({s.substr(0, eq), s.substr(eq + 1)});
  }
  return out;
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  for (std::string item; std::getline(in, item, ',');)
    if (!item.empty()) out.push_back(item);
  return out;
}

// Enum names are upper case with underscores; accept "long-context" etc.
std::string enum_arg(std::string s) {
  for (auto& c : s) c = c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

std::vector<DatasetSpec> table_or_default(const std::string& path) {
  return path.empty() ? reference_table() : load_table(path);
}

// ---------------------------------------------------------------------------

void add_ingest(CLI::App& app, const Globals&) {
  auto* cmd = app.add_subcommand("ingest", "Validate line-delimited document records and re-emit them normalized");
  auto input = std::make_shared<std::string>();
  auto out = std::make_shared<std::string>();
  auto lenient = std::make_shared<bool>(false);
  cmd->add_option("input", *input, "Records file ('-' for stdin)")->required();
  cmd->add_option("--out", *out, "Output path (default stdout)");
  cmd->add_flag("--lenient", *lenient, "Skip malformed records instead of failing");
  cmd->callback([=] {
    const auto docs = read_documents(*input, *lenient ? IngestMode::Lenient : IngestMode::Strict);
    Output o(*out);
    write_records(o.stream(), docs);
    std::cerr << "ingested " << docs.size() << " documents\n";
  });
}

void add_stats(CLI::App& app, const Globals& g) {
  auto* cmd = app.add_subcommand("stats", "Length statistics over a corpus");
  auto input = std::make_shared<std::string>();
  auto unit = std::make_shared<std::string>("chars");
  auto level = std::make_shared<std::string>("file");
  cmd->add_option("input", *input, "Records file")->required();
  cmd->add_option("--unit", *unit, "chars or tokens")->check(CLI::IsMember({"chars", "tokens"}));
  cmd->add_option("--level", *level, "file, or repo (files packed with separators)")
      ->check(CLI::IsMember({"file", "repo"}));
  cmd->callback([=, &g] {
    const auto tok = make_tokenizer(g);
    const auto docs = read_documents(*input);
    const bool tokens = *unit == "tokens";
    auto measure = [&](std::string_view text) {
      return static_cast<std::int64_t>(tokens ? tok.encode(text).size() : utf8::char_count(text));
    };
    std::vector<std::int64_t> lengths;
    if (*level == "file") {
      for (const auto& d : docs) lengths.push_back(measure(d.text));
    } else {
      for (const auto& group : group_by_repo(docs)) lengths.push_back(measure(pack_repository(group, 0, tok)[0].text));
    }
    std::cout << format_stats(length_stats(lengths, tokens ? LengthUnit::Tokens : LengthUnit::Chars));
  });
}

void add_mixture(CLI::App& app, const Globals& g) {
  auto* cmd = app.add_subcommand("mixture", "Mixture table validation, planning and sampling");
  cmd->require_subcommand(1);

  auto table = std::make_shared<std::string>();
  auto total = std::make_shared<double>(kReferenceTotalTokens);

  auto* validate = cmd->add_subcommand("validate", "Check a mixture table's internal consistency");
  validate->add_option("--table", *table, "CSV table (default: built-in)");
  validate->add_option("--total", *total, "Total token count the weights refer to");
  validate->callback([=] {
    const auto report = validate_table(table_or_default(*table), *total);
    std::cout << format_report(report);
    if (!report.passed()) throw CLI::RuntimeError(1);
  });

  auto budget = std::make_shared<std::uint64_t>(0);
  auto renormalize = std::make_shared<bool>(false);
  auto* plan = cmd->add_subcommand("plan", "Per-source token quotas for a budget");
  plan->add_option("--table", *table, "CSV table (default: built-in)");
  plan->add_option("--budget", *budget, "Token budget")->required();
  plan->add_flag("--renormalize", *renormalize, "Rescale weights that do not sum to 1");
  plan->callback([=] {
    std::cout << format_plan(plan_mixture(table_or_default(*table), *budget, {.renormalize = *renormalize}));
  });

  auto seed = std::make_shared<std::uint64_t>(0);
  auto corpora = std::make_shared<std::vector<std::string>>();
  auto synthetic = std::make_shared<std::size_t>(0);
  auto out = std::make_shared<std::string>();
  auto* sample = cmd->add_subcommand("sample", "Draw a document stream that honours the plan");
  sample->add_option("--table", *table, "CSV table (default: built-in)");
  sample->add_option("--budget", *budget, "Token budget")->required();
  sample->add_flag("--renormalize", *renormalize, "Rescale weights that do not sum to 1");
  sample->add_option("--seed", *seed, "Master seed");
  sample->add_option("--corpus", *corpora, "Source documents as name=path (repeatable)");
  sample->add_option("--synthetic", *synthetic, "Synthesize this many repositories per source");
  sample->add_option("--out", *out, "Write the stream as JSON lines");
  sample->callback([=, &g] {
    const auto tok = make_tokenizer(g);
    const auto specs = table_or_default(*table);
    const auto p = plan_mixture(specs, *budget, {.renormalize = *renormalize});
    std::map<std::string, std::vector<Document>> docs;
    if (*synthetic > 0) {
      for (std::size_t i = 0; i < specs.size(); ++i) {
        SynthesisSpec spec;
        spec.id_prefix = specs[i].name;
        docs[specs[i].name] = flatten(synthesize_corpus(derive_seed(*seed, "synthetic", i), *synthetic, spec));
      }
    } else {
      for (const auto& c : parse_corpora(*corpora)) docs[c.name] = read_documents(c.path);
    }
    std::vector<MixtureSource> sources;
    for (const auto& q : p.sources) {
      MixtureSource s{q.name, {}};
      if (auto it = docs.find(q.name); it != docs.end())
        for (const auto& d : it->second) s.doc_tokens.push_back(tok.encode(d.text).size());
      if (!s.doc_tokens.empty() || q.quota > 0) sources.push_back(std::move(s));
    }
    MixtureStream stream(p, sources, *seed);
    Output o(*out);
    std::uint64_t items = 0;
    while (auto item = stream.next()) {
      ++items;
      if (!out->empty()) {
        const auto& name = p.sources[item->source].name;
        o.stream() << json{{"source", name}, {"doc", docs[name][item->doc].id}, {"epoch", item->epoch},
                           {"tokens", item->tokens}}
                          .dump()
                   << "\n";
      }
    }
    std::cout << std::left << std::setw(28) << "source" << std::right << std::setw(16) << "quota" << std::setw(16)
              << "emitted" << std::setw(8) << "epochs" << "\n";
    for (std::size_t i = 0; i < p.sources.size(); ++i) {
      std::cout << std::left << std::setw(28) << p.sources[i].name << std::right << std::setw(16)
                << p.sources[i].quota << std::setw(16) << stream.emitted_tokens()[i] << std::setw(8)
                << stream.epochs_started()[i] << "\n";
    }
    std::cout << "items " << items << "\n";
  });
}

void add_fim(CLI::App& app, const Globals& g) {
  auto* cmd = app.add_subcommand("fim", "Apply the fill-in-the-middle transform to documents");
  auto input = std::make_shared<std::string>();
  auto out = std::make_shared<std::string>();
  auto sidecar = std::make_shared<std::string>();
  auto opts = std::make_shared<FimOptions>();
  auto seed = std::make_shared<std::uint64_t>(0);
  cmd->add_option("input", *input, "Records file")->required();
  cmd->add_option("--rate", opts->rate, "Per-document transform probability")->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--spm-prob", opts->spm_probability, "Share of SPM among transformed documents")
      ->check(CLI::Range(0.0, 1.0));
  cmd->add_flag("--eod", opts->eod_after_middle, "Append END_OF_DOC after the middle segment");
  cmd->add_option("--seed", *seed, "Master seed");
  cmd->add_option("--out", *out, "Rendered token sequences as JSON lines (default stdout)");
  cmd->add_option("--sidecar", *sidecar, "Mode and cut points per document as JSON lines");
  cmd->callback([=, &g] {
    const auto tok = make_tokenizer(g);
    const auto docs = read_documents(*input);
    Output o(*out), side(*sidecar);
    std::size_t transformed = 0, psm = 0;
    for (std::size_t i = 0; i < docs.size(); ++i) {
      Rng rng(derive_seed(*seed, "fim", i));
      const auto ex = apply_fim(docs[i].text, *opts, rng, tok);
      o.stream() << json{{"id", docs[i].id}, {"tokens", ex.rendered}}.dump() << "\n";
      if (!sidecar->empty()) {
        side.stream() << json{{"id", docs[i].id},
                              {"mode", std::string(to_string(ex.mode))},
                              {"lo", ex.middle.begin},
                              {"hi", ex.middle.end}}
                             .dump()
                      << "\n";
      }
      if (ex.mode != FimMode::None) ++transformed;
      if (ex.mode == FimMode::Psm) ++psm;
    }
    std::cerr << "documents " << docs.size() << " transformed " << transformed << " psm " << psm << "\n";
  });
}

void add_pack_repo(CLI::App& app, const Globals& g) {
  auto* cmd = app.add_subcommand("pack-repo", "Concatenate each repository's files into long-context packs");
  auto input = std::make_shared<std::string>();
  auto out = std::make_shared<std::string>();
  auto languages = std::make_shared<std::string>();
  auto seed = std::make_shared<std::uint64_t>(0);
  auto context = std::make_shared<std::size_t>(16'384);
  auto opts = std::make_shared<RepoPackOptions>();
  cmd->add_option("input", *input, "Records file")->required();
  cmd->add_option("--languages", *languages, "Comma-separated language filter (default: six long-context languages)");
  cmd->add_option("--seed", *seed, "Master seed");
  cmd->add_option("--context-length", *context, "Target context for the length report");
  cmd->add_flag("--filename-markers", opts->filename_markers, "Prefix each file with a filename marker header");
  cmd->add_option("--out", *out, "Packs as JSON lines");
  cmd->callback([=, &g] {
    const auto tok = make_tokenizer(g);
    std::set<std::string> allowed = default_long_context_languages();
    if (!languages->empty()) {
      const auto list = split_csv(*languages);
      allowed = {list.begin(), list.end()};
    }
    std::vector<RepoGroup> groups;
    for (const auto& group : group_by_repo(read_documents(*input))) {
      auto kept = filter_languages(group, allowed);
      if (!kept.files.empty()) groups.push_back(std::move(kept));
    }
    const auto packs = pack_corpus(groups, *seed, tok, *opts);
    if (!out->empty()) {
      Output o(*out);
      for (const auto& p : packs) {
        json files = json::array();
        for (const auto& f : p.files) files.push_back(f.id);
        o.stream() << json{{"repo_id", p.repo_id}, {"ordering", p.ordering_index}, {"files", files}, {"text", p.text}}
                          .dump(-1, ' ', false, json::error_handler_t::replace)
                   << "\n";
      }
    }
    if (packs.empty()) {
      std::cout << "no repositories left after the language filter\n";
      return;
    }
    const auto report = target_context_report(packs, tok, *context);
    std::cout << "repositories " << groups.size() << "\npacks " << packs.size() << "\n" << format_stats(report.stats);
    std::cout << "context_length " << report.context_length << "\nbrackets_context "
              << (report.brackets ? "yes" : "no") << "\n";
  });
}

void add_pack_seq(CLI::App& app, const Globals& g) {
  auto* cmd = app.add_subcommand("pack-seq", "Pack documents into fixed-length training sequences");
  auto input = std::make_shared<std::string>();
  auto out = std::make_shared<std::string>();
  auto audit = std::make_shared<std::string>();
  auto mode = std::make_shared<std::string>("pretrain");
  auto overflow = std::make_shared<std::string>("error");
  auto seq_len = std::make_shared<std::size_t>(4096);
  cmd->add_option("input", *input, "Records file")->required();
  cmd->add_option("--seq-len", *seq_len, "Sequence length")->check(CLI::PositiveNumber);
  cmd->add_option("--mode", *mode, "pretrain or sft")->check(CLI::IsMember({"pretrain", "sft"}));
  cmd->add_option("--overflow", *overflow, "SFT documents longer than a sequence: error or truncate")
      ->check(CLI::IsMember({"error", "truncate"}));
  cmd->add_option("--out", *out, "Binary sequence file")->required();
  cmd->add_option("--audit", *audit, "Human-readable boundary audit");
  cmd->callback([=, &g] {
    const auto tok = make_tokenizer(g);
    SeqPackOptions opts{*seq_len, *mode == "sft" ? PackMode::Sft : PackMode::Pretrain,
                        *overflow == "truncate" ? OverflowPolicy::Truncate : OverflowPolicy::Error};
    std::vector<AnnotatedTokens> docs;
    for (const auto& d : read_documents(*input)) {
      AnnotatedTokens a;
      a.ids = tok.encode(d.text);
      a.files.push_back({0, a.ids.size()});
      docs.push_back(std::move(a));
    }
    PackStats stats;
    const auto seqs = pack(docs, opts, tok, &stats);
    Output o(*out);
    write_sequences(o.stream(), seqs, *seq_len, tok.vocab().size);
    if (!audit->empty()) {
      Output a(*audit);
      write_audit(a.stream(), seqs, tok);
    }
    std::cout << "documents " << stats.documents << "\ninput_tokens " << stats.input_tokens << "\ntruncated_tokens "
              << stats.truncated_tokens << "\nsequences " << stats.sequences << "\npad_tokens " << stats.pad_tokens
              << "\n";
  });
}

void add_schedule(CLI::App& app, const Globals&) {
  auto* cmd = app.add_subcommand("schedule", "Stage presets and learning-rate tables");
  auto stage = std::make_shared<std::string>("pretrain");
  auto stride = std::make_shared<std::uint64_t>(0);
  auto as_json = std::make_shared<bool>(false);
  cmd->add_option("--stage", *stage, "pretrain, long_context, sft or dpo");
  cmd->add_option("--stride", *stride, "Step stride of the (step, lr) table (default: about 100 rows)");
  cmd->add_flag("--json", *as_json, "Print every stage preset as JSON instead");
  cmd->callback([=] {
    if (*as_json) {
      std::cout << stages_to_json(stage_presets()) << "\n";
      return;
    }
    const auto& p = preset(parse_stage(enum_arg(*stage)));
    const auto step = *stride ? *stride : std::max<std::uint64_t>(1, p.schedule.total_steps / 100);
    std::cout << "# stage " << to_string(p.name) << " steps " << p.schedule.total_steps << " warmup "
              << p.schedule.warmup_steps() << "\n"
              << lr_table(p.schedule, step);
  });
}

void add_kernel_check(CLI::App& app, const Globals&) {
  auto* cmd = app.add_subcommand("kernel-check", "Reference decoder invariants, parameter count and MFU");
  auto configs = std::make_shared<std::size_t>(50);
  auto seed = std::make_shared<std::uint64_t>(0);
  cmd->add_option("--configs", *configs, "Random tiny configs per invariant");
  cmd->add_option("--seed", *seed, "Seed for the random configs");
  cmd->callback([=] {
    const auto results = run_kernel_checks(*configs, *seed);
    bool ok = true;
    for (const auto& r : results) {
      std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << "\n";
      ok = ok && r.passed;
    }
    const auto c = ModelConfig::published();
    std::cout << "\n" << format_breakdown(param_count(c));

    std::cout << "\nassumption sets reproducing " << kPublishedParameterCount << ":\n";
    for (const auto& m : search_count_assumptions(c, kPublishedParameterCount)) {
      std::cout << "  vocab " << m.vocab << " ffn " << m.ffn_size << (m.ffn_kind == FfnKind::Gated ? " gated" : " plain")
                << (m.tie_embeddings ? " tied" : " untied") << (m.count_final_norm ? " +final_norm" : "")
                << (m.count_qkv_bias ? " +qkv_bias" : "") << "\n";
    }

    const auto f = flops_per_token(c);
    std::cout << std::setprecision(6) << "\nflops_per_token " << f.total_per_token << " (dense " << f.dense_per_token
              << ", attention " << f.attention_per_token << ")\n";
    std::cout << "\n" << std::left << std::setw(20) << "achieved_flops" << std::setw(20) << "peak_flops" << "mfu_pct\n";
    for (double achieved : {150e12, 200e12, 222e12, 250e12}) {
      std::cout << std::setw(20) << achieved << std::setw(20) << 312e12 << std::fixed << std::setprecision(4)
                << mfu(achieved, 312e12) << std::defaultfloat << std::setprecision(6) << "\n";
    }
    if (!ok) throw CLI::RuntimeError(1);
  });
}

void add_evol(CLI::App& app, const Globals&) {
  auto* cmd = app.add_subcommand("evol", "Evolve instruction prompts and optionally answer them");
  struct Args {
    std::string seeds, campaign, strategies, out, strategy;
    std::size_t rounds = 1, target = 0, in_flight = 4;
    std::uint64_t seed = 0;
    bool mock = false, answers = false;
  };
  auto a = std::make_shared<Args>();
  cmd->add_option("--seeds", a->seeds, "Seed prompts as document records (text field)");
  cmd->add_option("--campaign", a->campaign, "Campaign JSON: seeds, target, rounds, mix");
  cmd->add_option("--strategies", a->strategies, "Strategy template JSON (default: built-in)");
  cmd->add_option("--strategy", a->strategy, "Use a single strategy for every seed");
  cmd->add_option("--rounds", a->rounds, "Evolution rounds per prompt")->check(CLI::PositiveNumber);
  cmd->add_option("--target", a->target, "Evolved prompts to produce (default: one per seed)");
  cmd->add_option("--seed", a->seed, "Planner and generation seed");
  cmd->add_option("--in-flight", a->in_flight, "Concurrent client calls")->check(CLI::PositiveNumber);
  cmd->add_flag("--mock", a->mock, "Use the offline echo/answer mock clients");
  cmd->add_flag("--answers", a->answers, "Generate completions for the evolved prompts");
  cmd->add_option("--out", a->out, "Samples as document records (default stdout)");
  cmd->callback([a] {
    std::vector<double> mix(4, 0.25);
    if (!a->campaign.empty()) {
      std::ifstream in(a->campaign);
      if (!in) throw Error("evol", "cannot open campaign " + a->campaign);
      const auto j = json::parse(in);
      if (a->seeds.empty() && j.contains("seeds")) {
        fs::path seeds = j["seeds"].get<std::string>();
        if (seeds.is_relative()) seeds = fs::path(a->campaign).parent_path() / seeds;
        a->seeds = seeds.string();
      }
      if (a->target == 0 && j.contains("target")) a->target = j["target"].get<std::size_t>();
      if (j.contains("rounds")) a->rounds = j["rounds"].get<std::size_t>();
      if (j.contains("mix")) {
        mix.assign(4, 0.0);
        for (const auto& [name, w] : j["mix"].items()) mix[static_cast<std::size_t>(parse_strategy(name))] = w;
      }
    }
    if (!a->strategy.empty()) {
      mix.assign(4, 0.0);
      mix[static_cast<std::size_t>(parse_strategy(enum_arg(a->strategy)))] = 1.0;
    }
    if (a->seeds.empty()) throw Error("evol", "no seed prompts given (--seeds or campaign 'seeds')");

    std::vector<std::string> seeds;
    for (const auto& d : read_documents(a->seeds)) seeds.push_back(d.text);
    const auto strategies = a->strategies.empty() ? default_strategies() : load_strategies(a->strategies);

    std::unique_ptr<GenerationClient> evolver, answerer;
    if (a->mock) {
      evolver = std::make_unique<EchoClient>();
      answerer = std::make_unique<MockAnswerClient>();
    } else {
      const char* url = std::getenv(kGenerationUrlEnv);
      if (!url || !*url)
        throw Error("evol", std::string("set ") + kGenerationUrlEnv + " to the generation endpoint or pass --mock");
      evolver = std::make_unique<HttpGenerationClient>(url);
      answerer = std::make_unique<HttpGenerationClient>(url);
    }
    RetryingClient evolve_client(*evolver), answer_client(*answerer);

    const auto plan = plan_campaign(seeds.size(), a->target ? a->target : seeds.size(), mix, a->seed);
    GenerationParams params;
    params.seed = a->seed;
    const auto evolved = run_campaign(seeds, plan, strategies, evolve_client, a->rounds, params, a->in_flight);

    std::vector<Sample> samples;
    if (a->answers) {
      std::vector<std::string> prompts;
      for (const auto& e : evolved) prompts.push_back(e.text);
      samples = generate_answers(prompts, answer_client, params, a->in_flight);
      for (std::size_t i = 0; i < samples.size(); ++i) {
        samples[i].strategy = std::string(to_string(evolved[i].strategy));
        samples[i].round = evolved[i].round;
        samples[i].client = evolved[i].client + "+" + answerer->identity();
      }
    } else {
      for (const auto& e : evolved)
        samples.push_back({e.text, "", std::string(to_string(e.strategy)), e.round, e.client});
    }
    const auto before = samples.size();
    samples = exact_dedup(samples);
    Output o(a->out);
    write_samples(o.stream(), samples);
    std::cerr << "seeds " << seeds.size() << " evolved " << evolved.size() << " samples " << samples.size()
              << " (removed " << before - samples.size() << " duplicates)\n";
  });
}

void add_pipeline(CLI::App& app, const Globals&) {
  auto* cmd = app.add_subcommand("pipeline", "Run a training stage's data pipeline end to end");
  struct Args {
    std::string config, manifest, stage, table, out, languages, vocab;
    std::vector<std::string> corpora;
    std::optional<std::uint64_t> seed, budget;
    std::optional<std::size_t> synthetic, seq_len;
    std::optional<double> fim_rate;
    bool fim_eod = false;
  };
  auto a = std::make_shared<Args>();
  cmd->add_option("--config", a->config, "Pipeline config JSON; flags override its fields");
  cmd->add_option("--manifest", a->manifest, "Rerun from a manifest and compare output hashes");
  cmd->add_option("--stage", a->stage, "pretrain, long_context or sft");
  cmd->add_option("--seed", a->seed, "Master seed");
  cmd->add_option("--table", a->table, "Mixture table CSV (pretrain)");
  cmd->add_option("--corpus", a->corpora, "Input corpus as name=path (repeatable)");
  cmd->add_option("--synthetic-repos", a->synthetic, "Synthesize inputs with this many repositories");
  cmd->add_option("--seq-len", a->seq_len, "Sequence length (default: stage default)");
  cmd->add_option("--fim-rate", a->fim_rate, "FIM transform probability")->check(CLI::Range(0.0, 1.0));
  cmd->add_flag("--fim-eod", a->fim_eod, "Append END_OF_DOC after the FIM middle segment");
  cmd->add_option("--languages", a->languages, "Comma-separated language filter (long_context)");
  cmd->add_option("--budget", a->budget, "Token budget (pretrain)");
  cmd->add_option("--vocab", a->vocab, "Vocabulary JSON");
  cmd->add_option("--out", a->out, "Output directory")->required();
  cmd->callback([a] {
    PipelineConfig cfg;
    if (!a->manifest.empty()) {
      cfg = config_from_manifest(a->manifest);
    } else if (!a->config.empty()) {
      std::ifstream in(a->config);
      if (!in) throw Error("cli", "cannot open config " + a->config);
      std::stringstream ss;
      ss << in.rdbuf();
      cfg = config_from_json(ss.str());
    }
    const bool overrides = !a->stage.empty() || a->seed || !a->table.empty() || !a->corpora.empty() || a->synthetic ||
                           a->seq_len || a->fim_rate || a->fim_eod || !a->languages.empty() || a->budget ||
                           !a->vocab.empty();
    if (!a->manifest.empty() && overrides) throw Error("cli", "--manifest reruns take no config overrides");
    if (!a->stage.empty()) cfg.stage = parse_pipeline_stage(enum_arg(a->stage));
    if (a->seed) cfg.seed = *a->seed;
    if (!a->table.empty()) cfg.table_path = a->table;
    if (!a->corpora.empty()) cfg.corpora = parse_corpora(a->corpora);
    if (a->synthetic) cfg.synthetic_repos = *a->synthetic;
    if (a->seq_len) cfg.seq_len = *a->seq_len;
    if (a->fim_rate) cfg.fim_rate = *a->fim_rate;
    if (a->fim_eod) cfg.fim_eod = true;
    if (!a->languages.empty()) cfg.languages = split_csv(a->languages);
    if (a->budget) cfg.budget = *a->budget;
    if (!a->vocab.empty()) cfg.vocab_path = a->vocab;

    const auto result = run_pipeline(cfg, a->out);
    for (const auto& f : result.outputs) std::cout << f.sha256 << "  " << f.file << "  " << f.bytes << "\n";
    std::cout << "manifest " << result.manifest_path.string() << "\n";

    if (!a->manifest.empty()) {
      const auto expected = manifest_outputs(a->manifest);
      bool same = expected.size() == result.outputs.size();
      for (std::size_t i = 0; same && i < expected.size(); ++i)
        same = expected[i].file == result.outputs[i].file && expected[i].sha256 == result.outputs[i].sha256;
      std::cout << (same ? "rerun MATCH" : "rerun MISMATCH") << "\n";
      if (!same) throw CLI::RuntimeError(1);
    }
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"codepipe: code LLM training-data pipeline"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  Globals g;
  app.add_option("--vocab", g.vocab_path, "Vocabulary JSON with special-token surfaces (default: reference)");
  add_ingest(app, g);
  add_stats(app, g);
  add_mixture(app, g);
  add_fim(app, g);
  add_pack_repo(app, g);
  add_pack_seq(app, g);
  add_schedule(app, g);
  add_kernel_check(app, g);
  add_evol(app, g);
  add_pipeline(app, g);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
