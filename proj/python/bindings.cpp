// Python bindings for the codepipe core. Results that are plain records are
// returned as dicts; token sequences are lists of ints.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "codepipe/corpus.hpp"
#include "codepipe/error.hpp"
#include "codepipe/evol.hpp"
#include "codepipe/fim.hpp"
#include "codepipe/kernel_check.hpp"
#include "codepipe/mixture.hpp"
#include "codepipe/pipeline.hpp"
#include "codepipe/refmodel.hpp"
#include "codepipe/repopack.hpp"
#include "codepipe/schedule.hpp"
#include "codepipe/seqpack.hpp"
#include "codepipe/tokenizer.hpp"

namespace py = pybind11;
using namespace codepipe;

namespace {

const ByteTokenizer& tokenizer() {
  static const ByteTokenizer tok;
  return tok;
}

py::dict stats_dict(const LengthStats& s) {
  py::dict d;
  d["count"] = s.count;
  d["median"] = s.median;
  d["mean"] = s.mean;
  d["min"] = s.min;
  d["max"] = s.max;
  d["pct_ge_4096"] = s.pct_ge_4096;
  return d;
}

py::dict document_dict(const Document& doc) {
  py::dict d;
  d["id"] = doc.id;
  d["repo_id"] = doc.repo_id;
  d["path"] = doc.path;
  d["language"] = doc.language;
  d["text"] = doc.text;
  return d;
}

RepoGroup group_from(const std::string& repo_id, const std::vector<std::pair<std::string, std::string>>& files) {
  RepoGroup g;
  g.repo_id = repo_id;
  for (std::size_t i = 0; i < files.size(); ++i)
    g.files.push_back({repo_id + "/" + std::to_string(i), repo_id, files[i].first, "python", files[i].second, {}});
  return g;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Data pipeline and reference checks for code language model training";
  py::register_exception<Error>(m, "Error", PyExc_ValueError);
  m.attr("__version__") = kVersion;
  m.attr("PUBLISHED_PARAMETER_COUNT") = kPublishedParameterCount;

  // corpus
  m.def(
      "length_stats",
      [](const std::vector<std::int64_t>& lengths) { return stats_dict(length_stats(lengths)); },
      py::arg("lengths"));
  m.def(
      "ingest",
      [](const std::string& text, bool lenient) {
        std::istringstream in(text);
        const auto r = ingest(in, lenient ? IngestMode::Lenient : IngestMode::Strict);
        py::list docs;
        for (const auto& d : r.documents) docs.append(document_dict(d));
        return docs;
      },
      py::arg("text"), py::arg("lenient") = false);
  m.def(
      "synthesize",
      [](std::uint64_t seed, std::size_t repos, bool repo_level) {
        SynthesisSpec spec;
        if (repo_level) {
          spec.repo_length = repo_level_law();
          spec.max_files = 8;
        }
        py::list docs;
        for (const auto& d : flatten(synthesize_corpus(seed, repos, spec))) docs.append(document_dict(d));
        return docs;
      },
      py::arg("seed"), py::arg("repos"), py::arg("repo_level") = false);

  // tokenizer
  m.def("encode", [](const std::string& text) { return tokenizer().encode(text); }, py::arg("text"));
  m.def(
      "decode", [](const std::vector<TokenId>& ids) { return py::bytes(tokenizer().decode(ids)); }, py::arg("ids"));
  m.def(
      "special_id",
      [](const std::string& name) {
        const auto kind = parse_special_name(name);
        if (!kind) throw Error("tokenizer", "unknown special '" + name + "'");
        return tokenizer().special_id(*kind);
      },
      py::arg("name"));

  // mixture
  m.def(
      "validate_table",
      [](const std::string& path) {
        const auto table = path.empty() ? reference_table() : load_table(path);
        const auto r = validate_table(table, kReferenceTotalTokens);
        py::dict d;
        d["passed"] = r.passed();
        d["weight_sum"] = r.weight_sum;
        d["code_share"] = r.code_share;
        py::list bad;
        for (const auto& row : r.rows)
          if (!row.ok) bad.append(row.name);
        d["bad_rows"] = bad;
        d["report"] = format_report(r);
        return d;
      },
      py::arg("path") = "");
  m.def(
      "plan_mixture",
      [](std::uint64_t budget, bool renormalize, const std::string& path) {
        const auto table = path.empty() ? reference_table() : load_table(path);
        PlanOptions o;
        o.renormalize = renormalize;
        py::dict d;
        for (const auto& s : plan_mixture(table, budget, o).sources) d[py::str(s.name)] = s.quota;
        return d;
      },
      py::arg("budget"), py::arg("renormalize") = false, py::arg("path") = "");
  m.def(
      "apportion", [](const std::vector<double>& w, std::uint64_t total) { return apportion(w, total); },
      py::arg("weights"), py::arg("total"));

  // fim
  m.def(
      "apply_fim",
      [](const std::string& text, double rate, double spm_probability, std::uint64_t seed, bool eod) {
        Rng rng(seed);
        const auto ex = apply_fim(text, {rate, spm_probability, eod}, rng, tokenizer());
        py::dict d;
        d["mode"] = std::string(to_string(ex.mode));
        d["middle"] = py::make_tuple(ex.middle.begin, ex.middle.end);
        d["tokens"] = ex.rendered;
        return d;
      },
      py::arg("text"), py::arg("rate") = 0.5, py::arg("spm_probability") = 0.5, py::arg("seed") = 0,
      py::arg("eod") = false);
  m.def(
      "reconstruct_text",
      [](const std::vector<TokenId>& ids) { return py::bytes(reconstruct_text(ids, tokenizer())); }, py::arg("ids"));

  // repopack
  m.def(
      "pack_repository",
      [](const std::string& repo_id, const std::vector<std::pair<std::string, std::string>>& files,
         std::uint64_t seed) {
        py::list out;
        for (const auto& p : pack_repository(group_from(repo_id, files), seed, tokenizer())) {
          py::dict d;
          d["ordering_index"] = p.ordering_index;
          d["file_order"] = p.file_order;
          d["text"] = p.text;
          d["tokens"] = tokenize_pack(p, tokenizer()).ids;
          out.append(d);
        }
        return out;
      },
      py::arg("repo_id"), py::arg("files"), py::arg("seed") = 0);

  // seqpack
  m.def(
      "pack_sequences",
      [](const std::vector<std::vector<TokenId>>& docs, std::size_t seq_len) {
        std::vector<AnnotatedTokens> in;
        for (const auto& d : docs) in.push_back({d, {{0, d.size()}}});
        SeqPackOptions o;
        o.seq_len = seq_len;
        std::vector<std::vector<TokenId>> out;
        for (auto& s : pack(in, o, tokenizer())) out.push_back(std::move(s.ids));
        return out;
      },
      py::arg("docs"), py::arg("seq_len"));
  m.def(
      "tokens_per_step",
      [](std::uint64_t devices, std::uint64_t micro_batch, std::uint64_t grad_accum, std::uint64_t seq_len) {
        return tokens_per_step({devices, micro_batch, grad_accum, seq_len});
      },
      py::arg("devices") = 256, py::arg("micro_batch") = 4, py::arg("grad_accum") = 1, py::arg("seq_len") = 4096);

  // schedule
  m.def(
      "lr_at",
      [](double peak, double min, std::uint64_t total, double warmup_fraction, std::uint64_t step) {
        ScheduleSpec s{peak, min, total, warmup_fraction};
        s.validate();
        return lr_at(s, step);
      },
      py::arg("peak_lr"), py::arg("min_lr"), py::arg("total_steps"), py::arg("warmup_fraction"), py::arg("step"));
  m.def(
      "stage_lr",
      [](const std::string& stage, std::uint64_t step) { return lr_at(preset(parse_stage(stage)).schedule, step); },
      py::arg("stage"), py::arg("step"));
  m.def(
      "stage_presets_json", [] { return stages_to_json(stage_presets()); });

  // refmodel
  m.def("param_count", [] {
    const auto b = param_count(ModelConfig::published());
    py::dict d;
    d["total"] = b.total;
    d["per_layer"] = b.per_layer_total;
    d["assumptions"] = b.assumptions;
    d["breakdown"] = format_breakdown(b);
    return d;
  });
  m.def("mfu", &mfu, py::arg("achieved_flops_per_s"), py::arg("peak_flops_per_s"));
  m.def(
      "kernel_checks",
      [](std::size_t configs, std::uint64_t seed) {
        py::dict d;
        for (const auto& r : run_kernel_checks(configs, seed)) d[py::str(r.name)] = r.passed;
        return d;
      },
      py::arg("configs") = 50, py::arg("seed") = 0);

  // evol
  m.def(
      "exact_dedup",
      [](const std::vector<std::pair<std::string, std::string>>& pairs) {
        std::vector<Sample> samples;
        for (const auto& [p, c] : pairs) samples.push_back({p, c, "", 0, ""});
        std::vector<std::pair<std::string, std::string>> out;
        for (const auto& s : exact_dedup(samples)) out.emplace_back(s.prompt, s.completion);
        return out;
      },
      py::arg("pairs"));

  // pipeline
  m.def(
      "run_pipeline",
      [](const std::string& config_json, const std::filesystem::path& out_dir) {
        const auto r = run_pipeline(config_from_json(config_json), out_dir);
        py::dict d;
        d["manifest"] = r.manifest_path;
        py::dict hashes;
        for (const auto& o : r.outputs) hashes[py::str(o.file)] = o.sha256;
        d["outputs"] = hashes;
        return d;
      },
      py::arg("config_json"), py::arg("out_dir"));
  m.def(
      "rerun_pipeline",
      [](const std::filesystem::path& manifest, const std::filesystem::path& out_dir) {
        const auto r = run_pipeline(config_from_manifest(manifest), out_dir);
        py::dict hashes;
        for (const auto& o : r.outputs) hashes[py::str(o.file)] = o.sha256;
        return hashes;
      },
      py::arg("manifest"), py::arg("out_dir"));
}
