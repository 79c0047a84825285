#include "codepipe/seqpack.hpp"

#include <array>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>

#include "codepipe/error.hpp"

namespace codepipe {

SequencePacker::SequencePacker(SeqPackOptions options, const Tokenizer& tok)
    : options_(options), eod_(tok.special_id(SpecialKind::EndOfDoc)) {
  if (options_.seq_len == 0) throw Error("seqpack", "seq_len must be positive");
}

void SequencePacker::append_span(const AnnotatedTokens& doc, std::size_t begin, std::size_t end,
                                 std::size_t first_file) {
  const std::size_t offset = current_.ids.size();
  current_.ids.insert(current_.ids.end(), doc.ids.begin() + static_cast<std::ptrdiff_t>(begin),
                      doc.ids.begin() + static_cast<std::ptrdiff_t>(end));
  for (std::size_t f = 0; f < doc.files.size(); ++f) {
    const auto& r = doc.files[f];
    std::size_t b = std::max(r.begin, begin);
    std::size_t e = std::min(r.end, end);
    if (r.begin == r.end) {
      // empty files attach to the span that contains their position
      const bool inside = r.begin >= begin && (r.begin < end || (r.begin == end && end == doc.ids.size()));
      if (!inside) continue;
      b = e = r.begin;
    } else if (b >= e) {
      continue;
    }
    FileSpan span;
    span.begin = offset + (b - begin);
    span.end = offset + (e - begin);
    span.file = first_file + f;
    span.continues_previous = r.begin < begin;
    span.continues_next = r.end > end;
    current_.file_boundaries.push_back(span);
  }
}

void SequencePacker::push(const AnnotatedTokens& doc) {
  for (const auto& r : doc.files)
    if (r.begin > r.end || r.end > doc.ids.size()) throw Error("seqpack", "file range outside document");

  const std::size_t seq_len = options_.seq_len;
  const std::size_t first_file = next_file_;
  next_file_ += doc.files.size();
  ++stats_.documents;
  stats_.input_tokens += doc.ids.size();

  if (options_.mode == PackMode::Pretrain) {
    if (doc.ids.empty()) append_span(doc, 0, 0, first_file);
    std::size_t pos = 0;
    while (pos < doc.ids.size()) {
      const std::size_t take = std::min(seq_len - current_.ids.size(), doc.ids.size() - pos);
      append_span(doc, pos, pos + take, first_file);
      pos += take;
      if (current_.ids.size() == seq_len) emit_current();
    }
    current_.doc_boundaries.push_back(current_.ids.size());
    current_.ids.push_back(eod_);
    if (current_.ids.size() == seq_len) emit_current();
    return;
  }

  // SFT: the document plus its END_OF_DOC must fit in one sequence.
  std::size_t len = doc.ids.size();
  if (len + 1 > seq_len) {
    if (options_.overflow == OverflowPolicy::Error)
      throw Error("seqpack", "document of " + std::to_string(len) + " tokens exceeds seq_len " +
                                 std::to_string(seq_len) + " in no-split mode");
    stats_.truncated_tokens += len - (seq_len - 1);
    len = seq_len - 1;
  }
  if (current_.ids.size() + len + 1 > seq_len) emit_current();
  append_span(doc, 0, len, first_file);
  current_.doc_boundaries.push_back(current_.ids.size());
  current_.ids.push_back(eod_);
  if (current_.ids.size() == seq_len) emit_current();
}

void SequencePacker::emit_current() {
  if (current_.ids.empty()) return;
  current_.pad_count = options_.seq_len - current_.ids.size();
  current_.ids.resize(options_.seq_len, eod_);
  stats_.pad_tokens += current_.pad_count;
  ++stats_.sequences;
  done_.push_back(std::move(current_));
  current_ = PackedSequence{};
}

void SequencePacker::finish() { emit_current(); }

std::vector<PackedSequence> SequencePacker::take() {
  std::vector<PackedSequence> out;
  out.swap(done_);
  return out;
}

std::vector<PackedSequence> pack(std::span<const AnnotatedTokens> docs, const SeqPackOptions& options,
                                 const Tokenizer& tok, PackStats* stats) {
  SequencePacker packer(options, tok);
  for (const auto& d : docs) packer.push(d);
  packer.finish();
  if (stats) *stats = packer.stats();
  return packer.take();
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::array<char, 8> kMagic{'C', 'P', 'S', 'E', 'Q', '0', '1', '\0'};

template <typename T>
void put_le(std::ostream& out, T value) {
  std::array<char, sizeof(T)> bytes{};
  for (std::size_t i = 0; i < sizeof(T); ++i) bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFF);
  out.write(bytes.data(), bytes.size());
}

template <typename T>
T get_le(std::istream& in) {
  std::array<unsigned char, sizeof(T)> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (!in) throw Error("seqpack", "truncated sequence file");
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(bytes[i]) << (8 * i);
  return v;
}

}  // namespace

void write_sequences(std::ostream& out, std::span<const PackedSequence> seqs, std::size_t seq_len,
                     std::size_t vocab_size) {
  std::uint64_t non_pad = 0, pad = 0, docs = 0;
  for (const auto& s : seqs) {
    if (s.ids.size() != seq_len) throw Error("seqpack", "sequence length differs from header seq_len");
    non_pad += s.non_pad();
    pad += s.pad_count;
    docs += s.doc_boundaries.size();
  }
  out.write(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(seq_len));
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(vocab_size));
  put_le<std::uint64_t>(out, seqs.size());
  put_le<std::uint64_t>(out, non_pad);
  put_le<std::uint64_t>(out, pad);
  put_le<std::uint64_t>(out, docs);
  for (const auto& s : seqs)
    for (TokenId id : s.ids) put_le<std::uint32_t>(out, id);
}

SequenceFileHeader read_sequences(std::istream& in, std::vector<std::vector<TokenId>>* ids) {
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw Error("seqpack", "not a sequence file");
  SequenceFileHeader h;
  h.seq_len = get_le<std::uint32_t>(in);
  h.vocab_size = get_le<std::uint32_t>(in);
  h.sequences = get_le<std::uint64_t>(in);
  h.non_pad_tokens = get_le<std::uint64_t>(in);
  h.pad_tokens = get_le<std::uint64_t>(in);
  h.documents = get_le<std::uint64_t>(in);
  if (ids) {
    ids->assign(h.sequences, {});
    for (auto& seq : *ids) {
      seq.resize(h.seq_len);
      for (auto& id : seq) id = get_le<std::uint32_t>(in);
    }
  }
  return h;
}

void write_audit(std::ostream& out, std::span<const PackedSequence> seqs, const Tokenizer& tok) {
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    const auto& s = seqs[i];
    out << "== sequence " << i << " len=" << s.ids.size() << " non_pad=" << s.non_pad() << " pad=" << s.pad_count
        << '\n';
    out << "doc_boundaries:";
    for (auto b : s.doc_boundaries) out << ' ' << b;
    out << "\nfiles:";
    for (const auto& f : s.file_boundaries) {
      out << " [" << f.begin << ',' << f.end << ")#" << f.file;
      if (f.continues_previous) out << "<";
      if (f.continues_next) out << ">";
    }
    out << "\ntext: " << tok.decode(std::span(s.ids).first(s.non_pad())) << "\n";
  }
}

// ---------------------------------------------------------------------------

void BatchSpec::validate() const {
  if (devices == 0 || micro_batch == 0 || grad_accum == 0 || seq_len == 0)
    throw Error("seqpack", "batch spec fields must all be positive");
}

std::uint64_t tokens_per_step(const BatchSpec& b) { return b.devices * b.micro_batch * b.grad_accum * b.seq_len; }

std::vector<std::uint64_t> stage_token_ledger(std::span<const StageSteps> stages, std::uint64_t base_tokens) {
  std::vector<std::uint64_t> totals;
  std::uint64_t running = base_tokens;
  for (const auto& s : stages) {
    running += tokens_per_step(s.batch) * s.steps;
    totals.push_back(running);
  }
  return totals;
}

std::uint64_t steps_for_tokens(double total_tokens, std::uint64_t per_step) {
  if (per_step == 0) throw Error("seqpack", "tokens per step must be positive");
  return static_cast<std::uint64_t>(std::ceil(total_tokens / static_cast<double>(per_step)));
}

}  // namespace codepipe
