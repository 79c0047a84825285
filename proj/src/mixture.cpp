#include "codepipe/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "codepipe/error.hpp"

namespace codepipe {

std::string_view to_string(Category c) {
  switch (c) {
    case Category::Code: return "Code";
    case Category::Technical: return "Technical";
    case Category::Math: return "Math";
    case Category::Web: return "Web";
  }
  return "?";
}

Category parse_category(std::string_view s) {
  for (auto c : {Category::Code, Category::Technical, Category::Math, Category::Web})
    if (to_string(c) == s) return c;
  throw Error("mixture", "unknown category '" + std::string(s) + "'");
}

void DatasetSpec::validate() const {
  if (!(weight >= 0.0 && weight <= 1.0)) throw Error("mixture", name + ": weight must lie in [0, 1]");
  if (!(tokens_sampled >= 0.0)) throw Error("mixture", name + ": tokens_sampled must be >= 0");
  if (!(epochs > 0.0)) throw Error("mixture", name + ": epochs must be > 0");
}

std::vector<DatasetSpec> reference_table() {
  using C = Category;
  return {
      {"StarCoder C", 0.0924, 122'202'657'912.00, 6.0, C::Code},
      {"StarCoder CPP", 0.0734, 97'032'316'152.00, 6.0, C::Code},
      {"StarCoder Java", 0.1029, 136'010'698'326.00, 6.0, C::Code},
      {"StarCoder Javascript", 0.0858, 113'469'977'934.00, 6.0, C::Code},
      {"StarCoder CSS", 0.0146, 19'285'266'328.00, 4.0, C::Code},
      {"StarCoder Go", 0.0258, 34'092'166'492.00, 4.0, C::Code},
      {"StarCoder HTML", 0.0298, 39'354'336'188.00, 4.0, C::Code},
      {"StarCoder Ruby", 0.0061, 8'011'730'332.00, 4.0, C::Code},
      {"StarCoder Rust", 0.0122, 16'131'445'656.00, 6.0, C::Code},
      {"StarCoder Markdown", 0.1154, 152'629'435'716.00, 6.0, C::Code},
      {"StarCoder Shell", 0.0033, 4'323'112'416.00, 4.0, C::Code},
      {"StarCoder Php", 0.0764, 100'958'420'706.00, 6.0, C::Code},
      {"StarCoder Sql", 0.0247, 32'645'285'202.00, 6.0, C::Code},
      {"StarCoder R", 0.0003, 415'957'896.00, 4.0, C::Code},
      {"StarCoder Typescript", 0.0224, 29'634'722'636.00, 4.0, C::Code},
      {"StarCoder Python", 0.1067, 141'067'150'184.00, 8.0, C::Code},
      {"StarCoder Jupyter", 0.0060, 7'941'540'044.00, 4.0, C::Code},
      {"StarCoder Restructured Text", 0.0032, 4'179'202'492.00, 4.0, C::Code},
      {"Github Issues", 0.0231, 46'302'993'820.0, 2.5, C::Technical},
      {"Github Diffs", 0.0019, 3'817'060'582.0, 2.0, C::Technical},
      {"StackExchange", 0.0019, 3'817'060'582.0, 2.0, C::Technical},
      {"Synthetic", 0.0006, 819'864'748.00, 3.0, C::Technical},
      {"Proof Pile", 0.0384, 50'780'637'096.0, 1.0, C::Math},
      {"Meta Math QA", 0.0003, 83'663'501.0, 4.0, C::Math},
      {"Arxiv", 0.0213, 28'097'511'912.00, 1.0, C::Web},
      {"Refined Web", 0.0220, 29'114'185'066.13, 0.5, C::Web},
  };
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (char c : line) {
    if (c == '"') {
      quoted = !quoted;
    } else if (c == ',' && !quoted) {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  for (auto& f : fields) {
    auto b = f.find_first_not_of(" \t\r");
    auto e = f.find_last_not_of(" \t\r");
    f = b == std::string::npos ? std::string{} : f.substr(b, e - b + 1);
  }
  return fields;
}

double parse_number(std::string s, std::size_t line, const char* field) {
  s.erase(std::remove(s.begin(), s.end(), '_'), s.end());
  s.erase(std::remove(s.begin(), s.end(), '\''), s.end());
  s.erase(std::remove(s.begin(), s.end(), ','), s.end());
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size())
    throw Error("mixture", "table line " + std::to_string(line) + ": bad number in '" + field + "'");
  return v;
}

}  // namespace

std::vector<DatasetSpec> read_table_csv(std::istream& in) {
  std::vector<DatasetSpec> specs;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos || line[0] == '#') continue;
    auto f = split_csv_line(line);
    if (!header_seen) {
      header_seen = true;
      if (f.size() != 5 || f[0] != "name")
        throw Error("mixture", "table header must be name,weight,tokens_sampled,epochs,category");
      continue;
    }
    if (f.size() != 5) throw Error("mixture", "table line " + std::to_string(line_no) + ": expected 5 columns");
    DatasetSpec spec;
    spec.name = f[0];
    spec.weight = parse_number(f[1], line_no, "weight");
    spec.tokens_sampled = parse_number(f[2], line_no, "tokens_sampled");
    spec.epochs = parse_number(f[3], line_no, "epochs");
    spec.category = parse_category(f[4]);
    spec.validate();
    specs.push_back(std::move(spec));
  }
  return specs;
}

std::vector<DatasetSpec> load_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("mixture", "cannot open table " + path.string());
  return read_table_csv(in);
}

void write_table_csv(std::ostream& out, std::span<const DatasetSpec> specs) {
  out << "name,weight,tokens_sampled,epochs,category\n";
  for (const auto& s : specs) {
    out << s.name << ',' << std::setprecision(17) << s.weight << ',' << std::fixed << std::setprecision(2)
        << s.tokens_sampled << std::defaultfloat << ',' << std::setprecision(17) << s.epochs << ','
        << to_string(s.category) << '\n';
  }
}

ValidationReport validate_table(std::span<const DatasetSpec> specs, double total, const TableTolerances& tol) {
  if (specs.empty()) throw Error("mixture", "validate_table requires at least one row");
  if (!(total > 0.0)) throw Error("mixture", "validate_table requires a positive total");
  ValidationReport r;
  long double wsum = 0, tsum = 0, code = 0;
  r.rows_ok = true;
  for (const auto& s : specs) {
    wsum += s.weight;
    tsum += s.tokens_sampled;
    if (s.category == Category::Code) code += s.weight;
    RowCheck row;
    row.name = s.name;
    row.weight = s.weight;
    row.implied_weight = s.tokens_sampled / total;
    row.deviation = s.weight - row.implied_weight;
    row.ok = std::abs(row.deviation) <= tol.row;
    r.rows_ok = r.rows_ok && row.ok;
    r.rows.push_back(std::move(row));
  }
  r.weight_sum = static_cast<double>(wsum);
  r.token_sum = static_cast<double>(tsum);
  r.weight_sum_ok = std::abs(r.weight_sum - 1.0) <= tol.weight_sum;
  r.code_share = static_cast<double>(code);
  r.code_share_ok = std::abs(r.code_share - tol.code_share_target) <= tol.code_share;

  for (std::size_t i = 0; i < specs.size(); ++i) {
    for (std::size_t j = i + 1; j < specs.size(); ++j) {
      if (specs[i].weight == specs[j].weight && specs[i].tokens_sampled == specs[j].tokens_sampled &&
          specs[i].epochs == specs[j].epochs) {
        r.notes.push_back("rows '" + specs[i].name + "' and '" + specs[j].name +
                          "' are numerically identical (possible transcription artifact)");
      }
    }
  }
  const double rel_gap = std::abs(r.token_sum - total) / total;
  if (rel_gap > tol.row) {
    std::ostringstream note;
    note << std::setprecision(15) << "row token sum " << r.token_sum << " differs from total " << total << " by "
         << std::setprecision(4) << 100.0 * rel_gap << "%";
    r.notes.push_back(note.str());
  }
  return r;
}

std::string format_report(const ValidationReport& r) {
  std::ostringstream out;
  out << std::setprecision(6);
  out << (r.weight_sum_ok ? "PASS" : "FAIL") << "  weight sum " << r.weight_sum << '\n';
  for (const auto& row : r.rows) {
    out << (row.ok ? "PASS" : "FAIL") << "  row " << std::left << std::setw(28) << row.name << std::right
        << " weight " << std::setw(8) << row.weight << "  implied " << std::setw(12) << row.implied_weight
        << "  deviation " << row.deviation << '\n';
  }
  out << (r.code_share_ok ? "PASS" : "FAIL") << "  code share " << r.code_share << '\n';
  for (const auto& n : r.notes) out << "NOTE  " << n << '\n';
  out << "RESULT " << (r.passed() ? "PASS" : "FAIL") << '\n';
  return out.str();
}

std::vector<std::uint64_t> apportion(std::span<const double> weights, std::uint64_t total) {
  std::vector<std::uint64_t> out(weights.size(), 0);
  long double wsum = 0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw Error("mixture", "apportion weights must be non-negative");
    wsum += w;
  }
  if (weights.empty() || total == 0) return out;
  if (wsum <= 0) throw Error("mixture", "apportion needs a positive weight sum");

  std::vector<long double> remainder(weights.size());
  std::uint64_t assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const long double exact = static_cast<long double>(weights[i]) / wsum * static_cast<long double>(total);
    const long double fl = std::floor(exact);
    out[i] = static_cast<std::uint64_t>(fl);
    remainder[i] = exact - fl;
    assigned += out[i];
  }
  // floating error can push the floors one over in degenerate cases
  while (assigned > total) {
    auto it = std::max_element(out.begin(), out.end());
    --*it;
    --assigned;
  }
  std::vector<std::size_t> idx(weights.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t k = 0; assigned < total; k = (k + 1) % idx.size()) {
    ++out[idx[k]];
    ++assigned;
  }
  return out;
}

const SourceQuota& MixturePlan::source(std::string_view name) const {
  for (const auto& s : sources)
    if (s.name == name) return s;
  throw Error("mixture", "plan has no source '" + std::string(name) + "'");
}

MixturePlan plan_mixture(std::span<const DatasetSpec> specs, std::uint64_t total_budget, const PlanOptions& options) {
  if (specs.empty()) throw Error("mixture", "plan_mixture requires at least one source");
  std::vector<double> weights;
  double wsum = 0.0;
  for (const auto& s : specs) {
    if (!(s.epochs > 0.0)) throw Error("mixture", s.name + ": epochs must be > 0");
    s.validate();
    weights.push_back(s.weight);
    wsum += s.weight;
  }
  if (!options.renormalize && std::abs(wsum - 1.0) > options.weight_sum_tolerance) {
    std::ostringstream msg;
    msg << "weights sum to " << wsum << "; enable renormalize to plan this table";
    throw Error("mixture", msg.str());
  }
  const auto quotas = apportion(weights, total_budget);
  MixturePlan plan;
  plan.total_budget = total_budget;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    plan.sources.push_back(
        {specs[i].name, specs[i].weight, quotas[i], specs[i].epochs, specs[i].tokens_sampled / specs[i].epochs});
  }
  return plan;
}

std::string format_plan(const MixturePlan& plan) {
  std::ostringstream out;
  out << "total_budget " << plan.total_budget << '\n';
  out << std::left << std::setw(30) << "source" << std::right << std::setw(10) << "weight" << std::setw(22) << "quota"
      << std::setw(8) << "epochs" << std::setw(24) << "source_size" << '\n';
  for (const auto& s : plan.sources) {
    out << std::left << std::setw(30) << s.name << std::right << std::setw(10) << s.weight << std::setw(22) << s.quota
        << std::setw(8) << s.epochs << std::setw(24) << std::fixed << std::setprecision(2) << s.source_size
        << std::defaultfloat << std::setprecision(6) << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------

MixtureStream::MixtureStream(const MixturePlan& plan, std::vector<MixtureSource> sources, std::uint64_t seed)
    : seed_(seed), step_rng_(derive_seed(seed, "mixture-step")) {
  for (const auto& q : plan.sources) {
    auto it = std::find_if(sources.begin(), sources.end(), [&](const MixtureSource& s) { return s.name == q.name; });
    if (it == sources.end()) throw Error("mixture", "no source provided for '" + q.name + "'");
    const auto total = std::accumulate(it->doc_tokens.begin(), it->doc_tokens.end(), std::uint64_t{0});
    if (q.quota > 0 && total == 0)
      throw Error("mixture", "source '" + q.name + "' is empty but has a quota of " + std::to_string(q.quota));
    names_.push_back(q.name);
    sources_.push_back(std::move(*it));
    remaining_.push_back(q.quota);
  }
  const auto n = sources_.size();
  emitted_.assign(n, 0);
  epochs_.assign(n, 0);
  order_.resize(n);
  cursor_.assign(n, 0);
  closed_.assign(n, false);
  for (std::size_t s = 0; s < n; ++s) {
    if (remaining_[s] == 0) {
      closed_[s] = true;
      continue;
    }
    start_epoch(s);
  }
}

void MixtureStream::start_epoch(std::size_t s) {
  auto& order = order_[s];
  order.resize(sources_[s].doc_tokens.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed_, names_[s], epochs_[s]));
  rng.shuffle(order);
  cursor_[s] = 0;
  ++epochs_[s];
}

bool MixtureStream::next_fits(std::size_t s) const {
  return sources_[s].doc_tokens[order_[s][cursor_[s]]] <= remaining_[s];
}

std::optional<StreamItem> MixtureStream::next() {
  // Close sources whose next document would overrun their quota.
  std::uint64_t total_remaining = 0;
  for (std::size_t s = 0; s < sources_.size(); ++s) {
    if (closed_[s]) continue;
    if (remaining_[s] > 0 && cursor_[s] == order_[s].size()) start_epoch(s);
    if (remaining_[s] == 0 || !next_fits(s)) {
      closed_[s] = true;
      continue;
    }
    total_remaining += remaining_[s];
  }
  if (total_remaining == 0) return std::nullopt;

  std::uint64_t pick = step_rng_.below(total_remaining);
  std::size_t chosen = 0;
  for (std::size_t s = 0; s < sources_.size(); ++s) {
    if (closed_[s]) continue;
    if (pick < remaining_[s]) {
      chosen = s;
      break;
    }
    pick -= remaining_[s];
  }

  StreamItem item;
  item.source = chosen;
  item.doc = order_[chosen][cursor_[chosen]++];
  item.epoch = epochs_[chosen] - 1;
  item.tokens = sources_[chosen].doc_tokens[item.doc];
  remaining_[chosen] -= item.tokens;
  emitted_[chosen] += item.tokens;
  return item;
}

}  // namespace codepipe
