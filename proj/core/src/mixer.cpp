#include "recycle/mixer.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "recycle/error.hpp"
#include "recycle/hash.hpp"
#include "recycle/selection.hpp"

namespace recycle {

using nlohmann::json;

std::uint64_t selected_pool_tokens(std::uint64_t pool_tokens, double top_fraction) {
  if (!(top_fraction > 0.0 && top_fraction <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "top_fraction must lie in (0, 1]");
  }
  return top_count(top_fraction, pool_tokens);
}

MixPlan mix_plan_from_json(const json& j, const std::filesystem::path& base_dir) {
  MixPlan mix;
  try {
    for (const json& s : j.at("sources")) {
      MixSource src;
      src.name = s.value("name", "source" + std::to_string(mix.sources.size()));
      if (auto w = s.find("weight"); w != s.end() && !w->is_null()) src.weight = w->get<double>();
      if (auto c = s.find("corpus"); c != s.end()) {
        std::filesystem::path p = c->get<std::string>();
        if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
        src.corpus = open_corpus(p);
        src.unique_tokens = src.corpus->total_tokens;
      } else if (auto u = s.find("unique_tokens"); u != s.end()) {
        src.unique_tokens = u->get<std::uint64_t>();
      } else if (auto pool = s.find("pool_tokens"); pool != s.end()) {
        src.unique_tokens = selected_pool_tokens(pool->get<std::uint64_t>(), s.at("top_fraction").get<double>());
      } else {
        throw Error(ErrorCode::kConfigInvalid,
                    "source '" + src.name + "' needs corpus, unique_tokens, or pool_tokens");
      }
      mix.sources.push_back(std::move(src));
    }
    mix.max_repeats = j.value("max_repeats", mix.max_repeats);
    mix.seed = j.value("seed", mix.seed);
    const std::string mode = j.value("weighting", std::string("tokens"));
    if (mode == "tokens") mix.mode = WeightMode::kTokens;
    else if (mode == "documents") mix.mode = WeightMode::kDocuments;
    else throw Error(ErrorCode::kConfigInvalid, "weighting must be 'tokens' or 'documents'");

    if (auto t = j.find("token_budget"); t != j.end()) {
      mix.token_budget = t->get<std::uint64_t>();
    } else if (auto e = j.find("budget_epochs"); e != j.end()) {
      std::uint64_t unique = 0;
      for (const auto& s : mix.sources) unique += s.tokens();
      mix.token_budget = static_cast<std::uint64_t>(std::llround(e->get<double>() * static_cast<double>(unique)));
    } else {
      throw Error(ErrorCode::kConfigInvalid, "plan needs token_budget or budget_epochs");
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfigInvalid, std::string("mix plan: ") + e.what());
  }
  return mix;
}

std::vector<double> normalized_weights(const MixPlan& mix) {
  if (mix.sources.empty()) throw Error(ErrorCode::kEmptySource, "plan has no sources");
  const bool any = std::any_of(mix.sources.begin(), mix.sources.end(), [](const auto& s) { return s.weight.has_value(); });
  const bool all = std::all_of(mix.sources.begin(), mix.sources.end(), [](const auto& s) { return s.weight.has_value(); });
  if (any && !all) throw Error(ErrorCode::kInvalidArgument, "either every source has a weight or none does");
  std::vector<double> w;
  double sum = 0.0;
  for (const auto& s : mix.sources) {
    const double v = s.weight.value_or(1.0);
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw Error(ErrorCode::kInvalidArgument, "weight of '" + s.name + "' must be finite and >= 0");
    }
    w.push_back(v);
    sum += v;
  }
  if (sum <= 0.0) throw Error(ErrorCode::kZeroWeightAll, "all source weights are zero");
  for (double& v : w) v /= sum;
  return w;
}

BudgetReport plan(const MixPlan& mix) {
  const std::vector<double> w = normalized_weights(mix);
  if (mix.token_budget < 1) throw Error(ErrorCode::kInvalidArgument, "token_budget must be >= 1");
  for (const auto& s : mix.sources) {
    if (s.tokens() == 0) throw Error(ErrorCode::kEmptySource, "source '" + s.name + "' has no tokens");
  }

  BudgetReport r;
  r.token_budget = mix.token_budget;
  r.max_repeats = mix.max_repeats;
  const auto budget = static_cast<long double>(mix.token_budget);

  // Token shares per source; in document mode the shares follow from
  // equal per-document weighting of each source's mean length.
  std::vector<long double> targets(w.size());
  if (mix.mode == WeightMode::kTokens) {
    for (std::size_t i = 0; i < w.size(); ++i) targets[i] = static_cast<long double>(w[i]) * budget;
  } else {
    long double denom = 0.0L;
    std::vector<long double> mean_len(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) {
      const auto& s = mix.sources[i];
      if (!s.corpus || s.corpus->document_count == 0) {
        throw Error(ErrorCode::kInvalidArgument, "document weighting needs a corpus for '" + s.name + "'");
      }
      mean_len[i] = static_cast<long double>(s.corpus->total_tokens) / s.corpus->document_count;
      denom += static_cast<long double>(w[i]) * mean_len[i];
    }
    for (std::size_t i = 0; i < w.size(); ++i) {
      targets[i] = static_cast<long double>(w[i]) * mean_len[i] * budget / denom;
    }
  }

  for (std::size_t i = 0; i < w.size(); ++i) {
    const auto& s = mix.sources[i];
    const auto unique = static_cast<long double>(s.tokens());
    SourceBudget b;
    b.name = s.name;
    b.unique_tokens = s.tokens();
    b.weight = w[i];
    b.target_tokens = static_cast<double>(targets[i]);
    b.epochs = static_cast<double>(targets[i] / unique);
    r.max_epochs = std::max(r.max_epochs, b.epochs);
    if (targets[i] > static_cast<long double>(mix.max_repeats) * unique) r.cap_violated = true;
    r.per_source.push_back(std::move(b));
  }
  return r;
}

double round3(double value) noexcept { return std::round(value * 1000.0) / 1000.0; }

json to_json(const BudgetReport& r) {
  json sources = json::array();
  for (const auto& s : r.per_source) {
    sources.push_back(json{{"name", s.name},
                           {"unique_tokens", s.unique_tokens},
                           {"weight", round3(s.weight)},
                           {"target_tokens", std::llround(s.target_tokens)},
                           {"epochs", round3(s.epochs)}});
  }
  return json{{"per_source", sources},
              {"token_budget", r.token_budget},
              {"max_repeats", r.max_repeats},
              {"max_epochs", round3(r.max_epochs)},
              {"cap_violated", r.cap_violated}};
}

std::string format_budget_table(const BudgetReport& r) {
  std::ostringstream out;
  out << std::left << std::setw(20) << "source" << std::right << std::setw(18) << "unique_tokens"
      << std::setw(10) << "weight" << std::setw(20) << "target_tokens" << std::setw(10) << "epochs" << "\n";
  out << std::fixed << std::setprecision(3);
  for (const auto& s : r.per_source) {
    out << std::left << std::setw(20) << s.name << std::right << std::setw(18) << s.unique_tokens
        << std::setw(10) << s.weight << std::setw(20) << std::llround(s.target_tokens)
        << std::setw(10) << round3(s.epochs) << "\n";
  }
  out << "token_budget " << r.token_budget << ", max_epochs " << round3(r.max_epochs)
      << ", max_repeats " << r.max_repeats << (r.cap_violated ? ", CAP VIOLATED" : ", within cap")
      << "\n";
  return out.str();
}

std::vector<std::uint32_t> replication_schedule(const std::vector<std::uint64_t>& token_counts,
                                                double target_tokens, std::uint64_t seed) {
  std::uint64_t unique = 0;
  for (auto c : token_counts) unique += c;
  if (unique == 0) throw Error(ErrorCode::kEmptySource, "source has no tokens");
  if (!(target_tokens >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "negative token target");

  const auto base = static_cast<std::uint32_t>(std::floor(target_tokens / static_cast<double>(unique)));
  std::vector<std::uint32_t> counts(token_counts.size(), base);
  long double realized = static_cast<long double>(base) * unique;
  const auto target = static_cast<long double>(target_tokens);

  std::vector<std::size_t> order(token_counts.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  deterministic_shuffle(order, seed);
  for (std::size_t idx : order) {
    if (realized >= target) break;
    if (token_counts[idx] == 0) continue;
    ++counts[idx];
    realized += token_counts[idx];
  }
  return counts;
}

namespace {

// Document-mode schedule: copies spread so the source contributes
// round(target_docs) documents.
std::vector<std::uint32_t> document_schedule(std::size_t n, double target_docs, std::uint64_t seed) {
  const auto total = static_cast<std::uint64_t>(std::llround(target_docs));
  const auto base = static_cast<std::uint32_t>(total / n);
  std::vector<std::uint32_t> counts(n, base);
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  deterministic_shuffle(order, seed);
  for (std::uint64_t k = 0; k < total - static_cast<std::uint64_t>(base) * n; ++k) ++counts[order[k]];
  return counts;
}

std::uint64_t source_seed(std::uint64_t plan_seed, std::size_t index) {
  return Hasher().add(plan_seed).add(static_cast<std::uint64_t>(index)).value();
}

}  // namespace

MaterializeResult materialize(const MixPlan& mix, const MaterializeOptions& options) {
  MaterializeResult result;
  result.budget = plan(mix);
  if (result.budget.cap_violated && !options.allow_cap_violation) {
    throw Error(ErrorCode::kCapViolated,
                "max epochs " + std::to_string(round3(result.budget.max_epochs)) + " exceeds max_repeats " +
                    std::to_string(mix.max_repeats));
  }

  struct Entry {
    std::uint32_t source;
    std::uint32_t doc;
  };
  std::vector<std::vector<Document>> docs(mix.sources.size());
  std::vector<Entry> entries;
  for (std::size_t i = 0; i < mix.sources.size(); ++i) {
    const MixSource& src = mix.sources[i];
    if (!src.corpus) throw Error(ErrorCode::kInvalidArgument, "source '" + src.name + "' has no corpus to materialize");
    docs[i] = load_documents(*src.corpus);
    if (docs[i].empty()) throw Error(ErrorCode::kEmptySource, "source '" + src.name + "' is empty");

    std::vector<std::uint64_t> lengths;
    lengths.reserve(docs[i].size());
    for (const auto& d : docs[i]) lengths.push_back(d.token_count);
    const SourceBudget& b = result.budget.per_source[i];
    std::vector<std::uint32_t> counts;
    if (mix.mode == WeightMode::kTokens) {
      counts = replication_schedule(lengths, b.target_tokens, source_seed(mix.seed, i));
    } else {
      const double mean = static_cast<double>(src.corpus->total_tokens) / static_cast<double>(docs[i].size());
      counts = document_schedule(docs[i].size(), b.target_tokens / mean, source_seed(mix.seed, i));
    }

    SourceRealization real;
    real.name = src.name;
    real.target_tokens = static_cast<std::uint64_t>(std::llround(b.target_tokens));
    real.min_replication = *std::min_element(counts.begin(), counts.end());
    real.max_replication = *std::max_element(counts.begin(), counts.end());
    for (std::size_t d = 0; d < counts.size(); ++d) {
      real.realized_tokens += static_cast<std::uint64_t>(counts[d]) * lengths[d];
      real.realized_documents += counts[d];
      real.max_document_tokens = std::max(real.max_document_tokens, lengths[d]);
      for (std::uint32_t c = 0; c < counts[d]; ++c) {
        entries.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(d)});
      }
    }
    result.sources.push_back(std::move(real));
  }

  deterministic_shuffle(entries, mix.seed);

  const std::string tokenizer = mix.sources.front().corpus->tokenizer_id;
  CorpusWriter writer(options.out_dir, options.corpus_name, tokenizer, options.shards);
  std::vector<std::vector<std::uint32_t>> replica(docs.size());
  for (std::size_t i = 0; i < docs.size(); ++i) replica[i].assign(docs[i].size(), 0);
  for (const Entry& e : entries) {
    Document doc = docs[e.source][e.doc];
    doc.metadata["mix_source"] = mix.sources[e.source].name;
    doc.metadata["replica"] = std::to_string(replica[e.source][e.doc]++);
    writer.add(doc);
  }
  result.manifest = writer.finish(options.provenance);
  return result;
}

double overlap_fraction(const std::set<std::string>& a, const std::set<std::string>& b, bool symmetric) {
  if (a.empty()) throw Error(ErrorCode::kEmptyReference, "reference id set is empty");
  std::size_t common = 0;
  for (const auto& id : a) common += b.contains(id) ? 1 : 0;
  if (!symmetric) return static_cast<double>(common) / static_cast<double>(a.size());
  const std::size_t uni = a.size() + b.size() - common;
  return static_cast<double>(common) / static_cast<double>(uni);
}

json to_json(const MaterializeResult& r) {
  json sources = json::array();
  const double total = static_cast<double>(r.manifest.total_tokens);
  for (const auto& s : r.sources) {
    sources.push_back(json{{"name", s.name},
                           {"target_tokens", s.target_tokens},
                           {"realized_tokens", s.realized_tokens},
                           {"realized_share", total > 0 ? static_cast<double>(s.realized_tokens) / total : 0.0},
                           {"realized_documents", s.realized_documents},
                           {"min_replication", s.min_replication},
                           {"max_replication", s.max_replication},
                           {"max_document_tokens", s.max_document_tokens}});
  }
  return json{{"budget", to_json(r.budget)},
              {"sources", sources},
              {"document_count", r.manifest.document_count},
              {"total_tokens", r.manifest.total_tokens}};
}

}  // namespace recycle
