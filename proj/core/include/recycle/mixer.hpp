#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "recycle/corpus.hpp"
#include "recycle/detail/shuffle.hpp"

namespace recycle {

enum class WeightMode {
  kTokens,     // weights are token shares of the budget
  kDocuments,  // weights are document shares of the output
};

struct MixSource {
  std::string name;
  // Either a corpus, or an explicit unique-token count for budget-only
  // arithmetic (materialize requires a corpus).
  std::optional<CorpusManifest> corpus;
  std::uint64_t unique_tokens = 0;
  std::optional<double> weight;  // equal weights when every weight is omitted

  std::uint64_t tokens() const noexcept {
    return corpus ? corpus->total_tokens : unique_tokens;
  }
};

struct MixPlan {
  std::vector<MixSource> sources;
  std::uint64_t token_budget = 0;
  std::uint32_t max_repeats = 4;
  std::uint64_t seed = 0;
  WeightMode mode = WeightMode::kTokens;
};

// Relative paths in `j` ("corpus": ...) are resolved against `base_dir`.
// Sources may give "corpus", "unique_tokens", or "pool_tokens" with
// "top_fraction". The budget is "token_budget" or "budget_epochs" times the
// summed unique tokens.
MixPlan mix_plan_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});

struct SourceBudget {
  std::string name;
  std::uint64_t unique_tokens = 0;
  double weight = 0.0;
  double target_tokens = 0.0;
  double epochs = 0.0;
};

struct BudgetReport {
  std::vector<SourceBudget> per_source;
  std::uint64_t token_budget = 0;
  std::uint32_t max_repeats = 0;
  double max_epochs = 0.0;
  bool cap_violated = false;
};

// Weights normalized to sum to 1. Throws kZeroWeightAll, kInvalidArgument
// (negative weight) and kEmptySource.
std::vector<double> normalized_weights(const MixPlan& mix);

// Epochs per source E_i = w_i * T / D_i and the repeat-cap check.
BudgetReport plan(const MixPlan& mix);

double round3(double value) noexcept;
nlohmann::json to_json(const BudgetReport& report);
std::string format_budget_table(const BudgetReport& report);

// Unique tokens left after keeping the top fraction of a pool.
std::uint64_t selected_pool_tokens(std::uint64_t pool_tokens, double top_fraction);

struct SourceRealization {
  std::string name;
  std::uint64_t target_tokens = 0;
  std::uint64_t realized_tokens = 0;
  std::uint64_t realized_documents = 0;
  std::uint32_t min_replication = 0;
  std::uint32_t max_replication = 0;
  std::uint64_t max_document_tokens = 0;
};

struct MaterializeResult {
  CorpusManifest manifest;
  BudgetReport budget;
  std::vector<SourceRealization> sources;
};

struct MaterializeOptions {
  std::filesystem::path out_dir;
  std::string corpus_name = "mix";
  bool allow_cap_violation = false;
  ShardOptions shards;
  std::optional<Provenance> provenance;
};

// Replicates each source's documents (counts differ by at most one within
// a source) to hit its token share, then shuffles globally with the plan
// seed. Throws kCapViolated unless allow_cap_violation.
MaterializeResult materialize(const MixPlan& mix, const MaterializeOptions& options);

// Per-document replication counts for one source: every document gets
// floor(target / D) copies and, visiting documents in a seeded order, one
// extra copy is added until the realized total reaches the target.
std::vector<std::uint32_t> replication_schedule(const std::vector<std::uint64_t>& token_counts,
                                                double target_tokens, std::uint64_t seed);

// |a ∩ b| / |a|, or |a ∩ b| / |a ∪ b| when symmetric. Throws kEmptyReference.
double overlap_fraction(const std::set<std::string>& a, const std::set<std::string>& b,
                        bool symmetric = false);

nlohmann::json to_json(const MaterializeResult& result);

}  // namespace recycle
