#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "recycle/analysis.hpp"
#include "recycle/heuristic_filter.hpp"
#include "recycle/http.hpp"
#include "recycle/mixer.hpp"
#include "recycle/rewrite.hpp"
#include "recycle/selection.hpp"

namespace recycle {

namespace fs = std::filesystem;

enum class Stage {
  kIngest,
  kDedup,
  kFilter,
  kScoreRaw,
  kSelectRaw,
  kRewrite,
  kScoreRewritten,
  kSelectRewritten,
  kMix,
  kAnalyze,
  kBudget,  // report only; writes nothing
};

std::string_view to_string(Stage s) noexcept;
Stage stage_from_string(std::string_view name);
// Every stage except kBudget, in execution order.
const std::vector<Stage>& pipeline_stages();
std::vector<Stage> upstream_of(Stage s);

struct StreamSelection {
  fs::path model;
  double top_fraction = 0.10;
  SelectionMode mode = SelectionMode::kDocuments;
};

struct MixSettings {
  double raw_weight = 0.5;
  double rewritten_weight = 0.5;
  std::uint64_t token_budget = 0;
  double budget_epochs = 0.0;  // used when token_budget is 0
  std::uint32_t max_repeats = 4;
  WeightMode mode = WeightMode::kTokens;
  bool allow_cap_violation = false;
  // Budget-only runs use these when the selected corpora do not exist yet.
  std::uint64_t raw_unique_tokens = 0;
  std::uint64_t rewritten_unique_tokens = 0;
};

struct AnalysisSettings {
  bool overlap = true;
  bool spearman = true;
  bool bigrams = true;
  bool length_stats = true;
  CurveAxis bigram_axis = CurveAxis::kDocuments;
  std::vector<std::uint64_t> bigram_sizes;  // empty: 5 evenly spaced sizes
  std::string embedding_provider;           // empty: skip cosine analysis
  std::uint32_t kde_points = 256;
};

struct PipelineConfig {
  std::vector<std::string> inputs;  // paths or globs
  std::string tokenizer_id = "ws";
  std::string id_field = "id";
  fs::path output_root = "out";
  std::uint64_t seed = 0;
  ShardOptions shards;
  FilterConfig filter;
  StreamSelection raw;
  StreamSelection rewritten;
  GenerationConfig generation;
  MixSettings mix;
  AnalysisSettings analysis;

  // Canonical JSON form with resolved paths.
  nlohmann::json to_json() const;
  // Hash of the canonical form, excluding output_root.
  std::string hash() const;
};

// Relative paths are resolved against `base_dir`. Throws kConfigInvalid on
// type errors or unknown keys.
PipelineConfig pipeline_config_from_json(const nlohmann::json& j, const fs::path& base_dir = {});
PipelineConfig load_pipeline_config(const fs::path& path);

struct Diagnostic {
  enum class Severity { kError, kWarning };
  Severity severity = Severity::kError;
  std::string path;  // config path, e.g. "raw.top_fraction"
  std::string message;
};

// One diagnostic per violated invariant. Runnable iff no kError entries.
std::vector<Diagnostic> validate(const PipelineConfig& cfg);
bool runnable(const std::vector<Diagnostic>& diagnostics) noexcept;

struct RunOptions {
  bool force = false;
  TransportFactory transport;  // null: HTTP to cfg.generation.endpoint_url
  std::ostream* log = nullptr;
};

struct RunResult {
  std::vector<Stage> executed;
  std::vector<Stage> skipped;
  std::optional<BudgetReport> budget;
};

// Runs the requested stages in dependency order. Stages whose completion
// marker matches the current inputs and config are skipped unless forced.
// Throws kConfigInvalid before any work when validation fails, and
// kStageFailed (wrapping the cause) when a stage fails or an upstream
// artifact is missing.
RunResult run_pipeline(const PipelineConfig& cfg, const std::set<Stage>& stages,
                       const RunOptions& options = {});

// Directory holding a stage's artifacts.
fs::path stage_dir(const PipelineConfig& cfg, Stage s);
inline constexpr const char* kCompletionMarker = ".complete";

}  // namespace recycle
