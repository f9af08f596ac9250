#include "recycle/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <ostream>

#include "recycle/analysis.hpp"
#include "recycle/classifier.hpp"
#include "recycle/error.hpp"
#include "recycle/hash.hpp"
#include "recycle/text.hpp"
#include "recycle/tokenizer.hpp"

namespace recycle {

using nlohmann::json;

namespace {

struct StageInfo {
  Stage stage;
  std::string_view name;
  std::vector<Stage> upstream;
};

const std::vector<StageInfo>& stage_table() {
  static const std::vector<StageInfo> table = {
      {Stage::kIngest, "ingest", {}},
      {Stage::kDedup, "dedup", {Stage::kIngest}},
      {Stage::kFilter, "filter", {Stage::kDedup}},
      {Stage::kScoreRaw, "score-raw", {Stage::kFilter}},
      {Stage::kSelectRaw, "select-raw", {Stage::kFilter, Stage::kScoreRaw}},
      {Stage::kRewrite, "rewrite", {Stage::kFilter}},
      {Stage::kScoreRewritten, "score-rewritten", {Stage::kRewrite}},
      {Stage::kSelectRewritten, "select-rewritten", {Stage::kRewrite, Stage::kScoreRewritten}},
      {Stage::kMix, "mix", {Stage::kSelectRaw, Stage::kSelectRewritten}},
      {Stage::kAnalyze,
       "analyze",
       {Stage::kFilter, Stage::kScoreRaw, Stage::kSelectRaw, Stage::kRewrite, Stage::kScoreRewritten,
        Stage::kSelectRewritten, Stage::kMix}},
      {Stage::kBudget, "budget", {}},
  };
  return table;
}

const StageInfo& info(Stage s) { return stage_table().at(static_cast<std::size_t>(s)); }

bool has_glob_chars(const std::string& s) { return s.find_first_of("*?[") != std::string::npos; }

fs::path resolve(const fs::path& p, const fs::path& base) {
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return (base / p).lexically_normal();
}

std::string selection_mode_name(SelectionMode m) {
  return m == SelectionMode::kDocuments ? "documents" : "tokens";
}

json settings_json(const StreamSelection& s) {
  return json{{"model", s.model.string()}, {"top_fraction", s.top_fraction}, {"mode", selection_mode_name(s.mode)}};
}

json settings_json(const MixSettings& m) {
  return json{{"raw_weight", m.raw_weight},
              {"rewritten_weight", m.rewritten_weight},
              {"token_budget", m.token_budget},
              {"budget_epochs", m.budget_epochs},
              {"max_repeats", m.max_repeats},
              {"weighting", m.mode == WeightMode::kTokens ? "tokens" : "documents"},
              {"allow_cap_violation", m.allow_cap_violation},
              {"raw_unique_tokens", m.raw_unique_tokens},
              {"rewritten_unique_tokens", m.rewritten_unique_tokens}};
}

json settings_json(const AnalysisSettings& a) {
  return json{{"overlap", a.overlap},
              {"spearman", a.spearman},
              {"bigrams", a.bigrams},
              {"length_stats", a.length_stats},
              {"bigram_axis", to_string(a.bigram_axis)},
              {"bigram_sizes", a.bigram_sizes},
              {"embedding_provider", a.embedding_provider},
              {"kde_points", a.kde_points}};
}

json settings_json(const ShardOptions& s) {
  return json{{"docs_per_shard", s.docs_per_shard}, {"compress", s.compress}};
}

// Walks an object, dispatching each key; anything unhandled is an error.
template <typename Fn>
void each_key(const json& j, const std::string& where, Fn&& fn) {
  if (!j.is_object()) throw Error(ErrorCode::kConfigInvalid, where + " must be an object");
  for (const auto& [key, v] : j.items()) {
    if (!fn(key, v)) throw Error(ErrorCode::kConfigInvalid, "unknown key '" + where + "." + key + "'");
  }
}

StreamSelection stream_from_json(const json& j, const std::string& where, const fs::path& base) {
  StreamSelection s;
  each_key(j, where, [&](const std::string& key, const json& v) {
    if (key == "model") s.model = resolve(v.get<std::string>(), base);
    else if (key == "top_fraction") s.top_fraction = v.get<double>();
    else if (key == "mode") {
      const auto m = v.get<std::string>();
      if (m == "documents") s.mode = SelectionMode::kDocuments;
      else if (m == "tokens") s.mode = SelectionMode::kTokenMass;
      else throw Error(ErrorCode::kConfigInvalid, where + ".mode must be 'documents' or 'tokens'");
    } else return false;
    return true;
  });
  return s;
}

}  // namespace

std::string_view to_string(Stage s) noexcept { return info(s).name; }

Stage stage_from_string(std::string_view name) {
  for (const auto& i : stage_table()) {
    if (i.name == name) return i.stage;
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown stage '" + std::string(name) + "'");
}

const std::vector<Stage>& pipeline_stages() {
  static const std::vector<Stage> stages = {Stage::kIngest,         Stage::kDedup,         Stage::kFilter,
                                            Stage::kScoreRaw,       Stage::kSelectRaw,     Stage::kRewrite,
                                            Stage::kScoreRewritten, Stage::kSelectRewritten, Stage::kMix,
                                            Stage::kAnalyze};
  return stages;
}

std::vector<Stage> upstream_of(Stage s) { return info(s).upstream; }

json PipelineConfig::to_json() const {
  return json{{"inputs", inputs},
              {"tokenizer", tokenizer_id},
              {"id_field", id_field},
              {"output_root", output_root.string()},
              {"seed", seed},
              {"shards", settings_json(shards)},
              {"filter", recycle::to_json(filter)},
              {"raw", settings_json(raw)},
              {"rewritten", settings_json(rewritten)},
              {"generation", recycle::to_json(generation)},
              {"mix", settings_json(mix)},
              {"analysis", settings_json(analysis)}};
}

std::string PipelineConfig::hash() const {
  json j = to_json();
  j.erase("output_root");
  return to_hex64(fnv1a64(j.dump()));
}

PipelineConfig pipeline_config_from_json(const json& j, const fs::path& base_dir) {
  PipelineConfig c;
  try {
    each_key(j, "config", [&](const std::string& key, const json& v) {
      if (key == "inputs") {
        for (const auto& in : v) c.inputs.push_back(resolve(in.get<std::string>(), base_dir).string());
      } else if (key == "tokenizer") {
        c.tokenizer_id = v.get<std::string>();
        if (c.tokenizer_id.starts_with("subword:")) {
          c.tokenizer_id = "subword:" + resolve(c.tokenizer_id.substr(8), base_dir).string();
        }
      } else if (key == "id_field") {
        c.id_field = v.get<std::string>();
      } else if (key == "output_root") {
        c.output_root = resolve(v.get<std::string>(), base_dir);
      } else if (key == "seed") {
        c.seed = v.get<std::uint64_t>();
      } else if (key == "shards") {
        each_key(v, "shards", [&](const std::string& k, const json& x) {
          if (k == "docs_per_shard") c.shards.docs_per_shard = x.get<std::uint64_t>();
          else if (k == "compress") c.shards.compress = x.get<bool>();
          else return false;
          return true;
        });
      } else if (key == "filter") {
        c.filter = filter_config_from_json(v);
      } else if (key == "raw") {
        c.raw = stream_from_json(v, "raw", base_dir);
      } else if (key == "rewritten") {
        c.rewritten = stream_from_json(v, "rewritten", base_dir);
      } else if (key == "generation") {
        c.generation = generation_config_from_json(v);
      } else if (key == "mix") {
        each_key(v, "mix", [&](const std::string& k, const json& x) {
          auto& m = c.mix;
          if (k == "raw_weight") m.raw_weight = x.get<double>();
          else if (k == "rewritten_weight") m.rewritten_weight = x.get<double>();
          else if (k == "token_budget") m.token_budget = x.get<std::uint64_t>();
          else if (k == "budget_epochs") m.budget_epochs = x.get<double>();
          else if (k == "max_repeats") m.max_repeats = x.get<std::uint32_t>();
          else if (k == "allow_cap_violation") m.allow_cap_violation = x.get<bool>();
          else if (k == "raw_unique_tokens") m.raw_unique_tokens = x.get<std::uint64_t>();
          else if (k == "rewritten_unique_tokens") m.rewritten_unique_tokens = x.get<std::uint64_t>();
          else if (k == "weighting") {
            const auto w = x.get<std::string>();
            if (w == "tokens") m.mode = WeightMode::kTokens;
            else if (w == "documents") m.mode = WeightMode::kDocuments;
            else throw Error(ErrorCode::kConfigInvalid, "mix.weighting must be 'tokens' or 'documents'");
          } else return false;
          return true;
        });
      } else if (key == "analysis") {
        each_key(v, "analysis", [&](const std::string& k, const json& x) {
          auto& a = c.analysis;
          if (k == "overlap") a.overlap = x.get<bool>();
          else if (k == "spearman") a.spearman = x.get<bool>();
          else if (k == "bigrams") a.bigrams = x.get<bool>();
          else if (k == "length_stats") a.length_stats = x.get<bool>();
          else if (k == "bigram_sizes") a.bigram_sizes = x.get<std::vector<std::uint64_t>>();
          else if (k == "kde_points") a.kde_points = x.get<std::uint32_t>();
          else if (k == "bigram_axis") {
            const auto ax = x.get<std::string>();
            if (ax == "documents") a.bigram_axis = CurveAxis::kDocuments;
            else if (ax == "tokens") a.bigram_axis = CurveAxis::kTokens;
            else throw Error(ErrorCode::kConfigInvalid, "analysis.bigram_axis must be 'documents' or 'tokens'");
          } else if (k == "embedding_provider") {
            a.embedding_provider = x.get<std::string>();
            if (a.embedding_provider.starts_with("file:")) {
              a.embedding_provider = "file:" + resolve(a.embedding_provider.substr(5), base_dir).string();
            }
          } else return false;
          return true;
        });
      } else {
        return false;
      }
      return true;
    });
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfigInvalid, std::string("config: ") + e.what());
  }
  return c;
}

PipelineConfig load_pipeline_config(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfigInvalid, path.string() + ": " + e.what());
  }
  return pipeline_config_from_json(j, fs::absolute(path).parent_path());
}

std::vector<Diagnostic> validate(const PipelineConfig& cfg) {
  std::vector<Diagnostic> out;
  auto error = [&](std::string path, std::string msg) {
    out.push_back({Diagnostic::Severity::kError, std::move(path), std::move(msg)});
  };
  auto check = [&](const std::string& path, auto&& fn) {
    try {
      fn();
    } catch (const std::exception& e) {
      error(path, e.what());
    }
  };

  if (cfg.inputs.empty()) error("inputs", "no input corpora");
  for (std::size_t i = 0; i < cfg.inputs.size(); ++i) {
    const std::string& in = cfg.inputs[i];
    const std::string path = "inputs[" + std::to_string(i) + "]";
    if (has_glob_chars(in)) {
      if (expand_glob(in).empty()) error(path, "pattern '" + in + "' matches no files");
    } else if (!fs::is_regular_file(in)) {
      error(path, "file '" + in + "' does not exist");
    }
  }
  check("tokenizer", [&] { get_tokenizer(cfg.tokenizer_id); });
  if (cfg.id_field.empty()) error("id_field", "must not be empty");
  if (cfg.shards.docs_per_shard == 0) error("shards.docs_per_shard", "must be >= 1");
  check("filter", [&] { cfg.filter.validate(); });
  for (const auto& [name, s] : {std::pair{"raw", &cfg.raw}, std::pair{"rewritten", &cfg.rewritten}}) {
    const std::string base = name;
    if (s->model.empty()) error(base + ".model", "no classifier model given");
    else if (!fs::is_regular_file(s->model)) error(base + ".model", "model file '" + s->model.string() + "' does not exist");
    if (!(s->top_fraction > 0.0 && s->top_fraction <= 1.0)) {
      error(base + ".top_fraction", "must lie in (0, 1], got " + std::to_string(s->top_fraction));
    }
  }
  check("generation", [&] {
    cfg.generation.validate();
    HttpEndpoint::parse(cfg.generation.endpoint_url);
  });

  const auto& m = cfg.mix;
  const bool finite = std::isfinite(m.raw_weight) && std::isfinite(m.rewritten_weight);
  if (!finite || m.raw_weight < 0.0 || m.rewritten_weight < 0.0) {
    error("mix", "weights must be finite and >= 0");
  } else if (m.raw_weight + m.rewritten_weight <= 0.0) {
    error("mix", "all weights are zero");
  } else if (std::fabs(m.raw_weight + m.rewritten_weight - 1.0) > 1e-9) {
    out.push_back({Diagnostic::Severity::kWarning, "mix",
                   "weights sum to " + std::to_string(m.raw_weight + m.rewritten_weight) +
                       "; they will be normalized"});
  }
  if (m.token_budget == 0 && !(m.budget_epochs > 0.0)) {
    error("mix.token_budget", "set token_budget or a positive budget_epochs");
  }
  if (m.max_repeats == 0) error("mix.max_repeats", "must be >= 1");

  const auto& a = cfg.analysis;
  if (a.kde_points < 2) error("analysis.kde_points", "must be >= 2");
  for (std::size_t i = 1; i < a.bigram_sizes.size(); ++i) {
    if (a.bigram_sizes[i] <= a.bigram_sizes[i - 1]) {
      error("analysis.bigram_sizes", "must be strictly increasing");
      break;
    }
  }
  if (a.embedding_provider.starts_with("file:") && !fs::is_regular_file(a.embedding_provider.substr(5))) {
    error("analysis.embedding_provider", "file '" + a.embedding_provider.substr(5) + "' does not exist");
  } else if (!a.embedding_provider.empty() && !a.embedding_provider.starts_with("file:") &&
             !a.embedding_provider.starts_with("http")) {
    error("analysis.embedding_provider", "expected file:<path> or http:<url>#<model>");
  }
  return out;
}

bool runnable(const std::vector<Diagnostic>& diagnostics) noexcept {
  return std::none_of(diagnostics.begin(), diagnostics.end(),
                      [](const Diagnostic& d) { return d.severity == Diagnostic::Severity::kError; });
}

fs::path stage_dir(const PipelineConfig& cfg, Stage s) { return cfg.output_root / std::string(to_string(s)); }

namespace {

inline constexpr const char* kStageReport = "stage.json";
inline constexpr const char* kRewriteKeyFile = ".stage_key";
inline constexpr const char* kScoresFile = "scores.jsonl";

std::vector<fs::path> input_files(const PipelineConfig& cfg) {
  std::vector<fs::path> files;
  for (const auto& in : cfg.inputs) {
    if (has_glob_chars(in)) {
      for (auto& p : expand_glob(in)) files.push_back(std::move(p));
    } else {
      files.emplace_back(in);
    }
  }
  std::sort(files.begin(), files.end());
  files.erase(std::unique(files.begin(), files.end()), files.end());
  return files;
}

// The part of the config a stage's output depends on. Execution knobs that
// cannot change the bytes written (concurrency, retry timing) stay out.
json stage_settings(const PipelineConfig& cfg, Stage s) {
  switch (s) {
    case Stage::kIngest: {
      json files = json::array();
      for (const auto& f : input_files(cfg)) {
        files.push_back(json{{"path", f.string()}, {"content", to_hex64(hash_file(f.string()))}});
      }
      return json{{"files", files},
                  {"tokenizer", cfg.tokenizer_id},
                  {"id_field", cfg.id_field},
                  {"shards", settings_json(cfg.shards)}};
    }
    case Stage::kDedup:
      return json{{"shards", settings_json(cfg.shards)}};
    case Stage::kFilter:
      return json{{"filter", to_json(cfg.filter)}, {"shards", settings_json(cfg.shards)}};
    case Stage::kScoreRaw:
    case Stage::kScoreRewritten: {
      const auto& model = s == Stage::kScoreRaw ? cfg.raw.model : cfg.rewritten.model;
      return json{{"model", to_hex64(hash_file(model.string()))}};
    }
    case Stage::kSelectRaw:
    case Stage::kSelectRewritten: {
      const auto& sel = s == Stage::kSelectRaw ? cfg.raw : cfg.rewritten;
      return json{{"top_fraction", sel.top_fraction},
                  {"mode", selection_mode_name(sel.mode)},
                  {"shards", settings_json(cfg.shards)}};
    }
    case Stage::kRewrite: {
      const auto& g = cfg.generation;
      return json{{"endpoint_url", g.endpoint_url},
                  {"model_name", g.model_name},
                  {"temperature", g.temperature},
                  {"top_p", g.top_p},
                  {"max_tokens", g.max_tokens},
                  {"max_input_tokens", g.max_input_tokens},
                  {"retry_limit", g.retry_limit},
                  {"seed", g.seed ? json(*g.seed) : json()},
                  {"template", kPromptTemplateVersion},
                  {"shards", settings_json(cfg.shards)}};
    }
    case Stage::kMix:
      return json{{"mix", settings_json(cfg.mix)}, {"seed", cfg.seed}, {"shards", settings_json(cfg.shards)}};
    case Stage::kAnalyze:
      return json{{"analysis", settings_json(cfg.analysis)}, {"seed", cfg.seed}};
    case Stage::kBudget:
      return json{{"mix", settings_json(cfg.mix)}};
  }
  return {};
}

std::string read_marker(const fs::path& dir) {
  std::ifstream in(dir / kCompletionMarker);
  std::string key;
  if (in) std::getline(in, key);
  return key;
}

class Runner {
 public:
  Runner(const PipelineConfig& cfg, const RunOptions& options) : cfg_(cfg), opts_(options) {
    prov_.config_hash = cfg.hash();
    prov_.tool_version = std::string(tool_version());
  }

  RunResult run(const std::set<Stage>& requested) {
    RunResult result;
    for (Stage s : pipeline_stages()) {
      if (!requested.contains(s)) continue;
      for (Stage up : upstream_of(s)) {
        if (requested.contains(up)) continue;
        if (read_marker(stage_dir(cfg_, up)) != key(up)) {
          throw Error(ErrorCode::kStageFailed, "stage '" + std::string(to_string(s)) + "' needs '" +
                                                   std::string(to_string(up)) +
                                                   "', which is missing or out of date; run it first");
        }
      }
      const fs::path dir = stage_dir(cfg_, s);
      const std::string k = key(s);
      if (!opts_.force && read_marker(dir) == k) {
        log() << "stage " << to_string(s) << ": up to date\n";
        result.skipped.push_back(s);
        continue;
      }
      try {
        execute(s, dir, k);
      } catch (const Error& e) {
        throw Error(ErrorCode::kStageFailed, "stage '" + std::string(to_string(s)) + "' failed: " + e.what());
      } catch (const std::exception& e) {
        throw Error(ErrorCode::kStageFailed, "stage '" + std::string(to_string(s)) + "' failed: " + e.what());
      }
      result.executed.push_back(s);
    }
    if (requested.contains(Stage::kBudget)) {
      try {
        result.budget = plan(budget_plan());
      } catch (const Error& e) {
        throw Error(ErrorCode::kStageFailed, std::string("stage 'budget' failed: ") + e.what());
      }
      result.executed.push_back(Stage::kBudget);
    }
    return result;
  }

 private:
  std::ostream& log() {
    static std::ofstream null;
    return opts_.log != nullptr ? *opts_.log : null;
  }

  // Content address of a stage: its settings, the tool version, and the
  // addresses of everything upstream.
  const std::string& key(Stage s) {
    if (auto it = keys_.find(s); it != keys_.end()) return it->second;
    Hasher h;
    h.add(to_string(s)).add(tool_version()).add(stage_settings(cfg_, s).dump());
    for (Stage up : upstream_of(s)) h.add(key(up));
    return keys_[s] = h.hex();
  }

  Provenance provenance(Stage s) const {
    Provenance p = prov_;
    p.stage = std::string(to_string(s));
    return p;
  }

  CorpusManifest corpus(Stage s) const { return open_corpus(stage_dir(cfg_, s)); }

  void stamp(const CorpusManifest& m, Stage s) {
    CorpusManifest copy = m;
    copy.provenance = provenance(s);
    write_manifest(copy, m.root / kManifestFile);
  }

  void finish(Stage s, const fs::path& dir, const std::string& k, json summary) {
    json report{{"stage", to_string(s)},
                {"key", k},
                {"provenance", to_json(provenance(s))},
                {"summary", std::move(summary)}};
    atomic_write_file(dir / kStageReport, report.dump(2) + "\n");
    atomic_write_file(dir / kCompletionMarker, k + "\n");
    log() << "stage " << to_string(s) << ": done\n";
  }

  void execute(Stage s, const fs::path& dir, const std::string& k) {
    log() << "stage " << to_string(s) << ": running\n";
    if (s == Stage::kRewrite) {
      run_rewrite(dir, k);
      return;
    }
    fs::remove_all(dir);
    fs::create_directories(dir);
    switch (s) {
      case Stage::kIngest: {
        IngestOptions io;
        io.tokenizer_id = cfg_.tokenizer_id;
        io.id_field = cfg_.id_field;
        io.corpus_name = "raw";
        io.shards = cfg_.shards;
        IngestResult r = ingest(input_files(cfg_), dir, io);
        stamp(r.manifest, s);
        finish(s, dir, k,
               json{{"documents", r.manifest.document_count},
                    {"tokens", r.manifest.total_tokens},
                    {"skipped_records", r.skipped_records}});
        break;
      }
      case Stage::kDedup: {
        DedupResult r = deduplicate(corpus(Stage::kIngest), dir, cfg_.shards);
        stamp(r.manifest, s);
        finish(s, dir, k, json{{"documents", r.manifest.document_count}, {"removed", r.removed}});
        break;
      }
      case Stage::kFilter: {
        FilterRunResult r = filter_corpus(corpus(Stage::kDedup), cfg_.filter, dir, dir / "audit.jsonl", cfg_.shards);
        stamp(r.passed, s);
        json by_rule = json::object();
        for (std::size_t i = 0; i < r.rejected_by_rule.size(); ++i) {
          by_rule[std::string(to_string(static_cast<FilterRule>(i)))] = r.rejected_by_rule[i];
        }
        finish(s, dir, k,
               json{{"passed", r.passed.document_count}, {"rejected", r.rejected}, {"rejected_by_rule", by_rule}});
        break;
      }
      case Stage::kScoreRaw:
      case Stage::kScoreRewritten: {
        const bool raw = s == Stage::kScoreRaw;
        const ClassifierModel model = ClassifierModel::load(raw ? cfg_.raw.model : cfg_.rewritten.model);
        const auto scores = score_corpus(model, corpus(raw ? Stage::kFilter : Stage::kRewrite), dir / kScoresFile);
        finish(s, dir, k, json{{"scored", scores.size()}, {"classifier", model.train_config_hash()}});
        break;
      }
      case Stage::kSelectRaw:
      case Stage::kSelectRewritten: {
        const bool raw = s == Stage::kSelectRaw;
        const StreamSelection& sel_cfg = raw ? cfg_.raw : cfg_.rewritten;
        const auto scores = read_scores(stage_dir(cfg_, raw ? Stage::kScoreRaw : Stage::kScoreRewritten) / kScoresFile);
        const Selection sel = select_top_fraction(scores, sel_cfg.top_fraction, sel_cfg.mode);
        const std::set<std::string> keep(sel.ids.begin(), sel.ids.end());
        CorpusManifest m = write_subset(
            corpus(raw ? Stage::kFilter : Stage::kRewrite), [&](const Document& d) { return keep.contains(d.id); },
            dir, raw ? "raw-selected" : "rewritten-selected", cfg_.shards);
        stamp(m, s);
        finish(s, dir, k,
               json{{"pool", scores.size()},
                    {"selected", sel.ids.size()},
                    {"selected_tokens", sel.selected_tokens},
                    {"pool_tokens", sel.total_tokens},
                    {"threshold", sel.threshold},
                    {"top_fraction", sel_cfg.top_fraction},
                    {"mode", selection_mode_name(sel_cfg.mode)}});
        break;
      }
      case Stage::kMix: {
        MaterializeOptions mo;
        mo.out_dir = dir;
        mo.allow_cap_violation = cfg_.mix.allow_cap_violation;
        mo.shards = cfg_.shards;
        mo.provenance = provenance(s);
        MaterializeResult r = materialize(mix_plan(true), mo);
        json report = to_json(r);
        report["provenance"] = to_json(provenance(s));
        atomic_write_file(dir / "mix_report.json", report.dump(2) + "\n");
        finish(s, dir, k, to_json(r));
        break;
      }
      case Stage::kAnalyze:
        finish(s, dir, k, run_analysis(dir));
        break;
      case Stage::kRewrite:
      case Stage::kBudget:
        break;
    }
  }

  void run_rewrite(const fs::path& dir, const std::string& k) {
    // An interrupted rewrite with the same address resumes from its ledger;
    // anything else starts over.
    bool resume = false;
    std::error_code ec;
    if (fs::exists(dir / kRewriteKeyFile, ec)) resume = trim(read_file(dir / kRewriteKeyFile)) == k;
    if (!resume || opts_.force) {
      resume = false;
      fs::remove_all(dir);
    }
    fs::create_directories(dir);
    atomic_write_file(dir / kRewriteKeyFile, k + "\n");
    RewriteOptions ro;
    ro.out_dir = dir;
    ro.resume = resume;
    ro.shards = cfg_.shards;
    ro.provenance = provenance(Stage::kRewrite);
    ro.jitter_seed = cfg_.seed;
    RewriteSummary r = rewrite_corpus(corpus(Stage::kFilter), cfg_.generation, ro, opts_.transport);
    finish(Stage::kRewrite, dir, k,
           json{{"rewritten", r.manifest.document_count}, {"failed", r.failed}, {"tokens", r.manifest.total_tokens}});
  }

  MixPlan mix_plan(bool need_corpora) {
    MixPlan mix;
    mix.max_repeats = cfg_.mix.max_repeats;
    mix.seed = cfg_.seed;
    mix.mode = cfg_.mix.mode;
    const std::pair<Stage, std::uint64_t> streams[] = {{Stage::kSelectRaw, cfg_.mix.raw_unique_tokens},
                                                       {Stage::kSelectRewritten, cfg_.mix.rewritten_unique_tokens}};
    const double weights[] = {cfg_.mix.raw_weight, cfg_.mix.rewritten_weight};
    const char* names[] = {"raw", "rewritten"};
    for (std::size_t i = 0; i < 2; ++i) {
      MixSource src;
      src.name = names[i];
      src.weight = weights[i];
      const fs::path dir = stage_dir(cfg_, streams[i].first);
      if (need_corpora || (streams[i].second == 0 && fs::exists(dir / kManifestFile))) {
        src.corpus = corpus(streams[i].first);
      } else if (streams[i].second > 0) {
        src.unique_tokens = streams[i].second;
      } else {
        throw Error(ErrorCode::kInvalidArgument, std::string("no token count for the ") + names[i] +
                                                     " stream: run its selection or set mix." + names[i] +
                                                     "_unique_tokens");
      }
      mix.sources.push_back(std::move(src));
    }
    if (cfg_.mix.token_budget > 0) {
      mix.token_budget = cfg_.mix.token_budget;
    } else {
      const auto unique = static_cast<double>(mix.sources[0].tokens() + mix.sources[1].tokens());
      mix.token_budget = static_cast<std::uint64_t>(std::llround(cfg_.mix.budget_epochs * unique));
    }
    return mix;
  }

  MixPlan budget_plan() { return mix_plan(false); }

  json run_analysis(const fs::path& dir) {
    const auto& a = cfg_.analysis;
    json report = json::object();
    report["provenance"] = to_json(provenance(Stage::kAnalyze));
    const std::vector<Document> raw_sel = load_documents(corpus(Stage::kSelectRaw));
    const std::vector<Document> rw_sel = load_documents(corpus(Stage::kSelectRewritten));

    if (a.overlap) {
      std::set<std::string> raw_ids;
      std::set<std::string> rw_ids;
      for (const auto& d : raw_sel) raw_ids.insert(d.id);
      for (const auto& d : rw_sel) rw_ids.insert(d.id);
      std::size_t common = 0;
      for (const auto& id : rw_ids) common += raw_ids.contains(id) ? 1 : 0;
      report["overlap"] = json{{"rewritten_selected", rw_ids.size()},
                               {"raw_selected", raw_ids.size()},
                               {"shared", common},
                               {"fraction_of_rewritten", overlap_fraction(rw_ids, raw_ids)},
                               {"jaccard", overlap_fraction(rw_ids, raw_ids, true)}};
    }
    if (a.spearman) {
      const auto raw_scores = read_scores(stage_dir(cfg_, Stage::kScoreRaw) / kScoresFile);
      const auto rw_scores = read_scores(stage_dir(cfg_, Stage::kScoreRewritten) / kScoresFile);
      const auto pairs = pair_scores(raw_scores, rw_scores);
      try {
        report["spearman"] = to_json(spearman(pairs));
      } catch (const Error& e) {
        report["spearman"] = json{{"n", pairs.size()}, {"error", e.what()}};
      }
    }
    if (a.bigrams) {
      json curves = json::object();
      std::vector<std::uint64_t> sizes = a.bigram_sizes;
      if (sizes.empty()) {
        std::uint64_t limit = 0;
        if (a.bigram_axis == CurveAxis::kDocuments) {
          limit = std::min(raw_sel.size(), rw_sel.size());
        } else {
          std::uint64_t rt = 0;
          std::uint64_t wt = 0;
          for (const auto& d : raw_sel) rt += d.token_count;
          for (const auto& d : rw_sel) wt += d.token_count;
          limit = std::min(rt, wt);
        }
        for (std::uint64_t i = 1; i <= 5; ++i) {
          const std::uint64_t v = (limit * i + 4) / 5;
          if (v > 0 && (sizes.empty() || v > sizes.back())) sizes.push_back(v);
        }
      }
      for (const auto& [name, docs] : {std::pair{"raw_selected", &raw_sel}, std::pair{"rewritten_selected", &rw_sel}}) {
        try {
          const DiversityCurve c = diversity_curve(*docs, a.bigram_axis, sizes, cfg_.seed);
          curves[name] = to_json(c);
          atomic_write_file(dir / (std::string("bigrams_") + name + ".csv"), to_csv(c));
        } catch (const Error& e) {
          curves[name] = json{{"error", e.what()}};
        }
      }
      report["bigrams"] = curves;
    }
    if (a.length_stats) {
      json lengths = json::object();
      lengths["raw_pool"] = to_json(length_stats(load_documents(corpus(Stage::kFilter))));
      lengths["rewritten_pool"] = to_json(length_stats(load_documents(corpus(Stage::kRewrite))));
      lengths["raw_selected"] = to_json(length_stats(raw_sel));
      lengths["rewritten_selected"] = to_json(length_stats(rw_sel));
      lengths["mix"] = to_json(length_stats(load_documents(corpus(Stage::kMix))));
      report["lengths"] = lengths;
    }
    if (!a.embedding_provider.empty()) {
      const std::vector<Document> pool = load_documents(corpus(Stage::kFilter));
      const std::vector<Document> rewritten = load_documents(corpus(Stage::kRewrite));
      auto provider = make_embedding_provider(a.embedding_provider);
      const CosineDistribution dist = cosine_similarity_distribution(pool, rewritten, *provider, *provider);
      atomic_write_file(dir / "cosine.csv", to_csv(dist));
      json cos{{"provider", provider->id()},
               {"pairs", dist.values.size()},
               {"skipped_zero_norm", dist.skipped_zero_norm.size()},
               {"provider_failures", dist.provider_failures.size()},
               {"unpaired", dist.unpaired.size()}};
      std::vector<double> values;
      for (const auto& r : dist.values) values.push_back(r.cosine);
      if (!values.empty()) {
        double sum = 0.0;
        for (double v : values) sum += v;
        cos["mean"] = sum / static_cast<double>(values.size());
      }
      try {
        const double h = silverman_bandwidth(values);
        const auto grid = kde_grid(values, h, a.kde_points);
        const auto curve = kde(values, h, grid);
        atomic_write_file(dir / "cosine_kde.csv", to_csv(curve));
        cos["bandwidth"] = h;
      } catch (const Error& e) {
        cos["kde_error"] = e.what();
      }
      report["cosine"] = cos;
    }
    atomic_write_file(dir / "report.json", report.dump(2) + "\n");
    return report;
  }

  const PipelineConfig& cfg_;
  const RunOptions& opts_;
  Provenance prov_;
  std::map<Stage, std::string> keys_;
};

}  // namespace

RunResult run_pipeline(const PipelineConfig& cfg, const std::set<Stage>& stages, const RunOptions& options) {
  const auto diagnostics = validate(cfg);
  if (!runnable(diagnostics)) {
    std::string msg = "config does not validate:";
    for (const auto& d : diagnostics) {
      if (d.severity == Diagnostic::Severity::kError) msg += "\n  " + d.path + ": " + d.message;
    }
    throw Error(ErrorCode::kConfigInvalid, msg);
  }
  Runner runner(cfg, options);
  return runner.run(stages);
}

}  // namespace recycle
