// recycle: command-line front end for the corpus pipeline.

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mock/mock_endpoint.hpp"
#include "recycle/analysis.hpp"
#include "recycle/classifier.hpp"
#include "recycle/corpus.hpp"
#include "recycle/error.hpp"
#include "recycle/hash.hpp"
#include "recycle/heuristic_filter.hpp"
#include "recycle/mixer.hpp"
#include "recycle/pipeline.hpp"
#include "recycle/rewrite.hpp"
#include "recycle/selection.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using namespace recycle;

json load_json(const fs::path& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kConfigInvalid, path.string() + ": " + e.what());
  }
}

Provenance cli_provenance(const std::string& stage, const json& settings) {
  return Provenance{stage, to_hex64(fnv1a64(settings.dump())), std::string(tool_version())};
}

void print_json(const json& j) { std::cout << j.dump(2) << "\n"; }

// Prints the JSON report; with a report directory, also stores it (and the
// CSV series, when there is one) as <name>.json / <name>.csv.
void emit_report(const fs::path& dir, const std::string& name, const json& j, const std::string& csv = {}) {
  if (!dir.empty()) {
    fs::create_directories(dir);
    atomic_write_file(dir / (name + ".json"), j.dump(2) + "\n");
    if (!csv.empty()) atomic_write_file(dir / (name + ".csv"), csv);
  }
  print_json(j);
}

// Reads one number per line, or the named column of a CSV with a header.
std::vector<double> read_values(const fs::path& path, const std::string& column) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoFailure, "cannot open " + path.string());
  std::vector<double> values;
  std::string line;
  long col = -1;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    for (std::string f; std::getline(ss, f, ',');) fields.push_back(f);
    if (first) {
      first = false;
      if (!column.empty()) {
        for (std::size_t i = 0; i < fields.size(); ++i) {
          if (fields[i] == column) col = static_cast<long>(i);
        }
        if (col < 0) throw Error(ErrorCode::kInvalidArgument, "no column '" + column + "' in " + path.string());
        continue;
      }
      if (fields.size() > 1) col = static_cast<long>(fields.size()) - 1;
      try {
        (void)std::stod(fields[col < 0 ? 0 : col]);
      } catch (const std::exception&) {
        continue;  // header row
      }
    }
    const std::string& f = fields.at(col < 0 ? 0 : static_cast<std::size_t>(col));
    try {
      values.push_back(std::stod(f));
    } catch (const std::exception&) {
      throw Error(ErrorCode::kMalformedRecord, path.string() + ": not a number '" + f + "'");
    }
  }
  return values;
}

// Ids from a corpus directory/manifest or from a text file, one per line.
std::set<std::string> read_ids(const fs::path& path) {
  std::set<std::string> ids;
  if (fs::is_directory(path) || path.filename() == kManifestFile) {
    for_each_document(open_corpus(path), [&](Document&& d) { ids.insert(std::move(d.id)); });
    return ids;
  }
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoFailure, "cannot open " + path.string());
  for (std::string line; std::getline(in, line);) {
    const std::string_view t = trim(line);
    if (!t.empty()) ids.emplace(t);
  }
  return ids;
}

std::vector<std::uint64_t> parse_sizes(const std::string& csv) {
  std::vector<std::uint64_t> sizes;
  std::stringstream ss(csv);
  for (std::string f; std::getline(ss, f, ',');) {
    if (f.empty()) continue;
    // Accepts 1e6-style values.
    const double v = std::stod(f);
    if (!(v >= 1.0) || v != std::floor(v)) throw Error(ErrorCode::kInvalidArgument, "bad sample size '" + f + "'");
    sizes.push_back(static_cast<std::uint64_t>(v));
  }
  return sizes;
}

struct ShardFlags {
  std::uint64_t docs_per_shard = 100000;
  bool compress = false;
  void add(CLI::App* app) {
    app->add_option("--docs-per-shard", docs_per_shard, "Documents per output shard")->check(CLI::PositiveNumber);
    app->add_flag("--compress", compress, "Gzip output shards");
  }
  ShardOptions get() const { return ShardOptions{docs_per_shard, compress}; }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Corpus curation pipeline: filter, score, rewrite, select, mix, and analyze text corpora."};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(tool_version()));

  // ingest
  auto* ingest_cmd = app.add_subcommand("ingest", "Validate JSONL inputs into a sharded corpus");
  std::vector<std::string> ingest_inputs;
  fs::path ingest_out;
  IngestOptions ingest_opts;
  ShardFlags ingest_shards;
  ingest_cmd->add_option("inputs,-i,--input", ingest_inputs, "Input files or glob patterns (.jsonl, .jsonl.gz)")->required();
  ingest_cmd->add_option("-o,--out", ingest_out, "Output corpus directory")->required();
  ingest_cmd->add_option("--tokenizer", ingest_opts.tokenizer_id, "Tokenizer id: ws or subword:<vocab>");
  ingest_cmd->add_option("--id-field", ingest_opts.id_field, "Record field holding the document id");
  ingest_cmd->add_option("--name", ingest_opts.corpus_name, "Corpus name");
  ingest_shards.add(ingest_cmd);

  // dedup
  auto* dedup_cmd = app.add_subcommand("dedup", "Drop exact duplicates after text normalization");
  fs::path dedup_in, dedup_out;
  ShardFlags dedup_shards;
  dedup_cmd->add_option("corpus,--corpus", dedup_in, "Corpus directory or manifest")->required();
  dedup_cmd->add_option("-o,--out", dedup_out, "Output corpus directory")->required();
  dedup_shards.add(dedup_cmd);

  // filter
  auto* filter_cmd = app.add_subcommand("filter", "Apply length, repetition, and URL heuristics");
  fs::path filter_in, filter_out, filter_config, filter_audit, filter_explain;
  ShardFlags filter_shards;
  filter_cmd->add_option("corpus,--corpus", filter_in, "Corpus directory or manifest")->required();
  filter_cmd->add_option("-o,--out", filter_out, "Output corpus directory")->required();
  filter_cmd->add_option("--config", filter_config, "Filter config JSON");
  filter_cmd->add_option("--audit", filter_audit, "Write one verdict per document here");
  filter_cmd->add_option("--explain-all", filter_explain, "Write every failing rule per document here");
  filter_shards.add(filter_cmd);

  // train-classifier
  auto* train_cmd = app.add_subcommand("train-classifier", "Train a hashed n-gram quality classifier");
  std::vector<std::string> train_pos;
  fs::path train_neg, train_out;
  TrainHyperparams hyper;
  std::uint64_t train_seed = 0;
  std::uint64_t train_max = 0;
  train_cmd->add_option("--positive,--pos", train_pos, "Positive corpus, optionally <corpus>:<proportion>")->required();
  train_cmd->add_option("--negative,--neg", train_neg, "Negative corpus")->required();
  train_cmd->add_option("-o,--out", train_out, "Model file")->required();
  train_cmd->add_option("--buckets", hyper.bucket_count, "Hash buckets");
  train_cmd->add_option("--dim", hyper.embedding_dim, "Embedding dimension");
  train_cmd->add_option("--lr", hyper.learning_rate, "Initial learning rate");
  train_cmd->add_option("--epochs", hyper.epochs, "Training epochs");
  train_cmd->add_option("--seed", train_seed, "Seed");
  train_cmd->add_option("--max-per-class", train_max, "Cap on examples per class (0: balance to the smaller class)");

  // score
  auto* score_cmd = app.add_subcommand("score", "Score every document of a corpus");
  fs::path score_model, score_in, score_out;
  score_cmd->add_option("model,--model", score_model, "Model file")->required();
  score_cmd->add_option("corpus,--corpus", score_in, "Corpus directory or manifest")->required();
  score_cmd->add_option("-o,--out", score_out, "Scores JSONL")->required();

  // select
  auto* select_cmd = app.add_subcommand("select", "Keep the top fraction of a scored corpus");
  fs::path select_scores, select_in, select_out, select_corpus_out;
  double select_k = 0.10;
  std::string select_mode = "documents";
  ShardFlags select_shards;
  select_cmd->add_option("scores,--scores", select_scores, "Scores JSONL")->required();
  select_cmd->add_option("-k,--top,--top-fraction", select_k, "Fraction to keep, in (0, 1]");
  select_cmd->add_option("--mode", select_mode, "documents or tokens")->check(CLI::IsMember({"documents", "tokens"}));
  select_cmd->add_option("-o,--out", select_out, "Write the selected ids here, best first");
  select_cmd->add_option("--corpus", select_in, "Corpus the scores belong to");
  auto* corpus_out_opt =
      select_cmd->add_option("--corpus-out", select_corpus_out, "Write the selected documents as a corpus here");
  corpus_out_opt->needs(select_cmd->get_option("--corpus"));
  select_shards.add(select_cmd);

  // rewrite
  auto* rewrite_cmd = app.add_subcommand("rewrite", "Rewrite documents through a chat-completions endpoint");
  fs::path rewrite_in, rewrite_out, rewrite_config;
  std::string rewrite_endpoint, rewrite_model;
  std::uint32_t rewrite_concurrency = 0;
  bool rewrite_resume = false;
  std::uint64_t rewrite_seed = 0;
  ShardFlags rewrite_shards;
  rewrite_cmd->add_option("corpus,--corpus", rewrite_in, "Corpus directory or manifest")->required();
  rewrite_cmd->add_option("-o,--out", rewrite_out, "Output directory (corpus, ledger, failures)")->required();
  rewrite_cmd->add_option("--config", rewrite_config, "Generation config JSON");
  rewrite_cmd->add_option("--endpoint", rewrite_endpoint, "Endpoint URL, e.g. http://127.0.0.1:8000/v1");
  rewrite_cmd->add_option("--model", rewrite_model, "Model name sent with each request");
  rewrite_cmd->add_option("--concurrency", rewrite_concurrency, "In-flight requests");
  rewrite_cmd->add_flag("--resume", rewrite_resume, "Continue from the run ledger in --out");
  rewrite_cmd->add_option("--seed", rewrite_seed, "Seed for retry jitter");
  rewrite_shards.add(rewrite_cmd);

  // mix
  auto* mix_cmd = app.add_subcommand("mix", "Materialize a weighted, repeated mix of corpora");
  fs::path mix_plan_path, mix_out;
  bool mix_allow = false;
  std::optional<std::uint64_t> mix_seed;
  ShardFlags mix_shards;
  mix_cmd->add_option("plan,--plan", mix_plan_path, "Mix plan JSON")->required();
  mix_cmd->add_option("-o,--out", mix_out, "Output corpus directory")->required();
  mix_cmd->add_flag("--allow-cap-violation", mix_allow, "Materialize even when a source exceeds max_repeats");
  mix_cmd->add_option("--seed", mix_seed, "Override the plan seed");
  mix_shards.add(mix_cmd);

  // budget
  auto* budget_cmd = app.add_subcommand("budget", "Print per-source token targets and epochs for a mix plan");
  fs::path budget_plan_path;
  bool budget_json = false;
  budget_cmd->add_option("plan,--plan", budget_plan_path, "Mix plan JSON")->required();
  budget_cmd->add_flag("--json", budget_json, "Print only the JSON report");

  // analyze
  auto* analyze_cmd = app.add_subcommand("analyze", "Corpus and score statistics");
  analyze_cmd->require_subcommand(1);
  fs::path report_dir;
  auto add_report_dir = [&](CLI::App* cmd) {
    cmd->add_option("--report-dir", report_dir, "Also write the report as JSON (and CSV) files here");
  };

  auto* sp_cmd = analyze_cmd->add_subcommand("spearman", "Rank correlation between two score files");
  fs::path sp_a, sp_b;
  sp_cmd->add_option("raw_scores,--raw-scores", sp_a, "Scores of the original documents")->required();
  sp_cmd->add_option("rewritten_scores,--rewritten-scores", sp_b, "Scores of the rewritten documents")->required();
  add_report_dir(sp_cmd);

  auto* bg_cmd = analyze_cmd->add_subcommand("bigrams", "Unique-bigram counts on nested samples");
  fs::path bg_in;
  std::string bg_sizes, bg_axis = "documents";
  std::uint64_t bg_seed = 0;
  bool bg_csv = false;
  bg_cmd->add_option("corpus,--corpus", bg_in, "Corpus directory or manifest")->required();
  bg_cmd->add_option("--sizes", bg_sizes, "Comma-separated sample sizes (empty: whole corpus)");
  bg_cmd->add_option("--axis", bg_axis, "documents or tokens")->check(CLI::IsMember({"documents", "tokens"}));
  bg_cmd->add_option("--seed", bg_seed, "Sampling seed");
  bg_cmd->add_flag("--csv", bg_csv, "Print CSV");
  add_report_dir(bg_cmd);

  auto* len_cmd = analyze_cmd->add_subcommand("length", "Token-length summary of a corpus");
  fs::path len_in;
  len_cmd->add_option("corpus,--corpus", len_in, "Corpus directory or manifest")->required();
  add_report_dir(len_cmd);

  auto* cos_cmd = analyze_cmd->add_subcommand("simcse", "Embedding cosine between documents paired by id");
  fs::path cos_a, cos_b, cos_out, cos_kde;
  std::string cos_provider, cos_provider_b;
  std::uint32_t cos_points = 256;
  cos_cmd->add_option("corpus_a,--a", cos_a, "First corpus")->required();
  cos_cmd->add_option("corpus_b,--b", cos_b, "Second corpus")->required();
  cos_cmd->add_option("--provider", cos_provider, "file:<tsv> or http:<url>#<model>")->required();
  cos_cmd->add_option("--provider-b", cos_provider_b, "Provider for the second corpus (default: --provider)");
  cos_cmd->add_option("--out", cos_out, "Per-pair cosine CSV");
  cos_cmd->add_option("--kde", cos_kde, "Density curve CSV of the cosines");
  cos_cmd->add_option("--points", cos_points, "Density grid points");
  add_report_dir(cos_cmd);

  auto* kde_cmd = analyze_cmd->add_subcommand("kde", "Gaussian density estimate of a list of values");
  fs::path kde_in;
  std::string kde_column;
  double kde_bandwidth = 0.0;
  std::uint32_t kde_points = 256;
  kde_cmd->add_option("values,--values", kde_in, "One value per line, or CSV")->required();
  kde_cmd->add_option("--column", kde_column, "CSV column to read");
  kde_cmd->add_option("--bandwidth", kde_bandwidth, "Kernel bandwidth (default: Silverman's rule)");
  kde_cmd->add_option("--points", kde_points, "Grid points");
  add_report_dir(kde_cmd);

  auto* ov_cmd = analyze_cmd->add_subcommand("overlap", "Fraction of ids in A that are also in B");
  fs::path ov_a, ov_b;
  bool ov_sym = false;
  ov_cmd->add_option("a", ov_a, "Corpus or id list (reference)")->required();
  ov_cmd->add_option("b", ov_b, "Corpus or id list")->required();
  ov_cmd->add_flag("--symmetric", ov_sym, "Report |A and B| / |A or B| instead");
  add_report_dir(ov_cmd);

  // run / validate
  auto* run_cmd = app.add_subcommand("run", "Run pipeline stages from a config file");
  fs::path run_config;
  std::vector<std::string> run_stages;
  std::string run_stop_after;
  bool run_force = false;
  std::optional<std::uint64_t> run_seed;
  fs::path run_root;
  run_cmd->add_option("config,--config", run_config, "Pipeline config JSON")->required();
  run_cmd->add_option("--stages", run_stages, "Stages to run (default: all)")->delimiter(',');
  run_cmd->add_option("--stop-after", run_stop_after, "Run stages up to and including this one");
  run_cmd->add_flag("--force", run_force, "Rerun stages that are already complete");
  run_cmd->add_option("--seed", run_seed, "Override the config seed");
  run_cmd->add_option("--output-root", run_root, "Override the config output root");

  auto* validate_cmd = app.add_subcommand("validate", "Check a pipeline config without running it");
  fs::path validate_config;
  validate_cmd->add_option("config,--config", validate_config, "Pipeline config JSON")->required();

  auto* mock_cmd = app.add_subcommand("mock-server", "Serve a deterministic stand-in chat/embedding endpoint");
  mock::MockOptions mock_opts;
  std::string mock_host = "127.0.0.1";
  int mock_port = 8000;
  mock_cmd->add_option("--host", mock_host, "Bind address");
  mock_cmd->add_option("--port", mock_port, "Port");
  mock_cmd->add_option("--seed", mock_opts.seed, "Seed choosing which documents fail");
  mock_cmd->add_option("--failure-rate", mock_opts.failure_rate, "Fraction of documents answered with 500s");
  mock_cmd->add_option("--fail-attempts", mock_opts.fail_attempts, "500s served per selected document");
  mock_cmd->add_option("--dim", mock_opts.embedding_dim, "Embedding dimension");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ingest_cmd) {
      std::vector<fs::path> paths;
      for (const auto& in : ingest_inputs) {
        if (in.find_first_of("*?[") != std::string::npos) {
          for (auto& p : expand_glob(in)) paths.push_back(std::move(p));
        } else {
          paths.emplace_back(in);
        }
      }
      ingest_opts.shards = ingest_shards.get();
      IngestResult r = ingest(paths, ingest_out, ingest_opts);
      r.manifest.provenance = cli_provenance("ingest", json{{"tokenizer", ingest_opts.tokenizer_id}, {"id_field", ingest_opts.id_field}});
      write_manifest(r.manifest, ingest_out / kManifestFile);
      print_json(json{{"documents", r.manifest.document_count},
                      {"tokens", r.manifest.total_tokens},
                      {"skipped_records", r.skipped_records},
                      {"skip_reasons", r.skip_reasons}});
    } else if (*dedup_cmd) {
      DedupResult r = deduplicate(open_corpus(dedup_in), dedup_out, dedup_shards.get());
      r.manifest.provenance = cli_provenance("dedup", json::object());
      write_manifest(r.manifest, dedup_out / kManifestFile);
      print_json(json{{"documents", r.manifest.document_count}, {"removed", r.removed}});
    } else if (*filter_cmd) {
      FilterConfig cfg;
      if (!filter_config.empty()) cfg = filter_config_from_json(load_json(filter_config));
      cfg.validate();
      std::optional<fs::path> audit;
      if (!filter_audit.empty()) audit = filter_audit;
      FilterRunResult r = filter_corpus(open_corpus(filter_in), cfg, filter_out, audit, filter_shards.get());
      r.passed.provenance = cli_provenance("filter", to_json(cfg));
      write_manifest(r.passed, filter_out / kManifestFile);
      json by_rule = json::object();
      for (std::size_t i = 0; i < r.rejected_by_rule.size(); ++i) {
        by_rule[std::string(to_string(static_cast<FilterRule>(i)))] = r.rejected_by_rule[i];
      }
      if (!filter_explain.empty()) {
        LineWriter out(filter_explain);
        for_each_document(open_corpus(filter_in), [&](Document&& d) {
          json verdicts = json::array();
          for (const auto& v : evaluate_all(d, cfg)) verdicts.push_back(to_json(v));
          out.write_line(json{{"doc_id", d.id}, {"verdicts", verdicts}}.dump());
        });
        out.commit();
      }
      print_json(json{{"passed", r.passed.document_count}, {"rejected", r.rejected}, {"rejected_by_rule", by_rule}});
    } else if (*train_cmd) {
      TrainSet ts;
      ts.seed = train_seed;
      ts.max_per_class = train_max;
      ts.negatives = open_corpus(train_neg);
      for (const auto& spec : train_pos) {
        PositiveSource src;
        std::string path = spec;
        if (const auto colon = spec.rfind(':'); colon != std::string::npos && colon + 1 < spec.size()) {
          try {
            std::size_t used = 0;
            const double p = std::stod(spec.substr(colon + 1), &used);
            if (used == spec.size() - colon - 1) {
              src.proportion = p;
              path = spec.substr(0, colon);
            }
          } catch (const std::exception&) {
          }
        }
        src.corpus = open_corpus(path);
        ts.positives.push_back(std::move(src));
      }
      const ClassifierModel model = train(ts, hyper);
      model.save(train_out);
      json sidecar{{"format_version", kModelFormatVersion},
                   {"labels", model.label_names()},
                   {"hyperparams", to_json(hyper)},
                   {"seed", train_seed},
                   {"train_config_hash", model.train_config_hash()},
                   {"tool_version", tool_version()}};
      atomic_write_file(fs::path(train_out.string() + ".json"), sidecar.dump(2) + "\n");
      print_json(sidecar);
    } else if (*score_cmd) {
      const ClassifierModel model = ClassifierModel::load(score_model);
      const auto scores = score_corpus(model, open_corpus(score_in), score_out);
      print_json(json{{"scored", scores.size()}, {"classifier", model.train_config_hash()}});
    } else if (*select_cmd) {
      const auto scores = read_scores(select_scores);
      const SelectionMode mode = select_mode == "tokens" ? SelectionMode::kTokenMass : SelectionMode::kDocuments;
      const Selection sel = select_top_fraction(scores, select_k, mode);
      if (!select_corpus_out.empty()) {
        const std::set<std::string> keep(sel.ids.begin(), sel.ids.end());
        CorpusManifest m = write_subset(
            open_corpus(select_in), [&](const Document& d) { return keep.contains(d.id); }, select_corpus_out,
            "selected", select_shards.get());
        m.provenance = cli_provenance("select", json{{"top_fraction", select_k}, {"mode", select_mode}});
        write_manifest(m, select_corpus_out / kManifestFile);
      }
      if (!select_out.empty()) {
        std::string ids;
        for (const auto& id : sel.ids) ids += id + "\n";
        atomic_write_file(select_out, ids);
      }
      print_json(json{{"pool", scores.size()},
                      {"selected", sel.ids.size()},
                      {"selected_tokens", sel.selected_tokens},
                      {"pool_tokens", sel.total_tokens},
                      {"threshold", sel.threshold}});
    } else if (*rewrite_cmd) {
      GenerationConfig cfg;
      if (!rewrite_config.empty()) cfg = generation_config_from_json(load_json(rewrite_config));
      if (!rewrite_endpoint.empty()) cfg.endpoint_url = rewrite_endpoint;
      if (!rewrite_model.empty()) cfg.model_name = rewrite_model;
      if (rewrite_concurrency > 0) cfg.max_concurrency = rewrite_concurrency;
      RewriteOptions ro;
      ro.out_dir = rewrite_out;
      ro.resume = rewrite_resume;
      ro.shards = rewrite_shards.get();
      ro.jitter_seed = rewrite_seed;
      ro.provenance = cli_provenance("rewrite", to_json(cfg));
      const RewriteSummary r = rewrite_corpus(open_corpus(rewrite_in), cfg, ro);
      print_json(json{{"rewritten", r.rewritten},
                      {"failed", r.failed},
                      {"resumed", r.resumed},
                      {"requests", r.requests},
                      {"documents", r.manifest.document_count}});
    } else if (*mix_cmd) {
      const json plan_json = load_json(mix_plan_path);
      MixPlan plan_cfg = mix_plan_from_json(plan_json, fs::absolute(mix_plan_path).parent_path());
      if (mix_seed) plan_cfg.seed = *mix_seed;
      MaterializeOptions mo;
      mo.out_dir = mix_out;
      mo.allow_cap_violation = mix_allow;
      mo.shards = mix_shards.get();
      mo.provenance = cli_provenance("mix", plan_json);
      const MaterializeResult r = materialize(plan_cfg, mo);
      const json report = to_json(r);
      atomic_write_file(mix_out / "mix_report.json", report.dump(2) + "\n");
      print_json(report);
    } else if (*budget_cmd) {
      const BudgetReport r =
          plan(mix_plan_from_json(load_json(budget_plan_path), fs::absolute(budget_plan_path).parent_path()));
      if (!budget_json) std::cout << format_budget_table(r) << "\n";
      print_json(to_json(r));
    } else if (*sp_cmd) {
      const auto pairs = pair_scores(read_scores(sp_a), read_scores(sp_b));
      emit_report(report_dir, "spearman", to_json(spearman(pairs)));
    } else if (*bg_cmd) {
      const auto docs = load_documents(open_corpus(bg_in));
      const CurveAxis axis = bg_axis == "tokens" ? CurveAxis::kTokens : CurveAxis::kDocuments;
      std::vector<std::uint64_t> sizes = parse_sizes(bg_sizes);
      if (sizes.empty()) {
        std::uint64_t total = 0;
        for (const auto& d : docs) total += d.token_count;
        sizes.push_back(axis == CurveAxis::kDocuments ? docs.size() : total);
      }
      const DiversityCurve c = diversity_curve(docs, axis, sizes, bg_seed);
      if (bg_csv && report_dir.empty()) std::cout << to_csv(c);
      else emit_report(report_dir, "bigrams_" + std::string(to_string(axis)), to_json(c), to_csv(c));
    } else if (*len_cmd) {
      emit_report(report_dir, "length_stats", to_json(length_stats(load_documents(open_corpus(len_in)))));
    } else if (*cos_cmd) {
      const auto a = load_documents(open_corpus(cos_a));
      const auto b = load_documents(open_corpus(cos_b));
      auto pa = make_embedding_provider(cos_provider);
      auto pb = cos_provider_b.empty() ? nullptr : make_embedding_provider(cos_provider_b);
      const CosineDistribution dist = cosine_similarity_distribution(a, b, *pa, pb ? *pb : *pa);
      if (!cos_out.empty()) atomic_write_file(cos_out, to_csv(dist));
      if (!report_dir.empty()) {
        fs::create_directories(report_dir);
        atomic_write_file(report_dir / "cosine.csv", to_csv(dist));
      }
      std::vector<double> values;
      for (const auto& r : dist.values) values.push_back(r.cosine);
      json summary{{"pairs", values.size()},
                   {"skipped_zero_norm", dist.skipped_zero_norm},
                   {"provider_failures", dist.provider_failures},
                   {"unpaired", dist.unpaired.size()}};
      if (!values.empty()) {
        double sum = 0.0;
        for (double v : values) sum += v;
        summary["mean"] = sum / static_cast<double>(values.size());
      }
      if (!cos_kde.empty()) {
        const double h = silverman_bandwidth(values);
        atomic_write_file(cos_kde, to_csv(kde(values, h, kde_grid(values, h, cos_points))));
        summary["bandwidth"] = h;
      }
      emit_report(report_dir, "cosine_summary", summary);
    } else if (*kde_cmd) {
      const auto values = read_values(kde_in, kde_column);
      const double h = kde_bandwidth > 0.0 ? kde_bandwidth : silverman_bandwidth(values);
      const auto curve = kde(values, h, kde_grid(values, h, kde_points));
      if (!report_dir.empty()) {
        emit_report(report_dir, "kde", json{{"bandwidth", h}, {"samples", values.size()}, {"points", curve.size()}},
                    to_csv(curve));
      } else {
        std::cout << "# bandwidth=" << std::setprecision(17) << h << "\n" << to_csv(curve);
      }
    } else if (*ov_cmd) {
      const auto a = read_ids(ov_a);
      const auto b = read_ids(ov_b);
      emit_report(report_dir, "overlap",
                  json{{"overlap", overlap_fraction(a, b, ov_sym)}, {"symmetric", ov_sym}, {"a", a.size()}, {"b", b.size()}});
    } else if (*run_cmd) {
      PipelineConfig cfg = load_pipeline_config(run_config);
      if (run_seed) cfg.seed = *run_seed;
      if (!run_root.empty()) cfg.output_root = fs::absolute(run_root);
      for (const auto& d : validate(cfg)) {
        if (d.severity == Diagnostic::Severity::kWarning) std::cerr << "warning: " << d.path << ": " << d.message << "\n";
      }
      std::set<Stage> stages;
      for (const auto& s : run_stages) stages.insert(stage_from_string(s));
      if (stages.empty()) {
        const std::optional<Stage> last =
            run_stop_after.empty() ? std::nullopt : std::optional<Stage>(stage_from_string(run_stop_after));
        for (Stage s : pipeline_stages()) {
          stages.insert(s);
          if (last && s == *last) break;
        }
      }
      RunOptions ro;
      ro.force = run_force;
      ro.log = &std::cerr;
      const RunResult r = run_pipeline(cfg, stages, ro);
      if (r.budget) std::cout << format_budget_table(*r.budget);
    } else if (*validate_cmd) {
      const PipelineConfig cfg = load_pipeline_config(validate_config);
      const auto diagnostics = validate(cfg);
      json out = json::array();
      for (const auto& d : diagnostics) {
        out.push_back(json{{"severity", d.severity == Diagnostic::Severity::kError ? "error" : "warning"},
                           {"path", d.path},
                           {"message", d.message}});
      }
      print_json(out);
      return runnable(diagnostics) ? 0 : 1;
    } else if (*mock_cmd) {
      mock::MockEndpoint endpoint(mock_opts);
      std::cerr << "serving on http://" << mock_host << ":" << mock_port << "/v1\n";
      if (!endpoint.serve(mock_host, mock_port)) {
        std::cerr << "error: cannot bind " << mock_host << ":" << mock_port << "\n";
        return 1;
      }
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
