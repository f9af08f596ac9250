#include <doctest.h>

#include <cmath>
#include <fstream>
#include <set>
#include <string>

#include "mock/mock_endpoint.hpp"
#include "recycle/error.hpp"
#include "recycle/pipeline.hpp"
#include "support.hpp"
#include "toy_pipeline.hpp"

using namespace recycle;
using nlohmann::json;
using testing::TempDir;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::kIoFailure;  // sentinel: nothing thrown
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  REQUIRE_MESSAGE(in.good(), "cannot open " << p);
  return json::parse(in);
}

std::uint64_t ceil_fraction(double k, std::uint64_t n) {
  return static_cast<std::uint64_t>(std::ceil(k * static_cast<double>(n) - 1e-9));
}

std::set<Stage> all_stages() {
  const auto& v = pipeline_stages();
  return {v.begin(), v.end()};
}

// One mock server and one toy fixture for the whole suite; each case gets
// its own output root.
struct Fixture {
  mock::MockEndpoint server;
  TempDir dir;
  testing::ToyPipeline toy;
  Fixture() {
    server.start();
    toy = testing::make_toy_pipeline(dir.path(), server.url(), 160);
  }
  PipelineConfig config(const json& patch = json::object(), const std::string& root = "out") const {
    json j = toy.config;
    j.merge_patch(patch);
    j["output_root"] = (dir.path() / root).string();
    return pipeline_config_from_json(j);
  }
};

Fixture& fixture() {
  static Fixture f;
  return f;
}

}  // namespace

TEST_CASE("stage table") {
  CHECK(pipeline_stages().size() == 10);
  CHECK(pipeline_stages().front() == Stage::kIngest);
  CHECK(pipeline_stages().back() == Stage::kAnalyze);
  for (Stage s : pipeline_stages()) {
    CHECK(stage_from_string(to_string(s)) == s);
    for (Stage up : upstream_of(s)) CHECK(static_cast<int>(up) < static_cast<int>(s));
  }
  CHECK(to_string(Stage::kBudget) == "budget");
  CHECK(code_of([] { stage_from_string("bake"); }) == ErrorCode::kInvalidArgument);
}

TEST_CASE("config parsing rejects unknown keys and wrong types") {
  const json good = fixture().toy.config;
  CHECK_NOTHROW(pipeline_config_from_json(good));
  for (const json& patch : {json{{"colour", 1}}, json{{"mix", {{"ratio", 0.5}}}}, json{{"raw", {{"topk", 0.1}}}},
                            json{{"seed", "seven"}}, json{{"mix", {{"weighting", "bytes"}}}}}) {
    json bad = good;
    bad.merge_patch(patch);
    CHECK_MESSAGE(code_of([&] { pipeline_config_from_json(bad); }) == ErrorCode::kConfigInvalid, patch.dump());
  }
}

TEST_CASE("relative paths resolve against the config directory") {
  json j = fixture().toy.config;
  j["raw"]["model"] = "models/raw.bin";
  const PipelineConfig cfg = pipeline_config_from_json(j, "/somewhere/else");
  CHECK(cfg.raw.model == fs::path("/somewhere/else/models/raw.bin"));
}

TEST_CASE("validate") {
  auto& f = fixture();
  CHECK(validate(f.config()).empty());

  PipelineConfig no_model = f.config();
  no_model.raw.model.clear();
  const auto d = validate(no_model);
  REQUIRE(d.size() == 1);
  CHECK(d[0].severity == Diagnostic::Severity::kError);
  CHECK(d[0].path == "raw.model");
  CHECK_FALSE(runnable(d));

  PipelineConfig skewed = f.config();
  skewed.mix.raw_weight = 0.5;
  skewed.mix.rewritten_weight = 0.4;
  const auto w = validate(skewed);
  REQUIRE(w.size() == 1);
  CHECK(w[0].severity == Diagnostic::Severity::kWarning);
  CHECK(runnable(w));

  PipelineConfig many = f.config();
  many.raw.top_fraction = 1.5;
  many.inputs = {"/does/not/exist.jsonl"};
  many.mix.max_repeats = 0;
  CHECK(validate(many).size() == 3);
}

TEST_CASE("invalid config fails before any work") {
  auto& f = fixture();
  PipelineConfig cfg = f.config(json::object(), "zero-k");
  cfg.raw.top_fraction = 0.0;
  CHECK(code_of([&] { run_pipeline(cfg, all_stages()); }) == ErrorCode::kConfigInvalid);
  CHECK_FALSE(fs::exists(cfg.output_root));
}

TEST_CASE("budget-only run writes nothing") {
  auto& f = fixture();
  PipelineConfig cfg = f.config(json{{"mix", {{"raw_unique_tokens", 7200}, {"rewritten_unique_tokens", 7200}}}}, "budget");
  cfg.mix.budget_epochs = 0.0;
  cfg.mix.token_budget = 28800;
  const RunResult r = run_pipeline(cfg, {Stage::kBudget});
  REQUIRE(r.budget.has_value());
  CHECK(r.budget->per_source[0].epochs == doctest::Approx(2.0));
  CHECK(r.budget->per_source[1].target_tokens == doctest::Approx(14400.0));
  CHECK_FALSE(r.budget->cap_violated);
  CHECK_FALSE(fs::exists(cfg.output_root));

  PipelineConfig blind = f.config(json::object(), "budget-blind");
  CHECK(code_of([&] { run_pipeline(blind, {Stage::kBudget}); }) == ErrorCode::kStageFailed);
}

TEST_CASE("missing upstream artifacts fail the stage") {
  auto& f = fixture();
  const PipelineConfig cfg = f.config(json::object(), "partial");
  CHECK(code_of([&] { run_pipeline(cfg, {Stage::kFilter}); }) == ErrorCode::kStageFailed);
  run_pipeline(cfg, {Stage::kIngest});
  CHECK(code_of([&] { run_pipeline(cfg, {Stage::kFilter}); }) == ErrorCode::kStageFailed);
  CHECK_NOTHROW(run_pipeline(cfg, {Stage::kDedup, Stage::kFilter}));
}

TEST_CASE("full run, rerun, and invalidation") {
  auto& f = fixture();
  f.server.reset();
  const PipelineConfig cfg = f.config(json::object(), "full");
  const RunResult first = run_pipeline(cfg, all_stages());
  CHECK(first.executed.size() == pipeline_stages().size());
  CHECK(first.skipped.empty());

  const json dedup = read_json(stage_dir(cfg, Stage::kDedup) / "stage.json");
  CHECK(dedup["summary"]["removed"] == f.toy.duplicate_ids.size());
  const json filter = read_json(stage_dir(cfg, Stage::kFilter) / "stage.json");
  CHECK(filter["summary"]["passed"] == f.toy.clean_documents);
  CHECK(filter["summary"]["rejected_by_rule"]["rep_ngram_fraction"] == f.toy.repetitive_ids.size());

  const std::uint64_t pool = f.toy.clean_documents;
  for (Stage s : {Stage::kSelectRaw, Stage::kSelectRewritten}) {
    const json sel = read_json(stage_dir(cfg, s) / "stage.json");
    CHECK(sel["summary"]["pool"] == pool);
    CHECK(sel["summary"]["selected"] == ceil_fraction(0.10, pool));
    CHECK(open_corpus(stage_dir(cfg, s)).document_count == ceil_fraction(0.10, pool));
  }

  const json mix = read_json(stage_dir(cfg, Stage::kMix) / "mix_report.json");
  std::uint64_t max_len = 0;
  for (const auto& s : mix["sources"]) max_len = std::max<std::uint64_t>(max_len, s["max_document_tokens"]);
  const double total = mix["total_tokens"];
  for (const auto& s : mix["sources"]) {
    CHECK(std::abs(s["realized_tokens"].get<double>() - 0.5 * total) <= static_cast<double>(max_len));
  }
  CHECK(mix["provenance"]["config_hash"] == cfg.hash());

  const json report = read_json(stage_dir(cfg, Stage::kAnalyze) / "report.json");
  CHECK(report["overlap"]["fraction_of_rewritten"].is_number());
  CHECK(report["spearman"]["n"] == pool);
  CHECK(report["cosine"]["pairs"] == pool);
  CHECK(report.contains("bigrams"));
  CHECK(report["lengths"]["raw_selected"]["count"] == ceil_fraction(0.10, pool));

  // Provenance on corpus artifacts.
  const CorpusManifest m = open_corpus(stage_dir(cfg, Stage::kMix));
  REQUIRE(m.provenance.has_value());
  CHECK(m.provenance->stage == "mix");
  CHECK(m.provenance->config_hash == cfg.hash());
  CHECK(m.provenance->tool_version == tool_version());

  const auto tree = testing::snapshot_tree(cfg.output_root);
  const std::uint64_t requests = f.server.requests();
  const RunResult again = run_pipeline(cfg, all_stages());
  CHECK(again.executed.empty());
  CHECK(again.skipped.size() == pipeline_stages().size());
  CHECK(f.server.requests() == requests);
  CHECK(testing::snapshot_tree(cfg.output_root) == tree);

  // A downstream setting reruns only what depends on it.
  PipelineConfig changed = f.config(json{{"rewritten", {{"top_fraction", 0.2}}}}, "full");
  const RunResult third = run_pipeline(changed, all_stages());
  CHECK(third.executed == std::vector<Stage>{Stage::kSelectRewritten, Stage::kMix, Stage::kAnalyze});
  // One rewrite request per pool document; the rest were embedding calls,
  // which the rerun analysis repeats. No rewrite is sent again.
  CHECK(f.server.requests() == requests + (requests - pool));
  CHECK(open_corpus(stage_dir(changed, Stage::kSelectRewritten)).document_count == ceil_fraction(0.2, pool));

  RunOptions force;
  force.force = true;
  const RunResult forced = run_pipeline(changed, {Stage::kIngest}, force);
  CHECK(forced.executed == std::vector<Stage>{Stage::kIngest});
}

TEST_CASE("config hash ignores the output root") {
  auto& f = fixture();
  CHECK(f.config(json::object(), "a").hash() == f.config(json::object(), "b").hash());
  CHECK(f.config(json{{"seed", 8}}).hash() != f.config().hash());
  CHECK(f.config().to_json()["raw"]["model"] == (f.dir.path() / "models" / "raw.bin").string());
}
