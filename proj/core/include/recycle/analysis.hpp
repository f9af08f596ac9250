#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "recycle/classifier.hpp"
#include "recycle/corpus.hpp"
#include "recycle/document.hpp"
#include "recycle/http.hpp"

namespace recycle {

// ---- rank correlation -----------------------------------------------------

struct PairedScores {
  std::string doc_id;
  double raw_score = 0.0;
  double rewritten_score = 0.0;
};

// Pairs two score lists by doc_id (ids present in both), sorted by id.
std::vector<PairedScores> pair_scores(std::span<const ScoredDocument> raw,
                                      std::span<const ScoredDocument> rewritten);

struct SpearmanResult {
  double rho = 0.0;
  double p_value = 1.0;
  std::uint64_t n = 0;
};

// 1-based ranks with ties sharing their average rank.
std::vector<double> midranks(std::span<const double> values);

// Pearson correlation of midranks; two-sided p-value from the Student t
// approximation with n - 2 degrees of freedom (0 when |rho| = 1).
// Throws kTooFewPairs (n < 3) and kDegenerateVariance.
SpearmanResult spearman(std::span<const PairedScores> pairs);
SpearmanResult spearman(std::span<const double> x, std::span<const double> y);

double spearman_p_value(double rho, std::uint64_t n);

nlohmann::json to_json(const SpearmanResult& r);
SpearmanResult spearman_result_from_json(const nlohmann::json& j);

// ---- embeddings & cosine --------------------------------------------------

struct EmbeddingVector {
  std::string doc_id;
  std::vector<double> values;
  std::string provider_id;
};

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual const std::string& id() const noexcept = 0;
  // One entry per document; nullopt marks a per-document provider failure.
  virtual std::vector<std::optional<std::vector<double>>> embed(
      std::span<const Document> docs) = 0;
};

// Precomputed table: TSV lines of `key<TAB>v1<TAB>v2...`. A document is
// looked up as "<source_tag>:<id>" first, then "<id>".
class FileEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit FileEmbeddingProvider(const std::filesystem::path& tsv);
  const std::string& id() const noexcept override { return id_; }
  std::vector<std::optional<std::vector<double>>> embed(std::span<const Document> docs) override;
  std::size_t size() const noexcept { return table_.size(); }

 private:
  std::string id_;
  std::map<std::string, std::vector<double>, std::less<>> table_;
};

struct HttpEmbeddingOptions {
  std::string endpoint_url;
  std::string model_name;
  std::uint32_t max_concurrency = 4;
  std::uint32_t batch_size = 32;
  std::uint32_t retry_limit = 5;
  std::uint32_t retry_base_ms = 1000;
  std::uint32_t retry_cap_ms = 60000;
};

// POSTs batches to `/v1/embeddings` and reads `data[i].embedding`.
class HttpEmbeddingProvider final : public EmbeddingProvider {
 public:
  HttpEmbeddingProvider(HttpEmbeddingOptions options, TransportFactory transport = nullptr);
  const std::string& id() const noexcept override { return id_; }
  std::vector<std::optional<std::vector<double>>> embed(std::span<const Document> docs) override;

 private:
  std::string id_;
  HttpEmbeddingOptions options_;
  TransportFactory transport_;
};

// "file:<path>" or "http:<url>#<model>" (or "https:...").
std::unique_ptr<EmbeddingProvider> make_embedding_provider(const std::string& spec);

void write_embeddings_tsv(const std::vector<EmbeddingVector>& vectors,
                          const std::filesystem::path& path);

// Throws kDimensionMismatch; nullopt when either vector has zero norm.
std::optional<double> cosine_similarity(std::span<const double> a, std::span<const double> b);

struct CosineRecord {
  std::string doc_id;
  double cosine = 0.0;
};

struct CosineDistribution {
  std::vector<CosineRecord> values;
  std::vector<std::string> skipped_zero_norm;
  std::vector<std::string> provider_failures;
  std::vector<std::string> unpaired;  // ids in only one corpus
};

// Pairs documents of the two corpora by id and computes per-id cosines.
CosineDistribution cosine_similarity_distribution(std::span<const Document> a,
                                                  std::span<const Document> b,
                                                  EmbeddingProvider& provider_a,
                                                  EmbeddingProvider& provider_b);

// ---- kernel density -------------------------------------------------------

struct DensityPoint {
  double x = 0.0;
  double density = 0.0;
};

// Silverman's rule: 0.9 * min(sd, IQR / 1.34) * n^(-1/5).
double silverman_bandwidth(std::span<const double> samples);

// Gaussian KDE on the grid. Throws kTooFewSamples (< 2) and
// kInvalidArgument (bandwidth <= 0).
std::vector<DensityPoint> kde(std::span<const double> samples, double bandwidth,
                              std::span<const double> grid);

// Evenly spaced grid over [min - pad * h, max + pad * h].
std::vector<double> kde_grid(std::span<const double> samples, double bandwidth,
                             std::size_t points, double pad = 4.0);

double trapezoid(std::span<const DensityPoint> curve);

// ---- n-gram diversity -----------------------------------------------------

// Lowercased whitespace words; bigrams never cross document boundaries.
std::uint64_t unique_bigrams(std::span<const Document> docs);

// Incremental distinct-bigram counter.
class BigramCounter {
 public:
  BigramCounter();
  ~BigramCounter();
  BigramCounter(BigramCounter&&) noexcept;
  BigramCounter& operator=(BigramCounter&&) noexcept;

  void add(std::string_view text);
  std::uint64_t unique() const noexcept;

 private:
  struct State;
  std::unique_ptr<State> state_;
};

enum class CurveAxis { kDocuments, kTokens };
std::string_view to_string(CurveAxis a) noexcept;

struct CurvePoint {
  std::uint64_t sample_size = 0;     // requested documents or token quota
  std::uint64_t documents = 0;       // realized
  std::uint64_t tokens = 0;          // realized
  std::uint64_t unique_bigrams = 0;
};

struct DiversityCurve {
  CurveAxis axis = CurveAxis::kDocuments;
  std::vector<CurvePoint> points;
  std::uint64_t seed = 0;
};

// Nested samples from one seeded permutation: every size extends the
// previous sample. Token quotas add whole documents until the quota is
// reached. Throws kSampleTooLarge and kInvalidArgument (sizes not strictly
// increasing).
DiversityCurve diversity_curve(std::span<const Document> corpus, CurveAxis axis,
                               std::span<const std::uint64_t> sample_sizes, std::uint64_t seed);

// The permutation diversity_curve samples from.
std::vector<std::size_t> sample_order(std::size_t n, std::uint64_t seed);

// ---- length statistics ----------------------------------------------------

struct LengthStats {
  std::uint64_t count = 0;
  std::uint64_t min = 0;
  std::uint64_t max = 0;
  double mean = 0.0;       // rounded to 2 decimals
  std::uint64_t median = 0;  // lower middle for even counts
};

LengthStats length_stats(std::span<const std::uint64_t> token_counts);
LengthStats length_stats(std::span<const Document> corpus);

// ---- reports --------------------------------------------------------------

nlohmann::json to_json(const DiversityCurve& c);
nlohmann::json to_json(const LengthStats& s);
std::string to_csv(const DiversityCurve& c);
std::string to_csv(std::span<const DensityPoint> curve);
std::string to_csv(const CosineDistribution& d);

// Header line recorded in every bigram report.
inline constexpr std::string_view kBigramTokenization =
    "bigrams over lowercased Unicode-whitespace words, per document";

}  // namespace recycle
