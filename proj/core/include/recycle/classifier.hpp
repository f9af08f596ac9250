#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "recycle/corpus.hpp"
#include "recycle/document.hpp"

namespace recycle {

struct TrainHyperparams {
  std::uint64_t bucket_count = 1ULL << 21;
  std::uint32_t embedding_dim = 16;
  double learning_rate = 0.1;
  std::uint32_t epochs = 5;

  void validate() const;
};

nlohmann::json to_json(const TrainHyperparams& h);
TrainHyperparams hyperparams_from_json(const nlohmann::json& j);

// Hashed word unigram + bigram bag, mean-of-embeddings, 2-way softmax.
// Row-major matrices of 32-bit floats; label 0 is negative, 1 is positive.
class ClassifierModel {
 public:
  ClassifierModel() = default;
  ClassifierModel(std::uint64_t bucket_count, std::uint32_t embedding_dim);

  std::uint64_t bucket_count() const noexcept { return bucket_count_; }
  std::uint32_t embedding_dim() const noexcept { return dim_; }

  std::vector<float>& input_embeddings() noexcept { return input_; }
  const std::vector<float>& input_embeddings() const noexcept { return input_; }
  std::vector<float>& output_weights() noexcept { return output_; }
  const std::vector<float>& output_weights() const noexcept { return output_; }

  const std::array<std::string, 2>& label_names() const noexcept { return labels_; }
  const std::string& train_config_hash() const noexcept { return config_hash_; }
  void set_train_config_hash(std::string hash) { config_hash_ = std::move(hash); }

  // Bucket ids for the lowercased whitespace tokens: unigrams then bigrams.
  std::vector<std::uint64_t> features(std::string_view text) const;

  // (P(negative), P(positive)) for the text.
  std::array<double, 2> probabilities(std::string_view text) const;
  double score(std::string_view text) const { return probabilities(text)[1]; }

  // Finite-parameter check.
  bool finite() const noexcept;

  void save(const std::filesystem::path& path) const;
  static ClassifierModel load(const std::filesystem::path& path);

  // Serialized bytes (what save() writes).
  std::string serialize() const;
  static ClassifierModel deserialize(std::string_view bytes);

 private:
  std::uint64_t bucket_count_ = 0;
  std::uint32_t dim_ = 0;
  std::vector<float> input_;
  std::vector<float> output_;
  std::array<std::string, 2> labels_{"negative", "positive"};
  std::string config_hash_;
};

inline constexpr std::uint32_t kModelFormatVersion = 1;

struct LabeledText {
  std::string text;
  int label = 0;  // 1 positive, 0 negative
};

// Training is single-threaded and bit-deterministic for a given
// (examples order, hyperparameters, seed). Throws kEmptyClass and
// kDivergedTraining (message names the step index).
ClassifierModel train(const std::vector<LabeledText>& examples, const TrainHyperparams& hyper,
                      std::uint64_t seed);

// Corpus references for the two classes.
struct PositiveSource {
  CorpusManifest corpus;
  double proportion = 1.0;
};

struct TrainSet {
  std::vector<PositiveSource> positives;
  CorpusManifest negatives;
  std::uint64_t seed = 0;
  // 0: use every document. Otherwise positives are drawn (per source
  // proportion) and negatives sampled down to this many per class.
  std::uint64_t max_per_class = 0;
};

// Loads both classes, checks that they are disjoint by id, and trains.
ClassifierModel train(const TrainSet& ts, const TrainHyperparams& hyper);

struct ScoredDocument {
  std::string doc_id;
  double score = 0.0;
  std::string classifier_id;
  std::uint64_t token_count = 0;

  bool operator==(const ScoredDocument&) const = default;
};

nlohmann::json to_json(const ScoredDocument& s);
ScoredDocument scored_document_from_json(const nlohmann::json& j);

ScoredDocument score(const ClassifierModel& model, const Document& doc);

// Scores every document of a corpus, writing JSONL to `out_path`.
std::vector<ScoredDocument> score_corpus(const ClassifierModel& model,
                                         const CorpusManifest& manifest,
                                         const std::filesystem::path& out_path);

std::vector<ScoredDocument> read_scores(const std::filesystem::path& path);
void write_scores(const std::vector<ScoredDocument>& scores, const std::filesystem::path& path);

}  // namespace recycle
