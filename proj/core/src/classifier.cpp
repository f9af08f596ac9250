#include "recycle/classifier.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstring>
#include <random>
#include <thread>
#include <unordered_set>

#include "recycle/detail/shuffle.hpp"
#include "recycle/error.hpp"
#include "recycle/hash.hpp"
#include "recycle/text.hpp"

namespace recycle {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "model serialization assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'R', 'C', 'L', 'S'};
constexpr std::uint64_t kBigramMultiplier = 116049371;

double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

template <typename T>
void put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

void put_string(std::string& out, std::string_view s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.append(s);
}

class ByteReader {
 public:
  explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    T value;
    need(sizeof(T));
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  void get_floats(std::vector<float>& out, std::size_t n) {
    need(n * sizeof(float));
    out.resize(n);
    std::memcpy(out.data(), bytes_.data() + pos_, n * sizeof(float));
    pos_ += n * sizeof(float);
  }

  std::string get_string() {
    const auto len = get<std::uint32_t>();
    need(len);
    std::string s(bytes_.substr(pos_, len));
    pos_ += len;
    return s;
  }

  bool done() const noexcept { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw Error(ErrorCode::kIoFailure, "truncated model file");
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void TrainHyperparams::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::kConfigInvalid, m); };
  if (bucket_count == 0) fail("bucket_count must be positive");
  if (embedding_dim == 0) fail("embedding_dim must be positive");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) fail("learning_rate must be positive");
  if (epochs < 1) fail("epochs must be at least 1");
}

json to_json(const TrainHyperparams& h) {
  return json{{"bucket_count", h.bucket_count},
              {"embedding_dim", h.embedding_dim},
              {"learning_rate", h.learning_rate},
              {"epochs", h.epochs}};
}

TrainHyperparams hyperparams_from_json(const json& j) {
  TrainHyperparams h;
  h.bucket_count = j.value("bucket_count", h.bucket_count);
  h.embedding_dim = j.value("embedding_dim", h.embedding_dim);
  h.learning_rate = j.value("learning_rate", h.learning_rate);
  h.epochs = j.value("epochs", h.epochs);
  h.validate();
  return h;
}

ClassifierModel::ClassifierModel(std::uint64_t bucket_count, std::uint32_t embedding_dim)
    : bucket_count_(bucket_count),
      dim_(embedding_dim),
      input_(bucket_count * embedding_dim, 0.0F),
      output_(2ULL * embedding_dim, 0.0F) {}

std::vector<std::uint64_t> ClassifierModel::features(std::string_view text) const {
  const std::string lower = to_lower(text);
  const std::vector<std::string_view> words = split_whitespace(lower);
  std::vector<std::uint64_t> out;
  if (words.empty() || bucket_count_ == 0) return out;
  out.reserve(words.size() * 2 - 1);
  std::vector<std::uint64_t> hashes;
  hashes.reserve(words.size());
  for (std::string_view w : words) {
    const std::uint64_t h = fnv1a32(w);
    hashes.push_back(h);
    out.push_back(h % bucket_count_);
  }
  for (std::size_t i = 0; i + 1 < hashes.size(); ++i) {
    out.push_back((hashes[i] * kBigramMultiplier + hashes[i + 1]) % bucket_count_);
  }
  return out;
}

namespace {

// Mean of the feature rows, in float like the training updates.
void average_rows(const std::vector<float>& input, std::uint32_t dim,
                  const std::vector<std::uint64_t>& feats, std::vector<float>& hidden) {
  std::fill(hidden.begin(), hidden.end(), 0.0F);
  if (feats.empty()) return;
  for (std::uint64_t f : feats) {
    const float* row = input.data() + f * dim;
    for (std::uint32_t d = 0; d < dim; ++d) hidden[d] += row[d];
  }
  const float inv = 1.0F / static_cast<float>(feats.size());
  for (float& v : hidden) v *= inv;
}

std::array<double, 2> softmax2(double l0, double l1) {
  // Stable two-way softmax; p0 + p1 == 1 up to one rounding.
  const double p1 = 1.0 / (1.0 + std::exp(l0 - l1));
  return {1.0 - p1, p1};
}

}  // namespace

std::array<double, 2> ClassifierModel::probabilities(std::string_view text) const {
  std::vector<float> hidden(dim_);
  average_rows(input_, dim_, features(text), hidden);
  double l0 = 0.0;
  double l1 = 0.0;
  for (std::uint32_t d = 0; d < dim_; ++d) {
    l0 += static_cast<double>(output_[d]) * hidden[d];
    l1 += static_cast<double>(output_[dim_ + d]) * hidden[d];
  }
  return softmax2(l0, l1);
}

bool ClassifierModel::finite() const noexcept {
  auto ok = [](const std::vector<float>& v) {
    return std::all_of(v.begin(), v.end(), [](float x) { return std::isfinite(x); });
  };
  return ok(input_) && ok(output_);
}

std::string ClassifierModel::serialize() const {
  std::string out;
  out.reserve(64 + (input_.size() + output_.size()) * sizeof(float));
  out.append(kMagic, 4);
  put<std::uint32_t>(out, kModelFormatVersion);
  put<std::uint64_t>(out, bucket_count_);
  put<std::uint32_t>(out, dim_);
  out.append(reinterpret_cast<const char*>(input_.data()), input_.size() * sizeof(float));
  out.append(reinterpret_cast<const char*>(output_.data()), output_.size() * sizeof(float));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(labels_.size()));
  for (const auto& l : labels_) put_string(out, l);
  put_string(out, config_hash_);
  return out;
}

ClassifierModel ClassifierModel::deserialize(std::string_view bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw Error(ErrorCode::kIoFailure, "not a classifier model (bad magic)");
  }
  ByteReader r(bytes.substr(4));
  const auto version = r.get<std::uint32_t>();
  if (version != kModelFormatVersion) {
    throw Error(ErrorCode::kIoFailure, "unsupported model version " + std::to_string(version));
  }
  ClassifierModel m;
  m.bucket_count_ = r.get<std::uint64_t>();
  m.dim_ = r.get<std::uint32_t>();
  if (m.bucket_count_ == 0 || m.dim_ == 0) throw Error(ErrorCode::kIoFailure, "empty model dimensions");
  r.get_floats(m.input_, m.bucket_count_ * m.dim_);
  r.get_floats(m.output_, 2ULL * m.dim_);
  const auto nlabels = r.get<std::uint32_t>();
  if (nlabels != 2) throw Error(ErrorCode::kIoFailure, "model must have exactly two labels");
  m.labels_[0] = r.get_string();
  m.labels_[1] = r.get_string();
  m.config_hash_ = r.get_string();
  if (!r.done()) throw Error(ErrorCode::kIoFailure, "trailing bytes in model file");
  return m;
}

void ClassifierModel::save(const std::filesystem::path& path) const {
  atomic_write_file(path, serialize());
}

ClassifierModel ClassifierModel::load(const std::filesystem::path& path) {
  return deserialize(read_file(path));
}

ClassifierModel train(const std::vector<LabeledText>& examples, const TrainHyperparams& hyper,
                      std::uint64_t seed) {
  hyper.validate();
  std::size_t npos = 0;
  std::size_t nneg = 0;
  Hasher config;
  config.add(to_json(hyper).dump()).add(seed).add(static_cast<std::uint64_t>(examples.size()));
  for (const auto& ex : examples) {
    (ex.label == 1 ? npos : nneg)++;
    config.add(static_cast<std::uint64_t>(ex.label)).add(ex.text);
  }
  if (npos == 0 || nneg == 0) {
    throw Error(ErrorCode::kEmptyClass, npos == 0 ? "no positive examples" : "no negative examples");
  }

  ClassifierModel model(hyper.bucket_count, hyper.embedding_dim);
  model.set_train_config_hash(config.hex());
  const std::uint32_t dim = hyper.embedding_dim;
  std::mt19937_64 rng(seed);
  {
    const double bound = 1.0 / dim;
    for (float& v : model.input_embeddings()) {
      v = static_cast<float>((2.0 * uniform01(rng) - 1.0) * bound);
    }
  }

  std::vector<std::vector<std::uint64_t>> feats;
  feats.reserve(examples.size());
  for (const auto& ex : examples) feats.push_back(model.features(ex.text));

  std::vector<float>& input = model.input_embeddings();
  std::vector<float>& output = model.output_weights();
  std::vector<float> hidden(dim);
  std::vector<float> grad(dim);
  std::vector<std::size_t> order(examples.size());
  const double total_steps = static_cast<double>(hyper.epochs) * static_cast<double>(examples.size());
  std::uint64_t step = 0;

  for (std::uint32_t epoch = 0; epoch < hyper.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    deterministic_shuffle(order, seed ^ (0x9E3779B97F4A7C15ULL * (epoch + 1)));
    for (std::size_t idx : order) {
      const auto lr = static_cast<float>(hyper.learning_rate *
                                         (1.0 - static_cast<double>(step) / total_steps));
      ++step;
      const auto& f = feats[idx];
      if (f.empty()) continue;
      average_rows(input, dim, f, hidden);
      float l[2] = {0.0F, 0.0F};
      for (std::uint32_t d = 0; d < dim; ++d) {
        l[0] += output[d] * hidden[d];
        l[1] += output[dim + d] * hidden[d];
      }
      const float p1 = 1.0F / (1.0F + std::exp(l[0] - l[1]));
      const float p[2] = {1.0F - p1, p1};
      if (!std::isfinite(p1)) {
        throw Error(ErrorCode::kDivergedTraining,
                    "non-finite probability at step " + std::to_string(step - 1));
      }
      std::fill(grad.begin(), grad.end(), 0.0F);
      for (int k = 0; k < 2; ++k) {
        const float target = (examples[idx].label == k) ? 1.0F : 0.0F;
        const float alpha = lr * (target - p[k]);
        float* w = output.data() + static_cast<std::size_t>(k) * dim;
        for (std::uint32_t d = 0; d < dim; ++d) {
          grad[d] += alpha * w[d];
          w[d] += alpha * hidden[d];
        }
      }
      const float scale = 1.0F / static_cast<float>(f.size());
      for (std::uint32_t d = 0; d < dim; ++d) {
        grad[d] *= scale;
        if (!std::isfinite(grad[d]) || !std::isfinite(output[d]) ||
            !std::isfinite(output[dim + d])) {
          throw Error(ErrorCode::kDivergedTraining,
                      "non-finite parameter at step " + std::to_string(step - 1));
        }
      }
      for (std::uint64_t row : f) {
        float* r = input.data() + row * dim;
        for (std::uint32_t d = 0; d < dim; ++d) r[d] += grad[d];
      }
    }
  }
  if (!model.finite()) {
    throw Error(ErrorCode::kDivergedTraining, "non-finite parameter after step " + std::to_string(step));
  }
  return model;
}

ClassifierModel train(const TrainSet& ts, const TrainHyperparams& hyper) {
  std::vector<std::vector<Document>> pos_sources;
  std::vector<double> proportions;
  for (const auto& src : ts.positives) {
    pos_sources.push_back(load_documents(src.corpus));
    proportions.push_back(src.proportion);
  }
  std::vector<Document> negatives = load_documents(ts.negatives);

  std::size_t pos_total = 0;
  for (const auto& s : pos_sources) pos_total += s.size();
  if (pos_total == 0) throw Error(ErrorCode::kEmptyClass, "no positive documents");
  if (negatives.empty()) throw Error(ErrorCode::kEmptyClass, "no negative documents");

  std::unordered_set<std::string> pos_ids;
  for (const auto& s : pos_sources) {
    for (const auto& d : s) pos_ids.insert(d.id);
  }
  for (const auto& d : negatives) {
    if (pos_ids.contains(d.id)) {
      throw Error(ErrorCode::kInvalidArgument, "document '" + d.id + "' is in both classes");
    }
  }

  // Classes are balanced to the same size; positives are split across
  // their sources by proportion.
  std::size_t per_class = std::min(pos_total, negatives.size());
  if (ts.max_per_class != 0) per_class = std::min<std::size_t>(per_class, ts.max_per_class);
  double psum = 0.0;
  for (double p : proportions) {
    if (!(p >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "negative positive-source proportion");
    psum += p;
  }
  if (psum <= 0.0) throw Error(ErrorCode::kInvalidArgument, "positive-source proportions sum to 0");

  std::vector<LabeledText> examples;
  std::uint64_t sample_seed = ts.seed;
  auto take = [&](std::vector<Document>& docs, std::size_t n, int label) {
    std::vector<std::size_t> idx(docs.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    deterministic_shuffle(idx, ++sample_seed);
    idx.resize(std::min(n, idx.size()));
    std::sort(idx.begin(), idx.end());
    for (std::size_t i : idx) examples.push_back({std::move(docs[i].text), label});
  };
  for (std::size_t j = 0; j < pos_sources.size(); ++j) {
    const auto want = static_cast<std::size_t>(std::llround(proportions[j] / psum * static_cast<double>(per_class)));
    take(pos_sources[j], want, 1);
  }
  take(negatives, per_class, 0);
  return train(examples, hyper, ts.seed);
}

json to_json(const ScoredDocument& s) {
  return json{{"doc_id", s.doc_id},
              {"score", s.score},
              {"classifier_id", s.classifier_id},
              {"token_count", s.token_count}};
}

ScoredDocument scored_document_from_json(const json& j) {
  ScoredDocument s;
  s.doc_id = j.at("doc_id").get<std::string>();
  s.score = j.at("score").get<double>();
  s.classifier_id = j.value("classifier_id", std::string());
  s.token_count = j.value("token_count", std::uint64_t{0});
  if (!std::isfinite(s.score) || s.score < 0.0 || s.score > 1.0) {
    throw Error(ErrorCode::kMalformedRecord, "score outside [0,1] for '" + s.doc_id + "'");
  }
  return s;
}

ScoredDocument score(const ClassifierModel& model, const Document& doc) {
  return ScoredDocument{doc.id, model.score(doc.text), model.train_config_hash(), doc.token_count};
}

std::vector<ScoredDocument> score_corpus(const ClassifierModel& model, const CorpusManifest& manifest,
                                         const std::filesystem::path& out_path) {
  std::vector<ScoredDocument> scores;
  scores.reserve(manifest.document_count);
  std::vector<Document> batch;
  const std::size_t workers = std::max(1U, std::thread::hardware_concurrency());
  auto flush = [&] {
    const std::size_t base = scores.size();
    scores.resize(base + batch.size());
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < std::min(workers, batch.size()); ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < batch.size(); i = next++) {
          scores[base + i] = score(model, batch[i]);
        }
      });
    }
    pool.clear();
    batch.clear();
  };
  for_each_document(manifest, [&](Document&& d) {
    batch.push_back(std::move(d));
    if (batch.size() == 4096) flush();
  });
  if (!batch.empty()) flush();
  write_scores(scores, out_path);
  return scores;
}

std::vector<ScoredDocument> read_scores(const std::filesystem::path& path) {
  std::vector<ScoredDocument> out;
  LineReader reader(path);
  std::string line;
  while (reader.next(line)) {
    if (trim(line).empty()) continue;
    try {
      out.push_back(scored_document_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kMalformedRecord, path.string() + ": " + e.what());
    }
  }
  return out;
}

void write_scores(const std::vector<ScoredDocument>& scores, const std::filesystem::path& path) {
  LineWriter w(path);
  for (const auto& s : scores) w.write_line(to_json(s).dump());
  w.commit();
}

}  // namespace recycle
