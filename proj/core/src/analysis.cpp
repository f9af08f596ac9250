#include "recycle/analysis.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>
#include <thread>
#include <unordered_map>

#include <absl/container/flat_hash_map.h>
#include <absl/container/flat_hash_set.h>
#include <boost/math/distributions/students_t.hpp>

#include "recycle/detail/shuffle.hpp"
#include "recycle/error.hpp"
#include "recycle/text.hpp"

namespace recycle {

using nlohmann::json;

// ---- rank correlation -------------------------------------------------------

std::vector<PairedScores> pair_scores(std::span<const ScoredDocument> raw,
                                      std::span<const ScoredDocument> rewritten) {
  std::unordered_map<std::string_view, double> rw;
  for (const auto& s : rewritten) rw[s.doc_id] = s.score;
  std::vector<PairedScores> out;
  for (const auto& s : raw) {
    if (auto it = rw.find(s.doc_id); it != rw.end()) out.push_back({s.doc_id, s.score, it->second});
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.doc_id < b.doc_id; });
  out.erase(std::unique(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.doc_id == b.doc_id; }),
            out.end());
  return out;
}

std::vector<double> midranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[idx[j + 1]] == values[idx[i]]) ++j;
    const double rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

double spearman_p_value(double rho, std::uint64_t n) {
  if (n < 3) throw Error(ErrorCode::kTooFewPairs, "need at least 3 pairs");
  const double r2 = rho * rho;
  if (r2 >= 1.0) return 0.0;
  const double df = static_cast<double>(n - 2);
  const double t = std::fabs(rho) * std::sqrt(df / (1.0 - r2));
  const boost::math::students_t dist(df);
  return std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, t)));
}

SpearmanResult spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error(ErrorCode::kInvalidArgument, "score lists differ in length");
  const std::size_t n = x.size();
  if (n < 3) throw Error(ErrorCode::kTooFewPairs, "need at least 3 pairs, got " + std::to_string(n));
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(x[i]) || !std::isfinite(y[i])) {
      throw Error(ErrorCode::kInvalidArgument, "non-finite score");
    }
  }
  const std::vector<double> rx = midranks(x);
  const std::vector<double> ry = midranks(y);
  const double mean = (static_cast<double>(n) + 1.0) / 2.0;  // midranks always average (n+1)/2
  double sxy = 0.0;
  double sxx = 0.0;
  double syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = rx[i] - mean;
    const double dy = ry[i] - mean;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) {
    throw Error(ErrorCode::kDegenerateVariance, "all scores equal on one side; rank correlation undefined");
  }
  SpearmanResult r;
  r.n = n;
  r.rho = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  r.p_value = spearman_p_value(r.rho, n);
  return r;
}

SpearmanResult spearman(std::span<const PairedScores> pairs) {
  std::vector<double> x;
  std::vector<double> y;
  x.reserve(pairs.size());
  y.reserve(pairs.size());
  for (const auto& p : pairs) {
    x.push_back(p.raw_score);
    y.push_back(p.rewritten_score);
  }
  return spearman(x, y);
}

json to_json(const SpearmanResult& r) {
  return json{{"rho", r.rho}, {"p_value", r.p_value}, {"n", r.n}};
}

SpearmanResult spearman_result_from_json(const json& j) {
  return SpearmanResult{j.at("rho").get<double>(), j.at("p_value").get<double>(), j.at("n").get<std::uint64_t>()};
}

// ---- embeddings ---------------------------------------------------------------

FileEmbeddingProvider::FileEmbeddingProvider(const std::filesystem::path& tsv)
    : id_("file:" + tsv.string()) {
  std::ifstream in(tsv, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoFailure, "cannot open " + tsv.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos) {
      throw Error(ErrorCode::kMalformedRecord, tsv.string() + ":" + std::to_string(line_no) + ": no vector");
    }
    std::vector<double> values;
    std::size_t pos = tab + 1;
    while (pos <= line.size()) {
      std::size_t next = line.find('\t', pos);
      if (next == std::string::npos) next = line.size();
      const std::string field = line.substr(pos, next - pos);
      try {
        std::size_t used = 0;
        values.push_back(std::stod(field, &used));
        if (used != field.size()) throw std::invalid_argument(field);
      } catch (const std::exception&) {
        throw Error(ErrorCode::kMalformedRecord,
                    tsv.string() + ":" + std::to_string(line_no) + ": bad component '" + field + "'");
      }
      pos = next + 1;
    }
    table_[line.substr(0, tab)] = std::move(values);
  }
}

std::vector<std::optional<std::vector<double>>> FileEmbeddingProvider::embed(std::span<const Document> docs) {
  std::vector<std::optional<std::vector<double>>> out;
  out.reserve(docs.size());
  for (const auto& d : docs) {
    const std::string tagged = std::string(to_string(d.source_tag)) + ":" + d.id;
    if (auto it = table_.find(tagged); it != table_.end()) {
      out.emplace_back(it->second);
    } else if (auto plain = table_.find(d.id); plain != table_.end()) {
      out.emplace_back(plain->second);
    } else {
      out.emplace_back(std::nullopt);
    }
  }
  return out;
}

HttpEmbeddingProvider::HttpEmbeddingProvider(HttpEmbeddingOptions options, TransportFactory transport)
    : id_("http:" + options.endpoint_url + "#" + options.model_name),
      options_(std::move(options)),
      transport_(std::move(transport)) {
  if (!transport_) {
    HttpClientOptions http;
    http.bearer_token = bearer_token_from_env();
    transport_ = http_transport_factory(HttpEndpoint::parse(options_.endpoint_url).origin, http);
  }
  if (options_.batch_size == 0) options_.batch_size = 1;
  if (options_.max_concurrency == 0) options_.max_concurrency = 1;
}

std::vector<std::optional<std::vector<double>>> HttpEmbeddingProvider::embed(std::span<const Document> docs) {
  std::vector<std::optional<std::vector<double>>> out(docs.size());
  const std::string path = HttpEndpoint::parse(options_.endpoint_url).path_for("/v1/embeddings");
  const std::size_t batches = (docs.size() + options_.batch_size - 1) / options_.batch_size;
  std::atomic<std::size_t> next{0};
  auto work = [&](std::size_t worker) {
    std::unique_ptr<HttpTransport> http = transport_();
    Backoff backoff(std::chrono::milliseconds(options_.retry_base_ms),
                    std::chrono::milliseconds(options_.retry_cap_ms), worker);
    for (std::size_t b = next++; b < batches; b = next++) {
      const std::size_t lo = b * options_.batch_size;
      const std::size_t hi = std::min(docs.size(), lo + options_.batch_size);
      json input = json::array();
      for (std::size_t i = lo; i < hi; ++i) input.push_back(docs[i].text);
      const std::string body = json{{"model", options_.model_name}, {"input", input}}.dump();
      for (std::uint32_t attempt = 0; attempt <= options_.retry_limit; ++attempt) {
        const HttpResponse res = http->post_json(path, body);
        if (res.ok()) {
          try {
            const json j = json::parse(res.body);
            const json& data = j.at("data");
            for (std::size_t k = 0; k < data.size(); ++k) {
              const std::size_t index = data[k].value("index", k);
              if (index < hi - lo) out[lo + index] = data[k].at("embedding").get<std::vector<double>>();
            }
          } catch (const json::exception&) {
          }
          break;
        }
        if (!is_retryable_status(res.status)) break;
        if (attempt < options_.retry_limit) std::this_thread::sleep_for(backoff.delay(attempt));
      }
    }
  };
  std::vector<std::jthread> pool;
  for (std::size_t w = 0; w < std::min<std::size_t>(options_.max_concurrency, std::max<std::size_t>(batches, 1)); ++w) {
    pool.emplace_back(work, w);
  }
  return out;
}

std::unique_ptr<EmbeddingProvider> make_embedding_provider(const std::string& spec) {
  if (spec.starts_with("file:")) return std::make_unique<FileEmbeddingProvider>(spec.substr(5));
  if (spec.starts_with("http:") || spec.starts_with("https:")) {
    HttpEmbeddingOptions opts;
    // "http:<url>" where <url> carries its own scheme, or a bare URL.
    const bool bare = spec.starts_with("http://") || spec.starts_with("https://");
    const std::string rest = bare ? spec : spec.substr(5);
    const std::size_t hash = rest.rfind('#');
    opts.endpoint_url = rest.substr(0, hash);
    if (hash != std::string::npos) opts.model_name = rest.substr(hash + 1);
    return std::make_unique<HttpEmbeddingProvider>(opts);
  }
  throw Error(ErrorCode::kConfigInvalid, "unknown embedding provider '" + spec + "'");
}

void write_embeddings_tsv(const std::vector<EmbeddingVector>& vectors, const std::filesystem::path& path) {
  std::ostringstream out;
  out << std::setprecision(17);
  for (const auto& v : vectors) {
    out << v.doc_id;
    for (double x : v.values) out << '\t' << x;
    out << '\n';
  }
  atomic_write_file(path, out.str());
}

std::optional<double> cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "vector dimensions differ: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  }
  double dot = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return std::nullopt;
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

CosineDistribution cosine_similarity_distribution(std::span<const Document> a, std::span<const Document> b,
                                                  EmbeddingProvider& provider_a, EmbeddingProvider& provider_b) {
  CosineDistribution dist;
  std::unordered_map<std::string_view, std::size_t> b_index;
  for (std::size_t i = 0; i < b.size(); ++i) b_index.emplace(b[i].id, i);
  std::vector<Document> left;
  std::vector<Document> right;
  std::unordered_map<std::string_view, bool> matched;
  for (const auto& d : a) {
    if (auto it = b_index.find(d.id); it != b_index.end()) {
      left.push_back(d);
      right.push_back(b[it->second]);
      matched[b[it->second].id] = true;
    } else {
      dist.unpaired.push_back(d.id);
    }
  }
  for (const auto& d : b) {
    if (!matched.contains(d.id)) dist.unpaired.push_back(d.id);
  }
  const auto va = provider_a.embed(left);
  const auto vb = provider_b.embed(right);
  std::optional<std::size_t> dim;
  for (std::size_t i = 0; i < left.size(); ++i) {
    if (!va[i] || !vb[i]) {
      dist.provider_failures.push_back(left[i].id);
      continue;
    }
    if (!dim) dim = va[i]->size();
    if (va[i]->size() != *dim || vb[i]->size() != *dim) {
      throw Error(ErrorCode::kDimensionMismatch, "embedding dimension changes at '" + left[i].id + "'");
    }
    if (auto c = cosine_similarity(*va[i], *vb[i])) {
      dist.values.push_back({left[i].id, *c});
    } else {
      dist.skipped_zero_norm.push_back(left[i].id);
    }
  }
  return dist;
}

// ---- kernel density -------------------------------------------------------------

namespace {

double linear_quantile(const std::vector<double>& sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

double silverman_bandwidth(std::span<const double> samples) {
  if (samples.size() < 2) throw Error(ErrorCode::kTooFewSamples, "need at least 2 samples");
  std::vector<double> s(samples.begin(), samples.end());
  std::sort(s.begin(), s.end());
  double mean = 0.0;
  for (double v : s) mean += v;
  mean /= static_cast<double>(s.size());
  double var = 0.0;
  for (double v : s) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(s.size() - 1));
  const double iqr = linear_quantile(s, 0.75) - linear_quantile(s, 0.25);
  double spread = iqr > 0.0 ? std::min(sd, iqr / 1.34) : sd;
  if (!(spread > 0.0)) throw Error(ErrorCode::kInvalidArgument, "samples have zero spread; give a bandwidth");
  return 0.9 * spread * std::pow(static_cast<double>(s.size()), -0.2);
}

std::vector<DensityPoint> kde(std::span<const double> samples, double bandwidth, std::span<const double> grid) {
  if (samples.size() < 2) throw Error(ErrorCode::kTooFewSamples, "need at least 2 samples");
  if (!(bandwidth > 0.0) || !std::isfinite(bandwidth)) {
    throw Error(ErrorCode::kInvalidArgument, "bandwidth must be positive");
  }
  std::vector<double> s(samples.begin(), samples.end());
  std::sort(s.begin(), s.end());
  // Kernels beyond 12 bandwidths contribute below exp(-72) relative.
  const double reach = 12.0 * bandwidth;
  const double norm = 1.0 / (static_cast<double>(s.size()) * bandwidth * std::sqrt(2.0 * std::numbers::pi));
  std::vector<DensityPoint> out;
  out.reserve(grid.size());
  for (double x : grid) {
    const auto lo = std::lower_bound(s.begin(), s.end(), x - reach);
    const auto hi = std::upper_bound(lo, s.end(), x + reach);
    double sum = 0.0;
    for (auto it = lo; it != hi; ++it) {
      const double u = (x - *it) / bandwidth;
      sum += std::exp(-0.5 * u * u);
    }
    out.push_back({x, sum * norm});
  }
  return out;
}

std::vector<double> kde_grid(std::span<const double> samples, double bandwidth, std::size_t points, double pad) {
  if (samples.empty()) throw Error(ErrorCode::kTooFewSamples, "no samples");
  if (points < 2) throw Error(ErrorCode::kInvalidArgument, "grid needs at least 2 points");
  const auto [mn, mx] = std::minmax_element(samples.begin(), samples.end());
  const double lo = *mn - pad * bandwidth;
  const double hi = *mx + pad * bandwidth;
  std::vector<double> grid(points);
  for (std::size_t i = 0; i < points; ++i) {
    grid[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1);
  }
  return grid;
}

double trapezoid(std::span<const DensityPoint> curve) {
  double area = 0.0;
  for (std::size_t i = 1; i < curve.size(); ++i) {
    area += 0.5 * (curve[i].density + curve[i - 1].density) * (curve[i].x - curve[i - 1].x);
  }
  return area;
}

// ---- n-gram diversity -------------------------------------------------------------

struct BigramCounter::State {
  absl::flat_hash_map<std::string, std::uint32_t> vocab;
  absl::flat_hash_set<std::uint64_t> seen;  // (first id << 32) | second id
};

BigramCounter::BigramCounter() : state_(std::make_unique<State>()) {}
BigramCounter::~BigramCounter() = default;
BigramCounter::BigramCounter(BigramCounter&&) noexcept = default;
BigramCounter& BigramCounter::operator=(BigramCounter&&) noexcept = default;

void BigramCounter::add(std::string_view text) {
  const std::string lower = to_lower(text);
  std::uint32_t prev = 0;
  bool have_prev = false;
  for (std::string_view w : split_whitespace(lower)) {
    const auto [it, fresh] = state_->vocab.try_emplace(absl::string_view(w.data(), w.size()), static_cast<std::uint32_t>(state_->vocab.size()));
    const std::uint32_t id = it->second;
    if (have_prev) state_->seen.insert((static_cast<std::uint64_t>(prev) << 32) | id);
    prev = id;
    have_prev = true;
  }
}

std::uint64_t BigramCounter::unique() const noexcept { return state_->seen.size(); }

std::uint64_t unique_bigrams(std::span<const Document> docs) {
  BigramCounter counter;
  for (const auto& d : docs) counter.add(d.text);
  return counter.unique();
}

std::string_view to_string(CurveAxis a) noexcept {
  return a == CurveAxis::kDocuments ? "documents" : "tokens";
}

std::vector<std::size_t> sample_order(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  deterministic_shuffle(order, seed);
  return order;
}

DiversityCurve diversity_curve(std::span<const Document> corpus, CurveAxis axis,
                               std::span<const std::uint64_t> sample_sizes, std::uint64_t seed) {
  for (std::size_t i = 1; i < sample_sizes.size(); ++i) {
    if (sample_sizes[i] <= sample_sizes[i - 1]) {
      throw Error(ErrorCode::kInvalidArgument, "sample sizes must be strictly increasing");
    }
  }
  std::uint64_t total_tokens = 0;
  for (const auto& d : corpus) total_tokens += d.token_count;
  if (!sample_sizes.empty()) {
    const std::uint64_t largest = sample_sizes.back();
    const std::uint64_t available = axis == CurveAxis::kDocuments ? corpus.size() : total_tokens;
    if (largest > available) {
      throw Error(ErrorCode::kSampleTooLarge, "sample size " + std::to_string(largest) + " exceeds corpus " +
                                                  std::string(to_string(axis)) + " " + std::to_string(available));
    }
  }
  DiversityCurve curve;
  curve.axis = axis;
  curve.seed = seed;
  const std::vector<std::size_t> order = sample_order(corpus.size(), seed);
  BigramCounter counter;
  std::size_t taken = 0;
  std::uint64_t tokens = 0;
  for (std::uint64_t size : sample_sizes) {
    if (axis == CurveAxis::kDocuments) {
      while (taken < size) {
        const Document& d = corpus[order[taken++]];
        counter.add(d.text);
        tokens += d.token_count;
      }
    } else {
      while (tokens < size && taken < order.size()) {
        const Document& d = corpus[order[taken++]];
        counter.add(d.text);
        tokens += d.token_count;
      }
    }
    curve.points.push_back({size, taken, tokens, counter.unique()});
  }
  return curve;
}

// ---- length statistics -------------------------------------------------------------

LengthStats length_stats(std::span<const std::uint64_t> token_counts) {
  if (token_counts.empty()) throw Error(ErrorCode::kEmptyCorpus, "no documents");
  std::vector<std::uint64_t> v(token_counts.begin(), token_counts.end());
  std::sort(v.begin(), v.end());
  LengthStats s;
  s.count = v.size();
  s.min = v.front();
  s.max = v.back();
  s.median = v[(v.size() - 1) / 2];
  long double sum = 0.0L;
  for (auto x : v) sum += x;
  s.mean = std::round(static_cast<double>(sum / v.size()) * 100.0) / 100.0;
  return s;
}

LengthStats length_stats(std::span<const Document> corpus) {
  std::vector<std::uint64_t> counts;
  counts.reserve(corpus.size());
  for (const auto& d : corpus) counts.push_back(d.token_count);
  return length_stats(counts);
}

// ---- reports -----------------------------------------------------------------------

json to_json(const DiversityCurve& c) {
  json points = json::array();
  for (const auto& p : c.points) {
    points.push_back(json{{"sample_size", p.sample_size},
                          {"documents", p.documents},
                          {"tokens", p.tokens},
                          {"unique_bigrams", p.unique_bigrams}});
  }
  return json{{"axis", to_string(c.axis)},
              {"seed", c.seed},
              {"tokenization", kBigramTokenization},
              {"points", points}};
}

json to_json(const LengthStats& s) {
  return json{{"count", s.count}, {"min", s.min}, {"max", s.max}, {"mean", s.mean}, {"median", s.median}};
}

std::string to_csv(const DiversityCurve& c) {
  std::ostringstream out;
  out << "# " << kBigramTokenization << "; axis=" << to_string(c.axis) << "; seed=" << c.seed << "\n";
  out << "sample_size,documents,tokens,unique_bigrams\n";
  for (const auto& p : c.points) {
    out << p.sample_size << ',' << p.documents << ',' << p.tokens << ',' << p.unique_bigrams << "\n";
  }
  return out.str();
}

std::string to_csv(std::span<const DensityPoint> curve) {
  std::ostringstream out;
  out << std::setprecision(17) << "x,density\n";
  for (const auto& p : curve) out << p.x << ',' << p.density << "\n";
  return out.str();
}

std::string to_csv(const CosineDistribution& d) {
  std::ostringstream out;
  out << std::setprecision(17) << "doc_id,cosine\n";
  for (const auto& r : d.values) out << r.doc_id << ',' << r.cosine << "\n";
  return out.str();
}

}  // namespace recycle
