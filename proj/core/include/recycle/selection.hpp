#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "recycle/classifier.hpp"

namespace recycle {

enum class SelectionMode {
  kDocuments,   // keep ceil(k * N) documents
  kTokenMass,   // keep highest-ranked documents until k of all tokens is reached
};

// ceil(k * n), tolerant of the representation error in k (0.07 * 100 is 7).
std::uint64_t top_count(double k, std::uint64_t n);

struct Selection {
  std::vector<std::string> ids;  // ranked: score descending, then id ascending
  std::uint64_t selected_tokens = 0;
  std::uint64_t total_tokens = 0;
  double threshold = 0.0;        // lowest selected score
};

// Global top-k selection. Ties are broken by ascending doc_id so the result
// does not depend on input order. Throws kEmptyInput and kInvalidArgument
// (k outside (0, 1]).
Selection select_top_fraction(std::span<const ScoredDocument> scored, double k,
                              SelectionMode mode = SelectionMode::kDocuments);

// Nearest-rank q-quantile: the ceil(q * N)-th smallest score (1-based,
// at least the first).
double score_quantile(std::span<const ScoredDocument> scored, double q);
double nearest_rank_quantile(std::vector<double> values, double q);

}  // namespace recycle
