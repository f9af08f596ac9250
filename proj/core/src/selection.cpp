#include "recycle/selection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "recycle/error.hpp"

namespace recycle {

std::uint64_t top_count(double k, std::uint64_t n) {
  const double exact = k * static_cast<double>(n);
  // Absorb the representation error of k before rounding up: 0.07 * 100 is
  // 7.000000000000001 in binary floating point. A few ulps, never a token.
  auto c = static_cast<std::uint64_t>(std::ceil(exact));
  const double slack = 8.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, exact);
  if (c > 0 && exact - static_cast<double>(c - 1) <= slack) --c;
  if (k > 0.0 && c == 0 && n > 0) c = 1;
  return std::min(c, n);
}

namespace {

bool ranks_before(const ScoredDocument& a, const ScoredDocument& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.doc_id < b.doc_id;
}

void check_fraction(double k) {
  if (!(k > 0.0 && k <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "fraction must lie in (0, 1], got " + std::to_string(k));
  }
}

}  // namespace

Selection select_top_fraction(std::span<const ScoredDocument> scored, double k, SelectionMode mode) {
  if (scored.empty()) throw Error(ErrorCode::kEmptyInput, "no scored documents");
  check_fraction(k);

  std::vector<const ScoredDocument*> order;
  order.reserve(scored.size());
  Selection sel;
  for (const auto& s : scored) {
    order.push_back(&s);
    sel.total_tokens += s.token_count;
  }
  auto cmp = [](const ScoredDocument* a, const ScoredDocument* b) { return ranks_before(*a, *b); };

  std::size_t keep = 0;
  if (mode == SelectionMode::kDocuments) {
    keep = static_cast<std::size_t>(top_count(k, scored.size()));
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(), cmp);
  } else {
    std::sort(order.begin(), order.end(), cmp);
    const auto quota = static_cast<double>(sel.total_tokens) * k;
    std::uint64_t acc = 0;
    while (keep < order.size() && (keep == 0 || static_cast<double>(acc) < quota)) {
      acc += order[keep]->token_count;
      ++keep;
    }
  }
  sel.ids.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) {
    sel.ids.push_back(order[i]->doc_id);
    sel.selected_tokens += order[i]->token_count;
  }
  sel.threshold = order[keep - 1]->score;
  return sel;
}

double nearest_rank_quantile(std::vector<double> values, double q) {
  if (values.empty()) throw Error(ErrorCode::kEmptyInput, "no values");
  if (!(q >= 0.0 && q <= 1.0)) throw Error(ErrorCode::kInvalidArgument, "quantile outside [0,1]");
  std::uint64_t rank = top_count(q, values.size());
  if (rank == 0) rank = 1;
  const auto nth = values.begin() + static_cast<std::ptrdiff_t>(rank - 1);
  std::nth_element(values.begin(), nth, values.end());
  return *nth;
}

double score_quantile(std::span<const ScoredDocument> scored, double q) {
  std::vector<double> values;
  values.reserve(scored.size());
  for (const auto& s : scored) values.push_back(s.score);
  return nearest_rank_quantile(std::move(values), q);
}

}  // namespace recycle
