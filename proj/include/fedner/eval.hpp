#pragma once

#include <compare>
#include <string>
#include <vector>

namespace fedner::eval {

/// Half-open token range [start, end) of one typed entity.
struct Span {
  int start = 0;
  int end = 0;
  std::string type;
  auto operator<=>(const Span&) const = default;
};

/// BIO tags -> spans. Maximal B-t (I-t)* runs; an I-t with no open span of
/// type t starts a new span (repair at extraction; the CRF itself is
/// unconstrained).
std::vector<Span> extract_spans(const std::vector<std::string>& tags);

/// Spans -> BIO tags over a sentence of the given length. Inverse of
/// extract_spans on legal inputs.
std::vector<std::string> tags_of_spans(int length,
                                       const std::vector<Span>& spans);

struct Counts {
  long long tp = 0;         // prediction-side true positives
  long long gold_hits = 0;  // gold spans recalled (== tp under strict)
  long long pred = 0;
  long long gold = 0;
  Counts& operator+=(const Counts& o) {
    tp += o.tp;
    gold_hits += o.gold_hits;
    pred += o.pred;
    gold += o.gold;
    return *this;
  }
};

struct Prf {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
};

/// Empty denominators yield 0.
Prf prf_from(const Counts& c);

/// Exact (start, end, type) matching; each gold span matches at most one
/// prediction.
Counts strict_counts(const std::vector<Span>& gold,
                     const std::vector<Span>& pred);

/// Overlap matching: a prediction is a TP iff it shares >= 1 token index with
/// some gold span (same type when require_type). A gold span is recalled iff
/// overlapped by some matching prediction; precision counts predictions
/// independently, recall counts each gold span once.
Counts relax_counts(const std::vector<Span>& gold,
                    const std::vector<Span>& pred, bool require_type = true);

inline Prf strict_prf(const std::vector<Span>& gold,
                      const std::vector<Span>& pred) {
  return prf_from(strict_counts(gold, pred));
}
inline Prf relax_prf(const std::vector<Span>& gold,
                     const std::vector<Span>& pred, bool require_type = true) {
  return prf_from(relax_counts(gold, pred, require_type));
}

}  // namespace fedner::eval
