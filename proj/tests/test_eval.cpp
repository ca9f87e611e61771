#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fedner/eval.hpp"

#include <algorithm>
#include <random>

using namespace fedner::eval;

namespace {

// Quadratic brute-force relax matcher, the oracle for the production
// implementation.
Counts brute_relax(const std::vector<Span>& gold, const std::vector<Span>& pred,
                   bool require_type) {
  auto overlaps = [&](const Span& a, const Span& b) {
    if (require_type && a.type != b.type) return false;
    return a.start < b.end && b.start < a.end;
  };
  Counts c;
  c.pred = static_cast<long long>(pred.size());
  c.gold = static_cast<long long>(gold.size());
  for (const Span& p : pred) {
    for (const Span& g : gold) {
      if (overlaps(p, g)) {
        ++c.tp;
        break;
      }
    }
  }
  for (const Span& g : gold) {
    for (const Span& p : pred) {
      if (overlaps(p, g)) {
        ++c.gold_hits;
        break;
      }
    }
  }
  return c;
}

std::vector<Span> random_spans(std::mt19937_64& rng, int max_spans,
                               int sentence_len) {
  std::uniform_int_distribution<int> count(0, max_spans);
  std::uniform_int_distribution<int> start(0, sentence_len - 1);
  std::uniform_int_distribution<int> len(1, 3);
  std::uniform_int_distribution<int> type(0, 2);
  std::vector<Span> out;
  const int n = count(rng);
  for (int i = 0; i < n; ++i) {
    Span s;
    s.start = start(rng);
    s.end = std::min(sentence_len, s.start + len(rng));
    s.type = std::string(1, static_cast<char>('A' + type(rng)));
    out.push_back(s);
  }
  return out;
}

}  // namespace

TEST_CASE("extract_spans basics and repair rule") {
  CHECK(extract_spans({"B-DRUG", "I-DRUG", "O"}) ==
        std::vector<Span>{{0, 2, "DRUG"}});
  // Orphan I- opens a fresh span (repair at extraction).
  CHECK(extract_spans({"O", "I-ADE"}) == std::vector<Span>{{1, 2, "ADE"}});
  CHECK(extract_spans({"B-ADE", "B-ADE"}) ==
        std::vector<Span>{{0, 1, "ADE"}, {1, 2, "ADE"}});
  // Type switch inside a run splits the span.
  CHECK(extract_spans({"B-ADE", "I-DRUG"}) ==
        std::vector<Span>{{0, 1, "ADE"}, {1, 2, "DRUG"}});
}

TEST_CASE("extract_spans inverts tags_of_spans on legal input") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 100; ++trial) {
    // Build non-overlapping spans left to right so the BIO encoding is legal.
    std::vector<Span> spans;
    int cursor = 0;
    const int len = 6 + static_cast<int>(rng() % 6);
    while (cursor < len) {
      if (rng() % 2 == 0) {
        Span s;
        s.start = cursor;
        s.end = std::min<int>(len, cursor + 1 + static_cast<int>(rng() % 3));
        s.type = std::string(1, static_cast<char>('A' + rng() % 3));
        spans.push_back(s);
        cursor = s.end;
      } else {
        ++cursor;
      }
    }
    CHECK(extract_spans(tags_of_spans(len, spans)) == spans);
  }
}

TEST_CASE("strict metric spec points") {
  const std::vector<Span> gold = {{0, 2, "A"}, {3, 4, "B"}};
  SUBCASE("perfect prediction") {
    const Prf p = strict_prf(gold, gold);
    CHECK(p.precision == 1.0);
    CHECK(p.recall == 1.0);
    CHECK(p.f1 == 1.0);
  }
  SUBCASE("shifted prediction scores zero") {
    const Prf p = strict_prf({{0, 2, "A"}}, {{1, 3, "A"}});
    CHECK(p.precision == 0.0);
    CHECK(p.recall == 0.0);
    CHECK(p.f1 == 0.0);
  }
  SUBCASE("half recall") {
    const Prf p = strict_prf(gold, {{0, 2, "A"}});
    CHECK(p.precision == 1.0);
    CHECK(p.recall == 0.5);
    CHECK(p.f1 == doctest::Approx(2.0 / 3.0));
  }
  SUBCASE("empty denominators are zero, not NaN") {
    const Prf p = strict_prf({}, {});
    CHECK(p.precision == 0.0);
    CHECK(p.recall == 0.0);
    CHECK(p.f1 == 0.0);
  }
}

TEST_CASE("relax metric spec points") {
  SUBCASE("one-token overlap with matching type is a relax TP, strict FP") {
    const std::vector<Span> gold = {{0, 3, "A"}};
    const std::vector<Span> pred = {{2, 5, "A"}};
    CHECK(strict_counts(gold, pred).tp == 0);
    CHECK(relax_counts(gold, pred).tp == 1);
  }
  SUBCASE("overlap with mismatched type is an FP") {
    const std::vector<Span> gold = {{0, 3, "A"}};
    const std::vector<Span> pred = {{1, 2, "B"}};
    CHECK(relax_counts(gold, pred).tp == 0);
    CHECK(relax_counts(gold, pred, /*require_type=*/false).tp == 1);
  }
  SUBCASE("matches the brute-force matcher on random instances") {
    std::mt19937_64 rng(22);
    for (int trial = 0; trial < 300; ++trial) {
      const auto gold = random_spans(rng, 4, 10);
      const auto pred = random_spans(rng, 4, 10);
      for (bool req : {true, false}) {
        const Counts got = relax_counts(gold, pred, req);
        const Counts want = brute_relax(gold, pred, req);
        CHECK(got.tp == want.tp);
        CHECK(got.gold_hits == want.gold_hits);
        CHECK(got.pred == want.pred);
        CHECK(got.gold == want.gold);
      }
    }
  }
}

TEST_CASE("strict TP never exceeds relax TP") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 200; ++trial) {
    const auto gold = random_spans(rng, 4, 10);
    const auto pred = random_spans(rng, 4, 10);
    CHECK(strict_counts(gold, pred).tp <= relax_counts(gold, pred).tp);
  }
}

TEST_CASE("metrics are permutation-invariant over spans") {
  std::mt19937_64 rng(24);
  auto gold = random_spans(rng, 5, 12);
  auto pred = random_spans(rng, 5, 12);
  const Counts s0 = strict_counts(gold, pred);
  const Counts r0 = relax_counts(gold, pred);
  std::shuffle(gold.begin(), gold.end(), rng);
  std::shuffle(pred.begin(), pred.end(), rng);
  const Counts s1 = strict_counts(gold, pred);
  const Counts r1 = relax_counts(gold, pred);
  CHECK(s0.tp == s1.tp);
  CHECK(r0.tp == r1.tp);
  CHECK(r0.gold_hits == r1.gold_hits);
}

TEST_CASE("F1 boundary laws") {
  // F1 == 0 whenever TP == 0.
  CHECK(strict_prf({{0, 1, "A"}}, {{2, 3, "A"}}).f1 == 0.0);
  // Strict F1 == 1 iff pred == gold (as sets).
  const std::vector<Span> gold = {{0, 1, "A"}, {2, 4, "B"}};
  CHECK(strict_prf(gold, gold).f1 == 1.0);
  CHECK(strict_prf(gold, {{0, 1, "A"}}).f1 < 1.0);
  CHECK(strict_prf(gold, {{0, 1, "A"}, {2, 4, "B"}, {5, 6, "A"}}).f1 < 1.0);
}
