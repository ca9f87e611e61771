#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fedner/crf.hpp"
#include "fedner/grad_check.hpp"

#include <cmath>
#include <random>
#include <vector>

using namespace fedner;

namespace {

// Exhaustive oracle: every one of the L^k paths, scored by the plain-value
// path arithmetic. Written and trusted before the forward recursion.
std::vector<std::vector<int>> all_paths(int k, int labels) {
  std::vector<std::vector<int>> out{{}};
  for (int t = 0; t < k; ++t) {
    std::vector<std::vector<int>> next;
    for (const auto& p : out) {
      for (int l = 0; l < labels; ++l) {
        auto q = p;
        q.push_back(l);
        next.push_back(std::move(q));
      }
    }
    out = std::move(next);
  }
  return out;
}

double brute_log_partition(const Matrix& emissions, const Matrix& trans) {
  const int k = static_cast<int>(emissions.rows());
  const int labels = static_cast<int>(emissions.cols());
  double best = -1e300;
  std::vector<double> scores;
  for (const auto& path : all_paths(k, labels)) {
    scores.push_back(crf::path_score(emissions, trans, path));
    best = std::max(best, scores.back());
  }
  double acc = 0;
  for (double s : scores) acc += std::exp(s - best);
  return best + std::log(acc);
}

Matrix random_matrix(int rows, int cols, std::mt19937_64& rng, double lo = -2,
                     double hi = 2) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) m(i, j) = dist(rng);
  }
  return m;
}

std::vector<int> random_path(int k, int labels, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> dist(0, labels - 1);
  std::vector<int> path;
  for (int t = 0; t < k; ++t) path.push_back(dist(rng));
  return path;
}

}  // namespace

TEST_CASE("single-step partition is a plain logsumexp") {
  Matrix e(1, 2);
  e << 1.5, -0.25;
  Tape t;
  Var lp = crf::log_partition(t.leaf(e), t.leaf(Matrix::Zero(4, 4)));
  CHECK(t.value(lp)(0, 0) ==
        doctest::Approx(std::log(std::exp(1.5) + std::exp(-0.25))));
}

TEST_CASE("all-zero scores, k=2 L=3: nine equal paths") {
  Tape t;
  Var lp = crf::log_partition(t.leaf(Matrix::Zero(2, 3)),
                              t.leaf(Matrix::Zero(5, 5)));
  CHECK(t.value(lp)(0, 0) == doctest::Approx(std::log(9.0)));
}

TEST_CASE("log_partition matches exhaustive enumeration") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const int k = 1 + static_cast<int>(rng() % 5);
    const int labels = 1 + static_cast<int>(rng() % 4);
    const Matrix e = random_matrix(k, labels, rng);
    const Matrix trans = random_matrix(labels + 2, labels + 2, rng);
    Tape t;
    Var lp = crf::log_partition(t.leaf(e), t.leaf(trans));
    CHECK(std::abs(t.value(lp)(0, 0) - brute_log_partition(e, trans)) <=
          1e-8);
  }
}

TEST_CASE("sequence_score spec points") {
  SUBCASE("k=1, zero transitions, pick label 1") {
    Matrix e(1, 2);
    e << 2, 5;
    Tape t;
    Var s = crf::sequence_score(t.leaf(e), t.leaf(Matrix::Zero(4, 4)), {1});
    CHECK(t.value(s)(0, 0) == doctest::Approx(5.0));
  }
  SUBCASE("k=2, zero transitions: additive emissions") {
    std::mt19937_64 rng(5);
    const Matrix e = random_matrix(2, 3, rng);
    Tape t;
    Var s =
        crf::sequence_score(t.leaf(e), t.leaf(Matrix::Zero(5, 5)), {0, 1});
    CHECK(t.value(s)(0, 0) == doctest::Approx(e(0, 0) + e(1, 1)));
  }
  SUBCASE("random instance: equals the plain-value recomputation") {
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 20; ++trial) {
      const int k = 1 + static_cast<int>(rng() % 4);
      const int labels = 1 + static_cast<int>(rng() % 4);
      const Matrix e = random_matrix(k, labels, rng);
      const Matrix trans = random_matrix(labels + 2, labels + 2, rng);
      const auto path = random_path(k, labels, rng);
      Tape t;
      Var s = crf::sequence_score(t.leaf(e), t.leaf(trans), path);
      CHECK(t.value(s)(0, 0) ==
            doctest::Approx(crf::path_score(e, trans, path)));
    }
  }
  SUBCASE("label out of range") {
    Tape t;
    CHECK_THROWS(crf::sequence_score(t.leaf(Matrix::Zero(1, 2)),
                                     t.leaf(Matrix::Zero(4, 4)), {2}));
  }
}

TEST_CASE("negative log-likelihood") {
  SUBCASE("single label: only one path, loss is zero") {
    std::mt19937_64 rng(8);
    const Matrix e = random_matrix(3, 1, rng);
    const Matrix trans = random_matrix(3, 3, rng);
    Tape t;
    Var nll = crf::neg_log_likelihood(t.leaf(e), t.leaf(trans), {0, 0, 0});
    CHECK(std::abs(t.value(nll)(0, 0)) <= 1e-9);
  }
  SUBCASE("matches -log softmax over enumerated path scores") {
    std::mt19937_64 rng(9);
    const Matrix e = random_matrix(3, 3, rng);
    const Matrix trans = random_matrix(5, 5, rng);
    const std::vector<int> gold = {2, 0, 1};
    Tape t;
    Var nll = crf::neg_log_likelihood(t.leaf(e), t.leaf(trans), gold);
    const double expect = brute_log_partition(e, trans) -
                          crf::path_score(e, trans, gold);
    CHECK(std::abs(t.value(nll)(0, 0) - expect) <= 1e-8);
  }
  SUBCASE("a +1000 emission bonus on the gold path drives loss to zero") {
    std::mt19937_64 rng(10);
    Matrix e = random_matrix(3, 3, rng);
    const std::vector<int> gold = {0, 2, 1};
    for (int t = 0; t < 3; ++t) e(t, gold[static_cast<size_t>(t)]) += 1000.0;
    Tape t;
    Var nll = crf::neg_log_likelihood(t.leaf(e),
                                      t.leaf(random_matrix(5, 5, rng)), gold);
    CHECK(t.value(nll)(0, 0) <= 1e-6);
    CHECK(t.value(nll)(0, 0) >= -1e-9);
  }
}

TEST_CASE("viterbi decoding") {
  SUBCASE("emission argmax with zero transitions") {
    Matrix e(2, 2);
    e << 1, 0, 0, 1;
    CHECK(crf::viterbi_decode(e, Matrix::Zero(4, 4)) ==
          std::vector<int>{0, 1});
  }
  SUBCASE("all-zero scores tie-break toward the lowest index") {
    CHECK(crf::viterbi_decode(Matrix::Zero(3, 3), Matrix::Zero(5, 5)) ==
          std::vector<int>{0, 0, 0});
  }
  SUBCASE("score equals the exhaustive maximum") {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 50; ++trial) {
      const int k = 1 + static_cast<int>(rng() % 4);
      const int labels = 1 + static_cast<int>(rng() % 4);
      const Matrix e = random_matrix(k, labels, rng);
      const Matrix trans = random_matrix(labels + 2, labels + 2, rng);
      const auto path = crf::viterbi_decode(e, trans);
      double best = -1e300;
      for (const auto& p : all_paths(k, labels)) {
        best = std::max(best, crf::path_score(e, trans, p));
      }
      CHECK(crf::path_score(e, trans, path) == doctest::Approx(best));
    }
  }
  SUBCASE("empty sentence is an error") {
    CHECK_THROWS(crf::viterbi_decode(Matrix(0, 2), Matrix::Zero(4, 4)));
  }
}

TEST_CASE("path probabilities normalize to one") {
  std::mt19937_64 rng(14);
  for (int trial = 0; trial < 20; ++trial) {
    const int k = 1 + static_cast<int>(rng() % 5);
    const int labels = 1 + static_cast<int>(rng() % 4);
    const Matrix e = random_matrix(k, labels, rng);
    const Matrix trans = random_matrix(labels + 2, labels + 2, rng);
    const double logz = brute_log_partition(e, trans);
    double total = 0;
    double best_path = -1e300;
    for (const auto& p : all_paths(k, labels)) {
      total += std::exp(crf::path_score(e, trans, p) - logz);
      best_path = std::max(best_path, crf::path_score(e, trans, p));
    }
    CHECK(std::abs(total - 1.0) <= 1e-8);
    // Viterbi optimality against the same enumeration.
    const auto vit = crf::viterbi_decode(e, trans);
    CHECK(crf::path_score(e, trans, vit) >= best_path - 1e-9);
  }
}

TEST_CASE("nll emission gradient equals marginals minus one-hot gold") {
  std::mt19937_64 rng(15);
  const int k = 3, labels = 3;
  const Matrix e = random_matrix(k, labels, rng);
  const Matrix trans = random_matrix(labels + 2, labels + 2, rng);
  const std::vector<int> gold = {1, 2, 0};

  Tape t;
  Var ev = t.leaf(e), tv = t.leaf(trans);
  Var nll = crf::neg_log_likelihood(ev, tv, gold);
  t.backward(nll);

  // Brute-force marginals P(y_t = l).
  const double logz = brute_log_partition(e, trans);
  Matrix marginals = Matrix::Zero(k, labels);
  for (const auto& p : all_paths(k, labels)) {
    const double prob = std::exp(crf::path_score(e, trans, p) - logz);
    for (int step = 0; step < k; ++step) {
      marginals(step, p[static_cast<size_t>(step)]) += prob;
    }
  }
  Matrix expected = marginals;
  for (int step = 0; step < k; ++step) {
    expected(step, gold[static_cast<size_t>(step)]) -= 1.0;
  }
  CHECK((t.grad(ev) - expected).cwiseAbs().maxCoeff() <= 1e-6);

  // And against central finite differences on both inputs.
  auto f = [&](const std::vector<Matrix>& at) {
    Tape t2;
    Var loss =
        crf::neg_log_likelihood(t2.leaf(at[0]), t2.leaf(at[1]), gold);
    return t2.value(loss)(0, 0);
  };
  const double err = finite_difference_check(f, {e, trans},
                                             {t.grad(ev), t.grad(tv)}, 1e-5);
  CHECK(err <= 1e-6);
}

TEST_CASE("constant emission shift in one step moves both terms equally") {
  std::mt19937_64 rng(16);
  const int k = 3, labels = 3;
  const Matrix e = random_matrix(k, labels, rng);
  const Matrix trans = random_matrix(labels + 2, labels + 2, rng);
  const std::vector<int> gold = {0, 1, 2};
  const double c = 1.75;
  Matrix shifted = e;
  shifted.row(1).array() += c;

  Tape t;
  const double lp0 = t.value(crf::log_partition(t.leaf(e), t.leaf(trans)))(0, 0);
  const double lp1 =
      t.value(crf::log_partition(t.leaf(shifted), t.leaf(trans)))(0, 0);
  CHECK(std::abs(lp1 - (lp0 + c)) <= 1e-9);
  const double s0 =
      t.value(crf::sequence_score(t.leaf(e), t.leaf(trans), gold))(0, 0);
  const double s1 =
      t.value(crf::sequence_score(t.leaf(shifted), t.leaf(trans), gold))(0, 0);
  CHECK(std::abs(s1 - (s0 + c)) <= 1e-9);
  const double nll0 = t.value(
      crf::neg_log_likelihood(t.leaf(e), t.leaf(trans), gold))(0, 0);
  const double nll1 = t.value(
      crf::neg_log_likelihood(t.leaf(shifted), t.leaf(trans), gold))(0, 0);
  CHECK(std::abs(nll1 - nll0) <= 1e-9);
}
