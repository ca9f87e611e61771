// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit when any
// gating criterion fails. Criterion 11 needs locally obtained corpora and is
// reported as SKIP (not a failure) when they are absent.

#include "fedner/crf.hpp"
#include "fedner/data.hpp"
#include "fedner/eval.hpp"
#include "fedner/experiment.hpp"
#include "fedner/federated.hpp"
#include "fedner/grad_check.hpp"
#include "fedner/model.hpp"
#include "fedner/synthetic.hpp"
#include "fedner/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <numeric>
#include <random>
#include <string>
#include <vector>

using namespace fedner;

namespace {

int failures = 0;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

void report(int criterion, bool ok, const std::string& detail) {
  std::printf("%s criterion %d: %s\n", ok ? "PASS" : "FAIL", criterion,
              detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

Matrix random_matrix(Eigen::Index rows, Eigen::Index cols,
                     std::mt19937_64& rng, double lo = -2.0, double hi = 2.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = dist(rng);
  }
  return m;
}

bool bitwise_equal(const Vector& a, const Vector& b) {
  return a.size() == b.size() &&
         (a.size() == 0 || std::memcmp(a.data(), b.data(),
                                       sizeof(double) * a.size()) == 0);
}

// --- criterion 1: CRF vs exhaustive path enumeration -----------------------

void all_paths(int length, int labels, std::vector<int>& path,
               std::vector<std::vector<int>>& out) {
  if (static_cast<int>(path.size()) == length) {
    out.push_back(path);
    return;
  }
  for (int l = 0; l < labels; ++l) {
    path.push_back(l);
    all_paths(length, labels, path, out);
    path.pop_back();
  }
}

void criterion_1() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(101);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const int k = 1 + static_cast<int>(rng() % 5);  // sequence length
    const int L = 1 + static_cast<int>(rng() % 4);  // label count
    const Matrix emissions = random_matrix(k, L, rng);
    const Matrix transitions = random_matrix(L + 2, L + 2, rng);

    std::vector<std::vector<int>> paths;
    std::vector<int> scratch;
    all_paths(k, L, scratch, paths);
    double best = -1e300;
    std::vector<double> scores;
    for (const auto& p : paths) {
      scores.push_back(crf::path_score(emissions, transitions, p));
      best = std::max(best, scores.back());
    }
    double acc = 0.0;
    for (double s : scores) acc += std::exp(s - best);
    const double brute_log_z = best + std::log(acc);

    Tape tape;
    const Var e = tape.leaf(emissions);
    const Var t = tape.leaf(transitions);
    const double log_z = tape.value(crf::log_partition(e, t))(0, 0);
    worst = std::max(worst, std::abs(log_z - brute_log_z));

    const std::vector<int>& gold = paths[rng() % paths.size()];
    const double nll = tape.value(crf::neg_log_likelihood(e, t, gold))(0, 0);
    const double brute_nll =
        brute_log_z - crf::path_score(emissions, transitions, gold);
    worst = std::max(worst, std::abs(nll - brute_nll));

    const std::vector<int> decoded = crf::viterbi_decode(emissions, transitions);
    const double vit = crf::path_score(emissions, transitions, decoded);
    worst = std::max(worst, std::abs(vit - best));
  }
  const double dt = seconds_since(t0);
  report(1, worst <= 1e-8 && dt < 10.0,
         "CRF log-partition/NLL/Viterbi vs exhaustive enumeration, 200 "
         "instances, max |diff| " +
             fmt(worst) + " (" + fmt(dt) + " s)");
}

// --- criterion 2: end-to-end finite-difference gradient check --------------

void criterion_2() {
  const auto t0 = std::chrono::steady_clock::now();
  Corpus c;
  c.platform = "t";
  LabeledSentence base;
  base.tokens = {"alpha", "beta", "gamma", "ab", "ba", "x"};
  base.tags.assign(6, "O");
  base.provenance = {"t", "d", 0};
  c.sentences.push_back(base);
  const Vocab vocab = build_vocab({c});

  ModelConfig cfg;
  cfg.word_dim = 4;
  cfg.char_dim = 3;
  cfg.filters = 2;
  cfg.hidden = 3;
  cfg.dropout = 0.0;
  const ParameterStore params = init_params(cfg, vocab, 3, 23);
  LabeledSentence s;
  s.tokens = {"alpha", "beta", "x"};
  s.tags.assign(3, "O");
  s.provenance = {"t", "d", 0};
  const std::vector<int> gold = {0, 2, 1};
  const std::vector<std::string> names = params.names();

  auto loss_at = [&](const std::vector<Matrix>& values) {
    ParameterStore p;
    for (size_t i = 0; i < names.size(); ++i) p.add(names[i], values[i]);
    ForwardTrace tr = model_forward(s, p, cfg, vocab, ContextualProvider(), 3,
                                    false, nullptr);
    return tr.tape->value(sentence_loss(tr, gold))(0, 0);
  };

  ForwardTrace tr = model_forward(s, params, cfg, vocab, ContextualProvider(),
                                  3, false, nullptr);
  tr.tape->backward(sentence_loss(tr, gold));
  std::vector<Matrix> at, analytic;
  for (const auto& name : names) {
    at.push_back(params.at(name));
    analytic.push_back(tr.tape->grad(tr.param_vars.at(name)));
  }
  const double err = finite_difference_check(loss_at, at, analytic, 1e-5);
  const double dt = seconds_since(t0);
  report(2, err <= 1e-4 && dt < 60.0,
         "end-to-end loss gradient vs central finite differences over every "
         "parameter group, max rel err " +
             fmt(err) + " (" + fmt(dt) + " s)");
}

// --- criterion 3: size-weighted aggregation law ----------------------------

void criterion_3() {
  std::mt19937_64 rng(103);
  double worst = 0.0, worst_weight = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 6);
    const int dim = 1 + static_cast<int>(rng() % 30);
    std::vector<GradientPacket> packets(static_cast<size_t>(n));
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      packets[static_cast<size_t>(i)].platform_id =
          static_cast<std::uint32_t>(i);
      packets[static_cast<size_t>(i)].round = 7;
      packets[static_cast<size_t>(i)].sample_weight = 1 + rng() % 10000;
      packets[static_cast<size_t>(i)].shared_grad =
          random_matrix(dim, 1, rng, -1.0, 1.0);
      total += static_cast<double>(packets[static_cast<size_t>(i)].sample_weight);
    }
    Vector direct = Vector::Zero(dim);
    double weight_sum = 0.0;
    for (const auto& p : packets) {
      const double w = static_cast<double>(p.sample_weight) / total;
      weight_sum += w;
      direct += w * p.shared_grad;
    }
    const Vector agg = aggregate(packets);
    worst = std::max(worst, (agg - direct).cwiseAbs().maxCoeff());
    worst_weight = std::max(worst_weight, std::abs(weight_sum - 1.0));
  }
  report(3, worst <= 1e-12 && worst_weight <= 1e-12,
         "aggregation equals the direct size-weighted sum on 100 packet sets "
         "(max diff " +
             fmt(worst) + ", weight-sum err " + fmt(worst_weight) + ")");
}

// --- criterion 4: batch allocation on the reference corpus sizes -----------

void criterion_4() {
  const std::vector<int> alloc = allocate_batch_sizes(64, {7597, 4484, 2213});
  const bool ok = alloc == std::vector<int>{34, 20, 10} &&
                  std::accumulate(alloc.begin(), alloc.end(), 0) == 64;
  std::string got;
  for (int a : alloc) got += std::to_string(a) + " ";
  report(4, ok, "N=64 over sizes (7597, 4484, 2213) -> (" + got + "), sum 64");
}

// --- criteria 5/6: experiment-level equivalences ---------------------------

ExperimentConfig small_config() {
  ExperimentConfig cfg;
  cfg.optimizer = "plain";
  cfg.lr = 0.05;
  cfg.batch = 8;
  cfg.rounds = 20;
  cfg.model.word_dim = 6;
  cfg.model.char_dim = 4;
  cfg.model.filters = 3;
  cfg.model.hidden = 4;
  cfg.seed = 7;
  return cfg;
}

void criterion_5() {
  const auto t0 = std::chrono::steady_clock::now();
  SyntheticSpec spec;
  spec.platforms = 1;
  spec.sentences_per_platform = 80;
  spec.entities = 30;
  spec.entity_words = 24;
  spec.context_words = 20;
  spec.seed = 9;
  const auto corpora = make_synthetic_corpora(spec);

  ExperimentConfig cfg = small_config();
  cfg.strategy = "all-shared";
  cfg.mode = "central";
  const ExperimentResult central = run_experiment(cfg, corpora);
  cfg.mode = "federated";
  const ExperimentResult fed = run_experiment(cfg, corpora);

  const std::vector<std::string> names = central.central_params.names();
  const Vector central_flat = flatten(central.central_params, names);
  const Vector platform_flat = flatten(fed.platform_params.at(0), names);
  const bool ok = bitwise_equal(central_flat, platform_flat) &&
                  bitwise_equal(fed.theta_s, central_flat);
  const double dt = seconds_since(t0);
  report(5, ok && dt < 120.0,
         "1-platform all-shared plain federated run is bitwise identical to "
         "centralized training after 20 rounds (" +
             fmt(dt) + " s)");
}

void criterion_6() {
  const auto t0 = std::chrono::steady_clock::now();
  SyntheticSpec spec;
  spec.platforms = 2;
  spec.sentences_per_platform = 100;
  spec.entities = 60;
  spec.entity_words = 48;
  spec.context_words = 30;
  spec.seed = 11;
  const auto corpora = make_synthetic_corpora(spec);

  ExperimentConfig cfg;
  cfg.mode = "federated";
  cfg.strategy = "fedner-default";
  cfg.optimizer = "adam";
  cfg.lr = 0.01;
  cfg.batch = 16;
  cfg.rounds = 30;
  cfg.seed = 3;
  cfg.model.word_dim = 6;
  cfg.model.char_dim = 4;
  cfg.model.filters = 3;
  cfg.model.hidden = 4;

  cfg.transport = "inproc";
  const ExperimentResult inproc = run_experiment(cfg, corpora);
  cfg.transport = "socket";
  const ExperimentResult socket = run_experiment(cfg, corpora);

  const bool ok = bitwise_equal(inproc.theta_s, socket.theta_s);
  const double dt = seconds_since(t0);
  report(6, ok && dt < 180.0,
         "2-platform socket and inproc transports yield bitwise-identical "
         "final theta_s (" +
             fmt(dt) + " s)");
}

// --- criteria 7-9: directional experiments on the synthetic benchmark ------

ExperimentConfig bench_config(std::uint64_t seed, const std::string& mode,
                              const std::string& strategy, double mask,
                              const std::string& central_platform) {
  ExperimentConfig cfg;
  cfg.mode = mode;
  cfg.strategy = strategy;
  cfg.optimizer = "adam";
  cfg.lr = 0.01;
  cfg.batch = 64;
  cfg.rounds = 1200;
  cfg.seed = seed;
  cfg.mask_ratio = mask;
  cfg.central_platform = central_platform;
  cfg.model.word_dim = 24;
  cfg.model.char_dim = 8;
  cfg.model.filters = 8;
  cfg.model.kernel = 3;
  cfg.model.hidden = 16;
  cfg.model.dropout = 0.2;
  return cfg;
}

std::vector<Corpus> bench_corpora(std::uint64_t seed) {
  SyntheticSpec spec;
  spec.platforms = 3;
  spec.sentences_per_platform = 625;  // 500 train at the 0.8 split
  spec.entities = 900;
  spec.entity_words = 900;
  spec.context_words = 200;
  spec.seed = seed;
  return make_synthetic_corpora(spec);
}

double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) /
         static_cast<double>(v.size());
}

void criteria_7_8_9() {
  const std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  std::vector<double> fed0, fed1, shared0, private0;
  std::vector<std::vector<double>> central0(3), central1(3);

  const auto t7 = std::chrono::steady_clock::now();
  for (const std::uint64_t s : seeds) {
    const auto corpora = bench_corpora(s);
    fed0.push_back(
        run_experiment(bench_config(s, "federated", "fedner-default", 0.0, ""),
                       corpora)
            .final_global.strict.f1);
    for (size_t p = 0; p < corpora.size(); ++p) {
      central0[p].push_back(
          run_experiment(bench_config(s, "central", "fedner-default", 0.0,
                                      corpora[p].platform),
                         corpora)
              .final_global.strict.f1);
    }
  }
  const double dt7 = seconds_since(t7);
  bool ok7 = dt7 < 900.0;
  std::string detail7 = "federated strict F1 " + fmt(mean(fed0)) +
                        " vs single-platform";
  for (const auto& c : central0) {
    detail7 += " " + fmt(mean(c));
    ok7 = ok7 && mean(fed0) >= mean(c) + 0.02;
  }
  report(7, ok7,
         detail7 + ", margin >= 2 points on every platform, 5-seed means (" +
             fmt(dt7) + " s)");

  for (const std::uint64_t s : seeds) {
    const auto corpora = bench_corpora(s);
    shared0.push_back(
        run_experiment(bench_config(s, "federated", "all-shared", 0.0, ""),
                       corpora)
            .final_global.strict.f1);
    private0.push_back(
        run_experiment(bench_config(s, "federated", "all-private", 0.0, ""),
                       corpora)
            .final_global.strict.f1);
  }
  report(8,
         mean(fed0) >= mean(shared0) && mean(fed0) >= mean(private0),
         "fedner-default " + fmt(mean(fed0)) + " vs all-shared " +
             fmt(mean(shared0)) + " and all-private " + fmt(mean(private0)) +
             ", 5-seed means");

  for (const std::uint64_t s : seeds) {
    const auto corpora = bench_corpora(s);
    fed1.push_back(
        run_experiment(bench_config(s, "federated", "fedner-default", 1.0, ""),
                       corpora)
            .final_global.strict.f1);
    for (size_t p = 0; p < corpora.size(); ++p) {
      central1[p].push_back(
          run_experiment(bench_config(s, "central", "fedner-default", 1.0,
                                      corpora[p].platform),
                         corpora)
              .final_global.strict.f1);
    }
  }
  auto central_mean = [](const std::vector<std::vector<double>>& c) {
    double acc = 0.0;
    for (const auto& v : c) acc += mean(v);
    return acc / static_cast<double>(c.size());
  };
  const double gap0 = mean(fed0) - central_mean(central0);
  const double gap1 = mean(fed1) - central_mean(central1);
  report(9, gap0 >= gap1 && gap1 >= 0.0,
         "federated-minus-central gap " + fmt(gap0) + " at mask ratio 0 vs " +
             fmt(gap1) + " at ratio 1, 5-seed means");
}

// --- criterion 10: hand-computed metric fixtures ---------------------------

void criterion_10() {
  using eval::Counts;
  using eval::Span;
  struct Fixture {
    std::vector<Span> gold, pred;
    Counts strict;  // hand-computed {tp, gold_hits, pred, gold}
    Counts relax;
  };
  const Span a01{0, 1, "A"}, a02{0, 2, "A"}, a03{0, 3, "A"}, a05{0, 5, "A"};
  const std::vector<Fixture> fixtures = {
      // exact match
      {{a01}, {a01}, {1, 1, 1, 1}, {1, 1, 1, 1}},
      // missed gold
      {{a01}, {}, {0, 0, 0, 1}, {0, 0, 0, 1}},
      // spurious prediction
      {{}, {a01}, {0, 0, 1, 0}, {0, 0, 1, 0}},
      // both empty
      {{}, {}, {0, 0, 0, 0}, {0, 0, 0, 0}},
      // shifted span, same type: relax-only credit
      {{a02}, {{1, 3, "A"}}, {0, 0, 1, 1}, {1, 1, 1, 1}},
      // shifted span, wrong type
      {{a02}, {{1, 3, "B"}}, {0, 0, 1, 1}, {0, 0, 1, 1}},
      // one of two golds found
      {{a02, {3, 5, "B"}}, {a02}, {1, 1, 1, 2}, {1, 1, 1, 2}},
      // extra prediction beside an exact match
      {{a02}, {a02, {3, 5, "A"}}, {1, 1, 2, 1}, {1, 1, 2, 1}},
      // one gold fragmented into two overlapping predictions
      {{a03}, {a01, {2, 3, "A"}}, {0, 0, 2, 1}, {2, 1, 2, 1}},
      // two golds merged into one prediction
      {{a01, {1, 2, "A"}}, {a02}, {0, 0, 1, 2}, {1, 2, 1, 2}},
      // same range, wrong type
      {{a02}, {{0, 2, "B"}}, {0, 0, 1, 1}, {0, 0, 1, 1}},
      // types swapped between two adjacent spans
      {{a02, {2, 4, "B"}}, {{0, 2, "B"}, {2, 4, "A"}}, {0, 0, 2, 2},
       {0, 0, 2, 2}},
      // two exact matches
      {{a02, {2, 4, "B"}}, {a02, {2, 4, "B"}}, {2, 2, 2, 2}, {2, 2, 2, 2}},
      // one wide prediction overlapping two distant golds
      {{a02, {5, 7, "A"}}, {{1, 6, "A"}}, {0, 0, 1, 2}, {1, 2, 1, 2}},
      // duplicated prediction: strict pairs each gold at most once
      {{a02}, {a02, a02}, {1, 1, 2, 1}, {2, 1, 2, 1}},
      // two of three golds found exactly
      {{a03, {4, 6, "B"}, {7, 8, "C"}}, {a03, {4, 6, "B"}}, {2, 2, 2, 3},
       {2, 2, 2, 3}},
      // one overlapping and one disjoint prediction
      {{a03}, {{2, 5, "A"}, {6, 8, "A"}}, {0, 0, 2, 1}, {1, 1, 2, 1}},
      // adjacent but disjoint half-open ranges
      {{{2, 4, "A"}}, {a02}, {0, 0, 1, 1}, {0, 0, 1, 1}},
      // exact match plus a type error on the second span
      {{a01, {2, 3, "B"}}, {a01, {2, 3, "A"}}, {1, 1, 2, 2}, {1, 1, 2, 2}},
      // single-token overlap at the very end of a long gold span
      {{a05}, {{4, 5, "A"}}, {0, 0, 1, 1}, {1, 1, 1, 1}},
  };

  bool ok = true;
  for (size_t i = 0; i < fixtures.size(); ++i) {
    const Fixture& fx = fixtures[i];
    const Counts sc = eval::strict_counts(fx.gold, fx.pred);
    const Counts rc = eval::relax_counts(fx.gold, fx.pred);
    const eval::Prf sp = eval::prf_from(fx.strict);
    const eval::Prf rp = eval::prf_from(fx.relax);
    const eval::Prf sa = eval::strict_prf(fx.gold, fx.pred);
    const eval::Prf ra = eval::relax_prf(fx.gold, fx.pred);
    const bool counts_ok =
        sc.tp == fx.strict.tp && sc.gold_hits == fx.strict.gold_hits &&
        sc.pred == fx.strict.pred && sc.gold == fx.strict.gold &&
        rc.tp == fx.relax.tp && rc.gold_hits == fx.relax.gold_hits &&
        rc.pred == fx.relax.pred && rc.gold == fx.relax.gold;
    const bool prf_ok = sa.precision == sp.precision && sa.recall == sp.recall &&
                        sa.f1 == sp.f1 && ra.precision == rp.precision &&
                        ra.recall == rp.recall && ra.f1 == rp.f1;
    const bool relax_ge = rc.tp >= sc.tp && ra.f1 >= sa.f1;
    if (!(counts_ok && prf_ok && relax_ge)) {
      ok = false;
      std::printf("  fixture %zu mismatch\n", i);
    }
  }
  report(10, ok,
         "20 hand-computed strict/relax fixtures match exactly; relax >= "
         "strict on every fixture");
}

// --- criterion 11 (optional): real corpora ---------------------------------

void criterion_11() {
  std::string manifest;
  if (const char* env = std::getenv("FEDNER_REAL_MANIFEST")) manifest = env;
  for (const char* candidate :
       {"data/real/manifest.json", "../data/real/manifest.json"}) {
    if (manifest.empty() && std::filesystem::exists(candidate)) {
      manifest = candidate;
    }
  }
  if (manifest.empty() || !std::filesystem::exists(manifest)) {
    std::printf(
        "SKIP criterion 11: no real corpora found (set FEDNER_REAL_MANIFEST "
        "or place data/real/manifest.json); not gating\n");
    return;
  }
  try {
    const auto corpora = load_corpora(load_manifest(manifest));
    std::vector<long long> counts;
    for (const auto& c : corpora) {
      counts.push_back(static_cast<long long>(c.sentences.size()));
    }
    std::sort(counts.rbegin(), counts.rend());
    const bool counts_ok = counts == std::vector<long long>{7597, 4484, 2213};
    const size_t overlap = overlapping_entities(corpora).size();
    std::string got;
    for (long long n : counts) got += std::to_string(n) + " ";
    // Informational only; a failure here does not gate the build.
    std::printf("%s criterion 11: sentence counts %s, overlap %zu (expected "
                "7597/4484/2213 and 341); not gating\n",
                counts_ok && overlap == 341 ? "PASS" : "INFO", got.c_str(),
                overlap);
  } catch (const std::exception& e) {
    std::printf("SKIP criterion 11: %s; not gating\n", e.what());
  }
}

}  // namespace

int main() {
  criterion_1();
  criterion_2();
  criterion_3();
  criterion_4();
  criterion_5();
  criterion_6();
  criteria_7_8_9();
  criterion_10();
  criterion_11();
  if (failures != 0) {
    std::printf("%d gating criterion(s) failed\n", failures);
    return 1;
  }
  std::printf("all gating criteria passed\n");
  return 0;
}
