#pragma once

#include "fedner/data.hpp"
#include "fedner/eval.hpp"
#include "fedner/model.hpp"
#include "fedner/optim.hpp"
#include "fedner/params.hpp"

#include <random>
#include <span>
#include <vector>

namespace fedner {

/// Without-replacement mini-batch sampler. Draws come from a shuffled pass
/// over the corpus; when fewer than n indices remain the whole pass is
/// reshuffled, so a single batch never repeats a sentence.
class EpochSampler {
 public:
  explicit EpochSampler(int corpus_size);
  std::vector<int> next(int n, std::mt19937_64& rng);

 private:
  std::vector<int> order_;
  size_t pos_;
};

struct BatchGrad {
  ParameterStore grads;  // gradient of the MEAN per-sentence loss
  double mean_loss = 0;
};

/// Sum of per-sentence loss gradients in batch order, scaled by 1/batch.
/// `rng` drives dropout only; pass train=false for a clean evaluation loss.
BatchGrad batch_gradients(const ParameterStore& params,
                          std::span<const LabeledSentence> batch,
                          const ModelConfig& cfg, const Vocab& vocab,
                          const ContextualProvider& provider,
                          const std::vector<std::string>& alphabet, bool train,
                          std::mt19937_64* rng);

struct EvalMetrics {
  eval::Prf strict;
  eval::Prf relax;
  eval::Counts strict_counts;
  eval::Counts relax_counts;
};

EvalMetrics evaluate_model(const ParameterStore& params,
                           const std::vector<LabeledSentence>& sentences,
                           const ModelConfig& cfg, const Vocab& vocab,
                           const ContextualProvider& provider,
                           const std::vector<std::string>& alphabet);

/// Per-platform RNG stream; shared by the centralized trainer (platform 0)
/// and the federated runtime so degenerate configurations line up bitwise.
std::mt19937_64 platform_rng(std::uint64_t seed, int platform_index);

struct CentralResult {
  ParameterStore params;
  std::vector<double> losses;  // one mean batch loss per step
};

/// Plain centralized mini-batch training on one corpus: sample, compute the
/// mean-loss gradient, step every parameter.
CentralResult train_central(ParameterStore params,
                            const std::vector<LabeledSentence>& train,
                            const ModelConfig& cfg, const Vocab& vocab,
                            const ContextualProvider& provider,
                            const std::vector<std::string>& alphabet,
                            OptimKind optim, double lr, int batch_size,
                            int steps, std::uint64_t seed);

}  // namespace fedner
