#include "fedner/trainer.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <unordered_map>

namespace fedner {

EpochSampler::EpochSampler(int corpus_size)
    : order_(static_cast<size_t>(corpus_size)), pos_(0) {
  if (corpus_size <= 0) {
    throw std::invalid_argument("EpochSampler: empty corpus");
  }
  std::iota(order_.begin(), order_.end(), 0);
  pos_ = order_.size();  // force a shuffle on the first draw
}

std::vector<int> EpochSampler::next(int n, std::mt19937_64& rng) {
  if (n <= 0 || static_cast<size_t>(n) > order_.size()) {
    throw std::invalid_argument("EpochSampler: bad batch size " +
                                std::to_string(n));
  }
  if (pos_ + static_cast<size_t>(n) > order_.size()) {
    std::shuffle(order_.begin(), order_.end(), rng);
    pos_ = 0;
  }
  std::vector<int> out(order_.begin() + static_cast<long>(pos_),
                       order_.begin() + static_cast<long>(pos_) + n);
  pos_ += static_cast<size_t>(n);
  return out;
}

BatchGrad batch_gradients(const ParameterStore& params,
                          std::span<const LabeledSentence> batch,
                          const ModelConfig& cfg, const Vocab& vocab,
                          const ContextualProvider& provider,
                          const std::vector<std::string>& alphabet, bool train,
                          std::mt19937_64* rng) {
  if (batch.empty()) throw std::invalid_argument("batch_gradients: empty");
  std::unordered_map<std::string, int> label_of;
  for (size_t i = 0; i < alphabet.size(); ++i) {
    label_of[alphabet[i]] = static_cast<int>(i);
  }

  BatchGrad out;
  out.grads = params.zeros_like();
  for (const LabeledSentence& s : batch) {
    std::vector<int> gold;
    gold.reserve(s.tags.size());
    for (const auto& tag : s.tags) {
      auto it = label_of.find(tag);
      if (it == label_of.end()) {
        throw std::invalid_argument("batch_gradients: tag '" + tag +
                                    "' not in the label alphabet");
      }
      gold.push_back(it->second);
    }
    ForwardTrace trace =
        model_forward(s, params, cfg, vocab, provider,
                      static_cast<int>(alphabet.size()), train, rng);
    Var loss = sentence_loss(trace, gold);
    const double lv = trace.tape->value(loss)(0, 0);
    if (!std::isfinite(lv)) {
      throw std::runtime_error("batch_gradients: non-finite loss");
    }
    out.mean_loss += lv;
    trace.tape->backward(loss);
    for (const auto& [name, var] : trace.param_vars) {
      out.grads.at(name) += trace.tape->grad(var);
    }
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  out.mean_loss *= inv;
  for (const auto& name : out.grads.names()) out.grads.at(name) *= inv;
  return out;
}

EvalMetrics evaluate_model(const ParameterStore& params,
                           const std::vector<LabeledSentence>& sentences,
                           const ModelConfig& cfg, const Vocab& vocab,
                           const ContextualProvider& provider,
                           const std::vector<std::string>& alphabet) {
  EvalMetrics m;
  for (const LabeledSentence& s : sentences) {
    const auto gold = eval::extract_spans(s.tags);
    const auto pred_tags =
        predict(s, params, cfg, vocab, provider, alphabet);
    const auto pred = eval::extract_spans(pred_tags);
    m.strict_counts += eval::strict_counts(gold, pred);
    m.relax_counts += eval::relax_counts(gold, pred);
  }
  m.strict = eval::prf_from(m.strict_counts);
  m.relax = eval::prf_from(m.relax_counts);
  return m;
}

std::mt19937_64 platform_rng(std::uint64_t seed, int platform_index) {
  return std::mt19937_64(seed * 1000003ULL +
                         static_cast<std::uint64_t>(platform_index));
}

CentralResult train_central(ParameterStore params,
                            const std::vector<LabeledSentence>& train,
                            const ModelConfig& cfg, const Vocab& vocab,
                            const ContextualProvider& provider,
                            const std::vector<std::string>& alphabet,
                            OptimKind optim, double lr, int batch_size,
                            int steps, std::uint64_t seed) {
  std::mt19937_64 rng = platform_rng(seed, 0);
  EpochSampler sampler(static_cast<int>(train.size()));
  Optimizer opt(optim, lr);
  const std::vector<std::string> all_names = params.names();

  CentralResult res;
  for (int step = 0; step < steps; ++step) {
    const std::vector<int> idx = sampler.next(batch_size, rng);
    std::vector<LabeledSentence> batch;
    batch.reserve(idx.size());
    for (int i : idx) batch.push_back(train[static_cast<size_t>(i)]);
    BatchGrad bg = batch_gradients(params, batch, cfg, vocab, provider,
                                   alphabet, /*train=*/true, &rng);
    Vector theta = flatten(params, all_names);
    opt.step(theta, flatten(bg.grads, all_names));
    unflatten(params, all_names, theta);
    res.losses.push_back(bg.mean_loss);
  }
  res.params = std::move(params);
  return res;
}

}  // namespace fedner
