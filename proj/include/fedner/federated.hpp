#pragma once

#include "fedner/data.hpp"
#include "fedner/model.hpp"
#include "fedner/optim.hpp"
#include "fedner/packet.hpp"
#include "fedner/params.hpp"
#include "fedner/trainer.hpp"
#include "fedner/transport.hpp"

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

namespace fedner {

struct FederationConfig {
  int batch = 64;              // global batch size N, split across platforms
  double lr = 0.001;
  OptimKind optimizer = OptimKind::Adam;  // both server and private steps
  int max_rounds = 100;
  double tolerance = 0.0;      // <= 0 disables early stopping
  int eval_every = 0;          // 0: evaluate on the final round only
  std::uint64_t seed = 0;
  std::string strategy = "fedner-default";
  ModelConfig model;
};

/// Largest-remainder proportional split of the global batch with a floor of
/// one sentence per platform. Sums to exactly `total_batch`.
std::vector<int> allocate_batch_sizes(int total_batch,
                                      const std::vector<long long>& sizes);

struct PlatformState {
  int id = 0;
  std::vector<LabeledSentence> train, test;
  std::vector<std::string> alphabet;
  ParameterStore params;       // full local model; shared block is replaced
                               // by every incoming theta_s
  Partition part;
  std::mt19937_64 rng;
  EpochSampler sampler{1};
  std::unique_ptr<Optimizer> private_opt;
  const ModelConfig* model = nullptr;
  const Vocab* vocab = nullptr;
  const ContextualProvider* provider = nullptr;
};

PlatformState make_platform_state(int index, std::vector<LabeledSentence> train,
                                  std::vector<LabeledSentence> test,
                                  std::vector<std::string> alphabet,
                                  ParameterStore params,
                                  const FederationConfig& cfg,
                                  const Vocab& vocab,
                                  const ContextualProvider& provider);

struct PlatformUpdateResult {
  GradientPacket packet;
  double batch_loss = 0;
};

/// One PlatformUpdate: install the incoming shared block, sample a local
/// mini-batch, compute the mean-loss gradients, step the private block
/// locally, and emit only the shared-block gradient.
PlatformUpdateResult platform_update(PlatformState& state,
                                     const Vector& theta_s_in,
                                     std::uint32_t round, int batch_size);

struct CoordinatorState {
  Vector theta_s;
  Optimizer opt;
  std::uint32_t round = 0;
  CoordinatorState(Vector theta, OptimKind kind, double lr)
      : theta_s(std::move(theta)), opt(kind, lr) {}
};

/// Size-weighted gradient aggregation: sum_i (S_i / sum_j S_j) * g_i.
/// Requires exactly one packet per platform, all from the same round.
Vector aggregate(const std::vector<GradientPacket>& packets);

void server_step(CoordinatorState& coord, const Vector& agg_grad);

struct PlatformRoundStats {
  int platform = 0;
  double batch_loss = 0;
  bool has_eval = false;
  EvalMetrics eval;
};

struct RoundReport {
  int round = 0;
  double global_loss = 0;  // size-weighted mean of platform batch losses
  double wall_time_s = 0;  // elapsed since the driver started
  std::vector<PlatformRoundStats> platforms;
};

/// One synchronous round: distribute theta_s, run every platform_update in
/// parallel, aggregate, server step.
RoundReport run_round(std::vector<PlatformState>& platforms,
                      CoordinatorState& coord, const FederationConfig& cfg,
                      bool do_eval);

/// Moving-average early-stopping state over the global training loss.
class ConvergenceTracker {
 public:
  explicit ConvergenceTracker(double tolerance, int window = 10);
  /// Records a round loss; true when training should stop.
  bool converged(double loss);

 private:
  double tolerance_;
  int window_;
  std::vector<double> losses_;
  double prev_mean_;
};

/// Direct in-process driver: rounds until max_rounds or the moving-average
/// loss improves by less than the tolerance. Final shared block lives in
/// `coord`, private blocks in `platforms`.
std::vector<RoundReport> run_until_converged(
    std::vector<PlatformState>& platforms, CoordinatorState& coord,
    const FederationConfig& cfg);

// Channel-based protocol (used by the socket transport and multi-process
// runs; arithmetic identical to the direct driver).

struct CoordinatorOutcome {
  Vector theta_s;
  std::vector<RoundReport> rounds;
};

CoordinatorOutcome coordinator_serve(
    const std::vector<Channel*>& platform_channels, Vector theta_s_init,
    const FederationConfig& cfg);

void platform_serve(Channel& channel, PlatformState& state);

}  // namespace fedner
