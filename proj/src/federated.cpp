#include "fedner/federated.hpp"

#include <algorithm>
#include <cfloat>
#include <chrono>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>
#include <thread>

namespace fedner {

std::vector<int> allocate_batch_sizes(int total_batch,
                                      const std::vector<long long>& sizes) {
  const int p = static_cast<int>(sizes.size());
  if (p == 0) throw std::invalid_argument("allocate_batch_sizes: no platforms");
  if (total_batch < p) {
    throw std::invalid_argument(
        "allocate_batch_sizes: batch " + std::to_string(total_batch) +
        " smaller than platform count " + std::to_string(p));
  }
  long long total = 0;
  for (long long s : sizes) {
    if (s < 1) throw std::invalid_argument("allocate_batch_sizes: |S_i| < 1");
    total += s;
  }
  std::vector<int> alloc(static_cast<size_t>(p));
  std::vector<std::pair<double, int>> remainders;
  int assigned = 0;
  for (int i = 0; i < p; ++i) {
    const double ideal = static_cast<double>(total_batch) *
                         static_cast<double>(sizes[static_cast<size_t>(i)]) /
                         static_cast<double>(total);
    alloc[static_cast<size_t>(i)] = static_cast<int>(std::floor(ideal));
    assigned += alloc[static_cast<size_t>(i)];
    remainders.emplace_back(ideal - std::floor(ideal), i);
  }
  // Largest remainder first; ties toward the lower platform index.
  std::sort(remainders.begin(), remainders.end(),
            [](const auto& a, const auto& b) {
              if (a.first != b.first) return a.first > b.first;
              return a.second < b.second;
            });
  for (int r = 0; r < total_batch - assigned; ++r) {
    alloc[static_cast<size_t>(remainders[static_cast<size_t>(r) %
                                         remainders.size()]
                                  .second)] += 1;
  }
  // Floor of one: every platform contributes at least one sentence.
  for (int i = 0; i < p; ++i) {
    while (alloc[static_cast<size_t>(i)] < 1) {
      auto largest = std::max_element(alloc.begin(), alloc.end());
      if (*largest <= 1) {
        throw std::invalid_argument("allocate_batch_sizes: infeasible");
      }
      *largest -= 1;
      alloc[static_cast<size_t>(i)] += 1;
    }
  }
  return alloc;
}

PlatformState make_platform_state(int index, std::vector<LabeledSentence> train,
                                  std::vector<LabeledSentence> test,
                                  std::vector<std::string> alphabet,
                                  ParameterStore params,
                                  const FederationConfig& cfg,
                                  const Vocab& vocab,
                                  const ContextualProvider& provider) {
  if (train.empty()) {
    throw std::invalid_argument("make_platform_state: empty training set");
  }
  PlatformState st;
  st.id = index;
  st.train = std::move(train);
  st.test = std::move(test);
  st.alphabet = std::move(alphabet);
  st.params = std::move(params);
  st.part = make_partition(st.params, cfg.strategy);
  st.rng = platform_rng(cfg.seed, index);
  st.sampler = EpochSampler(static_cast<int>(st.train.size()));
  if (!st.part.private_.empty()) {
    st.private_opt = std::make_unique<Optimizer>(cfg.optimizer, cfg.lr);
  }
  st.model = &cfg.model;
  st.vocab = &vocab;
  st.provider = &provider;
  return st;
}

PlatformUpdateResult platform_update(PlatformState& state,
                                     const Vector& theta_s_in,
                                     std::uint32_t round, int batch_size) {
  if (batch_size < 1 ||
      batch_size > static_cast<int>(state.train.size())) {
    throw std::invalid_argument("platform_update: batch size " +
                                std::to_string(batch_size) +
                                " exceeds local corpus size " +
                                std::to_string(state.train.size()));
  }
  unflatten(state.params, state.part.shared, theta_s_in);

  const std::vector<int> idx = state.sampler.next(batch_size, state.rng);
  std::vector<LabeledSentence> batch;
  batch.reserve(idx.size());
  for (int i : idx) batch.push_back(state.train[static_cast<size_t>(i)]);

  BatchGrad bg =
      batch_gradients(state.params, batch, *state.model, *state.vocab,
                      *state.provider, state.alphabet, /*train=*/true,
                      &state.rng);

  if (!state.part.private_.empty()) {
    Vector theta_p = flatten(state.params, state.part.private_);
    state.private_opt->step(theta_p, flatten(bg.grads, state.part.private_));
    unflatten(state.params, state.part.private_, theta_p);
  }

  PlatformUpdateResult res;
  res.batch_loss = bg.mean_loss;
  res.packet.platform_id = static_cast<std::uint32_t>(state.id);
  res.packet.round = round;
  res.packet.sample_weight = state.train.size();
  res.packet.shared_grad = flatten(bg.grads, state.part.shared);
  if (!res.packet.shared_grad.allFinite()) {
    throw std::runtime_error("platform_update: non-finite shared gradient");
  }
  return res;
}

Vector aggregate(const std::vector<GradientPacket>& packets) {
  if (packets.empty()) throw std::invalid_argument("aggregate: no packets");
  std::vector<const GradientPacket*> ordered;
  std::set<std::uint32_t> ids;
  for (const auto& p : packets) {
    if (!ids.insert(p.platform_id).second) {
      throw std::invalid_argument("aggregate: duplicate platform " +
                                  std::to_string(p.platform_id));
    }
    if (p.round != packets.front().round) {
      throw std::invalid_argument("aggregate: round mismatch");
    }
    if (p.shared_grad.size() != packets.front().shared_grad.size()) {
      throw std::invalid_argument("aggregate: gradient length mismatch");
    }
    ordered.push_back(&p);
  }
  std::sort(ordered.begin(), ordered.end(),
            [](const auto* a, const auto* b) {
              return a->platform_id < b->platform_id;
            });
  double total = 0;
  for (const auto* p : ordered) {
    total += static_cast<double>(p->sample_weight);
  }
  Vector out = Vector::Zero(packets.front().shared_grad.size());
  for (const auto* p : ordered) {
    out += (static_cast<double>(p->sample_weight) / total) * p->shared_grad;
  }
  return out;
}

void server_step(CoordinatorState& coord, const Vector& agg_grad) {
  if (!agg_grad.allFinite()) {
    throw std::runtime_error("server_step: non-finite aggregated gradient");
  }
  coord.opt.step(coord.theta_s, agg_grad);
  coord.round += 1;
}

namespace {

RoundReport assemble_report(std::uint32_t round,
                            const std::vector<GradientPacket>& packets,
                            std::vector<PlatformRoundStats> stats) {
  RoundReport rep;
  rep.round = static_cast<int>(round);
  rep.platforms = std::move(stats);
  double total = 0;
  for (const auto& p : packets) total += static_cast<double>(p.sample_weight);
  for (size_t i = 0; i < packets.size(); ++i) {
    rep.global_loss += (static_cast<double>(packets[i].sample_weight) / total) *
                       rep.platforms[i].batch_loss;
  }
  return rep;
}

}  // namespace

RoundReport run_round(std::vector<PlatformState>& platforms,
                      CoordinatorState& coord, const FederationConfig& cfg,
                      bool do_eval) {
  const size_t p = platforms.size();
  std::vector<long long> sizes;
  for (const auto& st : platforms) {
    sizes.push_back(static_cast<long long>(st.train.size()));
  }
  const std::vector<int> batches = allocate_batch_sizes(cfg.batch, sizes);

  std::vector<GradientPacket> packets(p);
  std::vector<PlatformRoundStats> stats(p);
  std::vector<std::exception_ptr> errors(p);
  std::vector<std::thread> workers;
  for (size_t i = 0; i < p; ++i) {
    workers.emplace_back([&, i] {
      try {
        PlatformState& st = platforms[i];
        PlatformUpdateResult res = platform_update(
            st, coord.theta_s, coord.round, batches[i]);
        stats[i].platform = st.id;
        stats[i].batch_loss = res.batch_loss;
        if (do_eval) {
          stats[i].has_eval = true;
          stats[i].eval = evaluate_model(st.params, st.test, *st.model,
                                         *st.vocab, *st.provider, st.alphabet);
        }
        packets[i] = std::move(res.packet);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    });
  }
  for (auto& w : workers) w.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);  // any platform failure aborts the round
  }

  const std::uint32_t round = coord.round;
  server_step(coord, aggregate(packets));
  return assemble_report(round, packets, std::move(stats));
}

ConvergenceTracker::ConvergenceTracker(double tolerance, int window)
    : tolerance_(tolerance), window_(window), prev_mean_(DBL_MAX) {}

bool ConvergenceTracker::converged(double loss) {
  losses_.push_back(loss);
  const size_t w = std::min<size_t>(losses_.size(),
                                    static_cast<size_t>(window_));
  double mean = 0;
  for (size_t i = losses_.size() - w; i < losses_.size(); ++i) {
    mean += losses_[i];
  }
  mean /= static_cast<double>(w);
  const double improvement = prev_mean_ - mean;
  prev_mean_ = mean;
  if (tolerance_ <= 0.0) return false;  // early stopping disabled
  return improvement < tolerance_;
}

std::vector<RoundReport> run_until_converged(
    std::vector<PlatformState>& platforms, CoordinatorState& coord,
    const FederationConfig& cfg) {
  std::vector<RoundReport> reports;
  ConvergenceTracker tracker(cfg.tolerance);
  const auto t0 = std::chrono::steady_clock::now();
  for (int r = 0; r < cfg.max_rounds; ++r) {
    const bool last = r + 1 == cfg.max_rounds;
    const bool do_eval =
        last || (cfg.eval_every > 0 && (r + 1) % cfg.eval_every == 0);
    reports.push_back(run_round(platforms, coord, cfg, do_eval));
    reports.back().wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    if (tracker.converged(reports.back().global_loss) && !last) {
      // Re-run evaluation bookkeeping is unnecessary; stop after this round.
      break;
    }
  }
  return reports;
}

CoordinatorOutcome coordinator_serve(
    const std::vector<Channel*>& platform_channels, Vector theta_s_init,
    const FederationConfig& cfg) {
  const size_t p = platform_channels.size();
  if (p == 0) throw std::invalid_argument("coordinator_serve: no platforms");

  // Registration: one platform per channel. Channels are then ordered by
  // platform id so accept order cannot influence the run.
  struct Registered {
    std::uint32_t id;
    long long size;
    Channel* channel;
  };
  std::vector<Registered> regs;
  for (Channel* ch : platform_channels) {
    Message m = ch->recv();
    if (m.kind != MsgKind::Register) {
      throw std::runtime_error("coordinator_serve: expected REGISTER");
    }
    regs.push_back({m.sender, static_cast<long long>(m.train_size), ch});
  }
  std::sort(regs.begin(), regs.end(),
            [](const Registered& a, const Registered& b) {
              return a.id < b.id;
            });
  std::vector<Channel*> channels;
  std::vector<long long> sizes;
  for (const auto& r : regs) {
    channels.push_back(r.channel);
    sizes.push_back(r.size);
  }
  const std::vector<int> batches = allocate_batch_sizes(cfg.batch, sizes);

  CoordinatorState coord(std::move(theta_s_init), cfg.optimizer, cfg.lr);
  CoordinatorOutcome out;
  ConvergenceTracker tracker(cfg.tolerance);
  const auto t0 = std::chrono::steady_clock::now();
  for (int r = 0; r < cfg.max_rounds; ++r) {
    const bool last = r + 1 == cfg.max_rounds;
    const bool do_eval =
        last || (cfg.eval_every > 0 && (r + 1) % cfg.eval_every == 0);
    for (size_t i = 0; i < p; ++i) {
      Message m;
      m.kind = MsgKind::RoundStart;
      m.round = coord.round;
      m.batch_size = static_cast<std::uint32_t>(batches[i]);
      m.do_eval = do_eval;
      m.theta = coord.theta_s;
      channels[i]->send(m);
    }
    std::vector<GradientPacket> packets;
    std::vector<PlatformRoundStats> stats;
    for (size_t i = 0; i < p; ++i) {
      Message m = channels[i]->recv();
      if (m.kind != MsgKind::Gradient) {
        throw std::runtime_error("coordinator_serve: expected GRADIENT");
      }
      PlatformRoundStats s;
      s.platform = static_cast<int>(m.packet.platform_id);
      s.batch_loss = m.stats.batch_loss;
      s.has_eval = m.stats.has_eval;
      s.eval.strict =
          eval::Prf{m.stats.strict_p, m.stats.strict_r, m.stats.strict_f1};
      s.eval.relax =
          eval::Prf{m.stats.relax_p, m.stats.relax_r, m.stats.relax_f1};
      stats.push_back(s);
      packets.push_back(std::move(m.packet));
    }
    const std::uint32_t round = coord.round;
    server_step(coord, aggregate(packets));
    out.rounds.push_back(assemble_report(round, packets, std::move(stats)));
    out.rounds.back().wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    if (tracker.converged(out.rounds.back().global_loss) && !last) break;
  }
  for (size_t i = 0; i < p; ++i) {
    Message m;
    m.kind = MsgKind::ModelBroadcast;
    m.round = coord.round;
    m.theta = coord.theta_s;
    channels[i]->send(m);
    Message bye;
    bye.kind = MsgKind::Shutdown;
    channels[i]->send(bye);
  }
  out.theta_s = std::move(coord.theta_s);
  return out;
}

void platform_serve(Channel& channel, PlatformState& state) {
  Message reg;
  reg.kind = MsgKind::Register;
  reg.sender = static_cast<std::uint32_t>(state.id);
  reg.train_size = state.train.size();
  channel.send(reg);
  for (;;) {
    Message m = channel.recv();
    switch (m.kind) {
      case MsgKind::RoundStart: {
        PlatformUpdateResult res = platform_update(
            state, m.theta, m.round, static_cast<int>(m.batch_size));
        Message g;
        g.kind = MsgKind::Gradient;
        g.sender = static_cast<std::uint32_t>(state.id);
        g.packet = std::move(res.packet);
        g.stats.batch_loss = res.batch_loss;
        if (m.do_eval) {
          EvalMetrics em =
              evaluate_model(state.params, state.test, *state.model,
                             *state.vocab, *state.provider, state.alphabet);
          g.stats.has_eval = true;
          g.stats.strict_p = em.strict.precision;
          g.stats.strict_r = em.strict.recall;
          g.stats.strict_f1 = em.strict.f1;
          g.stats.relax_p = em.relax.precision;
          g.stats.relax_r = em.relax.recall;
          g.stats.relax_f1 = em.relax.f1;
        }
        channel.send(g);
        break;
      }
      case MsgKind::ModelBroadcast:
        unflatten(state.params, state.part.shared, m.theta);
        break;
      case MsgKind::Shutdown:
        return;
      default:
        throw std::runtime_error("platform_serve: unexpected message kind");
    }
  }
}

}  // namespace fedner
