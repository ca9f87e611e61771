#include "fedner/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace fedner {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::vector<std::string> union_alphabet(const std::vector<Corpus>& corpora) {
  std::set<std::string> types;
  for (const auto& c : corpora) {
    types.insert(c.entity_types.begin(), c.entity_types.end());
  }
  Corpus all;
  all.entity_types = types;
  return all.label_alphabet();
}

nlohmann::json prf_json(const eval::Prf& p) {
  return {{"precision", p.precision}, {"recall", p.recall}, {"f1", p.f1}};
}

}  // namespace

void validate(const ExperimentConfig& cfg) {
  auto fail = [](const std::string& field, const std::string& why) {
    throw std::invalid_argument("config." + field + ": " + why);
  };
  if (cfg.mode != "central" && cfg.mode != "federated") {
    fail("mode", "must be 'central' or 'federated'");
  }
  if (cfg.transport != "inproc" && cfg.transport != "socket") {
    fail("transport", "must be 'inproc' or 'socket'");
  }
  const auto strategies = decomposition_strategies();
  if (std::find(strategies.begin(), strategies.end(), cfg.strategy) ==
      strategies.end()) {
    fail("strategy", "unknown strategy '" + cfg.strategy + "'");
  }
  parse_optim(cfg.optimizer);  // throws on bad name
  if (cfg.lr <= 0) fail("lr", "must be > 0");
  if (cfg.batch < 1) fail("batch", "must be >= 1");
  if (cfg.rounds < 0) fail("rounds", "must be >= 0");
  if (cfg.train_fraction <= 0 || cfg.train_fraction >= 1) {
    fail("train_fraction", "must be in (0,1)");
  }
  if (cfg.mask_ratio < 0 || cfg.mask_ratio > 1) {
    fail("mask_ratio", "must be in [0,1]");
  }
  if (cfg.model.word_dim < 1 || cfg.model.char_dim < 1 ||
      cfg.model.filters < 1 || cfg.model.kernel < 1 || cfg.model.hidden < 1) {
    fail("model", "dimensions must be positive");
  }
  if (cfg.model.ctx_dim < 0) fail("model.ctx_dim", "must be >= 0");
  if ((cfg.model.ctx_dim > 0) != !cfg.context_path.empty()) {
    fail("model.ctx_dim", "contextual channel needs both ctx_dim > 0 and a "
                          "sidecar file (or neither)");
  }
  if (cfg.model.dropout < 0 || cfg.model.dropout >= 1) {
    fail("model.dropout", "must be in [0,1)");
  }
}

std::string config_hash(const ExperimentConfig& cfg) {
  std::ostringstream os;
  os << cfg.mode << '|' << cfg.manifest << '|' << cfg.strategy << '|'
     << cfg.model.word_dim << ',' << cfg.model.char_dim << ','
     << cfg.model.ctx_dim << ',' << cfg.model.filters << ','
     << cfg.model.kernel << ',' << cfg.model.hidden << ','
     << cfg.model.dropout << '|' << cfg.optimizer << '|' << cfg.lr << '|'
     << cfg.batch << '|' << cfg.rounds << '|' << cfg.eval_every << '|'
     << cfg.tolerance << '|' << cfg.seed << '|' << cfg.train_fraction << '|'
     << cfg.mask_ratio << '|' << cfg.transport << '|' << cfg.central_platform
     << '|' << cfg.embeddings_path << '|' << cfg.context_path;
  // FNV-1a, 64-bit.
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : os.str()) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  std::ostringstream hex;
  hex << std::hex << h;
  return hex.str();
}

namespace {

struct Prepared {
  std::vector<Corpus> train, test;
  Vocab vocab;
  ContextualProvider provider;
  std::vector<std::string> alphabet;  // union over platforms
};

Prepared prepare(const ExperimentConfig& cfg,
                 const std::vector<Corpus>& corpora) {
  if (corpora.empty()) {
    throw std::invalid_argument("run_experiment: no corpora");
  }
  Prepared prep;
  for (const Corpus& c : corpora) {
    auto [train, test] = split_train_test(c, cfg.train_fraction, cfg.seed);
    prep.train.push_back(std::move(train));
    prep.test.push_back(std::move(test));
  }
  if (cfg.mask_ratio > 0) {
    prep.train = mask_overlapped_entities(prep.train, cfg.mask_ratio,
                                          cfg.seed);
  }
  prep.vocab = build_vocab(prep.train);
  if (!cfg.context_path.empty()) {
    prep.provider =
        ContextualProvider::from_file(cfg.context_path, cfg.model.ctx_dim);
  }
  prep.alphabet = union_alphabet(corpora);
  return prep;
}

nlohmann::json base_record(const ExperimentConfig& cfg,
                           const std::string& hash) {
  return {{"config", hash},
          {"mode", cfg.mode},
          {"strategy", cfg.strategy},
          {"seed", cfg.seed},
          {"mask_ratio", cfg.mask_ratio}};
}

ExperimentResult run_central(const ExperimentConfig& cfg, Prepared prep,
                             const std::vector<Corpus>& corpora) {
  size_t pi = 0;
  if (!cfg.central_platform.empty()) {
    bool found = false;
    for (size_t i = 0; i < corpora.size(); ++i) {
      if (corpora[i].platform == cfg.central_platform) {
        pi = i;
        found = true;
        break;
      }
    }
    if (!found) {
      throw std::invalid_argument("config.central_platform: unknown platform '" +
                                  cfg.central_platform + "'");
    }
  }
  const std::vector<LabeledSentence>& train = prep.train[pi].sentences;
  const std::vector<LabeledSentence>& test = prep.test[pi].sentences;
  const std::vector<std::string> alphabet = corpora[pi].label_alphabet();
  const std::string platform = corpora[pi].platform;

  ParameterStore params = init_params(
      cfg.model, prep.vocab, static_cast<int>(alphabet.size()), cfg.seed);
  if (!cfg.embeddings_path.empty()) {
    load_pretrained_embeddings(params, prep.vocab, cfg.embeddings_path);
  }

  const std::string hash = config_hash(cfg);
  const auto t0 = Clock::now();
  ExperimentResult res;
  std::mt19937_64 rng = platform_rng(cfg.seed, 0);
  EpochSampler sampler(static_cast<int>(train.size()));
  Optimizer opt(parse_optim(cfg.optimizer), cfg.lr);
  ConvergenceTracker tracker(cfg.tolerance);
  const std::vector<std::string> all_names = params.names();

  for (int r = 0; r < cfg.rounds; ++r) {
    const bool last = r + 1 == cfg.rounds;
    const bool do_eval =
        last || (cfg.eval_every > 0 && (r + 1) % cfg.eval_every == 0);
    const std::vector<int> idx = sampler.next(cfg.batch, rng);
    std::vector<LabeledSentence> batch;
    for (int i : idx) batch.push_back(train[static_cast<size_t>(i)]);
    BatchGrad bg = batch_gradients(params, batch, cfg.model, prep.vocab,
                                   prep.provider, alphabet, true, &rng);
    res.round_losses.push_back(bg.mean_loss);
    nlohmann::json rec = base_record(cfg, hash);
    rec["round"] = r;
    rec["scope"] = "global";
    rec["split"] = "train";
    rec["loss"] = bg.mean_loss;
    rec["wall_time_s"] = seconds_since(t0);
    res.records.push_back(rec);
    if (do_eval) {
      // Pre-step parameters, matching the federated evaluation point.
      EvalMetrics em = evaluate_model(params, test, cfg.model, prep.vocab,
                                      prep.provider, alphabet);
      nlohmann::json er = base_record(cfg, hash);
      er["round"] = r;
      er["scope"] = platform;
      er["split"] = "test";
      er["strict"] = prf_json(em.strict);
      er["relax"] = prf_json(em.relax);
      er["wall_time_s"] = seconds_since(t0);
      res.records.push_back(er);
    }
    Vector theta = flatten(params, all_names);
    opt.step(theta, flatten(bg.grads, all_names));
    unflatten(params, all_names, theta);
    if (tracker.converged(bg.mean_loss) && !last) break;
  }

  EvalMetrics final_em = evaluate_model(params, test, cfg.model, prep.vocab,
                                        prep.provider, alphabet);
  res.final_by_platform[platform] = final_em;
  res.final_global = final_em;
  nlohmann::json fr = base_record(cfg, hash);
  fr["round"] = cfg.rounds;
  fr["scope"] = platform;
  fr["split"] = "test";
  fr["final"] = true;
  fr["strict"] = prf_json(final_em.strict);
  fr["relax"] = prf_json(final_em.relax);
  fr["wall_time_s"] = seconds_since(t0);
  res.records.push_back(fr);
  res.central_params = std::move(params);
  return res;
}

FederationConfig to_fed(const ExperimentConfig& cfg) {
  FederationConfig fed;
  fed.batch = cfg.batch;
  fed.lr = cfg.lr;
  fed.optimizer = parse_optim(cfg.optimizer);
  fed.max_rounds = cfg.rounds;
  fed.tolerance = cfg.tolerance;
  fed.eval_every = cfg.eval_every;
  fed.seed = cfg.seed;
  fed.strategy = cfg.strategy;
  fed.model = cfg.model;
  return fed;
}

ParameterStore federated_init(const ExperimentConfig& cfg,
                              const Prepared& prep) {
  ParameterStore init = init_params(
      cfg.model, prep.vocab, static_cast<int>(prep.alphabet.size()), cfg.seed);
  if (!cfg.embeddings_path.empty()) {
    load_pretrained_embeddings(init, prep.vocab, cfg.embeddings_path);
  }
  return init;
}

void round_records(const ExperimentConfig& cfg,
                   const std::vector<Corpus>& corpora,
                   const std::vector<RoundReport>& rounds,
                   const std::string& hash, ExperimentResult& res) {
  for (const RoundReport& rep : rounds) {
    res.round_losses.push_back(rep.global_loss);
    nlohmann::json rec = base_record(cfg, hash);
    rec["round"] = rep.round;
    rec["scope"] = "global";
    rec["split"] = "train";
    rec["loss"] = rep.global_loss;
    rec["wall_time_s"] = rep.wall_time_s;
    res.records.push_back(rec);
    for (const PlatformRoundStats& ps : rep.platforms) {
      nlohmann::json pr = base_record(cfg, hash);
      pr["round"] = rep.round;
      pr["scope"] = corpora[static_cast<size_t>(ps.platform)].platform;
      pr["split"] = "train";
      pr["loss"] = ps.batch_loss;
      res.records.push_back(pr);
      if (ps.has_eval) {
        nlohmann::json er = base_record(cfg, hash);
        er["round"] = rep.round;
        er["scope"] = corpora[static_cast<size_t>(ps.platform)].platform;
        er["split"] = "test";
        er["strict"] = prf_json(ps.eval.strict);
        er["relax"] = prf_json(ps.eval.relax);
        res.records.push_back(er);
      }
    }
  }
}

ExperimentResult run_federated(const ExperimentConfig& cfg, Prepared prep,
                               const std::vector<Corpus>& corpora) {
  const FederationConfig fed = to_fed(cfg);
  ParameterStore init = federated_init(cfg, prep);
  const Partition part = make_partition(init, cfg.strategy);
  Vector theta_s_init = flatten(init, part.shared);

  std::vector<PlatformState> states;
  for (size_t i = 0; i < corpora.size(); ++i) {
    states.push_back(make_platform_state(
        static_cast<int>(i), prep.train[i].sentences, prep.test[i].sentences,
        prep.alphabet, init, fed, prep.vocab, prep.provider));
  }

  // Channel setup: both transports drive the identical protocol loop.
  std::vector<std::unique_ptr<Channel>> coord_side, platform_side;
  std::unique_ptr<SocketListener> listener;
  if (cfg.transport == "socket") {
    listener = std::make_unique<SocketListener>(0);
    const std::uint16_t port = listener->port();
    for (size_t i = 0; i < states.size(); ++i) {
      platform_side.push_back(socket_connect("127.0.0.1", port));
      coord_side.push_back(listener->accept());
    }
  } else {
    for (size_t i = 0; i < states.size(); ++i) {
      auto [a, b] = in_process_pair();
      coord_side.push_back(std::move(a));
      platform_side.push_back(std::move(b));
    }
  }

  std::vector<std::thread> workers;
  std::vector<std::exception_ptr> errors(states.size());
  for (size_t i = 0; i < states.size(); ++i) {
    workers.emplace_back([&, i] {
      try {
        platform_serve(*platform_side[i], states[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    });
  }
  std::vector<Channel*> coord_ptrs;
  for (auto& c : coord_side) coord_ptrs.push_back(c.get());
  CoordinatorOutcome outcome;
  std::exception_ptr coord_error;
  try {
    outcome = coordinator_serve(coord_ptrs, std::move(theta_s_init), fed);
  } catch (...) {
    coord_error = std::current_exception();
    coord_side.clear();  // unblock platform threads
  }
  for (auto& w : workers) w.join();
  if (coord_error) std::rethrow_exception(coord_error);
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  const std::string hash = config_hash(cfg);
  ExperimentResult res;
  round_records(cfg, corpora, outcome.rounds, hash, res);

  // Final metrics from the broadcast shared model plus each private module.
  eval::Counts strict_total, relax_total;
  for (size_t i = 0; i < states.size(); ++i) {
    EvalMetrics em = evaluate_model(states[i].params, states[i].test,
                                    cfg.model, prep.vocab, prep.provider,
                                    states[i].alphabet);
    res.final_by_platform[corpora[i].platform] = em;
    strict_total += em.strict_counts;
    relax_total += em.relax_counts;
    nlohmann::json fr = base_record(cfg, hash);
    fr["round"] = cfg.rounds;
    fr["scope"] = corpora[i].platform;
    fr["split"] = "test";
    fr["final"] = true;
    fr["strict"] = prf_json(em.strict);
    fr["relax"] = prf_json(em.relax);
    res.records.push_back(fr);
    res.platform_params.push_back(states[i].params);
  }
  res.final_global.strict_counts = strict_total;
  res.final_global.relax_counts = relax_total;
  res.final_global.strict = eval::prf_from(strict_total);
  res.final_global.relax = eval::prf_from(relax_total);
  nlohmann::json gr = base_record(cfg, hash);
  gr["round"] = cfg.rounds;
  gr["scope"] = "global";
  gr["split"] = "test";
  gr["final"] = true;
  gr["strict"] = prf_json(res.final_global.strict);
  gr["relax"] = prf_json(res.final_global.relax);
  res.records.push_back(gr);
  res.theta_s = std::move(outcome.theta_s);
  return res;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg,
                                const std::vector<Corpus>& corpora) {
  validate(cfg);
  Prepared prep = prepare(cfg, corpora);
  if (cfg.mode == "central") {
    return run_central(cfg, std::move(prep), corpora);
  }
  return run_federated(cfg, std::move(prep), corpora);
}

ExperimentResult run_coordinator(const ExperimentConfig& cfg,
                                 const std::vector<Corpus>& corpora,
                                 std::uint16_t listen_port) {
  validate(cfg);
  if (cfg.mode != "federated" || cfg.transport != "socket") {
    throw std::invalid_argument(
        "run_coordinator: requires mode=federated, transport=socket");
  }
  Prepared prep = prepare(cfg, corpora);
  const FederationConfig fed = to_fed(cfg);
  ParameterStore init = federated_init(cfg, prep);
  const Partition part = make_partition(init, cfg.strategy);

  SocketListener listener(listen_port);
  std::vector<std::unique_ptr<Channel>> channels;
  for (size_t i = 0; i < corpora.size(); ++i) {
    channels.push_back(listener.accept());
  }
  std::vector<Channel*> ptrs;
  for (auto& c : channels) ptrs.push_back(c.get());
  CoordinatorOutcome outcome =
      coordinator_serve(ptrs, flatten(init, part.shared), fed);

  const std::string hash = config_hash(cfg);
  ExperimentResult res;
  round_records(cfg, corpora, outcome.rounds, hash, res);
  // Private parameters live in the platform processes, so final metrics come
  // from the last round's platform evaluations (macro-averaged globally).
  if (!outcome.rounds.empty()) {
    double sf = 0, rf = 0;
    int n = 0;
    for (const PlatformRoundStats& ps : outcome.rounds.back().platforms) {
      if (!ps.has_eval) continue;
      res.final_by_platform[corpora[static_cast<size_t>(ps.platform)]
                                .platform] = ps.eval;
      sf += ps.eval.strict.f1;
      rf += ps.eval.relax.f1;
      ++n;
    }
    if (n > 0) {
      res.final_global.strict.f1 = sf / n;
      res.final_global.relax.f1 = rf / n;
    }
  }
  res.theta_s = std::move(outcome.theta_s);
  return res;
}

void run_platform(const ExperimentConfig& cfg,
                  const std::vector<Corpus>& corpora, const std::string& host,
                  std::uint16_t port, const std::string& platform_id) {
  validate(cfg);
  Prepared prep = prepare(cfg, corpora);
  int index = -1;
  for (size_t i = 0; i < corpora.size(); ++i) {
    if (corpora[i].platform == platform_id) index = static_cast<int>(i);
  }
  if (index < 0) {
    throw std::invalid_argument("run_platform: unknown platform '" +
                                platform_id + "'");
  }
  const FederationConfig fed = to_fed(cfg);
  ParameterStore init = federated_init(cfg, prep);
  const size_t ui = static_cast<size_t>(index);
  PlatformState state = make_platform_state(
      index, prep.train[ui].sentences, prep.test[ui].sentences, prep.alphabet,
      std::move(init), fed, prep.vocab, prep.provider);
  auto channel = socket_connect(host, port);
  platform_serve(*channel, state);
}

CompareResult compare_experiments(const ExperimentConfig& a,
                                  const ExperimentConfig& b,
                                  const std::vector<Corpus>& corpora,
                                  const std::vector<std::uint64_t>& seeds) {
  if (seeds.empty()) {
    throw std::invalid_argument("compare_experiments: no seeds");
  }
  auto run_all = [&](const ExperimentConfig& base) {
    std::vector<EvalMetrics> out;
    for (std::uint64_t s : seeds) {
      ExperimentConfig cfg = base;
      cfg.seed = s;
      cfg.out_path.clear();
      out.push_back(run_experiment(cfg, corpora).final_global);
    }
    return out;
  };
  const auto ra = run_all(a);
  const auto rb = run_all(b);
  auto summarize = [&](const std::vector<EvalMetrics>& runs,
                       const std::string& label) {
    CompareRow row;
    row.label = label;
    for (const auto& m : runs) {
      row.mean_strict_f1 += m.strict.f1;
      row.mean_relax_f1 += m.relax.f1;
    }
    const double n = static_cast<double>(runs.size());
    row.mean_strict_f1 /= n;
    row.mean_relax_f1 /= n;
    for (const auto& m : runs) {
      row.std_strict_f1 += std::pow(m.strict.f1 - row.mean_strict_f1, 2);
      row.std_relax_f1 += std::pow(m.relax.f1 - row.mean_relax_f1, 2);
    }
    row.std_strict_f1 = std::sqrt(row.std_strict_f1 / n);
    row.std_relax_f1 = std::sqrt(row.std_relax_f1 / n);
    return row;
  };
  CompareResult out;
  out.a = summarize(ra, config_hash(a));
  out.b = summarize(rb, config_hash(b));
  for (size_t i = 0; i < seeds.size(); ++i) {
    out.mean_diff_strict += ra[i].strict.f1 - rb[i].strict.f1;
    out.mean_diff_relax += ra[i].relax.f1 - rb[i].relax.f1;
  }
  out.mean_diff_strict /= static_cast<double>(seeds.size());
  out.mean_diff_relax /= static_cast<double>(seeds.size());
  return out;
}

std::string emit_plot_data(const std::vector<std::string>& metric_files) {
  std::ostringstream csv;
  csv << "file,round,scope,split,mask_ratio,seed,loss,strict_f1,relax_f1\n";
  for (const auto& path : metric_files) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("emit_plot_data: cannot open " + path);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const nlohmann::json j = nlohmann::json::parse(line);
      csv << path << ',' << j.value("round", -1) << ','
          << j.value("scope", std::string()) << ','
          << j.value("split", std::string()) << ','
          << j.value("mask_ratio", 0.0) << ',' << j.value("seed", 0ULL) << ',';
      if (j.contains("loss")) csv << j["loss"].get<double>();
      csv << ',';
      if (j.contains("strict")) csv << j["strict"]["f1"].get<double>();
      csv << ',';
      if (j.contains("relax")) csv << j["relax"]["f1"].get<double>();
      csv << '\n';
    }
  }
  return csv.str();
}

void write_records(const std::vector<nlohmann::json>& records,
                   const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_records: cannot open " + path);
  for (const auto& r : records) out << r.dump() << '\n';
}

}  // namespace fedner
