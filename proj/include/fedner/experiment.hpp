#pragma once

#include "fedner/federated.hpp"
#include "fedner/model.hpp"
#include "fedner/trainer.hpp"

#include <json.hpp>

#include <map>
#include <string>
#include <vector>

namespace fedner {

/// One experiment invocation: centralized training on one platform's corpus,
/// or a federated run over every platform in the manifest.
struct ExperimentConfig {
  std::string mode = "federated";  // central | federated
  std::string manifest;            // corpus manifest path (CLI)
  std::string strategy = "fedner-default";
  ModelConfig model;
  std::string optimizer = "adam";
  double lr = 0.001;
  int batch = 64;
  int rounds = 100;
  int eval_every = 0;
  double tolerance = 0.0;
  std::uint64_t seed = 0;
  double train_fraction = 0.8;
  double mask_ratio = 0.0;
  std::string transport = "inproc";  // inproc | socket
  std::string central_platform;      // platform id; empty = first
  std::string embeddings_path;       // optional pretrained word vectors
  std::string context_path;          // optional contextual sidecar
  std::string out_path;              // metrics JSONL; empty = stdout only
};

void validate(const ExperimentConfig& cfg);
/// Stable hash of every field that influences the run (not out_path).
std::string config_hash(const ExperimentConfig& cfg);

struct ExperimentResult {
  std::vector<nlohmann::json> records;     // JSONL metric stream
  std::vector<double> round_losses;        // global train loss per round
  std::map<std::string, EvalMetrics> final_by_platform;
  EvalMetrics final_global;                // micro over platform test sets
  // Final parameters, for equivalence checks: central fills params, the
  // federated mode fills theta_s plus one full store per platform.
  ParameterStore central_params;
  Vector theta_s;
  std::vector<ParameterStore> platform_params;
};

ExperimentResult run_experiment(const ExperimentConfig& cfg,
                                const std::vector<Corpus>& corpora);

struct CompareRow {
  std::string label;
  double mean_strict_f1 = 0, std_strict_f1 = 0;
  double mean_relax_f1 = 0, std_relax_f1 = 0;
};

struct CompareResult {
  CompareRow a, b;
  double mean_diff_strict = 0;  // paired mean of (a - b) strict F1
  double mean_diff_relax = 0;
};

/// Runs both configs over the seed list and summarizes final global F1.
CompareResult compare_experiments(const ExperimentConfig& a,
                                  const ExperimentConfig& b,
                                  const std::vector<Corpus>& corpora,
                                  const std::vector<std::uint64_t>& seeds);

/// Multi-process socket roles. The coordinator listens for one connection per
/// platform in the manifest and drives a full run; each platform process
/// connects and serves its own corpus. Both sides derive splits, vocabulary,
/// and initial parameters deterministically from the same config + corpora,
/// so nothing but shared-module gradients crosses the wire.
ExperimentResult run_coordinator(const ExperimentConfig& cfg,
                                 const std::vector<Corpus>& corpora,
                                 std::uint16_t listen_port);
void run_platform(const ExperimentConfig& cfg,
                  const std::vector<Corpus>& corpora, const std::string& host,
                  std::uint16_t port, const std::string& platform_id);

/// Flattens metric files (JSONL) into one csv-style table of series.
std::string emit_plot_data(const std::vector<std::string>& metric_files);

void write_records(const std::vector<nlohmann::json>& records,
                   const std::string& path);

}  // namespace fedner
