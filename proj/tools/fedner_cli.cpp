// fedner: experiment runner for the federated sequence-labeling framework.
//
// Subcommands:
//   run            one experiment (central or federated; inproc or socket)
//   compare        two configs over a seed list, summary to stdout
//   plot-data      flatten metrics JSONL files into one CSV table
//   gen-synthetic  write the synthetic multi-platform benchmark to disk
//
// Log verbosity comes from the FEDNER_LOG environment variable:
// quiet | info (default) | debug.

#include "fedner/experiment.hpp"
#include "fedner/synthetic.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace {

enum class LogLevel { Quiet = 0, Info = 1, Debug = 2 };

LogLevel log_level() {
  const char* env = std::getenv("FEDNER_LOG");
  if (!env) return LogLevel::Info;
  const std::string v = env;
  if (v == "quiet") return LogLevel::Quiet;
  if (v == "debug") return LogLevel::Debug;
  if (v == "info") return LogLevel::Info;
  std::cerr << "fedner: unknown FEDNER_LOG value '" << v
            << "', using info\n";
  return LogLevel::Info;
}

void add_run_options(CLI::App& cmd, fedner::ExperimentConfig& cfg,
                     int& synthetic_platforms, bool& use_synthetic) {
  cmd.add_option("--mode", cfg.mode, "central | federated")
      ->check(CLI::IsMember({"central", "federated"}));
  cmd.add_option("--manifest", cfg.manifest,
                 "corpus manifest JSON (platform id -> CoNLL path)");
  cmd.add_flag("--synthetic", use_synthetic,
               "use the built-in synthetic benchmark instead of a manifest");
  cmd.add_option("--synthetic-platforms", synthetic_platforms,
                 "platform count for --synthetic")
      ->check(CLI::PositiveNumber);
  cmd.add_option("--strategy", cfg.strategy,
                 "fedner-default | all-shared | all-private");
  cmd.add_option("--optimizer", cfg.optimizer, "adam | plain");
  cmd.add_option("--lr", cfg.lr, "learning rate");
  cmd.add_option("--batch", cfg.batch, "global batch size N");
  cmd.add_option("--rounds", cfg.rounds, "maximum training rounds");
  cmd.add_option("--eval-every", cfg.eval_every,
                 "evaluate every k rounds (0: final round only)");
  cmd.add_option("--tolerance", cfg.tolerance,
                 "moving-average early-stop tolerance (<= 0 disables)");
  cmd.add_option("--seed", cfg.seed, "random seed");
  cmd.add_option("--train-fraction", cfg.train_fraction,
                 "train split fraction per platform");
  cmd.add_option("--mask-ratio", cfg.mask_ratio,
                 "fraction of overlapped entities to mask in training data");
  cmd.add_option("--transport", cfg.transport, "inproc | socket")
      ->check(CLI::IsMember({"inproc", "socket"}));
  cmd.add_option("--central-platform", cfg.central_platform,
                 "platform id trained in central mode (default: first)");
  cmd.add_option("--embeddings", cfg.embeddings_path,
                 "pretrained word vectors, text format");
  cmd.add_option("--context", cfg.context_path,
                 "contextual embedding sidecar (text records)");
  cmd.add_option("--out", cfg.out_path, "metrics JSONL output path");
  cmd.add_option("--word-dim", cfg.model.word_dim, "word embedding dim");
  cmd.add_option("--char-dim", cfg.model.char_dim, "char embedding dim");
  cmd.add_option("--ctx-dim", cfg.model.ctx_dim,
                 "contextual channel dim (0 disables)");
  cmd.add_option("--filters", cfg.model.filters, "CNN filter count");
  cmd.add_option("--kernel", cfg.model.kernel, "CNN kernel width");
  cmd.add_option("--hidden", cfg.model.hidden, "BiLSTM hidden size per dir");
  cmd.add_option("--dropout", cfg.model.dropout, "dropout rate");
  cmd.set_config("--config", "", "flat key=value config file; flags override")
      ->configurable(false);
}

std::vector<fedner::Corpus> load_inputs(const fedner::ExperimentConfig& cfg,
                                        bool use_synthetic,
                                        int synthetic_platforms) {
  if (use_synthetic != cfg.manifest.empty()) {
    throw CLI::ValidationError("input",
                               "exactly one of --manifest or --synthetic");
  }
  if (use_synthetic) {
    fedner::SyntheticSpec spec;
    spec.platforms = synthetic_platforms;
    spec.seed = cfg.seed;
    return fedner::make_synthetic_corpora(spec);
  }
  return fedner::load_corpora(fedner::load_manifest(cfg.manifest));
}

void print_final(const fedner::ExperimentResult& res) {
  for (const auto& [platform, m] : res.final_by_platform) {
    std::cout << platform << "  strict P/R/F1 " << m.strict.precision << '/'
              << m.strict.recall << '/' << m.strict.f1 << "  relax F1 "
              << m.relax.f1 << '\n';
  }
  std::cout << "global  strict F1 " << res.final_global.strict.f1
            << "  relax F1 " << res.final_global.relax.f1 << '\n';
}

/// Exit code 0 requires the metrics file to parse back line-by-line.
bool metrics_well_formed(const std::string& path) {
  std::ifstream in(path);
  if (!in) return false;
  std::string line;
  bool any = false;
  while (std::getline(in, line)) {
    if (line.empty()) return false;
    if (!nlohmann::json::accept(line)) return false;
    any = true;
  }
  return any;
}

int cmd_run(const fedner::ExperimentConfig& cfg, bool use_synthetic,
            int synthetic_platforms, const std::string& listen,
            const std::string& connect, const std::string& platform_id) {
  const LogLevel log = log_level();
  const auto corpora = load_inputs(cfg, use_synthetic, synthetic_platforms);
  if (!connect.empty()) {
    const auto colon = connect.rfind(':');
    if (colon == std::string::npos) {
      throw CLI::ValidationError("--connect", "expected host:port");
    }
    fedner::run_platform(cfg, corpora, connect.substr(0, colon),
                         static_cast<std::uint16_t>(
                             std::stoi(connect.substr(colon + 1))),
                         platform_id);
    if (log >= LogLevel::Info) {
      std::cerr << "fedner: platform '" << platform_id << "' finished\n";
    }
    return 0;
  }
  fedner::ExperimentResult res;
  if (!listen.empty()) {
    res = fedner::run_coordinator(
        cfg, corpora, static_cast<std::uint16_t>(std::stoi(listen)));
  } else {
    res = fedner::run_experiment(cfg, corpora);
  }
  if (log >= LogLevel::Debug) {
    for (const auto& r : res.records) std::cerr << r.dump() << '\n';
  }
  if (!cfg.out_path.empty()) {
    fedner::write_records(res.records, cfg.out_path);
    if (!metrics_well_formed(cfg.out_path)) {
      std::cerr << "fedner: metrics file " << cfg.out_path
                << " is malformed\n";
      return 1;
    }
  } else {
    for (const auto& r : res.records) std::cout << r.dump() << '\n';
  }
  if (log >= LogLevel::Info) print_final(res);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FedNER: federated medical NER experiments"};
  app.require_subcommand(1);

  fedner::ExperimentConfig run_cfg;
  bool run_synth = false;
  int run_synth_platforms = 3;
  std::string listen, connect, platform_id;
  CLI::App* run = app.add_subcommand("run", "execute one experiment");
  add_run_options(*run, run_cfg, run_synth_platforms, run_synth);
  run->add_option("--listen", listen,
                  "socket coordinator: listen on this port (0 = ephemeral)");
  run->add_option("--connect", connect,
                  "socket platform: coordinator host:port");
  run->add_option("--platform", platform_id,
                  "platform id served by this process (with --connect)");

  fedner::ExperimentConfig cmp_a, cmp_b;
  bool cmp_synth = false;
  int cmp_synth_platforms = 3;
  std::string cmp_config_a, cmp_config_b, cmp_manifest, seeds_arg = "1,2,3,4,5";
  CLI::App* cmp = app.add_subcommand(
      "compare", "run two configs over a seed list and summarize final F1");
  cmp->add_option("--a", cmp_config_a, "config file for run A")->required();
  cmp->add_option("--b", cmp_config_b, "config file for run B")->required();
  cmp->add_option("--manifest", cmp_manifest, "corpus manifest for both runs");
  cmp->add_flag("--synthetic", cmp_synth, "use the synthetic benchmark");
  cmp->add_option("--synthetic-platforms", cmp_synth_platforms,
                  "platform count for --synthetic");
  cmp->add_option("--seeds", seeds_arg, "comma-separated seed list");

  std::vector<std::string> plot_files;
  std::string plot_out;
  CLI::App* plot = app.add_subcommand(
      "plot-data", "flatten metrics JSONL files into one CSV table");
  plot->add_option("files", plot_files, "metrics JSONL files")->required();
  plot->add_option("--out", plot_out, "CSV output path (default: stdout)");

  fedner::SyntheticSpec synth_spec;
  std::string synth_dir;
  CLI::App* synth = app.add_subcommand(
      "gen-synthetic", "write the synthetic benchmark as CoNLL + manifest");
  synth->add_option("--dir", synth_dir, "output directory")->required();
  synth->add_option("--platforms", synth_spec.platforms, "platform count");
  synth->add_option("--sentences", synth_spec.sentences_per_platform,
                    "sentences per platform");
  synth->add_option("--entities", synth_spec.entities, "entity lexicon size");
  synth->add_option("--seed", synth_spec.seed, "generator seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      return cmd_run(run_cfg, run_synth, run_synth_platforms, listen, connect,
                     platform_id);
    }
    if (cmp->parsed()) {
      // Reuse the run-option schema so config files share one vocabulary.
      auto parse_file = [&](const std::string& path,
                            fedner::ExperimentConfig& cfg) {
        bool synth_flag = false;
        int synth_platforms = cmp_synth_platforms;
        CLI::App sub{"config"};
        add_run_options(sub, cfg, synth_platforms, synth_flag);
        sub.allow_config_extras(false);
        std::vector<std::string> args = {"--config", path};
        sub.parse(std::vector<std::string>(args.rbegin(), args.rend()));
      };
      parse_file(cmp_config_a, cmp_a);
      parse_file(cmp_config_b, cmp_b);
      if (!cmp_manifest.empty()) {
        cmp_a.manifest = cmp_manifest;
        cmp_b.manifest = cmp_manifest;
      }
      std::vector<std::uint64_t> seeds;
      std::stringstream ss(seeds_arg);
      for (std::string tok; std::getline(ss, tok, ',');) {
        if (!tok.empty()) seeds.push_back(std::stoull(tok));
      }
      const auto corpora =
          load_inputs(cmp_a, cmp_synth, cmp_synth_platforms);
      const auto result =
          fedner::compare_experiments(cmp_a, cmp_b, corpora, seeds);
      std::cout << "config                mean strict F1   std      mean "
                   "relax F1   std\n";
      for (const auto* row : {&result.a, &result.b}) {
        std::cout << row->label << "  " << row->mean_strict_f1 << "  "
                  << row->std_strict_f1 << "  " << row->mean_relax_f1 << "  "
                  << row->std_relax_f1 << '\n';
      }
      std::cout << "paired mean difference (A - B): strict "
                << result.mean_diff_strict << ", relax "
                << result.mean_diff_relax << '\n';
      return 0;
    }
    if (plot->parsed()) {
      const std::string csv = fedner::emit_plot_data(plot_files);
      if (plot_out.empty()) {
        std::cout << csv;
      } else {
        std::ofstream out(plot_out);
        if (!out) throw std::runtime_error("cannot open " + plot_out);
        out << csv;
      }
      return 0;
    }
    if (synth->parsed()) {
      const auto corpora = fedner::make_synthetic_corpora(synth_spec);
      std::filesystem::create_directories(synth_dir);
      nlohmann::json manifest;
      manifest["platforms"] = nlohmann::json::array();
      for (const auto& c : corpora) {
        const std::string file = c.platform + ".conll";
        fedner::write_conll(
            c, (std::filesystem::path(synth_dir) / file).string());
        manifest["platforms"].push_back({{"id", c.platform}, {"path", file}});
      }
      std::ofstream out(std::filesystem::path(synth_dir) / "manifest.json");
      out << manifest.dump(2) << '\n';
      std::cout << "wrote " << corpora.size() << " platforms to " << synth_dir
                << '\n';
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "fedner: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
