#pragma once

#include "fedner/crf.hpp"
#include "fedner/data.hpp"
#include "fedner/params.hpp"
#include "fedner/tape.hpp"

#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace fedner {

struct ModelConfig {
  int word_dim = 50;
  int char_dim = 16;
  int ctx_dim = 0;  // contextual channel width; 0 disables it
  int filters = 32;
  int kernel = 3;
  int hidden = 32;
  double dropout = 0.2;
};

/// All trainable parameters, grouped by name prefix:
///   word_table, char_table          embedding matrices (dim x vocab)
///   char_cnn.{W,b}, word_cnn.{W,b}  convolution filters and biases
///   lstm_fwd.{Wx,Wh,b}, lstm_bwd.{Wx,Wh,b}
///   emission.{W,b}                  2H -> L projection
///   crf.trans                       (L+2) x (L+2) transitions (zero init)
ParameterStore init_params(const ModelConfig& cfg, const Vocab& vocab,
                           int num_labels, std::uint64_t seed);

/// Overwrites word-table columns for tokens found in a text-format embedding
/// file ("token v1 .. vD" per line); other columns keep their random init.
/// Returns the number of tokens initialized.
int load_pretrained_embeddings(ParameterStore& params, const Vocab& vocab,
                               const std::string& path);

/// One sentence's forward pass. Owns its tape; Vars stay valid while the
/// trace is alive.
struct ForwardTrace {
  std::unique_ptr<Tape> tape;
  std::map<std::string, Var> param_vars;  // leaves, keyed by parameter name
  Var word_embed;   // D_w x k
  Var char_embed;   // F x k
  std::optional<Var> ctx_embed;  // D_l x k when the provider is enabled
  Var concat;       // (D_w + F + D_l) x k, post-dropout in training
  Var conv_out;     // F x k
  Var rnn_out;      // 2H x k
  Var emissions;    // k x L
};

/// Character channel for one token: embedding lookup, same-length CNN, max
/// over time. Empty tokens map to a single unknown character.
Var char_encode(Tape& tape, const std::string& token, Var char_table,
                Var char_w, Var char_b, int kernel, const Vocab& vocab);

ForwardTrace model_forward(const LabeledSentence& sentence,
                           const ParameterStore& params,
                           const ModelConfig& cfg, const Vocab& vocab,
                           const ContextualProvider& provider, int num_labels,
                           bool train, std::mt19937_64* rng);

/// Viterbi tags through the label alphabet.
std::vector<std::string> predict(const LabeledSentence& sentence,
                                 const ParameterStore& params,
                                 const ModelConfig& cfg, const Vocab& vocab,
                                 const ContextualProvider& provider,
                                 const std::vector<std::string>& alphabet);

/// Negative log-likelihood node for gold labels, on the trace's tape.
Var sentence_loss(ForwardTrace& trace, const std::vector<int>& gold);

}  // namespace fedner
