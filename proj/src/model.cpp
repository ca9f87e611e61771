#include "fedner/model.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace fedner {

namespace {

Matrix uniform_init(Eigen::Index rows, Eigen::Index cols,
                    std::mt19937_64& rng, double half_width = 0.1) {
  std::uniform_real_distribution<double> dist(-half_width, half_width);
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = dist(rng);
  }
  return m;
}

}  // namespace

ParameterStore init_params(const ModelConfig& cfg, const Vocab& vocab,
                           int num_labels, std::uint64_t seed) {
  if (cfg.word_dim <= 0 || cfg.char_dim <= 0 || cfg.filters <= 0 ||
      cfg.kernel <= 0 || cfg.hidden <= 0 || num_labels <= 0) {
    throw std::invalid_argument("init_params: dimensions must be positive");
  }
  std::mt19937_64 rng(seed);
  const int h = cfg.hidden;
  const int concat_dim = cfg.word_dim + cfg.filters + cfg.ctx_dim;

  ParameterStore p;
  p.add("word_table", uniform_init(cfg.word_dim,
                                   static_cast<int>(vocab.tokens.size()),
                                   rng));
  p.add("char_table", uniform_init(cfg.char_dim,
                                   static_cast<int>(vocab.chars.size()), rng));
  p.add("char_cnn.W",
        uniform_init(cfg.filters, cfg.char_dim * cfg.kernel, rng));
  p.add("char_cnn.b", Matrix::Zero(cfg.filters, 1));
  p.add("word_cnn.W", uniform_init(cfg.filters, concat_dim * cfg.kernel, rng));
  p.add("word_cnn.b", Matrix::Zero(cfg.filters, 1));
  for (const char* dir : {"lstm_fwd", "lstm_bwd"}) {
    p.add(std::string(dir) + ".Wx", uniform_init(4 * h, cfg.filters, rng));
    p.add(std::string(dir) + ".Wh", uniform_init(4 * h, h, rng));
    p.add(std::string(dir) + ".b", Matrix::Zero(4 * h, 1));
  }
  p.add("emission.W", uniform_init(num_labels, 2 * h, rng));
  p.add("emission.b", Matrix::Zero(num_labels, 1));
  p.add("crf.trans", Matrix::Zero(num_labels + 2, num_labels + 2));
  return p;
}

int load_pretrained_embeddings(ParameterStore& params, const Vocab& vocab,
                               const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("load_pretrained_embeddings: cannot open " +
                             path);
  }
  Matrix& table = params.at("word_table");
  const Eigen::Index dim = table.rows();
  int loaded = 0;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string token;
    ls >> token;
    auto it = vocab.token_index.find(fold_case(token));
    Eigen::VectorXd v(dim);
    for (Eigen::Index i = 0; i < dim; ++i) {
      if (!(ls >> v(i))) {
        throw std::runtime_error("load_pretrained_embeddings: " + path + ":" +
                                 std::to_string(line_no) + ": expected " +
                                 std::to_string(dim) + " values");
      }
    }
    if (it == vocab.token_index.end()) continue;
    table.col(it->second) = v;
    ++loaded;
  }
  return loaded;
}

Var char_encode(Tape& tape, const std::string& token, Var char_table,
                Var char_w, Var char_b, int kernel, const Vocab& vocab) {
  std::vector<int> idx;
  if (token.empty()) {
    idx.push_back(vocab.unk_char);
  } else {
    idx.reserve(token.size());
    for (char c : token) idx.push_back(vocab.char_id(c));
  }
  Var embedded = gather_cols(char_table, idx);
  Var conv = conv1d_same(embedded, char_w, char_b, kernel);
  return max_over_time(conv);
}

namespace {

/// Inverted-dropout mask as a tape constant; draws one uniform per element.
Var dropout_mask(Tape& tape, Eigen::Index rows, Eigen::Index cols, double rate,
                 std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  Matrix m(rows, cols);
  const double keep = 1.0 - rate;
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) {
      m(i, j) = dist(rng) < keep ? 1.0 / keep : 0.0;
    }
  }
  return tape.constant(std::move(m));
}

struct LstmWeights {
  Var wx, wh, b;
};

std::vector<Var> lstm_run(Tape& tape, const std::vector<Var>& inputs,
                          const LstmWeights& w, int hidden, bool backward) {
  const int k = static_cast<int>(inputs.size());
  Var h = tape.constant(Matrix::Zero(hidden, 1));
  Var c = tape.constant(Matrix::Zero(hidden, 1));
  std::vector<Var> out(static_cast<size_t>(k));
  for (int step = 0; step < k; ++step) {
    const int t = backward ? k - 1 - step : step;
    Var x = inputs[static_cast<size_t>(t)];
    Var z = add(add(matmul(w.wx, x), matmul(w.wh, h)), w.b);
    Var i = sigmoid(block(z, 0, 0, hidden, 1));
    Var f = sigmoid(block(z, hidden, 0, hidden, 1));
    Var g = vtanh(block(z, 2 * hidden, 0, hidden, 1));
    Var o = sigmoid(block(z, 3 * hidden, 0, hidden, 1));
    c = add(mul(f, c), mul(i, g));
    h = mul(o, vtanh(c));
    out[static_cast<size_t>(t)] = h;
  }
  return out;
}

}  // namespace

ForwardTrace model_forward(const LabeledSentence& sentence,
                           const ParameterStore& params,
                           const ModelConfig& cfg, const Vocab& vocab,
                           const ContextualProvider& provider, int num_labels,
                           bool train, std::mt19937_64* rng) {
  const int k = static_cast<int>(sentence.tokens.size());
  if (k == 0) throw std::invalid_argument("model_forward: empty sentence");
  if (provider.enabled() != (cfg.ctx_dim > 0)) {
    throw std::invalid_argument(
        "model_forward: ctx_dim and provider state disagree");
  }
  if (train && cfg.dropout > 0.0 && rng == nullptr) {
    throw std::invalid_argument("model_forward: dropout needs an RNG");
  }

  ForwardTrace trace;
  trace.tape = std::make_unique<Tape>();
  Tape& tape = *trace.tape;
  for (const auto& name : params.names()) {
    trace.param_vars.emplace(name, tape.leaf(params.at(name), name));
  }
  auto pv = [&](const std::string& name) { return trace.param_vars.at(name); };

  // Word channel: case-folded lookup, unknown tokens hit the <unk> column.
  std::vector<int> word_idx;
  word_idx.reserve(static_cast<size_t>(k));
  for (const auto& tok : sentence.tokens) {
    word_idx.push_back(vocab.token_id(tok));
  }
  trace.word_embed = gather_cols(pv("word_table"), word_idx);

  // Character channel keeps original case.
  std::vector<Var> char_cols;
  char_cols.reserve(static_cast<size_t>(k));
  for (const auto& tok : sentence.tokens) {
    char_cols.push_back(char_encode(tape, tok, pv("char_table"),
                                    pv("char_cnn.W"), pv("char_cnn.b"),
                                    cfg.kernel, vocab));
  }
  trace.char_embed = hstack(char_cols);

  std::vector<Var> parts = {trace.word_embed, trace.char_embed};
  if (provider.enabled()) {
    Matrix ctx(cfg.ctx_dim, k);
    for (int t = 0; t < k; ++t) {
      ctx.col(t) = provider.lookup(sentence.provenance, t);
    }
    trace.ctx_embed = tape.constant(std::move(ctx));
    parts.push_back(*trace.ctx_embed);
  }
  Var concat = vstack(parts);
  if (train && cfg.dropout > 0.0) {
    concat = mul(concat, dropout_mask(tape, tape.value(concat).rows(), k,
                                      cfg.dropout, *rng));
  }
  trace.concat = concat;

  trace.conv_out =
      conv1d_same(concat, pv("word_cnn.W"), pv("word_cnn.b"), cfg.kernel);

  std::vector<Var> steps;
  steps.reserve(static_cast<size_t>(k));
  for (int t = 0; t < k; ++t) {
    steps.push_back(block(trace.conv_out, 0, t, cfg.filters, 1));
  }
  LstmWeights fwd{pv("lstm_fwd.Wx"), pv("lstm_fwd.Wh"), pv("lstm_fwd.b")};
  LstmWeights bwd{pv("lstm_bwd.Wx"), pv("lstm_bwd.Wh"), pv("lstm_bwd.b")};
  std::vector<Var> hf = lstm_run(tape, steps, fwd, cfg.hidden, false);
  std::vector<Var> hb = lstm_run(tape, steps, bwd, cfg.hidden, true);
  std::vector<Var> r_cols;
  r_cols.reserve(static_cast<size_t>(k));
  for (int t = 0; t < k; ++t) {
    r_cols.push_back(vstack({hf[static_cast<size_t>(t)],
                             hb[static_cast<size_t>(t)]}));
  }
  Var r = hstack(r_cols);
  if (train && cfg.dropout > 0.0) {
    r = mul(r, dropout_mask(tape, 2 * cfg.hidden, k, cfg.dropout, *rng));
  }
  trace.rnn_out = r;

  Var ones_row = tape.constant(Matrix::Ones(1, k));
  Var scores = add(matmul(pv("emission.W"), r),
                   matmul(pv("emission.b"), ones_row));  // L x k
  trace.emissions = transpose(scores);
  (void)num_labels;
  return trace;
}

std::vector<std::string> predict(const LabeledSentence& sentence,
                                 const ParameterStore& params,
                                 const ModelConfig& cfg, const Vocab& vocab,
                                 const ContextualProvider& provider,
                                 const std::vector<std::string>& alphabet) {
  ForwardTrace trace =
      model_forward(sentence, params, cfg, vocab, provider,
                    static_cast<int>(alphabet.size()), /*train=*/false,
                    nullptr);
  const Matrix& em = trace.tape->value(trace.emissions);
  std::vector<int> labels = crf::viterbi_decode(em, params.at("crf.trans"));
  std::vector<std::string> tags;
  tags.reserve(labels.size());
  for (int y : labels) tags.push_back(alphabet.at(static_cast<size_t>(y)));
  return tags;
}

Var sentence_loss(ForwardTrace& trace, const std::vector<int>& gold) {
  return crf::neg_log_likelihood(trace.emissions,
                                 trace.param_vars.at("crf.trans"), gold);
}

}  // namespace fedner
