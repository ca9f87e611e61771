#include "fedner/crf.hpp"

#include <stdexcept>
#include <string>

namespace fedner::crf {

namespace {

void check_inputs(const Matrix& em, const Matrix& tr) {
  const Eigen::Index l = em.cols();
  if (em.rows() == 0) throw std::invalid_argument("crf: empty sentence");
  if (l == 0) throw std::invalid_argument("crf: empty label set");
  if (tr.rows() != l + 2 || tr.cols() != l + 2) {
    throw ShapeError("crf: transitions must be (L+2)x(L+2), got " +
                     std::to_string(tr.rows()) + "x" +
                     std::to_string(tr.cols()));
  }
}

void check_labels(Eigen::Index k, Eigen::Index l,
                  const std::vector<int>& labels) {
  if (static_cast<Eigen::Index>(labels.size()) != k) {
    throw std::invalid_argument("crf: label sequence length " +
                                std::to_string(labels.size()) +
                                " does not match sentence length " +
                                std::to_string(k));
  }
  for (int y : labels) {
    if (y < 0 || y >= l) {
      throw std::invalid_argument("crf: label index " + std::to_string(y) +
                                  " out of range [0," + std::to_string(l) +
                                  ")");
    }
  }
}

}  // namespace

Var log_partition(Var emissions, Var transitions) {
  Tape& t = *emissions.tape;
  const Matrix& em = t.value(emissions);
  const Matrix& tr = t.value(transitions);
  check_inputs(em, tr);
  const int k = static_cast<int>(em.rows());
  const int l = static_cast<int>(em.cols());

  Var inner = block(transitions, 0, 0, l, l);
  Var start_row = block(transitions, start_state(l), 0, 1, l);
  Var stop_col = block(transitions, 0, stop_state(l), l, 1);
  Var ones_row = t.constant(Matrix::Ones(1, l));

  // alpha is a 1 x L row of log-scores over the current label.
  Var alpha = add(block(emissions, 0, 0, 1, l), start_row);
  for (int step = 1; step < k; ++step) {
    // scores(i, j) = alpha_i + T(i, j); explicit tiling, no broadcasting.
    Var tiled = matmul(transpose(alpha), ones_row);
    Var scores = add(tiled, inner);
    alpha = add(logsumexp_cols(scores), block(emissions, step, 0, 1, l));
  }
  return logsumexp(add(alpha, transpose(stop_col)));
}

Var sequence_score(Var emissions, Var transitions,
                   const std::vector<int>& labels) {
  Tape& t = *emissions.tape;
  const Matrix& em = t.value(emissions);
  const Matrix& tr = t.value(transitions);
  check_inputs(em, tr);
  const int l = static_cast<int>(em.cols());
  check_labels(em.rows(), l, labels);

  std::vector<std::pair<int, int>> em_ij;
  em_ij.reserve(labels.size());
  for (size_t i = 0; i < labels.size(); ++i) {
    em_ij.emplace_back(static_cast<int>(i), labels[i]);
  }
  std::vector<std::pair<int, int>> tr_ij;
  tr_ij.reserve(labels.size() + 1);
  tr_ij.emplace_back(start_state(l), labels.front());
  for (size_t i = 1; i < labels.size(); ++i) {
    tr_ij.emplace_back(labels[i - 1], labels[i]);
  }
  tr_ij.emplace_back(labels.back(), stop_state(l));

  return add(sum(pick(emissions, em_ij)), sum(pick(transitions, tr_ij)));
}

Var neg_log_likelihood(Var emissions, Var transitions,
                       const std::vector<int>& labels) {
  return sub(log_partition(emissions, transitions),
             sequence_score(emissions, transitions, labels));
}

std::vector<int> viterbi_decode(const Matrix& emissions,
                                const Matrix& transitions) {
  check_inputs(emissions, transitions);
  const int k = static_cast<int>(emissions.rows());
  const int l = static_cast<int>(emissions.cols());

  Eigen::VectorXd delta(l);
  std::vector<std::vector<int>> back(static_cast<size_t>(k),
                                     std::vector<int>(static_cast<size_t>(l)));
  for (int j = 0; j < l; ++j) {
    delta(j) = emissions(0, j) + transitions(start_state(l), j);
  }
  for (int step = 1; step < k; ++step) {
    Eigen::VectorXd next(l);
    for (int j = 0; j < l; ++j) {
      int best = 0;
      double best_score = delta(0) + transitions(0, j);
      for (int i = 1; i < l; ++i) {
        double s = delta(i) + transitions(i, j);
        if (s > best_score) {  // strictly greater keeps the lowest index
          best_score = s;
          best = i;
        }
      }
      next(j) = best_score + emissions(step, j);
      back[static_cast<size_t>(step)][static_cast<size_t>(j)] = best;
    }
    delta = next;
  }
  int best = 0;
  double best_score = delta(0) + transitions(0, stop_state(l));
  for (int j = 1; j < l; ++j) {
    double s = delta(j) + transitions(j, stop_state(l));
    if (s > best_score) {
      best_score = s;
      best = j;
    }
  }
  std::vector<int> path(static_cast<size_t>(k));
  path[static_cast<size_t>(k - 1)] = best;
  for (int step = k - 1; step > 0; --step) {
    best = back[static_cast<size_t>(step)][static_cast<size_t>(best)];
    path[static_cast<size_t>(step - 1)] = best;
  }
  return path;
}

double path_score(const Matrix& emissions, const Matrix& transitions,
                  const std::vector<int>& labels) {
  check_inputs(emissions, transitions);
  const int l = static_cast<int>(emissions.cols());
  check_labels(emissions.rows(), l, labels);
  double s = transitions(start_state(l), labels.front());
  for (size_t i = 0; i < labels.size(); ++i) {
    s += emissions(static_cast<Eigen::Index>(i), labels[i]);
    if (i > 0) s += transitions(labels[i - 1], labels[i]);
  }
  s += transitions(labels.back(), stop_state(l));
  return s;
}

}  // namespace fedner::crf
