#pragma once

#include "fedner/tape.hpp"

#include <vector>

namespace fedner::crf {

// The transition matrix is (L+2)x(L+2); the two synthetic states sit after
// the real labels. Entry (i, j) scores a move from label i to label j;
// row start_state(L) scores entry transitions and column stop_state(L)+1...
inline int start_state(int num_labels) { return num_labels; }
inline int stop_state(int num_labels) { return num_labels + 1; }

/// log Z(s) over all label paths by the forward recursion, O(k L^2).
/// emissions: k x L on the tape; transitions: (L+2) x (L+2) on the tape.
Var log_partition(Var emissions, Var transitions);

/// Score of one label path: emissions along the path plus transitions,
/// including start->y_1 and y_k->stop.
Var sequence_score(Var emissions, Var transitions,
                   const std::vector<int>& labels);

/// Eq-style negative log-likelihood: log_partition - sequence_score.
Var neg_log_likelihood(Var emissions, Var transitions,
                       const std::vector<int>& labels);

/// Exact argmax decoding. Ties broken toward the lower label index at each
/// backtrack step. Plain values, no tape.
std::vector<int> viterbi_decode(const Matrix& emissions,
                                const Matrix& transitions);

/// Score of a fixed path on plain values (same arithmetic as sequence_score).
double path_score(const Matrix& emissions, const Matrix& transitions,
                  const std::vector<int>& labels);

}  // namespace fedner::crf
