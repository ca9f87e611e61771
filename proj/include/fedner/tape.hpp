#pragma once

#include <Eigen/Core>

#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace fedner {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid for the tape's lifetime.
struct Var {
  Tape* tape = nullptr;
  int id = -1;
};

/// Define-by-run reverse-mode tape over dense double matrices.
///
/// Forward values are computed eagerly as ops are recorded. backward() runs
/// one reverse sweep from a scalar node and accumulates adjoints into every
/// reachable node. A tape is rebuilt per sentence; nodes are immutable after
/// backward() completes.
class Tape {
 public:
  Var leaf(Matrix value, std::string name = {});
  Var constant(Matrix value);

  const Matrix& value(Var v) const { return node(v).value; }
  /// Adjoint of a node; valid after backward(). Zero-filled if unreachable.
  const Matrix& grad(Var v) const;

  /// Reverse sweep from a 1x1 loss node.
  void backward(Var loss);

  int size() const { return static_cast<int>(nodes_.size()); }
  bool is_leaf(Var v) const { return node(v).is_leaf; }
  const std::string& name(Var v) const { return node(v).name; }

  // Op-builder interface.
  using BackwardFn = std::function<void(Tape&, int)>;
  Var emplace(Matrix value, std::vector<int> parents, BackwardFn back,
              const char* op);
  Matrix& grad_ref(int id) { return nodes_[static_cast<size_t>(id)].grad; }
  const Matrix& value_at(int id) const {
    return nodes_[static_cast<size_t>(id)].value;
  }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    std::vector<int> parents;
    BackwardFn back;
    const char* op = "";
    bool is_leaf = false;
    std::string name;
  };

  const Node& node(Var v) const;
  std::vector<Node> nodes_;
  bool swept_ = false;
};

// Elementwise / structural primitives. All shape alignment is explicit; there
// is no broadcasting.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);  // elementwise
Var matmul(Var a, Var b);
Var scale(Var a, double c);
Var neg(Var a);
Var vtanh(Var a);
Var sigmoid(Var a);
Var transpose(Var a);
Var sum(Var a);           // 1x1
Var logsumexp(Var a);     // over all entries, 1x1; overflow-safe
Var logsumexp_cols(Var a);  // 1xn, reduces over rows per column
Var vstack(std::span<const Var> parts);
Var hstack(std::span<const Var> parts);
Var block(Var a, int row, int col, int rows, int cols);
/// Columns of `table` selected by index, D x |idx|. Adjoint scatter-adds.
Var gather_cols(Var table, const std::vector<int>& idx);
/// Entries a(i,j) for each (i,j), as a column vector.
Var pick(Var a, const std::vector<std::pair<int, int>>& ij);
/// Same-length 1-D convolution over time (columns). input D x k, filters
/// F x (D*kernel), bias F x 1 -> F x k. Zero padding on both sides.
Var conv1d_same(Var input, Var filters, Var bias, int kernel);
/// Row-wise max over columns, F x 1. Ties broken toward the earliest column.
Var max_over_time(Var a);

inline Var vstack(std::initializer_list<Var> parts) {
  return vstack(std::span<const Var>(parts.begin(), parts.size()));
}
inline Var hstack(std::initializer_list<Var> parts) {
  return hstack(std::span<const Var>(parts.begin(), parts.size()));
}

}  // namespace fedner
