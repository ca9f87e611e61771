#include "fedner/tape.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace fedner {

namespace {

[[noreturn]] void shape_fail(const char* op, const Matrix& a, const Matrix& b) {
  std::ostringstream os;
  os << op << ": incompatible shapes " << a.rows() << "x" << a.cols()
     << " and " << b.rows() << "x" << b.cols();
  throw ShapeError(os.str());
}

void require_same_shape(const char* op, const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_fail(op, a, b);
}

void require_finite(const char* where, const Matrix& m) {
  if (!m.allFinite()) {
    throw std::invalid_argument(std::string(where) +
                                ": non-finite value rejected");
  }
}

}  // namespace

const Tape::Node& Tape::node(Var v) const {
  if (v.tape != this || v.id < 0 || v.id >= size()) {
    throw std::invalid_argument("Var does not belong to this tape");
  }
  return nodes_[static_cast<size_t>(v.id)];
}

Var Tape::leaf(Matrix value, std::string name) {
  require_finite("leaf", value);
  Node n;
  n.value = std::move(value);
  n.is_leaf = true;
  n.name = std::move(name);
  n.op = "leaf";
  nodes_.push_back(std::move(n));
  return Var{this, size() - 1};
}

Var Tape::constant(Matrix value) {
  require_finite("constant", value);
  Node n;
  n.value = std::move(value);
  n.op = "const";
  nodes_.push_back(std::move(n));
  return Var{this, size() - 1};
}

Var Tape::emplace(Matrix value, std::vector<int> parents, BackwardFn back,
                  const char* op) {
  Node n;
  n.value = std::move(value);
  n.parents = std::move(parents);
  n.back = std::move(back);
  n.op = op;
  nodes_.push_back(std::move(n));
  return Var{this, size() - 1};
}

const Matrix& Tape::grad(Var v) const {
  const Node& n = node(v);
  if (!swept_) throw std::logic_error("grad requested before backward()");
  return n.grad;
}

void Tape::backward(Var loss) {
  const Node& l = node(loss);
  if (l.value.rows() != 1 || l.value.cols() != 1) {
    std::ostringstream os;
    os << "backward: loss must be scalar, got " << l.value.rows() << "x"
       << l.value.cols();
    throw ShapeError(os.str());
  }
  for (Node& n : nodes_) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  nodes_[static_cast<size_t>(loss.id)].grad(0, 0) = 1.0;
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<size_t>(i)];
    if (n.back) n.back(*this, i);
  }
  swept_ = true;
}

namespace {

Tape& same_tape(Var a, Var b, const char* op) {
  if (a.tape == nullptr || a.tape != b.tape) {
    throw std::invalid_argument(std::string(op) +
                                ": operands must share a tape");
  }
  return *a.tape;
}

}  // namespace

Var add(Var a, Var b) {
  Tape& t = same_tape(a, b, "add");
  const Matrix& av = t.value(a);
  const Matrix& bv = t.value(b);
  require_same_shape("add", av, bv);
  return t.emplace(
      av + bv, {a.id, b.id},
      [pa = a.id, pb = b.id](Tape& tp, int self) {
        tp.grad_ref(pa) += tp.grad_ref(self);
        tp.grad_ref(pb) += tp.grad_ref(self);
      },
      "add");
}

Var sub(Var a, Var b) {
  Tape& t = same_tape(a, b, "sub");
  const Matrix& av = t.value(a);
  const Matrix& bv = t.value(b);
  require_same_shape("sub", av, bv);
  return t.emplace(
      av - bv, {a.id, b.id},
      [pa = a.id, pb = b.id](Tape& tp, int self) {
        tp.grad_ref(pa) += tp.grad_ref(self);
        tp.grad_ref(pb) -= tp.grad_ref(self);
      },
      "sub");
}

Var mul(Var a, Var b) {
  Tape& t = same_tape(a, b, "mul");
  const Matrix& av = t.value(a);
  const Matrix& bv = t.value(b);
  require_same_shape("mul", av, bv);
  return t.emplace(
      av.cwiseProduct(bv), {a.id, b.id},
      [pa = a.id, pb = b.id](Tape& tp, int self) {
        tp.grad_ref(pa) += tp.grad_ref(self).cwiseProduct(tp.value_at(pb));
        tp.grad_ref(pb) += tp.grad_ref(self).cwiseProduct(tp.value_at(pa));
      },
      "mul");
}

Var matmul(Var a, Var b) {
  Tape& t = same_tape(a, b, "matmul");
  const Matrix& av = t.value(a);
  const Matrix& bv = t.value(b);
  if (av.cols() != bv.rows()) shape_fail("matmul", av, bv);
  return t.emplace(
      av * bv, {a.id, b.id},
      [pa = a.id, pb = b.id](Tape& tp, int self) {
        const Matrix& g = tp.grad_ref(self);
        tp.grad_ref(pa) += g * tp.value_at(pb).transpose();
        tp.grad_ref(pb) += tp.value_at(pa).transpose() * g;
      },
      "matmul");
}

Var scale(Var a, double c) {
  Tape& t = *a.tape;
  return t.emplace(
      t.value(a) * c, {a.id},
      [pa = a.id, c](Tape& tp, int self) {
        tp.grad_ref(pa) += tp.grad_ref(self) * c;
      },
      "scale");
}

Var neg(Var a) { return scale(a, -1.0); }

Var vtanh(Var a) {
  Tape& t = *a.tape;
  Matrix y = t.value(a).array().tanh().matrix();
  return t.emplace(
      std::move(y), {a.id},
      [pa = a.id](Tape& tp, int self) {
        const Matrix& y = tp.value_at(self);
        tp.grad_ref(pa) += tp.grad_ref(self).cwiseProduct(
            (1.0 - y.array().square()).matrix());
      },
      "tanh");
}

Var sigmoid(Var a) {
  Tape& t = *a.tape;
  Matrix y = (1.0 / (1.0 + (-t.value(a).array()).exp())).matrix();
  return t.emplace(
      std::move(y), {a.id},
      [pa = a.id](Tape& tp, int self) {
        const Matrix& y = tp.value_at(self);
        tp.grad_ref(pa) += tp.grad_ref(self).cwiseProduct(
            (y.array() * (1.0 - y.array())).matrix());
      },
      "sigmoid");
}

Var transpose(Var a) {
  Tape& t = *a.tape;
  return t.emplace(
      t.value(a).transpose(), {a.id},
      [pa = a.id](Tape& tp, int self) {
        tp.grad_ref(pa) += tp.grad_ref(self).transpose();
      },
      "transpose");
}

Var sum(Var a) {
  Tape& t = *a.tape;
  Matrix y(1, 1);
  y(0, 0) = t.value(a).sum();
  return t.emplace(
      std::move(y), {a.id},
      [pa = a.id](Tape& tp, int self) {
        tp.grad_ref(pa).array() += tp.grad_ref(self)(0, 0);
      },
      "sum");
}

Var logsumexp(Var a) {
  Tape& t = *a.tape;
  const Matrix& av = t.value(a);
  if (av.size() == 0) throw ShapeError("logsumexp: empty input");
  double m = av.maxCoeff();
  double s = (av.array() - m).exp().sum();
  Matrix y(1, 1);
  y(0, 0) = m + std::log(s);
  Matrix soft = ((av.array() - m).exp() / s).matrix();
  return t.emplace(
      std::move(y), {a.id},
      [pa = a.id, soft = std::move(soft)](Tape& tp, int self) {
        tp.grad_ref(pa) += soft * tp.grad_ref(self)(0, 0);
      },
      "logsumexp");
}

Var logsumexp_cols(Var a) {
  Tape& t = *a.tape;
  const Matrix& av = t.value(a);
  if (av.rows() == 0 || av.cols() == 0) {
    throw ShapeError("logsumexp_cols: empty input");
  }
  Matrix y(1, av.cols());
  Matrix soft(av.rows(), av.cols());
  for (Eigen::Index j = 0; j < av.cols(); ++j) {
    double m = av.col(j).maxCoeff();
    Eigen::ArrayXd e = (av.col(j).array() - m).exp();
    double s = e.sum();
    y(0, j) = m + std::log(s);
    soft.col(j) = (e / s).matrix();
  }
  return t.emplace(
      std::move(y), {a.id},
      [pa = a.id, soft = std::move(soft)](Tape& tp, int self) {
        const Matrix& g = tp.grad_ref(self);
        Matrix& pg = tp.grad_ref(pa);
        for (Eigen::Index j = 0; j < soft.cols(); ++j) {
          pg.col(j) += soft.col(j) * g(0, j);
        }
      },
      "logsumexp_cols");
}

Var vstack(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("vstack: no parts");
  Tape& t = *parts[0].tape;
  Eigen::Index cols = t.value(parts[0]).cols();
  Eigen::Index rows = 0;
  std::vector<int> ids;
  for (Var p : parts) {
    if (p.tape != &t) throw std::invalid_argument("vstack: mixed tapes");
    if (t.value(p).cols() != cols) {
      shape_fail("vstack", t.value(parts[0]), t.value(p));
    }
    rows += t.value(p).rows();
    ids.push_back(p.id);
  }
  Matrix y(rows, cols);
  Eigen::Index off = 0;
  std::vector<std::pair<int, Eigen::Index>> layout;
  for (Var p : parts) {
    Eigen::Index r = t.value(p).rows();
    y.middleRows(off, r) = t.value(p);
    layout.emplace_back(p.id, off);
    off += r;
  }
  return t.emplace(
      std::move(y), std::move(ids),
      [layout = std::move(layout)](Tape& tp, int self) {
        const Matrix& g = tp.grad_ref(self);
        for (auto [pid, o] : layout) {
          Matrix& pg = tp.grad_ref(pid);
          pg += g.middleRows(o, pg.rows());
        }
      },
      "vstack");
}

Var hstack(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("hstack: no parts");
  Tape& t = *parts[0].tape;
  Eigen::Index rows = t.value(parts[0]).rows();
  Eigen::Index cols = 0;
  std::vector<int> ids;
  for (Var p : parts) {
    if (p.tape != &t) throw std::invalid_argument("hstack: mixed tapes");
    if (t.value(p).rows() != rows) {
      shape_fail("hstack", t.value(parts[0]), t.value(p));
    }
    cols += t.value(p).cols();
    ids.push_back(p.id);
  }
  Matrix y(rows, cols);
  Eigen::Index off = 0;
  std::vector<std::pair<int, Eigen::Index>> layout;
  for (Var p : parts) {
    Eigen::Index c = t.value(p).cols();
    y.middleCols(off, c) = t.value(p);
    layout.emplace_back(p.id, off);
    off += c;
  }
  return t.emplace(
      std::move(y), std::move(ids),
      [layout = std::move(layout)](Tape& tp, int self) {
        const Matrix& g = tp.grad_ref(self);
        for (auto [pid, o] : layout) {
          Matrix& pg = tp.grad_ref(pid);
          pg += g.middleCols(o, pg.cols());
        }
      },
      "hstack");
}

Var block(Var a, int row, int col, int rows, int cols) {
  Tape& t = *a.tape;
  const Matrix& av = t.value(a);
  if (row < 0 || col < 0 || rows <= 0 || cols <= 0 ||
      row + rows > av.rows() || col + cols > av.cols()) {
    std::ostringstream os;
    os << "block: region (" << row << "," << col << "," << rows << "," << cols
       << ") out of " << av.rows() << "x" << av.cols();
    throw ShapeError(os.str());
  }
  return t.emplace(
      av.block(row, col, rows, cols), {a.id},
      [pa = a.id, row, col, rows, cols](Tape& tp, int self) {
        tp.grad_ref(pa).block(row, col, rows, cols) += tp.grad_ref(self);
      },
      "block");
}

Var gather_cols(Var table, const std::vector<int>& idx) {
  Tape& t = *table.tape;
  const Matrix& tv = t.value(table);
  Matrix y(tv.rows(), static_cast<Eigen::Index>(idx.size()));
  for (size_t j = 0; j < idx.size(); ++j) {
    if (idx[j] < 0 || idx[j] >= tv.cols()) {
      throw ShapeError("gather_cols: index " + std::to_string(idx[j]) +
                       " out of " + std::to_string(tv.cols()) + " columns");
    }
    y.col(static_cast<Eigen::Index>(j)) = tv.col(idx[j]);
  }
  return t.emplace(
      std::move(y), {table.id},
      [pt = table.id, idx](Tape& tp, int self) {
        const Matrix& g = tp.grad_ref(self);
        Matrix& pg = tp.grad_ref(pt);
        for (size_t j = 0; j < idx.size(); ++j) {
          pg.col(idx[j]) += g.col(static_cast<Eigen::Index>(j));
        }
      },
      "gather_cols");
}

Var pick(Var a, const std::vector<std::pair<int, int>>& ij) {
  Tape& t = *a.tape;
  const Matrix& av = t.value(a);
  Matrix y(static_cast<Eigen::Index>(ij.size()), 1);
  for (size_t n = 0; n < ij.size(); ++n) {
    auto [i, j] = ij[n];
    if (i < 0 || i >= av.rows() || j < 0 || j >= av.cols()) {
      throw ShapeError("pick: entry (" + std::to_string(i) + "," +
                       std::to_string(j) + ") out of range");
    }
    y(static_cast<Eigen::Index>(n), 0) = av(i, j);
  }
  return t.emplace(
      std::move(y), {a.id},
      [pa = a.id, ij](Tape& tp, int self) {
        const Matrix& g = tp.grad_ref(self);
        Matrix& pg = tp.grad_ref(pa);
        for (size_t n = 0; n < ij.size(); ++n) {
          pg(ij[n].first, ij[n].second) += g(static_cast<Eigen::Index>(n), 0);
        }
      },
      "pick");
}

Var conv1d_same(Var input, Var filters, Var bias, int kernel) {
  Tape& t = *input.tape;
  const Matrix& x = t.value(input);
  const Matrix& w = t.value(filters);
  const Matrix& b = t.value(bias);
  if (kernel <= 0) throw ShapeError("conv1d_same: kernel must be positive");
  const Eigen::Index d = x.rows();
  const Eigen::Index k = x.cols();
  if (w.cols() != d * kernel) shape_fail("conv1d_same", w, x);
  if (b.rows() != w.rows() || b.cols() != 1) shape_fail("conv1d_same", b, w);
  const int pad = (kernel - 1) / 2;
  // Patch matrix: column t stacks the kernel-wide input window around t,
  // zero-padded at the borders.
  Matrix patches = Matrix::Zero(d * kernel, k);
  for (Eigen::Index tcol = 0; tcol < k; ++tcol) {
    for (int o = 0; o < kernel; ++o) {
      Eigen::Index src = tcol + o - pad;
      if (src < 0 || src >= k) continue;
      patches.block(o * d, tcol, d, 1) = x.col(src);
    }
  }
  Matrix y = w * patches;
  y.colwise() += b.col(0);
  return t.emplace(
      std::move(y), {input.id, filters.id, bias.id},
      [px = input.id, pw = filters.id, pb = bias.id,
       patches = std::move(patches), kernel, pad, d, k](Tape& tp, int self) {
        const Matrix& g = tp.grad_ref(self);
        tp.grad_ref(pw) += g * patches.transpose();
        tp.grad_ref(pb).col(0) += g.rowwise().sum();
        Matrix gp = tp.value_at(pw).transpose() * g;  // (d*kernel) x k
        Matrix& gx = tp.grad_ref(px);
        for (Eigen::Index tcol = 0; tcol < k; ++tcol) {
          for (int o = 0; o < kernel; ++o) {
            Eigen::Index src = tcol + o - pad;
            if (src < 0 || src >= k) continue;
            gx.col(src) += gp.block(o * d, tcol, d, 1);
          }
        }
      },
      "conv1d_same");
}

Var max_over_time(Var a) {
  Tape& t = *a.tape;
  const Matrix& av = t.value(a);
  if (av.cols() == 0) throw ShapeError("max_over_time: empty input");
  Matrix y(av.rows(), 1);
  std::vector<Eigen::Index> argmax(static_cast<size_t>(av.rows()));
  for (Eigen::Index i = 0; i < av.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < av.cols(); ++j) {
      if (av(i, j) > av(i, best)) best = j;  // earliest column wins ties
    }
    argmax[static_cast<size_t>(i)] = best;
    y(i, 0) = av(i, best);
  }
  return t.emplace(
      std::move(y), {a.id},
      [pa = a.id, argmax = std::move(argmax)](Tape& tp, int self) {
        const Matrix& g = tp.grad_ref(self);
        Matrix& pg = tp.grad_ref(pa);
        for (Eigen::Index i = 0; i < g.rows(); ++i) {
          pg(i, argmax[static_cast<size_t>(i)]) += g(i, 0);
        }
      },
      "max_over_time");
}

}  // namespace fedner
