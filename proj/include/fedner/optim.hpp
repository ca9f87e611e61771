#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace fedner {

enum class OptimKind { Plain, Adam };

OptimKind parse_optim(const std::string& name);
std::string optim_name(OptimKind kind);

/// First-order optimizer over one flat parameter vector. Plain is the exact
/// theta <- theta - alpha * grad step; Adam uses the usual bias-corrected
/// moments (beta1 0.9, beta2 0.999, eps 1e-8).
class Optimizer {
 public:
  // lr 0 is allowed (a no-op step), useful for freezing a block.
  Optimizer(OptimKind kind, double lr) : kind_(kind), lr_(lr) {
    if (lr < 0.0) throw std::invalid_argument("Optimizer: lr must be >= 0");
  }

  void step(Eigen::VectorXd& theta, const Eigen::VectorXd& grad);

  OptimKind kind() const { return kind_; }
  double lr() const { return lr_; }

 private:
  OptimKind kind_;
  double lr_;
  std::int64_t t_ = 0;
  Eigen::VectorXd m_, v_;
};

}  // namespace fedner
