#include "fedner/optim.hpp"

#include <cmath>

namespace fedner {

OptimKind parse_optim(const std::string& name) {
  if (name == "plain") return OptimKind::Plain;
  if (name == "adam") return OptimKind::Adam;
  throw std::invalid_argument("unknown optimizer '" + name +
                              "'; available: plain adam");
}

std::string optim_name(OptimKind kind) {
  return kind == OptimKind::Plain ? "plain" : "adam";
}

void Optimizer::step(Eigen::VectorXd& theta, const Eigen::VectorXd& grad) {
  if (grad.size() != theta.size()) {
    throw std::invalid_argument("Optimizer::step: size mismatch");
  }
  if (kind_ == OptimKind::Plain) {
    theta -= lr_ * grad;
    return;
  }
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  if (t_ == 0) {
    m_ = Eigen::VectorXd::Zero(theta.size());
    v_ = Eigen::VectorXd::Zero(theta.size());
  }
  ++t_;
  m_ = beta1 * m_ + (1.0 - beta1) * grad;
  v_ = beta2 * v_.array().matrix() +
       (1.0 - beta2) * grad.array().square().matrix();
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
  theta.array() -=
      lr_ * (m_.array() / bc1) / ((v_.array() / bc2).sqrt() + eps);
}

}  // namespace fedner
