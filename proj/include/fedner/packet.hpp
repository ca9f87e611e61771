#pragma once

// The only artifact that crosses a platform boundary besides shared-module
// snapshots. Deliberately free of any corpus or text types; transport and
// federated aggregation depend on this header alone for cross-boundary data.

#include <Eigen/Core>

#include <cstdint>

namespace fedner {

struct GradientPacket {
  std::uint32_t platform_id = 0;
  std::uint32_t round = 0;
  std::uint64_t sample_weight = 0;  // |S_i|, the local training-set size
  Eigen::VectorXd shared_grad;      // flattened d L^i / d theta_s
};

}  // namespace fedner
