#pragma once

#include "fedner/tape.hpp"

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace fedner {

/// Named, insertion-ordered collection of trainable matrices. The insertion
/// order is the canonical flattening order everywhere (platforms, server,
/// wire format).
class ParameterStore {
 public:
  void add(std::string name, Matrix value);
  Matrix& at(const std::string& name);
  const Matrix& at(const std::string& name) const;
  bool contains(const std::string& name) const;

  const std::vector<std::string>& names() const { return names_; }
  std::int64_t total_count() const;

  /// Zero-valued copy with identical structure.
  ParameterStore zeros_like() const;

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, Matrix> values_;
};

/// Flatten the listed entries, column-major per matrix, in list order.
Vector flatten(const ParameterStore& store,
               const std::vector<std::string>& names);
std::int64_t flat_count(const ParameterStore& store,
                        const std::vector<std::string>& names);
void unflatten(ParameterStore& store, const std::vector<std::string>& names,
               const Vector& flat);

/// Disjoint, exhaustive split of the store into shared and private entries.
struct Partition {
  std::vector<std::string> shared;
  std::vector<std::string> private_;
};

/// Parameter group = name prefix before the first '.'.
std::string param_group(const std::string& name);

/// Strategies: "fedner-default" (embeddings + both CNNs shared, BiLSTM +
/// emission projection + CRF private), "all-shared", "all-private".
std::vector<std::string> decomposition_strategies();
Partition make_partition(const ParameterStore& store,
                         const std::string& strategy);

}  // namespace fedner
