#include "fedner/params.hpp"

#include <algorithm>
#include <set>
#include <sstream>
#include <stdexcept>

namespace fedner {

void ParameterStore::add(std::string name, Matrix value) {
  if (values_.count(name) != 0) {
    throw std::invalid_argument("ParameterStore: duplicate name " + name);
  }
  names_.push_back(name);
  values_.emplace(std::move(name), std::move(value));
}

Matrix& ParameterStore::at(const std::string& name) {
  auto it = values_.find(name);
  if (it == values_.end()) {
    throw std::out_of_range("ParameterStore: unknown name " + name);
  }
  return it->second;
}

const Matrix& ParameterStore::at(const std::string& name) const {
  auto it = values_.find(name);
  if (it == values_.end()) {
    throw std::out_of_range("ParameterStore: unknown name " + name);
  }
  return it->second;
}

bool ParameterStore::contains(const std::string& name) const {
  return values_.count(name) != 0;
}

std::int64_t ParameterStore::total_count() const {
  std::int64_t n = 0;
  for (const auto& name : names_) n += at(name).size();
  return n;
}

ParameterStore ParameterStore::zeros_like() const {
  ParameterStore z;
  for (const auto& name : names_) {
    const Matrix& m = at(name);
    z.add(name, Matrix::Zero(m.rows(), m.cols()));
  }
  return z;
}

std::int64_t flat_count(const ParameterStore& store,
                        const std::vector<std::string>& names) {
  std::int64_t n = 0;
  for (const auto& name : names) n += store.at(name).size();
  return n;
}

Vector flatten(const ParameterStore& store,
               const std::vector<std::string>& names) {
  Vector out(flat_count(store, names));
  Eigen::Index off = 0;
  for (const auto& name : names) {
    const Matrix& m = store.at(name);
    out.segment(off, m.size()) = Eigen::Map<const Vector>(m.data(), m.size());
    off += m.size();
  }
  return out;
}

void unflatten(ParameterStore& store, const std::vector<std::string>& names,
               const Vector& flat) {
  if (flat.size() != flat_count(store, names)) {
    throw ShapeError("unflatten: flat vector length " +
                     std::to_string(flat.size()) + " does not match " +
                     std::to_string(flat_count(store, names)));
  }
  Eigen::Index off = 0;
  for (const auto& name : names) {
    Matrix& m = store.at(name);
    Eigen::Map<Vector>(m.data(), m.size()) = flat.segment(off, m.size());
    off += m.size();
  }
}

std::string param_group(const std::string& name) {
  auto pos = name.find('.');
  return pos == std::string::npos ? name : name.substr(0, pos);
}

std::vector<std::string> decomposition_strategies() {
  return {"fedner-default", "all-shared", "all-private"};
}

Partition make_partition(const ParameterStore& store,
                         const std::string& strategy) {
  // Bottom layers: every embedding table and both CNNs. Top layers: BiLSTM,
  // emission projection, CRF transitions.
  static const std::set<std::string> kBottom = {"word_table", "char_table",
                                               "char_cnn", "word_cnn"};
  Partition p;
  for (const auto& name : store.names()) {
    bool shared;
    if (strategy == "all-shared") {
      shared = true;
    } else if (strategy == "all-private") {
      shared = false;
    } else if (strategy == "fedner-default") {
      shared = kBottom.count(param_group(name)) != 0;
    } else {
      std::ostringstream os;
      os << "unknown decomposition strategy '" << strategy << "'; available:";
      for (const auto& s : decomposition_strategies()) os << " " << s;
      throw std::invalid_argument(os.str());
    }
    (shared ? p.shared : p.private_).push_back(name);
  }
  return p;
}

}  // namespace fedner
