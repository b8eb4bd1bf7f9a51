#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "fedhar/error.hpp"

namespace fedhar::nn {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MatrixXr = Matrix<double>;
using VectorXr = Vector<double>;

inline std::string shape_string(Eigen::Index rows, Eigen::Index cols) {
  return "[" + std::to_string(rows) + "x" + std::to_string(cols) + "]";
}

/// Ordered name -> matrix map. Vectors (biases, norm gains) are stored as
/// n x 1 matrices. Iteration follows insertion order, which fixes the
/// floating-point summation order of every reduction over a set.
template <typename Scalar>
class BasicParameterSet {
 public:
  struct Entry {
    std::string name;
    Matrix<Scalar> value;
  };

  BasicParameterSet() = default;

  void add(std::string name, Matrix<Scalar> value) {
    if (index_.contains(name)) {
      throw ConfigError("duplicate parameter name '" + name + "'");
    }
    index_.emplace(name, entries_.size());
    entries_.push_back({std::move(name), std::move(value)});
  }

  bool contains(const std::string& name) const { return index_.contains(name); }

  Matrix<Scalar>& at(const std::string& name) { return entries_[lookup(name)].value; }
  const Matrix<Scalar>& at(const std::string& name) const {
    return entries_[lookup(name)].value;
  }

  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }

  Entry& operator[](std::size_t i) { return entries_[i]; }
  const Entry& operator[](std::size_t i) const { return entries_[i]; }

  auto begin() noexcept { return entries_.begin(); }
  auto end() noexcept { return entries_.end(); }
  auto begin() const noexcept { return entries_.begin(); }
  auto end() const noexcept { return entries_.end(); }

  /// Total number of scalars across all entries.
  std::size_t scalar_count() const noexcept {
    std::size_t n = 0;
    for (const auto& e : entries_) n += static_cast<std::size_t>(e.value.size());
    return n;
  }

  /// Same names, order and shapes as `other`.
  bool congruent_with(const BasicParameterSet& other) const {
    if (size() != other.size()) return false;
    for (std::size_t i = 0; i < size(); ++i) {
      const auto& a = entries_[i];
      const auto& b = other.entries_[i];
      if (a.name != b.name || a.value.rows() != b.value.rows() ||
          a.value.cols() != b.value.cols()) {
        return false;
      }
    }
    return true;
  }

  static BasicParameterSet zeros_like(const BasicParameterSet& other) {
    BasicParameterSet out;
    for (const auto& e : other) {
      out.add(e.name, Matrix<Scalar>::Zero(e.value.rows(), e.value.cols()));
    }
    return out;
  }

  bool operator==(const BasicParameterSet& other) const {
    if (!congruent_with(other)) return false;
    for (std::size_t i = 0; i < size(); ++i) {
      if (entries_[i].value != other.entries_[i].value) return false;
    }
    return true;
  }

 private:
  std::size_t lookup(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw DimensionError("unknown parameter '" + name + "'");
    return it->second;
  }

  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

using ParameterSet = BasicParameterSet<double>;

/// Gradients share the ParameterSet layout: same keys, same shapes.
using GradientSet = ParameterSet;

template <typename Scalar>
void require_congruent(const BasicParameterSet<Scalar>& a,
                       const BasicParameterSet<Scalar>& b, const char* context) {
  if (a.size() != b.size()) {
    throw DimensionError(std::string(context) + ": parameter count " +
                         std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& x = a[i];
    const auto& y = b[i];
    if (x.name != y.name) {
      throw DimensionError(std::string(context) + ": parameter " + std::to_string(i) +
                           " is '" + x.name + "' vs '" + y.name + "'");
    }
    if (x.value.rows() != y.value.rows() || x.value.cols() != y.value.cols()) {
      throw DimensionError(std::string(context) + ": parameter '" + x.name + "' shape " +
                           shape_string(x.value.rows(), x.value.cols()) + " vs " +
                           shape_string(y.value.rows(), y.value.cols()));
    }
  }
}

/// Throws NumericHealthError naming the first entry holding NaN or Inf.
template <typename Scalar>
void check_finite(const BasicParameterSet<Scalar>& set, const std::string& context) {
  for (const auto& e : set) {
    if (!e.value.allFinite()) {
      throw NumericHealthError(context + ": non-finite values in '" + e.name + "'");
    }
  }
}

}  // namespace fedhar::nn
