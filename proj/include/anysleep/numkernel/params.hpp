#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "anysleep/numkernel/autodiff.hpp"

namespace anysleep::nk {

// Ordered, named collection of arrays. Used for learnable parameters and for
// non-learnable buffers (batch-norm running statistics).
class ParameterSet {
 public:
  void add(const std::string& name, Array value);
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::size_t index_of(const std::string& name) const;
  Array& at(const std::string& name);
  const Array& at(const std::string& name) const;
  Array& value(std::size_t i) { return values_[i]; }
  const Array& value(std::size_t i) const { return values_[i]; }
  const std::string& name(std::size_t i) const { return names_[i]; }
  std::size_t size() const noexcept { return values_.size(); }
  std::size_t scalar_count() const;

 private:
  std::vector<std::string> names_;
  std::vector<Array> values_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Leaf variables for one forward pass, one per parameter. Parameters stay
// plain arrays between passes; a binding is what the graph sees.
class Binding {
 public:
  // Fresh leaves that collect gradients.
  static Binding trainable(const ParameterSet& params);
  // Constant leaves; no gradients are tracked.
  static Binding frozen(const ParameterSet& params);
  // Use caller-provided leaves in parameter order (gradient checks).
  static Binding from_vars(const ParameterSet& params, std::vector<Var> vars);

  const Var& operator[](const std::string& name) const;
  const Var& var(std::size_t i) const { return vars_[i]; }
  std::size_t size() const noexcept { return vars_.size(); }
  // Gradients in parameter order; zero arrays where nothing flowed.
  std::vector<Array> gradients() const;

 private:
  const ParameterSet* params_ = nullptr;
  std::vector<Var> vars_;
};

}  // namespace anysleep::nk
