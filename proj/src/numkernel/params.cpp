#include "anysleep/numkernel/params.hpp"

#include "anysleep/core/errors.hpp"

namespace anysleep::nk {

void ParameterSet::add(const std::string& name, Array value) {
  if (contains(name)) throw ConfigError("ParameterSet: duplicate name '" + name + "'");
  index_.emplace(name, values_.size());
  names_.push_back(name);
  values_.push_back(std::move(value));
}

std::size_t ParameterSet::index_of(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("ParameterSet: no entry named '" + name + "'");
  return it->second;
}

Array& ParameterSet::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("ParameterSet: no entry named '" + name + "'");
  return values_[it->second];
}

const Array& ParameterSet::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("ParameterSet: no entry named '" + name + "'");
  return values_[it->second];
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const Array& a : values_) n += a.size();
  return n;
}

Binding Binding::trainable(const ParameterSet& params) {
  Binding b;
  b.params_ = &params;
  b.vars_.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) b.vars_.push_back(leaf(params.value(i), true));
  return b;
}

Binding Binding::frozen(const ParameterSet& params) {
  Binding b;
  b.params_ = &params;
  b.vars_.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) b.vars_.push_back(leaf(params.value(i), false));
  return b;
}

Binding Binding::from_vars(const ParameterSet& params, std::vector<Var> vars) {
  if (vars.size() != params.size()) throw DimensionError("Binding: variable count does not match parameters");
  Binding b;
  b.params_ = &params;
  b.vars_ = std::move(vars);
  return b;
}

const Var& Binding::operator[](const std::string& name) const {
  return vars_[params_->index_of(name)];
}

std::vector<Array> Binding::gradients() const {
  std::vector<Array> out;
  out.reserve(vars_.size());
  for (const Var& v : vars_) {
    if (v.grad().shape() == v.shape()) {
      out.push_back(v.grad());
    } else {
      out.emplace_back(v.shape(), 0.0);
    }
  }
  return out;
}

}  // namespace anysleep::nk
