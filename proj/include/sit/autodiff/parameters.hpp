#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "sit/autodiff/array.hpp"
#include "sit/autodiff/tape.hpp"

namespace sit::ad {

template <typename T>
struct Parameter {
  std::string name;
  Array<T> value;
};

// Ordered, named collection of learnable tensors. Indices are stable once a
// parameter is added.
template <typename T>
class ParameterSet {
 public:
  std::size_t add(std::string name, Shape shape) {
    if (find(name)) throw ConfigError("duplicate parameter name '" + name + "'");
    items_.push_back(Parameter<T>{std::move(name), Array<T>(shape)});
    return items_.size() - 1;
  }

  std::size_t size() const { return items_.size(); }
  Parameter<T>& operator[](std::size_t i) { return items_[i]; }
  const Parameter<T>& operator[](std::size_t i) const { return items_[i]; }
  auto begin() { return items_.begin(); }
  auto end() { return items_.end(); }
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }

  std::optional<std::size_t> find(const std::string& name) const {
    for (std::size_t i = 0; i < items_.size(); ++i)
      if (items_[i].name == name) return i;
    return std::nullopt;
  }
  std::size_t index(const std::string& name) const {
    if (auto i = find(name)) return *i;
    throw ConfigError("unknown parameter '" + name + "'");
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : items_) n += p.value.size();
    return n;
  }

  template <typename U>
  ParameterSet<U> cast() const {
    ParameterSet<U> out;
    for (const auto& p : items_) {
      const auto i = out.add(p.name, p.value.shape());
      out[i].value = p.value.template cast<U>();
    }
    return out;
  }

 private:
  std::vector<Parameter<T>> items_;
};

// Gradient accumulators parallel to a ParameterSet.
template <typename T>
using Gradients = std::vector<Array<T>>;

template <typename T>
Gradients<T> zero_gradients(const ParameterSet<T>& params) {
  Gradients<T> g;
  g.reserve(params.size());
  for (const auto& p : params) g.emplace_back(p.value.shape());
  return g;
}

template <typename T>
void accumulate(Gradients<T>& into, const Gradients<T>& from) {
  for (std::size_t i = 0; i < into.size(); ++i) into[i].mat() += from[i].mat();
}

}  // namespace sit::ad
