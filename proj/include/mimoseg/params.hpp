#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mimoseg/tensor.hpp"

namespace mimoseg {

enum class ParamGroup { Encoder, Decoder, Head };

inline const char* param_group_name(ParamGroup g) {
  switch (g) {
    case ParamGroup::Encoder: return "encoder";
    case ParamGroup::Decoder: return "decoder";
    case ParamGroup::Head: return "head";
  }
  return "?";
}

template <typename T>
struct Param {
  std::string name;
  ParamGroup group = ParamGroup::Encoder;
  Tensor<T> value;
};

// Flat ordered parameter list. Order is the serialization order and the
// gradient/velocity index space.
template <typename T>
struct ParamStore {
  std::vector<Param<T>> items;

  int add(std::string name, ParamGroup group, Tensor<T> value) {
    value.requires_grad = true;
    items.push_back({std::move(name), group, std::move(value)});
    return static_cast<int>(items.size()) - 1;
  }

  std::size_t size() const { return items.size(); }
  Param<T>& operator[](std::size_t i) { return items[i]; }
  const Param<T>& operator[](std::size_t i) const { return items[i]; }

  std::int64_t count() const {
    std::int64_t n = 0;
    for (const auto& p : items) n += p.value.numel();
    return n;
  }
  std::int64_t count(ParamGroup g) const {
    std::int64_t n = 0;
    for (const auto& p : items)
      if (p.group == g) n += p.value.numel();
    return n;
  }
};

}  // namespace mimoseg
