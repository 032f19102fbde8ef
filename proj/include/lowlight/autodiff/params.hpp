#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lowlight/autodiff/tensor.hpp"

namespace lowlight::ad {

struct Parameter {
  std::string name;
  Tensor value;
};

/// Ordered, named trainable arrays of one network.
class ParamSet {
 public:
  void add(std::string name, Tensor value);

  std::size_t size() const noexcept { return items_.size(); }
  const Parameter& operator[](std::size_t i) const { return items_[i]; }
  std::span<const Parameter> items() const noexcept { return items_; }
  std::optional<std::size_t> find(const std::string& name) const;
  void set(std::size_t i, Tensor value);

  /// Values as tape leaves (tape != nullptr) or as constants.
  std::vector<Tensor> bind(Tape* tape) const;
  std::size_t element_count() const;
  /// FNV-1a over names, shapes and the raw bytes of every value.
  std::uint64_t digest() const;

 private:
  std::vector<Parameter> items_;
};

}  // namespace lowlight::ad
