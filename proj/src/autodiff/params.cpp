#include "lowlight/autodiff/params.hpp"

#include <cstring>

#include "lowlight/error.hpp"

namespace lowlight::ad {

void ParamSet::add(std::string name, Tensor value) {
  if (find(name)) throw ContractError("params: duplicate name " + name);
  items_.push_back(Parameter{std::move(name), value.detached()});
}

std::optional<std::size_t> ParamSet::find(const std::string& name) const {
  for (std::size_t i = 0; i < items_.size(); ++i)
    if (items_[i].name == name) return i;
  return std::nullopt;
}

void ParamSet::set(std::size_t i, Tensor value) {
  if (value.shape() != items_.at(i).value.shape())
    throw ContractError("params: " + items_[i].name + " expects shape " +
                        to_string(items_[i].value.shape()) + ", got " + to_string(value.shape()));
  items_[i].value = value.detached();
}

std::vector<Tensor> ParamSet::bind(Tape* tape) const {
  std::vector<Tensor> out;
  out.reserve(items_.size());
  for (const Parameter& p : items_) out.push_back(tape ? tape->watch(p.value) : p.value);
  return out;
}

std::size_t ParamSet::element_count() const {
  std::size_t n = 0;
  for (const Parameter& p : items_) n += p.value.size();
  return n;
}

std::uint64_t ParamSet::digest() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  };
  for (const Parameter& p : items_) {
    mix(p.name.data(), p.name.size());
    for (std::size_t d : p.value.shape()) mix(&d, sizeof d);
    mix(p.value.values().data(), p.value.size() * sizeof(double));
  }
  return h;
}

}  // namespace lowlight::ad
