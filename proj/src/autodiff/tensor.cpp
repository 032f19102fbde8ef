#include "lowlight/autodiff/tensor.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "lowlight/error.hpp"

namespace lowlight::ad {

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ')';
  return os.str();
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)),
      data_(std::make_shared<const std::vector<double>>(std::move(values))) {
  if (numel(shape_) != data_->size())
    throw ContractError("tensor: shape " + to_string(shape_) + " does not match " +
                        std::to_string(data_->size()) + " values");
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
  const std::size_t n = numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, {value}); }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size())
    throw ContractError("tensor: axis " + std::to_string(axis) + " out of range for shape " +
                        to_string(shape_));
  return shape_[axis];
}

double Tensor::item() const {
  if (size() != 1) throw ContractError("tensor: item() on shape " + to_string(shape_));
  return (*data_)[0];
}

Tensor Tensor::detached() const {
  Tensor t = *this;
  t.tape_ = nullptr;
  t.node_ = 0;
  return t;
}

Tensor Tensor::with_shape(Shape shape) const {
  if (numel(shape) != size())
    throw ContractError("tensor: cannot view " + to_string(shape_) + " as " + to_string(shape));
  Tensor t = detached();
  t.shape_ = std::move(shape);
  return t;
}

Tensor Tape::watch(const Tensor& value) {
  Tensor t = value.detached();
  nodes_.push_back(Node{t.shape(), {}, {}});
  t.tape_ = this;
  t.node_ = nodes_.size() - 1;
  return t;
}

Tensor Tape::record(Tensor output, std::span<const Tensor* const> inputs, BackwardFn backward,
                    const char* op) {
  Tape* tape = nullptr;
  for (const Tensor* in : inputs) {
    if (!in->recorded()) continue;
    if (tape && tape != in->tape())
      throw ContractError(std::string(op) + ": inputs recorded on different tapes");
    tape = in->tape();
  }
  if (!tape) return output;

  Node node{output.shape(), {}, std::move(backward)};
  node.parents.reserve(inputs.size());
  for (const Tensor* in : inputs)
    node.parents.push_back(in->recorded() ? static_cast<std::ptrdiff_t>(in->node()) : -1);
  tape->nodes_.push_back(std::move(node));
  output.tape_ = tape;
  output.node_ = tape->nodes_.size() - 1;
  return output;
}

Gradients Tape::backward(const Tensor& loss) const {
  if (loss.tape() != this) throw ContractError("backward: loss was not recorded on this tape");
  if (loss.size() != 1)
    throw ContractError("backward: loss must be scalar, got shape " + to_string(loss.shape()));

  Gradients out;
  out.tape_ = this;
  out.grads_.resize(loss.node() + 1);
  out.grads_[loss.node()] = {1.0};

  std::vector<GradSink> sinks;
  for (std::size_t i = loss.node() + 1; i-- > 0;) {
    const Node& node = nodes_[i];
    if (out.grads_[i].empty() || !node.backward) continue;
    sinks.assign(node.parents.size(), GradSink{});
    for (std::size_t p = 0; p < node.parents.size(); ++p) {
      const std::ptrdiff_t parent = node.parents[p];
      if (parent < 0) continue;
      auto& g = out.grads_[static_cast<std::size_t>(parent)];
      if (g.empty()) g.assign(numel(nodes_[static_cast<std::size_t>(parent)].shape), 0.0);
      sinks[p] = g;
    }
    node.backward(out.grads_[i], sinks);
    // Interior gradients are dead once propagated; keep leaves only.
    std::vector<double>().swap(out.grads_[i]);
  }
  return out;
}

Tensor Gradients::of(const Tensor& t) const {
  if (t.tape() != tape_) throw ContractError("gradients: tensor is not on the differentiated tape");
  if (!reached(t)) return Tensor::zeros(t.shape());
  return Tensor(t.shape(), grads_[t.node()]);
}

bool Gradients::reached(const Tensor& t) const {
  return t.tape() == tape_ && t.node() < grads_.size() && !grads_[t.node()].empty();
}

}  // namespace lowlight::ad
