#pragma once

// Dense double-precision tensors and the reverse-mode gradient tape.
//
// A Tensor is an immutable value: shape plus shared contiguous storage. When it
// was produced by an operation whose inputs were recorded on a Tape (or was
// registered with Tape::watch), it also carries a node index into that tape.
// Tensors built from plain data carry no node and act as constants.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace lowlight::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

class Tape;

class Tensor {
 public:
  Tensor() : Tensor(Shape{}, std::vector<double>{0.0}) {}
  Tensor(Shape shape, std::vector<double> values);

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const noexcept { return data_->size(); }
  std::span<const double> values() const& noexcept { return *data_; }
  // A span into a temporary would dangle.
  std::span<const double> values() const&& = delete;
  double operator[](std::size_t i) const { return (*data_)[i]; }
  /// Value of a single-element tensor.
  double item() const;

  bool recorded() const noexcept { return tape_ != nullptr; }
  Tape* tape() const noexcept { return tape_; }
  std::size_t node() const noexcept { return node_; }

  /// Same storage, no tape node.
  Tensor detached() const;
  /// Same storage viewed with another shape of equal element count (not recorded;
  /// use ad::reshape inside a computation).
  Tensor with_shape(Shape shape) const;

 private:
  friend class Tape;

  Shape shape_;
  std::shared_ptr<const std::vector<double>> data_;
  Tape* tape_ = nullptr;
  std::size_t node_ = 0;
};

/// Gradient buffer handed to a backward closure for one input; empty when that
/// input is a constant.
using GradSink = std::span<double>;
using BackwardFn =
    std::function<void(std::span<const double> upstream, std::span<const GradSink> inputs)>;

class Gradients {
 public:
  /// Gradient with respect to `t`, zero-filled if it did not reach the loss.
  Tensor of(const Tensor& t) const;
  bool reached(const Tensor& t) const;

 private:
  friend class Tape;
  const Tape* tape_ = nullptr;
  std::vector<std::vector<double>> grads_;
};

/// Append-only record of operations. Confined to a single thread; not movable
/// because recorded tensors refer back to it.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Registers `value` as a leaf whose gradient is wanted.
  Tensor watch(const Tensor& value);

  /// Exact gradient of the scalar `loss` with respect to every node on the tape.
  Gradients backward(const Tensor& loss) const;

  std::size_t size() const noexcept { return nodes_.size(); }

  /// Used by operations: appends a node for `output` whose parents are the
  /// recorded members of `inputs`. Returns `output` unchanged when no input is
  /// recorded. Fails if inputs live on different tapes.
  static Tensor record(Tensor output, std::span<const Tensor* const> inputs, BackwardFn backward,
                       const char* op);

 private:
  struct Node {
    Shape shape;
    std::vector<std::ptrdiff_t> parents;  // -1 for constant inputs
    BackwardFn backward;                  // empty for leaves
  };
  std::vector<Node> nodes_;
};

}  // namespace lowlight::ad
