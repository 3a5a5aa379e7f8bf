#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace sktune {

using Shape = std::vector<std::size_t>;

std::size_t numel_of(const Shape& shape);
std::string shape_string(const Shape& shape);

class Tape;

namespace detail {

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty when absent
  bool has_grad = false;
  bool requires_grad = false;
  Tape* tape = nullptr;
  std::optional<std::size_t> tape_node;

  // Allocates the grad buffer on first use.
  std::vector<double>& grad_buffer();
};

}  // namespace detail

/// Dense row-major f64 array with an optional slot on the active gradient tape.
///
/// Copies are shallow: two Tensor handles may refer to the same storage.
/// Use clone() for an independent copy.
class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor vector(std::initializer_list<double> values);

  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return impl_->shape.at(axis); }
  std::size_t numel() const { return impl_->data.size(); }

  std::span<const double> data() const { return impl_->data; }
  // Writes bypass the tape; only optimizers and gradient checks should use this.
  std::span<double> mutable_data() { return impl_->data; }
  double item() const;
  double at(std::size_t i) const { return impl_->data.at(i); }
  double at(std::size_t row, std::size_t col) const;

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool value) { impl_->requires_grad = value; }

  bool has_grad() const { return impl_->has_grad; }
  std::span<const double> grad() const { return impl_->grad; }
  void clear_grad();

  std::optional<std::size_t> tape_node() const { return impl_->tape_node; }

  // Shares no storage with this tensor; result never requires grad.
  Tensor clone() const;
  // Shares storage but detaches from the tape and from grad tracking.
  Tensor detach() const;

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

  const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
  friend class Tape;

  std::shared_ptr<detail::TensorImpl> impl_;
};

/// Ordered record of differentiable operations. Nodes are appended in
/// execution order, so every node's inputs precede it.
class Tape {
 public:
  using Impl = std::shared_ptr<detail::TensorImpl>;

  struct Node {
    std::vector<Impl> inputs;
    Impl output;
    std::function<void()> backward;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;
  ~Tape();

  // Appends a node producing `output`; returns its index.
  std::size_t record(std::vector<Impl> inputs, const Impl& output, std::function<void()> backward);

  std::size_t size() const { return nodes_.size(); }
  const Node& node(std::size_t i) const { return nodes_.at(i); }
  void clear();

  // Visits nodes from `from` down to 0 exactly once each.
  void run_backward(std::size_t from);

  static Tape* active();

 private:
  friend class TapeScope;
  std::vector<Node> nodes_;
};

/// Installs `tape` as the thread's active tape for the lifetime of the scope.
/// Passing nullptr suspends recording.
class TapeScope {
 public:
  explicit TapeScope(Tape* tape);
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;
  ~TapeScope();

 private:
  Tape* previous_;
};

/// Seeds d(loss)/d(loss) = 1 and propagates through the tape that recorded
/// `loss`. Gradients accumulate into every reachable requires_grad tensor.
void backward(const Tensor& loss);

/// i.i.d. N(0, stddev²) entries drawn in row-major order.
Tensor random_normal(Shape shape, double stddev, std::mt19937_64& rng);

}  // namespace sktune
