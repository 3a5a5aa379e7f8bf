#include "sktune/tensor.hpp"

#include <sstream>

#include "sktune/error.hpp"

namespace sktune {

std::size_t numel_of(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::vector<double>& detail::TensorImpl::grad_buffer() {
  if (!has_grad) {
    grad.assign(data.size(), 0.0);
    has_grad = true;
  }
  return grad;
}

Tensor::Tensor() : Tensor(Shape{0}, {}) {}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
    : impl_(std::make_shared<detail::TensorImpl>()) {
  if (numel_of(shape) != data.size()) {
    throw Error(ErrorKind::ShapeMismatch, "shape " + shape_string(shape) + " holds " +
                                              std::to_string(numel_of(shape)) + " values, got " +
                                              std::to_string(data.size()));
  }
  impl_->shape = std::move(shape);
  impl_->data = std::move(data);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  std::vector<double> data(numel_of(shape), value);
  return Tensor(std::move(shape), std::move(data), requires_grad);
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{}, {value}); }

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t n = rows.size();
  const std::size_t k = n ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(n * k);
  for (const auto& row : rows) {
    if (row.size() != k) throw Error(ErrorKind::ShapeMismatch, "ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor(Shape{n, k}, std::move(data));
}

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor(Shape{values.size()}, std::vector<double>(values));
}

double Tensor::item() const {
  if (numel() != 1) throw Error(ErrorKind::ShapeMismatch, "item() on shape " + shape_string(shape()));
  return impl_->data[0];
}

double Tensor::at(std::size_t row, std::size_t col) const {
  if (rank() != 2) throw Error(ErrorKind::ShapeMismatch, "at(row,col) on shape " + shape_string(shape()));
  return impl_->data.at(row * dim(1) + col);
}

void Tensor::clear_grad() {
  impl_->grad.clear();
  impl_->has_grad = false;
}

Tensor Tensor::clone() const { return Tensor(impl_->shape, impl_->data); }

Tensor Tensor::detach() const {
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = impl_->shape;
  impl->data = impl_->data;
  return Tensor(std::move(impl));
}

// ---------------------------------------------------------------------------

namespace {
thread_local Tape* g_active_tape = nullptr;
}

Tape::~Tape() { clear(); }

std::size_t Tape::record(std::vector<Impl> inputs, const Impl& output, std::function<void()> backward) {
  const std::size_t index = nodes_.size();
  output->tape = this;
  output->tape_node = index;
  nodes_.push_back(Node{std::move(inputs), output, std::move(backward)});
  return index;
}

void Tape::clear() {
  for (auto& node : nodes_) {
    if (node.output->tape == this) {
      node.output->tape = nullptr;
      node.output->tape_node.reset();
    }
  }
  nodes_.clear();
}

void Tape::run_backward(std::size_t from) {
  for (std::size_t i = from + 1; i-- > 0;) {
    Node& node = nodes_[i];
    if (!node.output->has_grad) continue;
    node.backward();
  }
}

Tape* Tape::active() { return g_active_tape; }

TapeScope::TapeScope(Tape* tape) : previous_(g_active_tape) { g_active_tape = tape; }

TapeScope::~TapeScope() { g_active_tape = previous_; }

void backward(const Tensor& loss) {
  const auto& impl = loss.impl();
  if (!impl->tape || !impl->tape_node) {
    throw Error(ErrorKind::NoTape, "loss was not produced under an active tape");
  }
  if (impl->data.size() != 1) {
    throw Error(ErrorKind::ShapeMismatch, "backward expects a scalar loss, got " + shape_string(impl->shape));
  }
  impl->grad_buffer()[0] += 1.0;
  impl->tape->run_backward(*impl->tape_node);
}

Tensor random_normal(Shape shape, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> data(numel_of(shape));
  for (double& v : data) v = dist(rng);
  return Tensor(std::move(shape), std::move(data));
}

}  // namespace sktune
