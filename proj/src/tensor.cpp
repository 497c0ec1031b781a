#include "dmt/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <unordered_set>

#include "dmt/common.hpp"

namespace dmt::ad {

namespace {
thread_local bool g_grad_enabled = true;

const Node& require(const std::shared_ptr<Node>& n) {
  if (!n) throw Error(ErrorKind::invalid_argument, "use of an undefined tensor");
  return *n;
}
}  // namespace

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

double* Node::grad_buffer() {
  if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  return grad.data();
}

Tensor Tensor::zeros(const Shape& shape, bool requires_grad) {
  return full(shape, 0.0, requires_grad);
}

Tensor Tensor::full(const Shape& shape, double value, bool requires_grad) {
  return from(shape, std::vector<double>(ad::numel(shape), value), requires_grad);
}

Tensor Tensor::from(const Shape& shape, std::vector<double> values, bool requires_grad) {
  for (auto d : shape) {
    if (d == 0) throw Error(ErrorKind::shape_mismatch, "tensor extents must be positive");
  }
  if (values.size() != ad::numel(shape)) {
    throw Error(ErrorKind::shape_mismatch, "value count " + std::to_string(values.size()) +
                                               " does not match shape " + shape_string(shape));
  }
  auto node = std::make_shared<Node>();
  node->shape = shape;
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  node->seq = detail::next_sequence();
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({1}, {value}, requires_grad); }

const Shape& Tensor::shape() const { return require(node_).shape; }

std::size_t Tensor::dim(int axis) const {
  const auto r = static_cast<int>(rank());
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) throw Error(ErrorKind::out_of_range, "axis out of range");
  return shape()[static_cast<std::size_t>(a)];
}

std::size_t Tensor::numel() const { return require(node_).value.size(); }

std::span<const double> Tensor::values() const { return require(node_).value; }

std::span<double> Tensor::mutable_values() {
  require(node_);
  return node_->value;
}

double Tensor::item() const {
  if (numel() != 1) throw Error(ErrorKind::shape_mismatch, "item() on a non-scalar tensor");
  return node_->value[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
  const Shape& s = shape();
  if (index.size() != s.size()) throw Error(ErrorKind::shape_mismatch, "index rank mismatch");
  std::size_t flat = 0;
  std::size_t k = 0;
  for (auto i : index) {
    if (i >= s[k]) throw Error(ErrorKind::out_of_range, "index out of range");
    flat = flat * s[k] + i;
    ++k;
  }
  return node_->value[flat];
}

bool Tensor::requires_grad() const { return require(node_).requires_grad; }

void Tensor::set_requires_grad(bool on) {
  require(node_);
  node_->requires_grad = on;
}

bool Tensor::has_grad() const { return require(node_).grad.size() == node_->value.size(); }

std::span<const double> Tensor::grad() const { return require(node_).grad; }

std::span<double> Tensor::mutable_grad() {
  require(node_);
  node_->grad_buffer();
  return node_->grad;
}

void Tensor::zero_grad() {
  require(node_);
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

std::size_t Tensor::fault_count() const { return require(node_).faults; }

bool Tensor::all_finite() const {
  for (double v : values()) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Tensor Tensor::detach() const { return from(shape(), require(node_).value, false); }

Tape Tape::collect(const Tensor& loss) {
  Tape tape;
  std::vector<std::shared_ptr<Node>> stack{loss.node()};
  std::unordered_set<const Node*> seen;
  while (!stack.empty()) {
    std::shared_ptr<Node> n = std::move(stack.back());
    stack.pop_back();
    if (!n->backward || !seen.insert(n.get()).second) continue;
    for (const auto& in : n->inputs) {
      if (in->requires_grad && in->backward) stack.push_back(in);
    }
    tape.nodes_.push_back(std::move(n));
  }
  std::sort(tape.nodes_.begin(), tape.nodes_.end(),
            [](const auto& a, const auto& b) { return a->seq > b->seq; });
  return tape;
}

void Tape::run_backward() {
  for (auto& n : nodes_) {
    if (!n->grad.empty()) n->backward(*n);
  }
  for (auto& n : nodes_) {
    n->backward = nullptr;
    n->inputs.clear();
  }
  nodes_.clear();
}

void backward(const Tensor& loss) {
  if (!loss.defined()) throw Error(ErrorKind::invalid_argument, "backward on undefined tensor");
  if (loss.numel() != 1) {
    throw Error(ErrorKind::shape_mismatch,
                "backward needs a scalar loss, got shape " + shape_string(loss.shape()));
  }
  const auto& node = loss.node();
  if (!node->backward) {
    throw Error(ErrorKind::invalid_argument, "backward on a tensor with no recorded graph");
  }
  Tape tape = Tape::collect(loss);
  node->grad_buffer()[0] += 1.0;
  tape.run_backward();
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

namespace detail {

std::uint64_t next_sequence() {
  static std::atomic<std::uint64_t> counter{0};
  return ++counter;
}

Tensor make_result(Shape shape, std::vector<double> value, std::vector<Tensor> inputs,
                   std::function<void(Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->seq = next_sequence();
  bool track = false;
  if (g_grad_enabled) {
    for (const auto& t : inputs) track = track || t.requires_grad();
  }
  if (track) {
    node->requires_grad = true;
    node->backward = std::move(backward);
    node->inputs.reserve(inputs.size());
    for (auto& t : inputs) node->inputs.push_back(t.node());
  }
  return Tensor(std::move(node));
}

}  // namespace detail

}  // namespace dmt::ad
