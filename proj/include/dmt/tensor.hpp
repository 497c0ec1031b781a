#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace dmt::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_string(const Shape& shape);

struct Node;

/// Dense row-major double tensor with reverse-mode gradient tracking.
///
/// A Tensor is a shared handle: copies alias the same storage. Values produced
/// by ops are never written afterwards; only leaves (parameters) are mutated,
/// and only by the optimizer between steps.
class Tensor {
public:
  Tensor() = default;

  static Tensor zeros(const Shape& shape, bool requires_grad = false);
  static Tensor full(const Shape& shape, double value, bool requires_grad = false);
  static Tensor from(const Shape& shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  /// Extent along `axis`; negative axes count from the back.
  std::size_t dim(int axis) const;
  std::size_t numel() const;

  std::span<const double> values() const;
  std::span<double> mutable_values();
  double item() const;
  double at(std::initializer_list<std::size_t> index) const;

  bool requires_grad() const;
  void set_requires_grad(bool on);
  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  /// Rows of a softmax that were entirely masked (-inf) in the producing op.
  std::size_t fault_count() const;
  bool all_finite() const;

  /// A new leaf holding a copy of the values, detached from any graph.
  Tensor detach() const;

  const std::shared_ptr<Node>& node() const noexcept { return node_; }
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

private:
  std::shared_ptr<Node> node_;
};

/// Graph record for one op output. `backward` reads `grad` and accumulates
/// into the inputs' gradients.
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::size_t faults = 0;
  std::uint64_t seq = 0;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  double* grad_buffer();  // allocates zeros on first use
};

/// Execution-ordered list of the op nodes reachable from a loss.
class Tape {
public:
  static Tape collect(const Tensor& loss);
  std::size_t size() const noexcept { return nodes_.size(); }
  /// Runs every node's vector-Jacobian product once, newest first, then
  /// releases the graph.
  void run_backward();

private:
  std::vector<std::shared_ptr<Node>> nodes_;
};

/// Accumulates d(loss)/d(leaf) into every leaf that requires grad.
/// `loss` must be a scalar produced by a recorded op.
void backward(const Tensor& loss);

bool grad_enabled();

/// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
  bool previous_;
};

namespace detail {
/// Builds an op output; records `backward` only when grad mode is on and an
/// input requires grad.
Tensor make_result(Shape shape, std::vector<double> value, std::vector<Tensor> inputs,
                   std::function<void(Node&)> backward);
std::uint64_t next_sequence();
}  // namespace detail

}  // namespace dmt::ad
