#pragma once

// Dense double-precision tensors with reverse-mode automatic differentiation.
//
// A Tensor is a shared handle onto a graph node. Operations on tensors that
// require gradients record their inputs and an adjoint rule; backward() on a
// scalar result replays those rules in reverse topological order and
// accumulates (sums) into every reachable leaf's grad buffer. Leaf gradients
// persist until zero_grad().
//
// Storage is row-major. Elementwise binary ops accept equal shapes or a
// one-element operand on either side; row/column broadcasts have dedicated
// ops (add_bias, mul_col).

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace hman {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

class Tensor;

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  bool is_leaf = true;
  bool backward_done = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> adjoint;

  std::vector<double>& grad_buffer();
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(const Shape& shape, bool requires_grad = false);
  static Tensor full(const Shape& shape, double fill, bool requires_grad = false);
  static Tensor from(const Shape& shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const noexcept { return node_ != nullptr; }

  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t size() const;
  std::size_t dim(std::size_t axis) const;

  std::span<const double> values() const;
  // Writes bypass the tape; only use on leaves or tensors not yet consumed.
  std::span<double> mutable_values();
  double item() const;
  double operator[](std::size_t i) const { return values()[i]; }
  double at(std::size_t row, std::size_t col) const;
  double at(std::size_t i, std::size_t j, std::size_t k) const;

  bool requires_grad() const;
  bool is_leaf() const;
  bool has_grad() const;
  // Gradient accumulator; zeros when nothing has been accumulated yet.
  std::vector<double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  // Reverse sweep from this scalar. A second call on the same result throws.
  void backward();

  // Same values, no tape history, no gradient.
  Tensor detach() const;
  // Leaf copy of the values that does require gradients.
  Tensor clone_leaf() const;

  // Identity of the underlying node (shared by copies of the handle).
  const void* id() const noexcept { return node_.get(); }

 private:
  friend Tensor make_op_result(Shape, std::vector<double>, std::initializer_list<const Tensor*>,
                               std::function<void(detail::Node&)>);
  friend Tensor make_op_result(Shape, std::vector<double>, const std::vector<Tensor>&,
                               std::function<void(detail::Node&)>);
  friend detail::Node& node_of(const Tensor&);

  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

  std::shared_ptr<detail::Node> node_;
};

// Creates an op output. When gradient recording is enabled and any input
// requires gradients, the output keeps the inputs as parents and `adjoint`
// is called during backward with the output node.
Tensor make_op_result(Shape shape, std::vector<double> value,
                      std::initializer_list<const Tensor*> inputs,
                      std::function<void(detail::Node&)> adjoint);
Tensor make_op_result(Shape shape, std::vector<double> value, const std::vector<Tensor>& inputs,
                      std::function<void(detail::Node&)> adjoint);
detail::Node& node_of(const Tensor& t);

// Disables tape recording on this thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// When on, log/exp/div domain violations raise NumericError. Defaults to on
// in builds without NDEBUG.
void set_numeric_checks(bool enabled);
bool numeric_checks();

// ---- linear algebra ----
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// ---- elementwise ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double offset);
Tensor one_minus(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor relu(const Tensor& a);
// log(max(a, floor)); gradient is zero where the clamp is active.
Tensor log_clamped(const Tensor& a, double floor);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

// ---- broadcasting and structure ----
// a[m x n] + bias[n] (or [1 x n]) added to every row.
Tensor add_bias(const Tensor& a, const Tensor& bias);
// a[m x n] scaled row-wise by col[m x 1] (or [m]).
Tensor mul_col(const Tensor& a, const Tensor& col);
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor reshape(const Tensor& a, const Shape& shape);
// out[r] = a[r, index[r]], shape [m x 1].
Tensor gather_cols(const Tensor& a, std::span<const std::size_t> index);
// weights[B x N], features[B x N x D] -> [B x D]: sum_i w[b,i] * X[b,i,:].
Tensor weighted_locations(const Tensor& weights, const Tensor& features);

// ---- reductions ----
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
// Row sums of a 2-D tensor, [m x 1].
Tensor sum_cols(const Tensor& a);

// Numerically stable softmax along `axis` (negative counts from the back).
Tensor softmax(const Tensor& a, int axis = -1);
// Row-wise log-softmax of a 2-D tensor via log-sum-exp.
Tensor log_softmax_rows(const Tensor& a);

// Lowest index of the maximum.
std::size_t argmax(std::span<const double> v);

}  // namespace hman
