#include "hman/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "hman/errors.hpp"

namespace hman {

namespace {

thread_local bool g_grad_enabled = true;

#ifdef NDEBUG
bool g_numeric_checks = false;
#else
bool g_numeric_checks = true;
#endif

void check_finite_result(double v, const char* op, double input) {
  if (g_numeric_checks && !std::isfinite(v)) {
    std::ostringstream os;
    os << op << ": domain violation for input " << input;
    throw NumericError(os.str());
  }
}

// Grad buffer of a parent that needs gradients, else nullptr.
double* parent_grad(detail::Node& self, std::size_t i) {
  detail::Node& p = *self.parents[i];
  if (!p.requires_grad) return nullptr;
  return p.grad_buffer().data();
}

const std::vector<double>& parent_value(detail::Node& self, std::size_t i) {
  return self.parents[i]->value;
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         " tensor, got " + shape_string(t.shape()));
  }
}

Shape broadcast_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return a.shape();
  if (b.size() == 1) return a.shape();
  if (a.size() == 1) return b.shape();
  throw DimensionError(std::string(op) + ": incompatible shapes " + shape_string(a.shape()) +
                       " and " + shape_string(b.shape()));
}

// Elementwise binary op with scalar broadcasting on either side. `da`/`db`
// return the partial derivative of the output w.r.t. each operand.
template <class F, class DA, class DB>
Tensor binary_op(const Tensor& a, const Tensor& b, const char* name, F f, DA da, DB db) {
  Shape shape = broadcast_shape(a, b, name);
  const std::size_t n = shape_size(shape);
  const bool a_scalar = a.size() == 1 && n != 1;
  const bool b_scalar = b.size() == 1 && n != 1;
  std::vector<double> out(n);
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = f(av[a_scalar ? 0 : i], bv[b_scalar ? 0 : i]);
  }
  return make_op_result(std::move(shape), std::move(out), {&a, &b},
                        [a_scalar, b_scalar, da, db](detail::Node& self) {
                          const auto& x = parent_value(self, 0);
                          const auto& y = parent_value(self, 1);
                          double* gx = parent_grad(self, 0);
                          double* gy = parent_grad(self, 1);
                          const auto& g = self.grad;
                          for (std::size_t i = 0; i < g.size(); ++i) {
                            const double xv = x[a_scalar ? 0 : i];
                            const double yv = y[b_scalar ? 0 : i];
                            if (gx) gx[a_scalar ? 0 : i] += g[i] * da(xv, yv, self.value[i]);
                            if (gy) gy[b_scalar ? 0 : i] += g[i] * db(xv, yv, self.value[i]);
                          }
                        });
}

// `d` receives (input, output) and returns d output / d input.
template <class F, class D>
Tensor unary_op(const Tensor& a, F f, D d) {
  std::vector<double> out(a.size());
  auto av = a.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(av[i]);
  return make_op_result(a.shape(), std::move(out), {&a}, [d](detail::Node& self) {
    double* gx = parent_grad(self, 0);
    if (!gx) return;
    const auto& x = parent_value(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i] * d(x[i], self.value[i]);
  });
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double stable_softplus(double x) {
  // log(1 + e^x) = max(x, 0) + log1p(e^{-|x|})
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

}  // namespace

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

std::vector<double>& detail::Node::grad_buffer() {
  if (grad.empty()) grad.assign(value.size(), 0.0);
  return grad;
}

// ---------------------------------------------------------------- Tensor

Tensor Tensor::zeros(const Shape& shape, bool requires_grad) {
  return full(shape, 0.0, requires_grad);
}

Tensor Tensor::full(const Shape& shape, double fill, bool requires_grad) {
  return from(shape, std::vector<double>(shape_size(shape), fill), requires_grad);
}

Tensor Tensor::from(const Shape& shape, std::vector<double> values, bool requires_grad) {
  for (std::size_t e : shape) {
    if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_string(shape));
  }
  if (values.size() != shape_size(shape)) {
    throw DimensionError("tensor of shape " + shape_string(shape) + " needs " +
                         std::to_string(shape_size(shape)) + " values, got " +
                         std::to_string(values.size()));
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = shape;
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

detail::Node& node_of(const Tensor& t) {
  if (!t.node_) throw ContractError("use of an undefined tensor");
  return *t.node_;
}

const Shape& Tensor::shape() const { return node_of(*this).shape; }
std::size_t Tensor::size() const { return node_of(*this).value.size(); }

std::size_t Tensor::dim(std::size_t axis) const {
  const Shape& s = shape();
  if (axis >= s.size()) throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_string(s));
  return s[axis];
}

std::span<const double> Tensor::values() const { return node_of(*this).value; }
std::span<double> Tensor::mutable_values() { return node_of(*this).value; }

double Tensor::item() const {
  if (size() != 1) throw ContractError("item() on tensor of shape " + shape_string(shape()));
  return values()[0];
}

double Tensor::at(std::size_t row, std::size_t col) const {
  const Shape& s = shape();
  if (s.size() != 2 || row >= s[0] || col >= s[1]) {
    throw DimensionError("at(" + std::to_string(row) + "," + std::to_string(col) + ") on " + shape_string(s));
  }
  return values()[row * s[1] + col];
}

double Tensor::at(std::size_t i, std::size_t j, std::size_t k) const {
  const Shape& s = shape();
  if (s.size() != 3 || i >= s[0] || j >= s[1] || k >= s[2]) {
    throw DimensionError("at(" + std::to_string(i) + "," + std::to_string(j) + "," + std::to_string(k) + ") on " +
                         shape_string(s));
  }
  return values()[(i * s[1] + j) * s[2] + k];
}

bool Tensor::requires_grad() const { return node_of(*this).requires_grad; }
bool Tensor::is_leaf() const { return node_of(*this).is_leaf; }
bool Tensor::has_grad() const { return !node_of(*this).grad.empty(); }

std::vector<double> Tensor::grad() const {
  const auto& n = node_of(*this);
  if (n.grad.empty()) return std::vector<double>(n.value.size(), 0.0);
  return n.grad;
}

std::span<double> Tensor::mutable_grad() { return node_of(*this).grad_buffer(); }

void Tensor::zero_grad() {
  auto& n = node_of(*this);
  std::fill(n.grad.begin(), n.grad.end(), 0.0);
}

void Tensor::backward() {
  detail::Node& root = node_of(*this);
  if (root.value.size() != 1) {
    throw ContractError("backward() requires a scalar loss, got shape " + shape_string(root.shape));
  }
  if (root.backward_done) {
    throw ContractError("backward() already called on this loss; rebuild the graph for another pass");
  }
  if (!root.requires_grad) {
    throw ContractError("backward() on a loss that does not depend on any tensor requiring gradients");
  }

  // Post-order DFS gives parents before children.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> visited;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(&root, 0);
  visited.insert(&root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* p = node->parents[next++].get();
      if (p->requires_grad && !p->is_leaf && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (detail::Node* n : order) n->grad.assign(n->value.size(), 0.0);
  root.grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (n->adjoint) n->adjoint(*n);
  }
  for (detail::Node* n : order) {
    if (n != &root) std::vector<double>().swap(n->grad);
  }
  root.backward_done = true;
}

Tensor Tensor::detach() const {
  return from(shape(), std::vector<double>(values().begin(), values().end()), false);
}

Tensor Tensor::clone_leaf() const {
  return from(shape(), std::vector<double>(values().begin(), values().end()), true);
}


Tensor make_op_result(Shape shape, std::vector<double> value, std::initializer_list<const Tensor*> inputs,
                      std::function<void(detail::Node&)> adjoint) {
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  if (g_grad_enabled) {
    bool needs = false;
    for (const Tensor* t : inputs) needs = needs || node_of(*t).requires_grad;
    if (needs) {
      node->requires_grad = true;
      node->is_leaf = false;
      node->parents.reserve(inputs.size());
      for (const Tensor* t : inputs) node->parents.push_back(t->node_);
      node->adjoint = std::move(adjoint);
    }
  }
  return Tensor(std::move(node));
}

Tensor make_op_result(Shape shape, std::vector<double> value, const std::vector<Tensor>& inputs,
                      std::function<void(detail::Node&)> adjoint) {
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  if (g_grad_enabled) {
    bool needs = false;
    for (const Tensor& t : inputs) needs = needs || node_of(t).requires_grad;
    if (needs) {
      node->requires_grad = true;
      node->is_leaf = false;
      node->parents.reserve(inputs.size());
      for (const Tensor& t : inputs) node->parents.push_back(t.node_);
      node->adjoint = std::move(adjoint);
    }
  }
  return Tensor(std::move(node));
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

void set_numeric_checks(bool enabled) { g_numeric_checks = enabled; }
bool numeric_checks() { return g_numeric_checks; }

// ---------------------------------------------------------------- linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: cannot multiply " + shape_string(a.shape()) + " by " +
                         shape_string(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n, 0.0);
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = bv.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += aip * brow[j];
    }
  }
  return make_op_result({m, n}, std::move(out), {&a, &b}, [m, k, n](detail::Node& self) {
    const auto& av = parent_value(self, 0);
    const auto& bv = parent_value(self, 1);
    const double* g = self.grad.data();
    if (double* ga = parent_grad(self, 0)) {
      // ga += g * b^T
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = g + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double* brow = bv.data() + p * n;
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
          ga[i * k + p] += acc;
        }
      }
    }
    if (double* gb = parent_grad(self, 1)) {
      // gb += a^T * g
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = g + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = av[i * k + p];
          if (aip == 0.0) continue;
          double* gbrow = gb + p * n;
          for (std::size_t j = 0; j < n; ++j) gbrow[j] += aip * grow[j];
        }
      }
    }
  });
}

Tensor transpose(const Tensor& a) {
  require_rank(a, 2, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<double> out(m * n);
  auto av = a.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = av[i * n + j];
  return make_op_result({n, m}, std::move(out), {&a}, [m, n](detail::Node& self) {
    double* ga = parent_grad(self, 0);
    if (!ga) return;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += self.grad[j * m + i];
  });
}

// ---------------------------------------------------------------- elementwise

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double, double y, double) { return y; }, [](double x, double, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "div",
      [](double x, double y) {
        const double r = x / y;
        check_finite_result(r, "div", y);
        return r;
      },
      [](double, double y, double) { return 1.0 / y; },
      [](double, double y, double out) { return -out / y; });
}

Tensor neg(const Tensor& a) {
  return unary_op(a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Tensor scale(const Tensor& a, double factor) {
  return unary_op(
      a, [factor](double x) { return x * factor; }, [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& a, double offset) {
  return unary_op(a, [offset](double x) { return x + offset; }, [](double, double) { return 1.0; });
}

Tensor one_minus(const Tensor& a) {
  return unary_op(a, [](double x) { return 1.0 - x; }, [](double, double) { return -1.0; });
}

Tensor sigmoid(const Tensor& a) {
  return unary_op(a, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& a) {
  return unary_op(
      a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor softplus(const Tensor& a) {
  return unary_op(a, stable_softplus, [](double x, double) { return stable_sigmoid(x); });
}

Tensor exp(const Tensor& a) {
  return unary_op(
      a,
      [](double x) {
        const double y = std::exp(x);
        check_finite_result(y, "exp", x);
        return y;
      },
      [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  return unary_op(
      a,
      [](double x) {
        const double y = std::log(x);
        check_finite_result(y, "log", x);
        return y;
      },
      [](double x, double) { return 1.0 / x; });
}

Tensor relu(const Tensor& a) {
  return unary_op(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor log_clamped(const Tensor& a, double floor) {
  return unary_op(
      a, [floor](double x) { return std::log(std::max(x, floor)); },
      [floor](double x, double) { return x > floor ? 1.0 / x : 0.0; });
}

// ---------------------------------------------------------------- structure

Tensor add_bias(const Tensor& a, const Tensor& bias) {
  require_rank(a, 2, "add_bias");
  const std::size_t m = a.dim(0), n = a.dim(1);
  if (bias.size() != n || bias.rank() > 2 || (bias.rank() == 2 && bias.dim(0) != 1)) {
    throw DimensionError("add_bias: bias " + shape_string(bias.shape()) + " does not match " +
                         shape_string(a.shape()));
  }
  std::vector<double> out(a.values().begin(), a.values().end());
  auto bv = bias.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bv[j];
  return make_op_result({m, n}, std::move(out), {&a, &bias}, [m, n](detail::Node& self) {
    const auto& g = self.grad;
    if (double* ga = parent_grad(self, 0))
      for (std::size_t i = 0; i < m * n; ++i) ga[i] += g[i];
    if (double* gb = parent_grad(self, 1))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gb[j] += g[i * n + j];
  });
}

Tensor mul_col(const Tensor& a, const Tensor& col) {
  require_rank(a, 2, "mul_col");
  const std::size_t m = a.dim(0), n = a.dim(1);
  if (col.size() != m || (col.rank() == 2 && col.dim(1) != 1) || col.rank() > 2) {
    throw DimensionError("mul_col: column " + shape_string(col.shape()) + " does not match " +
                         shape_string(a.shape()));
  }
  std::vector<double> out(m * n);
  auto av = a.values();
  auto cv = col.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = av[i * n + j] * cv[i];
  return make_op_result({m, n}, std::move(out), {&a, &col}, [m, n](detail::Node& self) {
    const auto& av = parent_value(self, 0);
    const auto& cv = parent_value(self, 1);
    const auto& g = self.grad;
    if (double* ga = parent_grad(self, 0))
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[i * n + j] * cv[i];
    if (double* gc = parent_grad(self, 1))
      for (std::size_t i = 0; i < m; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * av[i * n + j];
        gc[i] += acc;
      }
  });
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end) {
  require_rank(a, 2, "slice_cols");
  const std::size_t m = a.dim(0), n = a.dim(1);
  if (begin >= end || end > n) {
    throw DimensionError("slice_cols: range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") invalid for " + shape_string(a.shape()));
  }
  const std::size_t w = end - begin;
  std::vector<double> out(m * w);
  auto av = a.values();
  for (std::size_t i = 0; i < m; ++i)
    std::copy_n(av.data() + i * n + begin, w, out.data() + i * w);
  return make_op_result({m, w}, std::move(out), {&a}, [m, n, w, begin](detail::Node& self) {
    double* ga = parent_grad(self, 0);
    if (!ga) return;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < w; ++j) ga[i * n + begin + j] += self.grad[i * w + j];
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("concat_cols: no inputs");
  const std::size_t m = parts[0].dim(0);
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    if (p.rank() != 2 || p.dim(0) != m) {
      throw DimensionError("concat_cols: " + shape_string(p.shape()) + " does not stack with " +
                           shape_string(parts[0].shape()));
    }
    widths.push_back(p.dim(1));
    total += p.dim(1);
  }
  std::vector<double> out(m * total);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    auto pv = parts[k].values();
    for (std::size_t i = 0; i < m; ++i)
      std::copy_n(pv.data() + i * widths[k], widths[k], out.data() + i * total + offset);
    offset += widths[k];
  }
  return make_op_result({m, total}, std::move(out), parts, [m, total, widths](detail::Node& self) {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      if (double* gp = parent_grad(self, k)) {
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < widths[k]; ++j)
            gp[i * widths[k] + j] += self.grad[i * total + offset + j];
      }
      offset += widths[k];
    }
  });
}

Tensor reshape(const Tensor& a, const Shape& shape) {
  if (shape_size(shape) != a.size()) {
    throw DimensionError("reshape: " + shape_string(a.shape()) + " cannot become " + shape_string(shape));
  }
  std::vector<double> out(a.values().begin(), a.values().end());
  return make_op_result(shape, std::move(out), {&a}, [](detail::Node& self) {
    double* ga = parent_grad(self, 0);
    if (!ga) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i];
  });
}

Tensor gather_cols(const Tensor& a, std::span<const std::size_t> index) {
  require_rank(a, 2, "gather_cols");
  const std::size_t m = a.dim(0), n = a.dim(1);
  if (index.size() != m) {
    throw DimensionError("gather_cols: " + std::to_string(index.size()) + " indices for " +
                         shape_string(a.shape()));
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  std::vector<double> out(m);
  auto av = a.values();
  for (std::size_t i = 0; i < m; ++i) {
    if (idx[i] >= n) throw ContractError("gather_cols: index " + std::to_string(idx[i]) + " out of range");
    out[i] = av[i * n + idx[i]];
  }
  return make_op_result({m, 1}, std::move(out), {&a}, [n, idx](detail::Node& self) {
    double* ga = parent_grad(self, 0);
    if (!ga) return;
    for (std::size_t i = 0; i < idx.size(); ++i) ga[i * n + idx[i]] += self.grad[i];
  });
}

Tensor weighted_locations(const Tensor& weights, const Tensor& features) {
  require_rank(weights, 2, "weighted_locations");
  require_rank(features, 3, "weighted_locations");
  const std::size_t b = weights.dim(0), n = weights.dim(1), d = features.dim(2);
  if (features.dim(0) != b || features.dim(1) != n) {
    throw DimensionError("weighted_locations: weights " + shape_string(weights.shape()) +
                         " do not match features " + shape_string(features.shape()));
  }
  std::vector<double> out(b * d, 0.0);
  auto wv = weights.values();
  auto xv = features.values();
  for (std::size_t r = 0; r < b; ++r)
    for (std::size_t i = 0; i < n; ++i) {
      const double w = wv[r * n + i];
      if (w == 0.0) continue;
      const double* x = xv.data() + (r * n + i) * d;
      for (std::size_t j = 0; j < d; ++j) out[r * d + j] += w * x[j];
    }
  return make_op_result({b, d}, std::move(out), {&weights, &features}, [b, n, d](detail::Node& self) {
    const auto& wv = parent_value(self, 0);
    const auto& xv = parent_value(self, 1);
    const auto& g = self.grad;
    if (double* gw = parent_grad(self, 0))
      for (std::size_t r = 0; r < b; ++r)
        for (std::size_t i = 0; i < n; ++i) {
          const double* x = xv.data() + (r * n + i) * d;
          double acc = 0.0;
          for (std::size_t j = 0; j < d; ++j) acc += g[r * d + j] * x[j];
          gw[r * n + i] += acc;
        }
    if (double* gx = parent_grad(self, 1))
      for (std::size_t r = 0; r < b; ++r)
        for (std::size_t i = 0; i < n; ++i) {
          const double w = wv[r * n + i];
          for (std::size_t j = 0; j < d; ++j) gx[(r * n + i) * d + j] += w * g[r * d + j];
        }
  });
}

// ---------------------------------------------------------------- reductions

Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.values()) acc += v;
  return make_op_result({1}, {acc}, {&a}, [](detail::Node& self) {
    double* ga = parent_grad(self, 0);
    if (!ga) return;
    const double g = self.grad[0];
    const std::size_t n = self.parents[0]->value.size();
    for (std::size_t i = 0; i < n; ++i) ga[i] += g;
  });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.size())); }

Tensor sum_cols(const Tensor& a) {
  require_rank(a, 2, "sum_cols");
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<double> out(m, 0.0);
  auto av = a.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i] += av[i * n + j];
  return make_op_result({m, 1}, std::move(out), {&a}, [m, n](detail::Node& self) {
    double* ga = parent_grad(self, 0);
    if (!ga) return;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += self.grad[i];
  });
}

Tensor softmax(const Tensor& a, int axis) {
  const int rank = static_cast<int>(a.rank());
  const int ax = axis < 0 ? rank + axis : axis;
  if (ax < 0 || ax >= rank) {
    throw DimensionError("softmax: axis " + std::to_string(axis) + " invalid for " + shape_string(a.shape()));
  }
  const Shape& s = a.shape();
  std::size_t outer = 1, inner = 1;
  for (int i = 0; i < ax; ++i) outer *= s[i];
  for (int i = ax + 1; i < rank; ++i) inner *= s[i];
  const std::size_t len = s[ax];
  std::vector<double> out(a.size());
  auto av = a.values();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      double mx = av[base];
      for (std::size_t k = 1; k < len; ++k) mx = std::max(mx, av[base + k * inner]);
      double z = 0.0;
      for (std::size_t k = 0; k < len; ++k) {
        const double e = std::exp(av[base + k * inner] - mx);
        out[base + k * inner] = e;
        z += e;
      }
      for (std::size_t k = 0; k < len; ++k) out[base + k * inner] /= z;
    }
  return make_op_result(s, std::move(out), {&a}, [outer, inner, len](detail::Node& self) {
    double* ga = parent_grad(self, 0);
    if (!ga) return;
    const auto& y = self.value;
    const auto& g = self.grad;
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * len * inner + in;
        double dot = 0.0;
        for (std::size_t k = 0; k < len; ++k) dot += g[base + k * inner] * y[base + k * inner];
        for (std::size_t k = 0; k < len; ++k) {
          const std::size_t idx = base + k * inner;
          ga[idx] += y[idx] * (g[idx] - dot);
        }
      }
  });
}

Tensor log_softmax_rows(const Tensor& a) {
  require_rank(a, 2, "log_softmax_rows");
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<double> out(m * n);
  auto av = a.values();
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = av.data() + i * n;
    const double mx = *std::max_element(row, row + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(row[j] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = row[j] - lse;
  }
  return make_op_result({m, n}, std::move(out), {&a}, [m, n](detail::Node& self) {
    double* ga = parent_grad(self, 0);
    if (!ga) return;
    for (std::size_t i = 0; i < m; ++i) {
      double gsum = 0.0;
      for (std::size_t j = 0; j < n; ++j) gsum += self.grad[i * n + j];
      for (std::size_t j = 0; j < n; ++j) {
        ga[i * n + j] += self.grad[i * n + j] - std::exp(self.value[i * n + j]) * gsum;
      }
    }
  });
}

std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

}  // namespace hman
