#include "l2copy/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>

namespace l2copy {
inline namespace L2COPY_PRECISION_NS {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

namespace {

std::atomic<std::uint64_t> g_sequence{0};
thread_local bool t_grad_enabled = true;

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

NodePtr new_node(Shape shape, std::vector<Real> values) {
  if (shape_numel(shape) != values.size()) {
    throw ShapeError("shape " + shape_str(shape) + " does not match " +
                     std::to_string(values.size()) + " elements");
  }
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::make_shared<std::vector<Real>>(std::move(values));
  node->sequence = g_sequence.fetch_add(1, std::memory_order_relaxed);
  return node;
}

Tensor make_op(Shape shape, std::vector<Real> values, std::vector<NodePtr> inputs,
               std::function<void(Node&)> backward) {
  auto node = new_node(std::move(shape), std::move(values));
  const bool record = t_grad_enabled &&
                      std::any_of(inputs.begin(), inputs.end(),
                                  [](const NodePtr& n) { return n && n->requires_grad; });
  if (record) {
    node->requires_grad = true;
    node->inputs = std::move(inputs);
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

const std::vector<Real>& val(const NodePtr& n) { return *n->value; }

void require(bool cond, const std::string& what) {
  if (!cond) throw ShapeError(what);
}

void require_rank2(const Tensor& t, const char* op) {
  require(t && t.rank() == 2, std::string(op) + ": expected a rank-2 tensor");
}

// C[m,n] += A[m,k] * B[k,n]
void gemm_nn(const Real* a, const Real* b, Real* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    Real* crow = c + i * n;
    const Real* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const Real av = arow[p];
      const Real* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m,n] += A[m,k] * B[n,k]^T
void gemm_nt(const Real* a, const Real* b, Real* c, std::size_t m, std::size_t k, std::size_t n) {
  std::vector<Real> bt(k * n);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = b[j * k + p];
  gemm_nn(a, bt.data(), c, m, k, n);
}

// C[m,n] += A[k,m]^T * B[k,n]
void gemm_tn(const Real* a, const Real* b, Real* c, std::size_t k, std::size_t m, std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) {
    const Real* arow = a + p * m;
    const Real* brow = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const Real av = arow[i];
      Real* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

enum class BinOp { kAdd, kSub, kMul };

Tensor binary(const Tensor& a, const Tensor& b, BinOp op, const char* name) {
  require(a && b, std::string(name) + ": empty tensor");
  require(is_suffix(b.shape(), a.shape()),
          std::string(name) + ": cannot broadcast " + shape_str(b.shape()) + " onto " +
              shape_str(a.shape()));
  const auto& av = val(a.node());
  const auto& bv = val(b.node());
  const std::size_t inner = bv.size();
  std::vector<Real> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) {
    const Real x = av[i], y = bv[inner ? i % inner : 0];
    out[i] = op == BinOp::kAdd ? x + y : op == BinOp::kSub ? x - y : x * y;
  }
  return make_op(a.shape(), std::move(out), {a.node(), b.node()}, [op, inner](Node& self) {
    const auto& g = self.grad;
    NodePtr na = self.inputs[0], nb = self.inputs[1];
    if (na->requires_grad) {
      auto& ga = na->ensure_grad();
      if (op == BinOp::kMul) {
        const auto& bv = val(nb);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i % inner];
      } else {
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
    }
    if (nb->requires_grad) {
      auto& gb = nb->ensure_grad();
      if (op == BinOp::kMul) {
        const auto& av = val(na);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i % inner] += g[i] * av[i];
      } else {
        const Real sign = op == BinOp::kSub ? Real(-1) : Real(1);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i % inner] += sign * g[i];
      }
    }
  });
}

template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& a, Fwd fwd, Deriv deriv) {
  require(static_cast<bool>(a), "unary op on empty tensor");
  const auto& av = val(a.node());
  std::vector<Real> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = fwd(av[i]);
  return make_op(a.shape(), std::move(out), {a.node()}, [deriv](Node& self) {
    NodePtr in = self.inputs[0];
    if (!in->requires_grad) return;
    auto& gi = in->ensure_grad();
    const auto& x = val(in);
    const auto& y = *self.value;
    for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += self.grad[i] * deriv(x[i], y[i]);
  });
}

std::size_t last_dim(const Tensor& a) {
  require(a && a.rank() >= 1, "expected rank >= 1");
  return a.shape().back();
}

}  // namespace

// ---------------------------------------------------------------------------
// Node / Tensor

std::vector<Real>& Node::ensure_grad() {
  if (grad.size() != value->size()) grad.assign(value->size(), Real(0));
  return grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), Real(0), requires_grad);
}

Tensor Tensor::full(Shape shape, Real value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  Tensor t(new_node(std::move(shape), std::vector<Real>(n, value)));
  t.node_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::from(Shape shape, std::vector<Real> values, bool requires_grad) {
  Tensor t(new_node(std::move(shape), std::move(values)));
  t.node_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::scalar(Real value, bool requires_grad) {
  return from({}, {value}, requires_grad);
}

Tensor Tensor::randn(Shape shape, Real stddev, std::mt19937_64& rng, bool requires_grad) {
  std::normal_distribution<double> dist(0.0, static_cast<double>(stddev));
  std::vector<Real> v(shape_numel(shape));
  for (auto& x : v) x = static_cast<Real>(dist(rng));
  return from(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::uniform(Shape shape, Real bound, std::mt19937_64& rng, bool requires_grad) {
  std::uniform_real_distribution<double> dist(-static_cast<double>(bound), static_cast<double>(bound));
  std::vector<Real> v(shape_numel(shape));
  for (auto& x : v) x = static_cast<Real>(dist(rng));
  return from(std::move(shape), std::move(v), requires_grad);
}

const Shape& Tensor::shape() const {
  if (!node_) throw ShapeError("empty tensor has no shape");
  return node_->shape;
}

std::size_t Tensor::numel() const { return node_ ? node_->value->size() : 0; }

std::size_t Tensor::rows() const {
  require_rank2(*this, "rows");
  return node_->shape[0];
}

std::size_t Tensor::cols() const {
  require_rank2(*this, "cols");
  return node_->shape[1];
}

std::span<const Real> Tensor::data() const {
  if (!node_) return {};
  return {node_->value->data(), node_->value->size()};
}

std::span<Real> Tensor::mutable_data() {
  if (!node_) return {};
  return {node_->value->data(), node_->value->size()};
}

std::vector<Real> Tensor::to_vector() const { return {data().begin(), data().end()}; }

Real Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on a tensor with " + std::to_string(numel()) + " elements");
  return (*node_->value)[0];
}

Real Tensor::at(std::size_t i) const {
  if (i >= numel()) throw IndexError("tensor index out of range");
  return (*node_->value)[i];
}

Real Tensor::at(std::size_t r, std::size_t c) const {
  require_rank2(*this, "at");
  if (r >= node_->shape[0] || c >= node_->shape[1]) throw IndexError("tensor index out of range");
  return (*node_->value)[r * node_->shape[1] + c];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool on) {
  if (!node_) throw ShapeError("empty tensor");
  node_->requires_grad = on;
  return *this;
}

std::span<const Real> Tensor::grad() const {
  if (!node_) return {};
  return {node_->grad.data(), node_->grad.size()};
}

std::span<Real> Tensor::mutable_grad() {
  if (!node_) return {};
  auto& g = node_->ensure_grad();
  return {g.data(), g.size()};
}

void Tensor::zero_grad() {
  if (node_ && !node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), Real(0));
}

Tensor Tensor::detach() const {
  if (!node_) return {};
  auto node = std::make_shared<Node>();
  node->shape = node_->shape;
  node->value = node_->value;
  node->sequence = g_sequence.fetch_add(1, std::memory_order_relaxed);
  return Tensor(std::move(node));
}

bool Tensor::shares_storage_with(const Tensor& other) const {
  return node_ && other.node_ && node_->value == other.node_->value;
}

void Tensor::backward() const {
  if (!node_) throw ShapeError("backward on empty tensor");
  if (numel() != 1) {
    throw ShapeError("backward() requires a scalar loss, got shape " + shape_str(node_->shape));
  }
  if (!node_->requires_grad) return;
  Graph graph(*this);
  for (Node* n : graph.reverse_order()) {
    if (!n->is_leaf()) n->grad.assign(n->value->size(), Real(0));
  }
  node_->ensure_grad()[0] += Real(1);
  for (Node* n : graph.reverse_order()) {
    if (!n->is_leaf()) n->backward(*n);
  }
}

Graph::Graph(const Tensor& root) {
  if (!root || !root.node()->requires_grad) return;
  static std::atomic<std::uint64_t> traversal{0};
  const std::uint64_t mark = traversal.fetch_add(1, std::memory_order_relaxed) + 1;
  std::vector<Node*> stack{root.node().get()};
  std::vector<Node*> seen;
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    if (n->visit_mark == mark) continue;
    n->visit_mark = mark;
    seen.push_back(n);
    for (const auto& in : n->inputs) {
      if (in && in->requires_grad) stack.push_back(in.get());
    }
  }
  // Inputs are always created before their consumers, so descending creation
  // order is a valid reverse topological order.
  std::sort(seen.begin(), seen.end(), [](Node* a, Node* b) { return a->sequence > b->sequence; });
  order_ = std::move(seen);
}

bool GradMode::enabled() { return t_grad_enabled; }
void GradMode::set_enabled(bool on) { t_grad_enabled = on; }

// ---------------------------------------------------------------------------
// Linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  require(b.rows() == k, "matmul: inner dimensions differ " + shape_str(a.shape()) + " x " +
                             shape_str(b.shape()));
  std::vector<Real> out(m * n, Real(0));
  gemm_nn(a.data().data(), b.data().data(), out.data(), m, k, n);
  return make_op({m, n}, std::move(out), {a.node(), b.node()}, [m, k, n](Node& self) {
    NodePtr na = self.inputs[0], nb = self.inputs[1];
    if (na->requires_grad) gemm_nt(self.grad.data(), val(nb).data(), na->ensure_grad().data(), m, n, k);
    if (nb->requires_grad) gemm_tn(val(na).data(), self.grad.data(), nb->ensure_grad().data(), m, k, n);
  });
}

Tensor matmul_bt(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul_bt");
  require_rank2(b, "matmul_bt");
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  require(b.cols() == k, "matmul_bt: inner dimensions differ " + shape_str(a.shape()) + " x " +
                             shape_str(b.shape()) + "^T");
  std::vector<Real> out(m * n, Real(0));
  gemm_nt(a.data().data(), b.data().data(), out.data(), m, k, n);
  return make_op({m, n}, std::move(out), {a.node(), b.node()}, [m, k, n](Node& self) {
    NodePtr na = self.inputs[0], nb = self.inputs[1];
    if (na->requires_grad) gemm_nn(self.grad.data(), val(nb).data(), na->ensure_grad().data(), m, n, k);
    if (nb->requires_grad) gemm_tn(self.grad.data(), val(na).data(), nb->ensure_grad().data(), m, n, k);
  });
}

Tensor transpose(const Tensor& a) {
  require_rank2(a, "transpose");
  const std::size_t m = a.rows(), n = a.cols();
  const auto& av = val(a.node());
  std::vector<Real> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = av[i * n + j];
  return make_op({n, m}, std::move(out), {a.node()}, [m, n](Node& self) {
    NodePtr in = self.inputs[0];
    if (!in->requires_grad) return;
    auto& gi = in->ensure_grad();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) gi[i * n + j] += self.grad[j * m + i];
  });
}

// ---------------------------------------------------------------------------
// Elementwise

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::kAdd, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::kSub, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::kMul, "mul"); }

Tensor mul_rows(const Tensor& x, const Tensor& column) {
  require_rank2(x, "mul_rows");
  const std::size_t m = x.rows(), n = x.cols();
  require(column && column.numel() == m, "mul_rows: column must have one entry per row");
  const auto& xv = val(x.node());
  const auto& cv = val(column.node());
  std::vector<Real> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = xv[i * n + j] * cv[i];
  return make_op(x.shape(), std::move(out), {x.node(), column.node()}, [m, n](Node& self) {
    NodePtr nx = self.inputs[0], nc = self.inputs[1];
    const auto& g = self.grad;
    if (nx->requires_grad) {
      auto& gx = nx->ensure_grad();
      const auto& cv = val(nc);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += g[i * n + j] * cv[i];
    }
    if (nc->requires_grad) {
      auto& gc = nc->ensure_grad();
      const auto& xv = val(nx);
      for (std::size_t i = 0; i < m; ++i) {
        Real acc = 0;
        for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * xv[i * n + j];
        gc[i] += acc;
      }
    }
  });
}

Tensor scale(const Tensor& a, Real factor) { return affine(a, factor, Real(0)); }

Tensor affine(const Tensor& a, Real factor, Real offset) {
  return unary(
      a, [factor, offset](Real x) { return factor * x + offset; },
      [factor](Real, Real) { return factor; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      a,
      [](Real x) {
        if (x >= 0) return Real(1) / (Real(1) + std::exp(-x));
        const Real e = std::exp(x);
        return e / (Real(1) + e);
      },
      [](Real, Real y) { return y * (Real(1) - y); });
}

Tensor relu(const Tensor& a) {
  return unary(
      a, [](Real x) { return x > 0 ? x : Real(0); }, [](Real x, Real) { return x > 0 ? Real(1) : Real(0); });
}

Tensor log(const Tensor& a) {
  return unary(
      a, [](Real x) { return std::log(x); }, [](Real x, Real) { return Real(1) / x; });
}

Tensor exp(const Tensor& a) {
  return unary(
      a, [](Real x) { return std::exp(x); }, [](Real, Real y) { return y; });
}

Tensor clamp(const Tensor& a, Real lo, Real hi) {
  return unary(
      a, [lo, hi](Real x) { return std::min(std::max(x, lo), hi); },
      [lo, hi](Real x, Real) { return (x >= lo && x <= hi) ? Real(1) : Real(0); });
}

// ---------------------------------------------------------------------------
// Row-wise reductions

namespace {

Tensor softmax_impl(const Tensor& a, const std::uint8_t* keep, const char* name) {
  const std::size_t n = last_dim(a);
  const auto& av = val(a.node());
  const std::size_t rows = n ? av.size() / n : 0;
  std::vector<Real> out(av.size(), Real(0));
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* x = av.data() + r * n;
    Real* y = out.data() + r * n;
    Real mx = -std::numeric_limits<Real>::infinity();
    bool any = false;
    for (std::size_t j = 0; j < n; ++j) {
      if (std::isnan(x[j])) throw NumericError(std::string(name) + ": NaN input");
      if (keep && !keep[r * n + j]) continue;
      mx = std::max(mx, x[j]);
      any = true;
    }
    if (!any) throw ContractError(std::string(name) + ": row has no unmasked entries");
    Real total = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (keep && !keep[r * n + j]) continue;
      y[j] = std::exp(x[j] - mx);
      total += y[j];
    }
    for (std::size_t j = 0; j < n; ++j) y[j] /= total;
  }
  return make_op(a.shape(), std::move(out), {a.node()}, [n, rows](Node& self) {
    NodePtr in = self.inputs[0];
    if (!in->requires_grad) return;
    auto& gi = in->ensure_grad();
    const auto& y = *self.value;
    const auto& g = self.grad;
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t off = r * n;
      Real dot = 0;
      for (std::size_t j = 0; j < n; ++j) dot += y[off + j] * g[off + j];
      for (std::size_t j = 0; j < n; ++j) gi[off + j] += y[off + j] * (g[off + j] - dot);
    }
  });
}

}  // namespace

Tensor softmax(const Tensor& a) { return softmax_impl(a, nullptr, "softmax"); }

Tensor masked_softmax(const Tensor& a, std::span<const std::uint8_t> keep) {
  require(a && keep.size() == a.numel(), "masked_softmax: mask size mismatch");
  return softmax_impl(a, keep.data(), "masked_softmax");
}

Tensor shift_by_row_min(const Tensor& a, std::span<const std::uint8_t> keep) {
  require(a && keep.size() == a.numel(), "shift_by_row_min: mask size mismatch");
  const std::size_t n = last_dim(a);
  const auto& av = val(a.node());
  const std::size_t rows = n ? av.size() / n : 0;
  std::vector<Real> out(av.size(), Real(0));
  std::vector<std::size_t> argmin(rows, n);
  std::vector<std::uint8_t> mask(keep.begin(), keep.end());
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* x = av.data() + r * n;
    std::size_t best = n;
    for (std::size_t j = 0; j < n; ++j) {
      if (!mask[r * n + j]) continue;
      if (best == n || x[j] < x[best]) best = j;
    }
    if (best == n) throw ContractError("shift_by_row_min: row has no unmasked entries");
    argmin[r] = best;
    for (std::size_t j = 0; j < n; ++j) {
      if (mask[r * n + j]) out[r * n + j] = x[j] - x[best];
    }
  }
  return make_op(a.shape(), std::move(out), {a.node()},
                 [n, rows, argmin = std::move(argmin), mask = std::move(mask)](Node& self) {
                   NodePtr in = self.inputs[0];
                   if (!in->requires_grad) return;
                   auto& gi = in->ensure_grad();
                   const auto& g = self.grad;
                   for (std::size_t r = 0; r < rows; ++r) {
                     Real total = 0;
                     for (std::size_t j = 0; j < n; ++j) {
                       if (!mask[r * n + j]) continue;
                       gi[r * n + j] += g[r * n + j];
                       total += g[r * n + j];
                     }
                     gi[r * n + argmin[r]] -= total;
                   }
                 });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, Real eps) {
  const std::size_t n = last_dim(x);
  require(gain && gain.numel() == n && bias && bias.numel() == n,
          "layer_norm: gain/bias must match the last dimension");
  const auto& xv = val(x.node());
  const auto& gv = val(gain.node());
  const auto& bv = val(bias.node());
  const std::size_t rows = n ? xv.size() / n : 0;
  std::vector<Real> out(xv.size());
  std::vector<Real> xhat(xv.size());
  std::vector<Real> rstd(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* xr = xv.data() + r * n;
    Real mu = 0;
    for (std::size_t j = 0; j < n; ++j) mu += xr[j];
    mu /= static_cast<Real>(n);
    Real var = 0;
    for (std::size_t j = 0; j < n; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<Real>(n);
    rstd[r] = Real(1) / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      xhat[r * n + j] = (xr[j] - mu) * rstd[r];
      out[r * n + j] = xhat[r * n + j] * gv[j] + bv[j];
    }
  }
  return make_op(x.shape(), std::move(out), {x.node(), gain.node(), bias.node()},
                 [n, rows, xhat = std::move(xhat), rstd = std::move(rstd)](Node& self) {
                   NodePtr nx = self.inputs[0], ng = self.inputs[1], nb = self.inputs[2];
                   const auto& g = self.grad;
                   if (ng->requires_grad) {
                     auto& gg = ng->ensure_grad();
                     for (std::size_t i = 0; i < g.size(); ++i) gg[i % n] += g[i] * xhat[i];
                   }
                   if (nb->requires_grad) {
                     auto& gb = nb->ensure_grad();
                     for (std::size_t i = 0; i < g.size(); ++i) gb[i % n] += g[i];
                   }
                   if (!nx->requires_grad) return;
                   auto& gx = nx->ensure_grad();
                   const auto& gv = val(ng);
                   std::vector<Real> dxhat(n);
                   for (std::size_t r = 0; r < rows; ++r) {
                     const std::size_t off = r * n;
                     Real mean_d = 0, mean_dx = 0;
                     for (std::size_t j = 0; j < n; ++j) {
                       dxhat[j] = g[off + j] * gv[j];
                       mean_d += dxhat[j];
                       mean_dx += dxhat[j] * xhat[off + j];
                     }
                     mean_d /= static_cast<Real>(n);
                     mean_dx /= static_cast<Real>(n);
                     for (std::size_t j = 0; j < n; ++j) {
                       gx[off + j] += rstd[r] * (dxhat[j] - mean_d - xhat[off + j] * mean_dx);
                     }
                   }
                 });
}

// ---------------------------------------------------------------------------
// Indexing and layout

Tensor embedding_lookup(const Tensor& table, std::span<const int> indices) {
  require_rank2(table, "embedding_lookup");
  const std::size_t vocab = table.rows(), d = table.cols();
  std::vector<int> idx(indices.begin(), indices.end());
  const auto& tv = val(table.node());
  std::vector<Real> out(idx.size() * d);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || static_cast<std::size_t>(idx[i]) >= vocab) {
      throw IndexError("embedding_lookup: index " + std::to_string(idx[i]) + " outside [0," +
                       std::to_string(vocab) + ")");
    }
    std::copy_n(tv.begin() + static_cast<std::ptrdiff_t>(idx[i] * d), d, out.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  const std::size_t len = idx.size();
  return make_op({len, d}, std::move(out), {table.node()}, [d, idx = std::move(idx)](Node& self) {
    NodePtr in = self.inputs[0];
    if (!in->requires_grad) return;
    auto& gi = in->ensure_grad();
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = 0; j < d; ++j) gi[static_cast<std::size_t>(idx[i]) * d + j] += self.grad[i * d + j];
  });
}

Tensor pick(const Tensor& x, std::span<const int> indices) {
  require_rank2(x, "pick");
  const std::size_t m = x.rows(), n = x.cols();
  require(indices.size() == m, "pick: one index per row required");
  std::vector<int> idx(indices.begin(), indices.end());
  const auto& xv = val(x.node());
  std::vector<Real> out(m);
  for (std::size_t i = 0; i < m; ++i) {
    if (idx[i] < 0 || static_cast<std::size_t>(idx[i]) >= n) throw IndexError("pick: index out of range");
    out[i] = xv[i * n + static_cast<std::size_t>(idx[i])];
  }
  return make_op({m}, std::move(out), {x.node()}, [n, idx = std::move(idx)](Node& self) {
    NodePtr in = self.inputs[0];
    if (!in->requires_grad) return;
    auto& gi = in->ensure_grad();
    for (std::size_t i = 0; i < idx.size(); ++i) gi[i * n + static_cast<std::size_t>(idx[i])] += self.grad[i];
  });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  require(!parts.empty(), "concat_rows: no inputs");
  Shape tail(parts[0].shape().begin() + 1, parts[0].shape().end());
  std::size_t total_rows = 0;
  std::vector<Real> out;
  std::vector<NodePtr> inputs;
  std::vector<std::size_t> sizes;
  for (const auto& p : parts) {
    require(p && p.rank() >= 1 && Shape(p.shape().begin() + 1, p.shape().end()) == tail,
            "concat_rows: trailing dimensions differ");
    total_rows += p.shape()[0];
    const auto& v = val(p.node());
    out.insert(out.end(), v.begin(), v.end());
    inputs.push_back(p.node());
    sizes.push_back(v.size());
  }
  Shape shape{total_rows};
  shape.insert(shape.end(), tail.begin(), tail.end());
  return make_op(std::move(shape), std::move(out), std::move(inputs), [sizes = std::move(sizes)](Node& self) {
    std::size_t off = 0;
    for (std::size_t p = 0; p < sizes.size(); ++p) {
      NodePtr in = self.inputs[p];
      if (in->requires_grad) {
        auto& gi = in->ensure_grad();
        for (std::size_t i = 0; i < sizes[p]; ++i) gi[i] += self.grad[off + i];
      }
      off += sizes[p];
    }
  });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  require(!parts.empty(), "concat_cols: no inputs");
  const std::size_t m = parts[0].rows();
  std::vector<std::size_t> widths;
  std::vector<NodePtr> inputs;
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_rank2(p, "concat_cols");
    require(p.rows() == m, "concat_cols: row counts differ");
    widths.push_back(p.cols());
    inputs.push_back(p.node());
    total += p.cols();
  }
  std::vector<Real> out(m * total);
  std::size_t col = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const auto& v = val(parts[p].node());
    for (std::size_t i = 0; i < m; ++i)
      std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(i * widths[p]), widths[p],
                  out.begin() + static_cast<std::ptrdiff_t>(i * total + col));
    col += widths[p];
  }
  return make_op({m, total}, std::move(out), std::move(inputs), [m, total, widths = std::move(widths)](Node& self) {
    std::size_t col = 0;
    for (std::size_t p = 0; p < widths.size(); ++p) {
      NodePtr in = self.inputs[p];
      if (in->requires_grad) {
        auto& gi = in->ensure_grad();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < widths[p]; ++j) gi[i * widths[p] + j] += self.grad[i * total + col + j];
      }
      col += widths[p];
    }
  });
}

Tensor slice_rows(const Tensor& x, std::size_t start, std::size_t count) {
  require(x && x.rank() >= 1, "slice_rows: expected rank >= 1");
  require(start + count <= x.shape()[0], "slice_rows: range out of bounds");
  const std::size_t row = x.numel() / std::max<std::size_t>(x.shape()[0], 1);
  Shape shape = x.shape();
  shape[0] = count;
  const auto& xv = val(x.node());
  std::vector<Real> out(xv.begin() + static_cast<std::ptrdiff_t>(start * row),
                        xv.begin() + static_cast<std::ptrdiff_t>((start + count) * row));
  return make_op(std::move(shape), std::move(out), {x.node()}, [start, row](Node& self) {
    NodePtr in = self.inputs[0];
    if (!in->requires_grad) return;
    auto& gi = in->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) gi[start * row + i] += self.grad[i];
  });
}

Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count) {
  require_rank2(x, "slice_cols");
  const std::size_t m = x.rows(), n = x.cols();
  require(start + count <= n, "slice_cols: range out of bounds");
  const auto& xv = val(x.node());
  std::vector<Real> out(m * count);
  for (std::size_t i = 0; i < m; ++i)
    std::copy_n(xv.begin() + static_cast<std::ptrdiff_t>(i * n + start), count,
                out.begin() + static_cast<std::ptrdiff_t>(i * count));
  return make_op({m, count}, std::move(out), {x.node()}, [m, n, start, count](Node& self) {
    NodePtr in = self.inputs[0];
    if (!in->requires_grad) return;
    auto& gi = in->ensure_grad();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < count; ++j) gi[i * n + start + j] += self.grad[i * count + j];
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  require(x && shape_numel(shape) == x.numel(), "reshape: element count differs");
  return make_op(std::move(shape), x.to_vector(), {x.node()}, [](Node& self) {
    NodePtr in = self.inputs[0];
    if (!in->requires_grad) return;
    auto& gi = in->ensure_grad();
    for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += self.grad[i];
  });
}

Tensor sum(const Tensor& a) {
  require(static_cast<bool>(a), "sum of empty tensor");
  Real total = 0;
  for (Real v : a.data()) total += v;
  return make_op({}, {total}, {a.node()}, [](Node& self) {
    NodePtr in = self.inputs[0];
    if (!in->requires_grad) return;
    auto& gi = in->ensure_grad();
    for (auto& g : gi) g += self.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  require(a && a.numel() > 0, "mean of empty tensor");
  return scale(sum(a), Real(1) / static_cast<Real>(a.numel()));
}

Tensor dropout(const Tensor& x, Real rate, std::mt19937_64& rng) {
  if (rate <= 0) return x;
  if (rate >= 1) throw ContractError("dropout rate must be < 1");
  std::bernoulli_distribution keep(1.0 - static_cast<double>(rate));
  const Real inv = Real(1) / (Real(1) - rate);
  std::vector<Real> factors(x.numel());
  for (auto& f : factors) f = keep(rng) ? inv : Real(0);
  return mul(x, Tensor::from(x.shape(), std::move(factors)));
}

}  // namespace L2COPY_PRECISION_NS
}  // namespace l2copy
