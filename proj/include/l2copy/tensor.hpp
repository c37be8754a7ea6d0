#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <vector>

#include "l2copy/errors.hpp"
#include "l2copy/precision.hpp"

namespace l2copy {
inline namespace L2COPY_PRECISION_NS {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);

namespace detail {

// One vertex of the differentiation tape. Values live behind a shared_ptr so
// that views (detach) can alias the storage of a parameter.
struct Node {
  Shape shape;
  std::shared_ptr<std::vector<Real>> value;
  std::vector<Real> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::uint64_t sequence = 0;
  std::uint64_t visit_mark = 0;  // last Graph traversal that reached this node
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;  // pushes this->grad into inputs

  bool is_leaf() const { return !backward; }
  std::vector<Real>& ensure_grad();
};

}  // namespace detail

/// Dense row-major tensor participating in a tape-style reverse-mode graph.
///
/// Tensors are cheap handles: copying a Tensor shares the same node. The
/// graph is rebuilt on every forward pass; ops record a node only when at
/// least one input requires a gradient and grad mode is enabled.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, Real value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<Real> values, bool requires_grad = false);
  static Tensor scalar(Real value, bool requires_grad = false);
  static Tensor randn(Shape shape, Real stddev, std::mt19937_64& rng, bool requires_grad = false);
  static Tensor uniform(Shape shape, Real bound, std::mt19937_64& rng, bool requires_grad = false);

  explicit operator bool() const { return static_cast<bool>(node_); }

  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;
  std::size_t rows() const;  // rank-2 only
  std::size_t cols() const;  // rank-2 only

  std::span<const Real> data() const;
  /// Writable view of the storage. Intended for leaves (parameters, inputs).
  std::span<Real> mutable_data();
  std::vector<Real> to_vector() const;
  Real item() const;
  Real at(std::size_t i) const;
  Real at(std::size_t r, std::size_t c) const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool on);
  /// Gradient accumulated by backward(); empty span when never touched.
  std::span<const Real> grad() const;
  std::span<Real> mutable_grad();
  void zero_grad();

  /// New handle aliasing the same storage, with no graph history.
  Tensor detach() const;
  bool shares_storage_with(const Tensor& other) const;

  /// Reverse sweep from this scalar. Leaves accumulate; interior gradients
  /// are reset at the start of each sweep.
  void backward() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Reachability and ordering over the recorded tape.
class Graph {
 public:
  explicit Graph(const Tensor& root);
  /// Nodes reachable from the root, consumers before producers.
  const std::vector<detail::Node*>& reverse_order() const { return order_; }

 private:
  std::vector<detail::Node*> order_;
};

/// Thread-local switch for tape recording.
class GradMode {
 public:
  static bool enabled();
  static void set_enabled(bool on);
};

class NoGradGuard {
 public:
  NoGradGuard() : previous_(GradMode::enabled()) { GradMode::set_enabled(false); }
  ~NoGradGuard() { GradMode::set_enabled(previous_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// ---------------------------------------------------------------------------
// Differentiable operations. Rank-2 tensors are [rows x cols].

Tensor matmul(const Tensor& a, const Tensor& b);     // [m,k]x[k,n]
Tensor matmul_bt(const Tensor& a, const Tensor& b);  // a * b^T, [m,k]x[n,k]
Tensor transpose(const Tensor& a);

// Elementwise with leading-axis broadcasting: b's shape must equal a's shape
// or be a suffix of it (e.g. a bias row [n] against [m,n]).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
/// Multiplies row i of x [m,n] by column[i]; column has m elements.
Tensor mul_rows(const Tensor& x, const Tensor& column);

Tensor scale(const Tensor& a, Real factor);
Tensor affine(const Tensor& a, Real factor, Real offset);  // factor*a + offset

Tensor sigmoid(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor log(const Tensor& a);
Tensor exp(const Tensor& a);
/// Clamps into [lo, hi]; gradient passes only where the input was inside.
Tensor clamp(const Tensor& a, Real lo, Real hi);

/// Softmax over the last axis, max-subtracted. Throws NumericError on NaN.
Tensor softmax(const Tensor& a);
/// Softmax over the last axis restricted to entries with keep[i] != 0.
/// Excluded entries get probability 0. keep has a.numel() entries.
Tensor masked_softmax(const Tensor& a, std::span<const std::uint8_t> keep);
/// Subtracts from each row its minimum over kept entries. Excluded entries
/// are set to 0.
Tensor shift_by_row_min(const Tensor& a, std::span<const std::uint8_t> keep);

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, Real eps);

/// Row gather from table [V,d]; backward scatter-adds.
Tensor embedding_lookup(const Tensor& table, std::span<const int> indices);
/// x[i, indices[i]] for each row i of a rank-2 x; result shape [m].
Tensor pick(const Tensor& x, std::span<const int> indices);

Tensor concat_rows(std::span<const Tensor> parts);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor slice_rows(const Tensor& x, std::size_t start, std::size_t count);
Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count);
Tensor reshape(const Tensor& x, Shape shape);

Tensor sum(const Tensor& a);   // scalar
Tensor mean(const Tensor& a);  // scalar

/// Inverted dropout. Identity when rate == 0.
Tensor dropout(const Tensor& x, Real rate, std::mt19937_64& rng);

}  // namespace L2COPY_PRECISION_NS
}  // namespace l2copy
