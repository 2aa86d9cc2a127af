#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "egocast/errors.hpp"
#include "egocast/rng.hpp"

namespace egocast {

using Shape = std::vector<int>;

std::string shape_str(const Shape& shape);
int shape_numel(const Shape& shape);

namespace detail {

// Gradient bookkeeping attached to a tensor. Shared between copies of the
// same logical tensor, so Adam and backward() see one buffer.
struct GradNode {
  std::vector<double> grad;  // empty until first accumulation
  long seq = -1;             // producing tape entry; -1 for leaves
};

}  // namespace detail

// Dense row-major 64-bit float tensor. Copies share storage; buffers are
// treated as immutable while a forward/backward pass is in flight. Rank 0
// (empty shape) is a scalar.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int numel() const { return data_ ? static_cast<int>(data_->size()) : 0; }
  bool defined() const { return static_cast<bool>(data_); }
  bool is_scalar() const { return numel() == 1; }

  // Value of a one-element tensor.
  double item() const;
  double at(int flat_index) const { return (*data_)[flat_index]; }

  std::span<const double> values() const { return {data_->data(), data_->size()}; }
  // Raw write access for optimizers and loaders. Never call while the
  // tensor participates in an unfinished forward/backward pass.
  std::span<double> raw_values() { return {data_->data(), data_->size()}; }

  bool requires_grad() const { return node_ != nullptr; }
  bool has_grad() const { return node_ && !node_->grad.empty(); }
  std::span<const double> grad() const;
  void zero_grad();
  // Forget recorded history; result is a constant sharing this storage.
  Tensor detach() const;

  // Internal autodiff hooks (used by the op implementations).
  const std::shared_ptr<detail::GradNode>& node() const { return node_; }
  const std::shared_ptr<std::vector<double>>& storage() const { return data_; }
  void set_node(std::shared_ptr<detail::GradNode> node) { node_ = std::move(node); }
  std::vector<double>& grad_buffer();  // allocates zeros on first use

 private:
  Shape shape_;
  std::shared_ptr<std::vector<double>> data_;
  std::shared_ptr<detail::GradNode> node_;
};

// Execution-ordered record of differentiable operations. One tape per
// thread; reset() it between training iterations. backward() replays the
// adjoint of each recorded entry exactly once, newest first.
class Tape {
 public:
  struct Entry {
    std::shared_ptr<detail::GradNode> out;
    std::function<void()> adjoint;
  };

  static Tape& active();  // thread-local instance

  long record(std::shared_ptr<detail::GradNode> out, std::function<void()> adjoint);
  void reset() { entries_.clear(); }
  std::size_t size() const { return entries_.size(); }
  const Entry& entry(long i) const { return entries_[static_cast<std::size_t>(i)]; }

 private:
  std::vector<Entry> entries_;
};

// While a guard is alive on this thread, ops run pure forward: nothing is
// recorded and outputs carry no grad.
bool grad_enabled();
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// ---- Differentiable operations ------------------------------------------
//
// Binary elementwise ops broadcast NumPy-style (right-aligned, size-1 dims
// stretch). Gradients reduce back over broadcast dimensions.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor neg(const Tensor& x);
Tensor abs(const Tensor& x);   // subgradient 0 at x == 0
Tensor sqrt(const Tensor& x);
Tensor gelu(const Tensor& x);  // exact erf form
Tensor add_scalar(const Tensor& x, double c);
Tensor mul_scalar(const Tensor& x, double c);

Tensor matmul(const Tensor& a, const Tensor& b);  // 2-D only
Tensor transpose(const Tensor& x);                // 2-D only

Tensor reshape(const Tensor& x, Shape shape);
// Sub-block [start, start+len) along `axis` (negative axes allowed).
Tensor narrow(const Tensor& x, int axis, int start, int len);
Tensor concat(const std::vector<Tensor>& parts, int axis);

Tensor softmax(const Tensor& x, int axis);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor sum_axis(const Tensor& x, int axis, bool keepdims = false);
Tensor mean_axis(const Tensor& x, int axis, bool keepdims = false);

// Normalizes the trailing axis to zero mean / unit variance, then applies
// gamma, beta (both of shape [d]).
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps);

// Q/K/V/output projection weights are [d x d]; biases are [d].
struct AttentionParams {
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
};

// Scaled dot-product self-attention over tokens x: [k x d], full
// (unmasked) attention, per-head scale 1/sqrt(d/heads).
Tensor multi_head_self_attention(const Tensor& x, const AttentionParams& params, int heads);

// Mean over the token axis of [k x d] -> [d].
Tensor mean_pool_tokens(const Tensor& x);

// Mean absolute difference over all elements. Subgradient 0 at ties.
Tensor l1_loss(const Tensor& pred, const Tensor& target);

// Populates grad on every requires_grad leaf that the scalar loss depends
// on. Leaf gradients accumulate across calls; use zero_grad() between
// optimizer steps. Intermediate gradients are recomputed per call.
void backward(const Tensor& loss);

// Max relative error between reverse-mode gradients of f at x and central
// finite differences with step eps. Relative error uses
// |ad - fd| / max(|ad|, |fd|, 1).
double finite_diff_check(const std::function<Tensor(const Tensor&)>& f,
                         const Tensor& x, double eps);

// Same check for a parameter embedded in a model: loss_fn() must read the
// parameter through its shared storage. Perturbs the parameter in place
// (restoring it afterwards) and resets this thread's tape.
double finite_diff_check_param(const std::function<Tensor()>& loss_fn, Tensor param, double eps);

}  // namespace egocast
