#include "egocast/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace egocast {

namespace {

thread_local bool g_grad_enabled = true;

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

bool should_record(std::initializer_list<const Tensor*> inputs) {
  if (!g_grad_enabled) return false;
  for (const Tensor* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

std::shared_ptr<detail::GradNode> attach_node(Tensor& out) {
  auto node = std::make_shared<detail::GradNode>();
  out.set_node(node);
  return node;
}

std::vector<double>& ensure_grad(const Tensor& t) {
  auto& g = t.node()->grad;
  if (g.empty()) g.assign(static_cast<std::size_t>(t.numel()), 0.0);
  return g;
}

int normalize_axis(int axis, int rank, const char* op) {
  const int a = axis < 0 ? axis + rank : axis;
  if (a < 0 || a >= rank)
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) +
                         " invalid for rank " + std::to_string(rank));
  return a;
}

// Decomposes a shape around one axis: index = (o * len + j) * inner + i.
struct AxisSplit {
  long outer = 1, len = 1, inner = 1;
};

AxisSplit split_axis(const Shape& shape, int axis) {
  AxisSplit s;
  for (int i = 0; i < axis; ++i) s.outer *= shape[i];
  s.len = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

// Right-aligned broadcast plan for a binary op.
struct Bcast {
  Shape out;
  std::vector<long> sa, sb;  // strides into a and b, 0 on stretched dims
  long n = 1;
};

Bcast make_bcast(const Shape& a, const Shape& b, const char* op) {
  const int r = static_cast<int>(std::max(a.size(), b.size()));
  Shape pa(r, 1), pb(r, 1);
  std::copy(a.begin(), a.end(), pa.begin() + (r - static_cast<int>(a.size())));
  std::copy(b.begin(), b.end(), pb.begin() + (r - static_cast<int>(b.size())));

  Bcast plan;
  plan.out.resize(r);
  for (int i = 0; i < r; ++i) {
    if (pa[i] != pb[i] && pa[i] != 1 && pb[i] != 1)
      throw DimensionError(std::string(op) + ": shapes " + shape_str(a) + " and " +
                           shape_str(b) + " are not broadcastable");
    plan.out[i] = std::max(pa[i], pb[i]);
    plan.n *= plan.out[i];
  }
  plan.sa.assign(r, 0);
  plan.sb.assign(r, 0);
  long stride = 1;
  for (int i = r - 1; i >= 0; --i) {
    plan.sa[i] = pa[i] == 1 ? 0 : stride;
    stride *= pa[i];
  }
  stride = 1;
  for (int i = r - 1; i >= 0; --i) {
    plan.sb[i] = pb[i] == 1 ? 0 : stride;
    stride *= pb[i];
  }
  return plan;
}

template <class F>
void for_each_bcast(const Bcast& plan, F&& fn) {
  const int r = static_cast<int>(plan.out.size());
  if (r == 0) {
    fn(0L, 0L, 0L);
    return;
  }
  std::vector<int> idx(r, 0);
  long ao = 0, bo = 0;
  for (long pos = 0;;) {
    fn(pos, ao, bo);
    if (++pos == plan.n) break;
    for (int ax = r - 1; ax >= 0; --ax) {
      ++idx[ax];
      ao += plan.sa[ax];
      bo += plan.sb[ax];
      if (idx[ax] < plan.out[ax]) break;
      idx[ax] = 0;
      ao -= plan.sa[ax] * plan.out[ax];
      bo -= plan.sb[ax] * plan.out[ax];
    }
  }
}

// Shared machinery for broadcasting binary ops. `fwd(av, bv)` computes the
// value; `bwd(g, av, bv, &da, &db)` adds each input's adjoint contribution.
template <class Fwd, class Bwd>
Tensor binary_op(const Tensor& a, const Tensor& b, const char* name, Fwd fwd, Bwd bwd) {
  const Bcast plan = make_bcast(a.shape(), b.shape(), name);
  std::vector<double> out(static_cast<std::size_t>(plan.n));
  const auto av = a.values();
  const auto bv = b.values();
  for_each_bcast(plan, [&](long pos, long ao, long bo) { out[pos] = fwd(av[ao], bv[bo]); });

  Tensor result(plan.out, std::move(out));
  if (should_record({&a, &b})) {
    auto node = attach_node(result);
    Tape::active().record(node, [a, b, node, plan, bwd]() {
      const auto& g = node->grad;
      std::vector<double>* ga = a.requires_grad() ? &ensure_grad(a) : nullptr;
      std::vector<double>* gb = b.requires_grad() ? &ensure_grad(b) : nullptr;
      const auto av = a.values();
      const auto bv = b.values();
      for_each_bcast(plan, [&](long pos, long ao, long bo) {
        double da = 0, db = 0;
        bwd(g[pos], av[ao], bv[bo], da, db);
        if (ga) (*ga)[ao] += da;
        if (gb) (*gb)[bo] += db;
      });
    });
  }
  return result;
}

// Elementwise unary with pointwise derivative computed from (x, y).
template <class Fwd, class Bwd>
Tensor unary_op(const Tensor& x, Fwd fwd, Bwd dydx) {
  const auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);

  Tensor result(x.shape(), std::move(out));
  if (should_record({&x})) {
    auto node = attach_node(result);
    Tensor y = result;
    Tape::active().record(node, [x, y, node, dydx]() {
      auto& gx = ensure_grad(x);
      const auto& g = node->grad;
      const auto xv = x.values();
      const auto yv = y.values();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * dydx(xv[i], yv[i]);
    });
  }
  return result;
}

}  // namespace

std::string shape_str(const Shape& shape) {
  if (shape.empty()) return "scalar";
  std::ostringstream os;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  return os.str();
}

int shape_numel(const Shape& shape) {
  long n = 1;
  for (int d : shape) n *= d;
  return static_cast<int>(n);
}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : shape_(std::move(shape)) {
  long n = 1;
  for (int d : shape_) {
    if (d <= 0) throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape_));
    n *= d;
  }
  if (static_cast<long>(values.size()) != n)
    throw DimensionError("shape " + shape_str(shape_) + " wants " + std::to_string(n) +
                         " values, got " + std::to_string(values.size()));
  data_ = std::make_shared<std::vector<double>>(std::move(values));
  if (requires_grad) node_ = std::make_shared<detail::GradNode>();
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor({}, {value}, requires_grad);
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  std::vector<double> v(static_cast<std::size_t>(shape_numel(shape)), value);
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

double Tensor::item() const {
  if (numel() != 1)
    throw ContractError("item() requires a one-element tensor, got shape " + shape_str(shape_));
  return (*data_)[0];
}

std::span<const double> Tensor::grad() const {
  if (!node_ || node_->grad.empty()) return {};
  return {node_->grad.data(), node_->grad.size()};
}

void Tensor::zero_grad() {
  if (node_) node_->grad.clear();
}

Tensor Tensor::detach() const {
  Tensor t;
  t.shape_ = shape_;
  t.data_ = data_;
  return t;
}

std::vector<double>& Tensor::grad_buffer() {
  if (!node_) throw ContractError("tensor does not track gradients");
  if (node_->grad.empty()) node_->grad.assign(static_cast<std::size_t>(numel()), 0.0);
  return node_->grad;
}

Tape& Tape::active() {
  thread_local Tape tape;
  return tape;
}

long Tape::record(std::shared_ptr<detail::GradNode> out, std::function<void()> adjoint) {
  const long seq = static_cast<long>(entries_.size());
  out->seq = seq;
  entries_.push_back({std::move(out), std::move(adjoint)});
  return seq;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

// ---- elementwise ----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double g, double, double, double& da, double& db) {
        da = g;
        db = g;
      });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double g, double, double, double& da, double& db) {
        da = g;
        db = -g;
      });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double g, double x, double y, double& da, double& db) {
        da = g * y;
        db = g * x;
      });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "div", [](double x, double y) { return x / y; },
      [](double g, double x, double y, double& da, double& db) {
        da = g / y;
        db = -g * x / (y * y);
      });
}

Tensor neg(const Tensor& x) {
  return unary_op(
      x, [](double v) { return -v; }, [](double, double) { return -1.0; });
}

Tensor abs(const Tensor& x) {
  return unary_op(
      x, [](double v) { return std::fabs(v); },
      [](double v, double) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); });
}

Tensor sqrt(const Tensor& x) {
  for (double v : x.values())
    if (v < 0) throw NumericError("sqrt of negative value " + std::to_string(v));
  return unary_op(
      x, [](double v) { return std::sqrt(v); },
      [](double, double y) { return 0.5 / y; });
}

Tensor gelu(const Tensor& x) {
  return unary_op(
      x, [](double v) { return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2)); },
      [](double v, double) {
        const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
        return cdf + v * pdf;
      });
}

Tensor add_scalar(const Tensor& x, double c) {
  return unary_op(
      x, [c](double v) { return v + c; }, [](double, double) { return 1.0; });
}

Tensor mul_scalar(const Tensor& x, double c) {
  return unary_op(
      x, [c](double v) { return v * c; }, [c](double, double) { return c; });
}

// ---- linear algebra -------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2)
    throw DimensionError("matmul expects 2-D tensors, got " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  const int rows = a.shape()[0], inner = a.shape()[1];
  const int cols = b.shape()[1];
  if (b.shape()[0] != inner)
    throw DimensionError("matmul: inner dimensions disagree: " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));

  const auto av = a.values();
  const auto bv = b.values();
  std::vector<double> out(static_cast<std::size_t>(rows) * cols, 0.0);
  for (int i = 0; i < rows; ++i) {
    double* crow = out.data() + static_cast<std::size_t>(i) * cols;
    for (int k = 0; k < inner; ++k) {
      const double aik = av[static_cast<std::size_t>(i) * inner + k];
      const double* brow = bv.data() + static_cast<std::size_t>(k) * cols;
      for (int j = 0; j < cols; ++j) crow[j] += aik * brow[j];
    }
  }

  Tensor result({rows, cols}, std::move(out));
  if (should_record({&a, &b})) {
    auto node = attach_node(result);
    Tape::active().record(node, [a, b, node, rows, inner, cols]() {
      const auto& g = node->grad;
      const auto av = a.values();
      const auto bv = b.values();
      if (a.requires_grad()) {
        auto& ga = ensure_grad(a);  // dA = dC * B^T
        for (int i = 0; i < rows; ++i)
          for (int k = 0; k < inner; ++k) {
            const double* grow = g.data() + static_cast<std::size_t>(i) * cols;
            const double* brow = bv.data() + static_cast<std::size_t>(k) * cols;
            double acc = 0;
            for (int j = 0; j < cols; ++j) acc += grow[j] * brow[j];
            ga[static_cast<std::size_t>(i) * inner + k] += acc;
          }
      }
      if (b.requires_grad()) {
        auto& gb = ensure_grad(b);  // dB = A^T * dC
        for (int i = 0; i < rows; ++i) {
          const double* grow = g.data() + static_cast<std::size_t>(i) * cols;
          for (int k = 0; k < inner; ++k) {
            const double aik = av[static_cast<std::size_t>(i) * inner + k];
            double* brow = gb.data() + static_cast<std::size_t>(k) * cols;
            for (int j = 0; j < cols; ++j) brow[j] += aik * grow[j];
          }
        }
      }
    });
  }
  return result;
}

Tensor transpose(const Tensor& x) {
  if (x.rank() != 2)
    throw DimensionError("transpose expects a 2-D tensor, got " + shape_str(x.shape()));
  const int rows = x.shape()[0], cols = x.shape()[1];
  const auto xv = x.values();
  std::vector<double> out(xv.size());
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j)
      out[static_cast<std::size_t>(j) * rows + i] = xv[static_cast<std::size_t>(i) * cols + j];

  Tensor result({cols, rows}, std::move(out));
  if (should_record({&x})) {
    auto node = attach_node(result);
    Tape::active().record(node, [x, node, rows, cols]() {
      auto& gx = ensure_grad(x);
      const auto& g = node->grad;
      for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j)
          gx[static_cast<std::size_t>(i) * cols + j] += g[static_cast<std::size_t>(j) * rows + i];
    });
  }
  return result;
}

// ---- shape ops ------------------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel())
    throw DimensionError("reshape from " + shape_str(x.shape()) + " to " + shape_str(shape) +
                         " changes element count");
  const auto xv = x.values();
  Tensor result(std::move(shape), std::vector<double>(xv.begin(), xv.end()));
  if (should_record({&x})) {
    auto node = attach_node(result);
    Tape::active().record(node, [x, node]() {
      auto& gx = ensure_grad(x);
      const auto& g = node->grad;
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
    });
  }
  return result;
}

Tensor narrow(const Tensor& x, int axis, int start, int len) {
  const int ax = normalize_axis(axis, x.rank(), "narrow");
  if (len <= 0 || start < 0 || start + len > x.shape()[ax])
    throw DimensionError("narrow [" + std::to_string(start) + ", " + std::to_string(start + len) +
                         ") out of range for axis " + std::to_string(axis) + " of " +
                         shape_str(x.shape()));
  const AxisSplit s = split_axis(x.shape(), ax);
  Shape out_shape = x.shape();
  out_shape[ax] = len;

  const auto xv = x.values();
  std::vector<double> out(static_cast<std::size_t>(s.outer) * len * s.inner);
  for (long o = 0; o < s.outer; ++o)
    for (long j = 0; j < len; ++j) {
      const double* src = xv.data() + ((o * s.len + start + j) * s.inner);
      double* dst = out.data() + ((o * len + j) * s.inner);
      std::copy(src, src + s.inner, dst);
    }

  Tensor result(std::move(out_shape), std::move(out));
  if (should_record({&x})) {
    auto node = attach_node(result);
    Tape::active().record(node, [x, node, s, start, len]() {
      auto& gx = ensure_grad(x);
      const auto& g = node->grad;
      for (long o = 0; o < s.outer; ++o)
        for (long j = 0; j < len; ++j) {
          const double* src = g.data() + ((o * len + j) * s.inner);
          double* dst = gx.data() + ((o * s.len + start + j) * s.inner);
          for (long i = 0; i < s.inner; ++i) dst[i] += src[i];
        }
    });
  }
  return result;
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw ContractError("concat of zero tensors");
  const int rank = parts.front().rank();
  const int ax = normalize_axis(axis, rank, "concat");
  Shape out_shape = parts.front().shape();
  long total = 0;
  for (const Tensor& p : parts) {
    if (p.rank() != rank) throw DimensionError("concat: rank mismatch");
    for (int i = 0; i < rank; ++i)
      if (i != ax && p.shape()[i] != out_shape[i])
        throw DimensionError("concat: shape " + shape_str(p.shape()) + " incompatible with " +
                             shape_str(out_shape) + " on axis " + std::to_string(axis));
    total += p.shape()[ax];
  }
  out_shape[ax] = static_cast<int>(total);

  const AxisSplit s = split_axis(out_shape, ax);
  std::vector<double> out(static_cast<std::size_t>(s.outer) * s.len * s.inner);
  long offset = 0;
  for (const Tensor& p : parts) {
    const long plen = p.shape()[ax];
    const auto pv = p.values();
    for (long o = 0; o < s.outer; ++o) {
      const double* src = pv.data() + o * plen * s.inner;
      double* dst = out.data() + (o * s.len + offset) * s.inner;
      std::copy(src, src + plen * s.inner, dst);
    }
    offset += plen;
  }

  Tensor result(std::move(out_shape), std::move(out));
  bool any = false;
  for (const Tensor& p : parts) any = any || p.requires_grad();
  if (g_grad_enabled && any) {
    auto node = attach_node(result);
    Tape::active().record(node, [parts, node, s]() {
      const auto& g = node->grad;
      long offset = 0;
      for (const Tensor& p : parts) {
        const long len = p.numel() / (s.outer * s.inner);
        if (p.requires_grad()) {
          auto& gp = ensure_grad(p);
          for (long o = 0; o < s.outer; ++o) {
            const double* src = g.data() + (o * s.len + offset) * s.inner;
            double* dst = gp.data() + o * len * s.inner;
            for (long i = 0; i < len * s.inner; ++i) dst[i] += src[i];
          }
        }
        offset += len;
      }
    });
  }
  return result;
}

// ---- reductions and softmax ------------------------------------------------

Tensor softmax(const Tensor& x, int axis) {
  const int ax = normalize_axis(axis, x.rank(), "softmax");
  const AxisSplit s = split_axis(x.shape(), ax);
  const auto xv = x.values();
  std::vector<double> out(xv.size());
  for (long o = 0; o < s.outer; ++o)
    for (long i = 0; i < s.inner; ++i) {
      const long base = o * s.len * s.inner + i;
      double mx = xv[base];
      for (long j = 1; j < s.len; ++j) mx = std::max(mx, xv[base + j * s.inner]);
      double denom = 0;
      for (long j = 0; j < s.len; ++j) {
        const double e = std::exp(xv[base + j * s.inner] - mx);
        out[base + j * s.inner] = e;
        denom += e;
      }
      for (long j = 0; j < s.len; ++j) out[base + j * s.inner] /= denom;
    }

  Tensor result(x.shape(), std::move(out));
  if (should_record({&x})) {
    auto node = attach_node(result);
    Tensor y = result;
    Tape::active().record(node, [x, y, node, s]() {
      auto& gx = ensure_grad(x);
      const auto& g = node->grad;
      const auto yv = y.values();
      for (long o = 0; o < s.outer; ++o)
        for (long i = 0; i < s.inner; ++i) {
          const long base = o * s.len * s.inner + i;
          double dot = 0;
          for (long j = 0; j < s.len; ++j) dot += g[base + j * s.inner] * yv[base + j * s.inner];
          for (long j = 0; j < s.len; ++j) {
            const long p = base + j * s.inner;
            gx[p] += yv[p] * (g[p] - dot);
          }
        }
    });
  }
  return result;
}

Tensor sum(const Tensor& x) {
  double acc = 0;
  for (double v : x.values()) acc += v;
  Tensor result({}, {acc});
  if (should_record({&x})) {
    auto node = attach_node(result);
    Tape::active().record(node, [x, node]() {
      auto& gx = ensure_grad(x);
      const double g = node->grad[0];
      for (double& v : gx) v += g;
    });
  }
  return result;
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw ContractError("mean of empty tensor");
  const double inv = 1.0 / x.numel();
  double acc = 0;
  for (double v : x.values()) acc += v;
  Tensor result({}, {acc * inv});
  if (should_record({&x})) {
    auto node = attach_node(result);
    Tape::active().record(node, [x, node, inv]() {
      auto& gx = ensure_grad(x);
      const double g = node->grad[0] * inv;
      for (double& v : gx) v += g;
    });
  }
  return result;
}

namespace {

Tensor reduce_axis(const Tensor& x, int axis, bool keepdims, bool take_mean, const char* name) {
  const int ax = normalize_axis(axis, x.rank(), name);
  const AxisSplit s = split_axis(x.shape(), ax);
  const double scale = take_mean ? 1.0 / static_cast<double>(s.len) : 1.0;

  const auto xv = x.values();
  std::vector<double> out(static_cast<std::size_t>(s.outer) * s.inner, 0.0);
  for (long o = 0; o < s.outer; ++o)
    for (long j = 0; j < s.len; ++j) {
      const double* src = xv.data() + (o * s.len + j) * s.inner;
      double* dst = out.data() + o * s.inner;
      for (long i = 0; i < s.inner; ++i) dst[i] += src[i];
    }
  if (take_mean)
    for (double& v : out) v *= scale;

  Shape out_shape = x.shape();
  if (keepdims)
    out_shape[ax] = 1;
  else
    out_shape.erase(out_shape.begin() + ax);

  Tensor result(std::move(out_shape), std::move(out));
  if (should_record({&x})) {
    auto node = attach_node(result);
    Tape::active().record(node, [x, node, s, scale]() {
      auto& gx = ensure_grad(x);
      const auto& g = node->grad;
      for (long o = 0; o < s.outer; ++o)
        for (long j = 0; j < s.len; ++j) {
          const double* src = g.data() + o * s.inner;
          double* dst = gx.data() + (o * s.len + j) * s.inner;
          for (long i = 0; i < s.inner; ++i) dst[i] += src[i] * scale;
        }
    });
  }
  return result;
}

}  // namespace

Tensor sum_axis(const Tensor& x, int axis, bool keepdims) {
  return reduce_axis(x, axis, keepdims, false, "sum_axis");
}

Tensor mean_axis(const Tensor& x, int axis, bool keepdims) {
  return reduce_axis(x, axis, keepdims, true, "mean_axis");
}

// ---- composite layers -------------------------------------------------------

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (x.rank() < 1) throw DimensionError("layer_norm expects rank >= 1");
  if (eps <= 0) throw ContractError("layer_norm eps must be positive");
  const int d = x.shape().back();
  if (gamma.shape() != Shape{d} || beta.shape() != Shape{d})
    throw DimensionError("layer_norm: gamma/beta must have shape [" + std::to_string(d) + "]");

  Tensor mu = mean_axis(x, -1, true);
  Tensor centered = sub(x, mu);
  Tensor var = mean_axis(mul(centered, centered), -1, true);
  Tensor denom = egocast::sqrt(add_scalar(var, eps));
  Tensor normed = div(centered, denom);
  return add(mul(normed, gamma), beta);
}

Tensor multi_head_self_attention(const Tensor& x, const AttentionParams& params, int heads) {
  if (x.rank() != 2)
    throw DimensionError("attention expects tokens of shape [k x d], got " + shape_str(x.shape()));
  const int d = x.shape()[1];
  if (heads <= 0 || d % heads != 0)
    throw ConfigError("attention width " + std::to_string(d) + " not divisible by " +
                      std::to_string(heads) + " heads");
  for (const Tensor* w : {&params.wq, &params.wk, &params.wv, &params.wo})
    if (w->shape() != Shape{d, d})
      throw DimensionError("attention projections must be " + std::to_string(d) + "x" +
                           std::to_string(d) + ", got " + shape_str(w->shape()));

  const int head_dim = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));

  Tensor q = add(matmul(x, params.wq), params.bq);
  Tensor k = add(matmul(x, params.wk), params.bk);
  Tensor v = add(matmul(x, params.wv), params.bv);

  std::vector<Tensor> head_outputs;
  head_outputs.reserve(heads);
  for (int h = 0; h < heads; ++h) {
    Tensor qh = narrow(q, 1, h * head_dim, head_dim);
    Tensor kh = narrow(k, 1, h * head_dim, head_dim);
    Tensor vh = narrow(v, 1, h * head_dim, head_dim);
    Tensor scores = mul_scalar(matmul(qh, transpose(kh)), scale);
    Tensor weights = softmax(scores, -1);
    head_outputs.push_back(matmul(weights, vh));
  }
  Tensor merged = heads == 1 ? head_outputs.front() : concat(head_outputs, 1);
  return add(matmul(merged, params.wo), params.bo);
}

Tensor mean_pool_tokens(const Tensor& x) {
  if (x.rank() != 2)
    throw DimensionError("mean_pool_tokens expects [k x d], got " + shape_str(x.shape()));
  if (x.shape()[0] < 1) throw ContractError("mean_pool_tokens over zero tokens");
  return mean_axis(x, 0, false);
}

Tensor l1_loss(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape())
    throw DimensionError("l1_loss: shapes " + shape_str(pred.shape()) + " and " +
                         shape_str(target.shape()) + " differ");
  const auto pv = pred.values();
  const auto tv = target.values();
  const double inv = 1.0 / pred.numel();
  double acc = 0;
  for (std::size_t i = 0; i < pv.size(); ++i) acc += std::fabs(pv[i] - tv[i]);

  Tensor result({}, {acc * inv});
  if (should_record({&pred, &target})) {
    auto node = attach_node(result);
    Tape::active().record(node, [pred, target, node, inv]() {
      const double g = node->grad[0] * inv;
      const auto pv = pred.values();
      const auto tv = target.values();
      for (std::size_t i = 0; i < pv.size(); ++i) {
        const double diff = pv[i] - tv[i];
        const double sign = diff > 0 ? 1.0 : (diff < 0 ? -1.0 : 0.0);
        if (pred.requires_grad()) ensure_grad(pred)[i] += g * sign;
        if (target.requires_grad()) ensure_grad(target)[i] -= g * sign;
      }
    });
  }
  return result;
}

// ---- reverse pass ------------------------------------------------------------

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1)
    throw ContractError("backward requires a scalar loss, got shape " + shape_str(loss.shape()));
  if (!loss.requires_grad())
    throw ContractError("loss is not connected to a tape (no gradient flow was recorded)");

  const long seq = loss.node()->seq;
  if (seq < 0) {
    // Loss is itself a leaf: d loss / d loss = 1.
    ensure_grad(loss)[0] += 1.0;
    return;
  }

  Tape& tape = Tape::active();
  // Intermediate grads are recomputed per call so that repeated backward()
  // calls accumulate correctly into leaves.
  for (long i = 0; i <= seq; ++i) tape.entry(i).out->grad.clear();
  ensure_grad(loss)[0] = 1.0;
  for (long i = seq; i >= 0; --i) {
    const Tape::Entry& entry = tape.entry(i);
    if (!entry.out->grad.empty()) entry.adjoint();
  }
}

double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                         double eps) {
  if (eps <= 0) throw ContractError("finite_diff_check eps must be positive");

  std::vector<double> base(x.values().begin(), x.values().end());
  Tensor probe(x.shape(), base, /*requires_grad=*/true);
  Tensor y = f(probe);
  if (y.numel() != 1) throw ContractError("finite_diff_check expects a scalar-valued function");
  if (!std::isfinite(y.item())) throw NumericError("function value is not finite");
  backward(y);

  std::vector<double> analytic(static_cast<std::size_t>(x.numel()), 0.0);
  if (!probe.grad().empty())
    analytic.assign(probe.grad().begin(), probe.grad().end());

  double max_rel = 0;
  {
    NoGradGuard no_grad;
    for (int i = 0; i < x.numel(); ++i) {
      std::vector<double> plus = base, minus = base;
      plus[i] += eps;
      minus[i] -= eps;
      const double fp = f(Tensor(x.shape(), plus)).item();
      const double fm = f(Tensor(x.shape(), minus)).item();
      if (!std::isfinite(fp) || !std::isfinite(fm))
        throw NumericError("function value is not finite near the probe point");
      const double fd = (fp - fm) / (2 * eps);
      const double ad = analytic[i];
      const double rel = std::fabs(ad - fd) / std::max({std::fabs(ad), std::fabs(fd), 1.0});
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

double finite_diff_check_param(const std::function<Tensor()>& loss_fn, Tensor param, double eps) {
  if (eps <= 0) throw ContractError("finite_diff_check eps must be positive");
  if (!param.requires_grad())
    throw ContractError("finite_diff_check_param needs a requires_grad parameter");

  param.zero_grad();
  Tensor loss = loss_fn();
  if (loss.numel() != 1) throw ContractError("finite_diff_check expects a scalar-valued function");
  if (!std::isfinite(loss.item())) throw NumericError("function value is not finite");
  backward(loss);

  std::vector<double> analytic(static_cast<std::size_t>(param.numel()), 0.0);
  if (!param.grad().empty()) analytic.assign(param.grad().begin(), param.grad().end());
  Tape::active().reset();
  param.zero_grad();

  double max_rel = 0;
  {
    NoGradGuard no_grad;
    auto raw = param.raw_values();
    for (int i = 0; i < param.numel(); ++i) {
      const double original = raw[i];
      raw[i] = original + eps;
      const double fp = loss_fn().item();
      raw[i] = original - eps;
      const double fm = loss_fn().item();
      raw[i] = original;
      if (!std::isfinite(fp) || !std::isfinite(fm))
        throw NumericError("function value is not finite near the probe point");
      const double fd = (fp - fm) / (2 * eps);
      const double ad = analytic[i];
      const double rel = std::fabs(ad - fd) / std::max({std::fabs(ad), std::fabs(fd), 1.0});
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace egocast
