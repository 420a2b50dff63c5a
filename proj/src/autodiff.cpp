#include "great/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace great::ad {

std::string_view op_name(OpKind kind) {
  switch (kind) {
    case OpKind::Leaf: return "leaf";
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "mul";
    case OpKind::Scale: return "scale";
    case OpKind::Matmul: return "matmul";
    case OpKind::Sigmoid: return "sigmoid";
    case OpKind::Tanh: return "tanh";
    case OpKind::Relu: return "relu";
    case OpKind::Sin: return "sin";
    case OpKind::Cos: return "cos";
    case OpKind::Square: return "square";
    case OpKind::Sum: return "sum";
    case OpKind::Mean: return "mean";
    case OpKind::Concat: return "concat";
    case OpKind::Slice: return "slice";
    case OpKind::Pad: return "pad";
    case OpKind::BroadcastTo: return "broadcast";
    case OpKind::ReduceTo: return "reduce";
    case OpKind::Reshape: return "reshape";
  }
  return "unknown";
}

namespace {

[[noreturn]] void shape_error(OpKind kind, const Shape& a, const Shape& b, std::string_view detail = {}) {
  std::ostringstream os;
  os << op_name(kind) << ": incompatible shapes " << shape_string(a) << " and " << shape_string(b);
  if (!detail.empty()) os << " (" << detail << ")";
  throw std::invalid_argument(os.str());
}

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

// `small` can be repeated to fill `big`: scalar-with-any or trailing-dimension match.
bool broadcastable(const Shape& small, const Shape& big) {
  return shape_size(small) == 1 || is_suffix(small, big);
}

Shape binary_shape(OpKind kind, const Shape& a, const Shape& b) {
  if (a == b) return a;
  const std::size_t na = shape_size(a);
  const std::size_t nb = shape_size(b);
  if (nb <= na && broadcastable(b, a)) return a;
  if (na < nb && broadcastable(a, b)) return b;
  shape_error(kind, a, b);
}

template <typename F>
Tensor binary_kernel(OpKind kind, const Tensor& a, const Tensor& b, F f) {
  Tensor out(binary_shape(kind, a.shape(), b.shape()));
  const std::size_t na = a.size();
  const std::size_t nb = b.size();
  const std::size_t n = out.size();
  if (na == n && nb == n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = f(a[i], b[i]);
  } else {
    for (std::size_t i = 0; i < n; ++i) out[i] = f(a[i % na], b[i % nb]);
  }
  return out;
}

template <typename F>
Tensor unary_kernel(const Tensor& a, F f) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
  return out;
}

Tensor matmul_kernel(const Tensor& a, const Tensor& b, bool ta, bool tb) {
  if (a.rank() != 2 || b.rank() != 2) shape_error(OpKind::Matmul, a.shape(), b.shape(), "operands must be 2-D");
  const std::size_t m = ta ? a.shape()[1] : a.shape()[0];
  const std::size_t k = ta ? a.shape()[0] : a.shape()[1];
  const std::size_t kb = tb ? b.shape()[1] : b.shape()[0];
  const std::size_t n = tb ? b.shape()[0] : b.shape()[1];
  if (k != kb) shape_error(OpKind::Matmul, a.shape(), b.shape(), "inner dimensions differ");
  const std::size_t lda = a.shape()[1];
  const std::size_t ldb = b.shape()[1];
  Tensor out({m, n});
  double* c = out.data().data();
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  // Materialize B in k x n row-major so the inner loop is contiguous.
  std::vector<double> bt;
  if (tb) {
    bt.resize(k * n);
    for (std::size_t p = 0; p < k; ++p)
      for (std::size_t j = 0; j < n; ++j) bt[p * n + j] = pb[j * ldb + p];
    pb = bt.data();
  }
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ta ? pa[p * lda + i] : pa[i * lda + p];
      if (av == 0.0) continue;
      const double* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  return out;
}

Tensor concat_kernel(std::span<const Tensor* const> parts) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  const Shape& first = parts[0]->shape();
  const std::size_t rows = parts[0]->rows();
  std::size_t total = 0;
  for (const Tensor* p : parts) {
    const Shape& s = p->shape();
    if (s.size() != first.size() || !std::equal(s.begin(), s.end() - 1, first.begin())) {
      shape_error(OpKind::Concat, first, s, "leading dimensions differ");
    }
    total += p->cols();
  }
  Shape out_shape = first;
  out_shape.back() = total;
  Tensor out(out_shape);
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t offset = 0;
    for (const Tensor* p : parts) {
      const std::size_t w = p->cols();
      std::copy_n(p->data().data() + r * w, w, out.data().data() + r * total + offset);
      offset += w;
    }
  }
  return out;
}

Tensor slice_kernel(const Tensor& a, std::size_t start, std::size_t length) {
  if (length == 0 || start + length > a.cols()) {
    shape_error(OpKind::Slice, a.shape(), Shape{start, length}, "column range out of bounds");
  }
  Shape s = a.shape();
  s.back() = length;
  Tensor out(s);
  const std::size_t w = a.cols();
  for (std::size_t r = 0; r < a.rows(); ++r) {
    std::copy_n(a.data().data() + r * w + start, length, out.data().data() + r * length);
  }
  return out;
}

Tensor pad_kernel(const Tensor& a, std::size_t start, std::size_t length) {
  if (start + a.cols() > length) {
    shape_error(OpKind::Pad, a.shape(), Shape{start, length}, "does not fit in padded width");
  }
  Shape s = a.shape();
  s.back() = length;
  Tensor out(s);
  const std::size_t w = a.cols();
  for (std::size_t r = 0; r < a.rows(); ++r) {
    std::copy_n(a.data().data() + r * w, w, out.data().data() + r * length + start);
  }
  return out;
}

Tensor broadcast_kernel(const Tensor& a, const Shape& shape) {
  if (!broadcastable(a.shape(), shape)) shape_error(OpKind::BroadcastTo, a.shape(), shape);
  Tensor out(shape);
  const std::size_t na = a.size();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i % na];
  return out;
}

Tensor reduce_kernel(const Tensor& a, const Shape& shape) {
  if (!broadcastable(shape, a.shape())) shape_error(OpKind::ReduceTo, a.shape(), shape);
  Tensor out(shape);
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < a.size(); ++i) out[i % n] += a[i];
  return out;
}

double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Tensor compute(OpKind kind, std::span<const Tensor* const> in, const OpAttrs& attrs) {
  auto arity = [&](std::size_t n) {
    if (in.size() != n) {
      throw std::invalid_argument(std::string(op_name(kind)) + ": expected " + std::to_string(n) +
                                  " inputs, got " + std::to_string(in.size()));
    }
  };
  switch (kind) {
    case OpKind::Leaf:
      throw std::logic_error("leaf nodes are not computed");
    case OpKind::Add:
      arity(2);
      return binary_kernel(kind, *in[0], *in[1], [](double x, double y) { return x + y; });
    case OpKind::Sub:
      arity(2);
      return binary_kernel(kind, *in[0], *in[1], [](double x, double y) { return x - y; });
    case OpKind::Mul:
      arity(2);
      return binary_kernel(kind, *in[0], *in[1], [](double x, double y) { return x * y; });
    case OpKind::Scale: {
      arity(1);
      const double c = attrs.scalar;
      return unary_kernel(*in[0], [c](double x) { return c * x; });
    }
    case OpKind::Matmul:
      arity(2);
      return matmul_kernel(*in[0], *in[1], attrs.trans_a, attrs.trans_b);
    case OpKind::Sigmoid:
      arity(1);
      return unary_kernel(*in[0], sigmoid_scalar);
    case OpKind::Tanh:
      arity(1);
      return unary_kernel(*in[0], [](double x) { return std::tanh(x); });
    case OpKind::Relu:
      arity(1);
      return unary_kernel(*in[0], [](double x) { return x > 0.0 ? x : 0.0; });
    case OpKind::Sin:
      arity(1);
      return unary_kernel(*in[0], [](double x) { return std::sin(x); });
    case OpKind::Cos:
      arity(1);
      return unary_kernel(*in[0], [](double x) { return std::cos(x); });
    case OpKind::Square:
      arity(1);
      return unary_kernel(*in[0], [](double x) { return x * x; });
    case OpKind::Sum:
    case OpKind::Mean: {
      arity(1);
      double s = 0.0;
      for (double v : in[0]->data()) s += v;
      if (kind == OpKind::Mean) s /= static_cast<double>(in[0]->size());
      return Tensor::scalar(s);
    }
    case OpKind::Concat:
      return concat_kernel(in);
    case OpKind::Slice:
      arity(1);
      return slice_kernel(*in[0], attrs.start, attrs.length);
    case OpKind::Pad:
      arity(1);
      return pad_kernel(*in[0], attrs.start, attrs.length);
    case OpKind::BroadcastTo:
      arity(1);
      return broadcast_kernel(*in[0], attrs.shape);
    case OpKind::ReduceTo:
      arity(1);
      return reduce_kernel(*in[0], attrs.shape);
    case OpKind::Reshape:
      arity(1);
      return in[0]->reshaped(attrs.shape);
  }
  throw std::logic_error("unhandled op kind");
}

}  // namespace

// ---------------------------------------------------------------------------
// Variable / Tape

Variable Variable::constant(Tensor value) {
  Variable v;
  v.value_ = std::make_shared<const Tensor>(std::move(value));
  return v;
}

const Tensor& Variable::value() const {
  if (!value_) throw std::logic_error("access to undefined variable");
  return *value_;
}

Variable Variable::detach() const {
  Variable v;
  v.value_ = value_;
  return v;
}

Variable make_tracked(Tape& tape, int id, std::shared_ptr<const Tensor> value) {
  Variable v;
  v.value_ = std::move(value);
  v.tape_ = &tape;
  v.id_ = id;
  return v;
}

Variable Tape::push(Node node) {
  auto value = node.value;
  nodes_.push_back(std::move(node));
  return make_tracked(*this, static_cast<int>(nodes_.size() - 1), std::move(value));
}

Variable Tape::leaf(Tensor value, std::string name) {
  if (!value.all_finite()) throw NonFiniteError("leaf '" + name + "' holds non-finite values");
  Node n;
  n.kind = OpKind::Leaf;
  n.value = std::make_shared<const Tensor>(std::move(value));
  n.name = std::move(name);
  return push(std::move(n));
}

VarMap Tape::leaves(const ParamSet& params) {
  VarMap out;
  for (const auto& [name, t] : params) out.emplace(name, leaf(t, name));
  return out;
}

std::vector<Tensor> Tape::replay() const {
  std::vector<Tensor> vals;
  vals.reserve(nodes_.size());
  std::vector<const Tensor*> ins;
  for (const Node& n : nodes_) {
    if (n.kind == OpKind::Leaf) {
      vals.push_back(*n.value);
      continue;
    }
    ins.clear();
    for (const Variable& v : n.inputs) {
      ins.push_back(v.requires_grad() ? &vals[static_cast<std::size_t>(v.id())] : &v.value());
    }
    vals.push_back(compute(n.kind, ins, n.attrs));
  }
  return vals;
}

namespace {

// Backward passes defer the finiteness check to the finished gradients so the
// error can name the parameter.
thread_local int finite_checks_suspended = 0;

struct SuspendFiniteChecks {
  SuspendFiniteChecks() { ++finite_checks_suspended; }
  ~SuspendFiniteChecks() { --finite_checks_suspended; }
  SuspendFiniteChecks(const SuspendFiniteChecks&) = delete;
  SuspendFiniteChecks& operator=(const SuspendFiniteChecks&) = delete;
};

}  // namespace

Variable record(OpKind kind, std::span<const Variable> inputs, const OpAttrs& attrs) {
  Tape* tape = nullptr;
  std::vector<const Tensor*> ins;
  ins.reserve(inputs.size());
  for (const Variable& v : inputs) {
    ins.push_back(&v.value());
    if (v.tape()) {
      if (tape && tape != v.tape()) {
        throw std::logic_error(std::string(op_name(kind)) + ": inputs belong to different tapes");
      }
      tape = v.tape();
    }
  }
  Tensor out = compute(kind, ins, attrs);
  if (finite_checks_suspended == 0 && !out.all_finite()) {
    throw NonFiniteError(std::string(op_name(kind)) + " produced a non-finite value");
  }
  if (!tape) return Variable::constant(std::move(out));
  Node n;
  n.kind = kind;
  n.inputs.assign(inputs.begin(), inputs.end());
  n.attrs = attrs;
  n.value = std::make_shared<const Tensor>(std::move(out));
  return tape->push(std::move(n));
}

// ---------------------------------------------------------------------------
// Named operations

namespace {
Variable unary(OpKind kind, const Variable& a, OpAttrs attrs = {}) {
  const Variable in[] = {a};
  return record(kind, in, attrs);
}
Variable binary(OpKind kind, const Variable& a, const Variable& b, OpAttrs attrs = {}) {
  const Variable in[] = {a, b};
  return record(kind, in, attrs);
}
}  // namespace

Variable add(const Variable& a, const Variable& b) { return binary(OpKind::Add, a, b); }
Variable sub(const Variable& a, const Variable& b) { return binary(OpKind::Sub, a, b); }
Variable mul(const Variable& a, const Variable& b) { return binary(OpKind::Mul, a, b); }
Variable scale(const Variable& a, double factor) {
  OpAttrs at;
  at.scalar = factor;
  return unary(OpKind::Scale, a, at);
}
Variable neg(const Variable& a) { return scale(a, -1.0); }
Variable matmul(const Variable& a, const Variable& b, bool trans_a, bool trans_b) {
  OpAttrs at;
  at.trans_a = trans_a;
  at.trans_b = trans_b;
  return binary(OpKind::Matmul, a, b, at);
}
Variable sigmoid(const Variable& a) { return unary(OpKind::Sigmoid, a); }
Variable tanh(const Variable& a) { return unary(OpKind::Tanh, a); }
Variable relu(const Variable& a) { return unary(OpKind::Relu, a); }
Variable sin(const Variable& a) { return unary(OpKind::Sin, a); }
Variable cos(const Variable& a) { return unary(OpKind::Cos, a); }
Variable square(const Variable& a) { return unary(OpKind::Square, a); }
Variable sum(const Variable& a) { return unary(OpKind::Sum, a); }
Variable mean(const Variable& a) { return unary(OpKind::Mean, a); }
Variable concat(std::span<const Variable> parts) { return record(OpKind::Concat, parts); }
Variable slice(const Variable& a, std::size_t start, std::size_t length) {
  OpAttrs at;
  at.start = start;
  at.length = length;
  return unary(OpKind::Slice, a, at);
}
Variable pad(const Variable& a, std::size_t start, std::size_t length) {
  OpAttrs at;
  at.start = start;
  at.length = length;
  return unary(OpKind::Pad, a, at);
}
Variable broadcast_to(const Variable& a, const Shape& shape) {
  if (a.shape() == shape) return a;
  OpAttrs at;
  at.shape = shape;
  return unary(OpKind::BroadcastTo, a, at);
}
Variable reduce_to(const Variable& a, const Shape& shape) {
  if (a.shape() == shape) return a;
  OpAttrs at;
  at.shape = shape;
  return unary(OpKind::ReduceTo, a, at);
}
Variable reshape(const Variable& a, const Shape& shape) {
  if (a.shape() == shape) return a;
  OpAttrs at;
  at.shape = shape;
  return unary(OpKind::Reshape, a, at);
}

// ---------------------------------------------------------------------------
// Reverse pass

namespace {

// Input-gradient contributions of one node. Entries for untracked inputs are
// left undefined. In create_graph mode the formulas consume the tracked
// inputs so the result stays differentiable; otherwise they run on constants.
std::vector<Variable> vjp(Tape& tape, const Node& node, int id, const Variable& g, bool create_graph) {
  const auto& in = node.inputs;
  std::vector<Variable> out(in.size());
  auto arg = [&](std::size_t k) { return create_graph ? in[k] : in[k].detach(); };
  auto self = [&]() {
    return create_graph ? make_tracked(tape, id, node.value) : Variable::constant(*node.value);
  };
  auto want = [&](std::size_t k) { return in[k].requires_grad(); };

  switch (node.kind) {
    case OpKind::Leaf:
      break;
    case OpKind::Add:
      if (want(0)) out[0] = reduce_to(g, in[0].shape());
      if (want(1)) out[1] = reduce_to(g, in[1].shape());
      break;
    case OpKind::Sub:
      if (want(0)) out[0] = reduce_to(g, in[0].shape());
      if (want(1)) out[1] = neg(reduce_to(g, in[1].shape()));
      break;
    case OpKind::Mul:
      if (want(0)) out[0] = reduce_to(mul(g, arg(1)), in[0].shape());
      if (want(1)) out[1] = reduce_to(mul(g, arg(0)), in[1].shape());
      break;
    case OpKind::Scale:
      out[0] = scale(g, node.attrs.scalar);
      break;
    case OpKind::Matmul: {
      const bool ta = node.attrs.trans_a;
      const bool tb = node.attrs.trans_b;
      const Variable a = arg(0);
      const Variable b = arg(1);
      if (want(0)) {
        if (!ta && !tb) out[0] = matmul(g, b, false, true);
        else if (ta && !tb) out[0] = matmul(b, g, false, true);
        else if (!ta && tb) out[0] = matmul(g, b, false, false);
        else out[0] = matmul(b, g, true, true);
      }
      if (want(1)) {
        if (!ta && !tb) out[1] = matmul(a, g, true, false);
        else if (ta && !tb) out[1] = matmul(a, g, false, false);
        else if (!ta && tb) out[1] = matmul(g, a, true, false);
        else out[1] = matmul(g, a, true, true);
      }
      break;
    }
    case OpKind::Sigmoid: {
      const Variable s = self();
      const Variable one = Variable::constant(Tensor::scalar(1.0));
      out[0] = mul(g, mul(s, sub(one, s)));
      break;
    }
    case OpKind::Tanh: {
      const Variable t = self();
      const Variable one = Variable::constant(Tensor::scalar(1.0));
      out[0] = mul(g, sub(one, square(t)));
      break;
    }
    case OpKind::Relu: {
      Tensor mask(in[0].shape());
      const Tensor& x = in[0].value();
      for (std::size_t i = 0; i < x.size(); ++i) mask[i] = x[i] > 0.0 ? 1.0 : 0.0;
      out[0] = mul(g, Variable::constant(std::move(mask)));
      break;
    }
    case OpKind::Sin:
      out[0] = mul(g, cos(arg(0)));
      break;
    case OpKind::Cos:
      out[0] = neg(mul(g, sin(arg(0))));
      break;
    case OpKind::Square:
      out[0] = mul(g, scale(arg(0), 2.0));
      break;
    case OpKind::Sum:
      out[0] = broadcast_to(g, in[0].shape());
      break;
    case OpKind::Mean:
      out[0] = broadcast_to(scale(g, 1.0 / static_cast<double>(in[0].value().size())), in[0].shape());
      break;
    case OpKind::Concat: {
      std::size_t offset = 0;
      for (std::size_t k = 0; k < in.size(); ++k) {
        const std::size_t w = in[k].value().cols();
        if (want(k)) out[k] = slice(g, offset, w);
        offset += w;
      }
      break;
    }
    case OpKind::Slice:
      out[0] = pad(g, node.attrs.start, in[0].value().cols());
      break;
    case OpKind::Pad:
      out[0] = slice(g, node.attrs.start, in[0].value().cols());
      break;
    case OpKind::BroadcastTo:
      out[0] = reduce_to(g, in[0].shape());
      break;
    case OpKind::ReduceTo:
      out[0] = broadcast_to(g, in[0].shape());
      break;
    case OpKind::Reshape:
      out[0] = reshape(g, in[0].shape());
      break;
  }
  return out;
}

}  // namespace

namespace {

std::vector<Variable> gradient_impl(const Variable& scalar, std::span<const Variable> wrt,
                                    std::span<const std::string> names, GradOptions options) {
  if (!scalar.defined()) throw std::invalid_argument("gradient: undefined scalar");
  if (scalar.shape() != Shape{1}) {
    throw std::invalid_argument("gradient: expected a scalar of shape [1], got " + shape_string(scalar.shape()));
  }
  std::vector<Variable> result(wrt.size());
  Tape* tape = scalar.tape();
  const int root = scalar.id();

  int lowest = root + 1;
  std::vector<char> is_target;
  if (tape) {
    is_target.assign(static_cast<std::size_t>(root) + 1, 0);
    for (const Variable& w : wrt) {
      if (w.tape() == tape && w.id() <= root) {
        is_target[static_cast<std::size_t>(w.id())] = 1;
        lowest = std::min(lowest, w.id());
      }
    }
  }

  std::vector<Variable> grads(tape ? static_cast<std::size_t>(root) + 1 : 0);
  if (tape && lowest <= root) {
    SuspendFiniteChecks suspend;
    grads[static_cast<std::size_t>(root)] = Variable::constant(Tensor::scalar(1.0));
    for (int id = root; id >= lowest; --id) {
      Variable g = grads[static_cast<std::size_t>(id)];
      if (!g.defined()) continue;
      const Node& node = tape->node(id);
      if (node.kind == OpKind::Leaf) continue;
      if (!is_target[static_cast<std::size_t>(id)]) grads[static_cast<std::size_t>(id)] = Variable();
      std::vector<Variable> contrib = vjp(*tape, node, id, g, options.create_graph);
      for (std::size_t k = 0; k < contrib.size(); ++k) {
        if (!contrib[k].defined()) continue;
        const int j = node.inputs[k].id();
        if (j < lowest) continue;
        Variable& slot = grads[static_cast<std::size_t>(j)];
        slot = slot.defined() ? add(slot, contrib[k]) : contrib[k];
      }
    }
  }

  const auto name_of = [&](std::size_t i) {
    std::string name = i < names.size() ? names[i] : std::string();
    if (name.empty() && wrt[i].tape()) name = wrt[i].tape()->node(wrt[i].id()).name;
    return name.empty() ? "#" + std::to_string(i) : name;
  };
  for (std::size_t i = 0; i < wrt.size(); ++i) {
    const Variable& w = wrt[i];
    const bool reachable = tape && w.tape() == tape && w.id() <= root &&
                           grads[static_cast<std::size_t>(w.id())].defined();
    if (reachable) {
      result[i] = grads[static_cast<std::size_t>(w.id())];
      if (!result[i].value().all_finite()) {
        throw NonFiniteError("gradient of '" + name_of(i) + "' is not finite");
      }
      if (!options.create_graph && result[i].requires_grad()) result[i] = result[i].detach();
    } else if (options.allow_unused) {
      result[i] = Variable::constant(Tensor(w.shape()));
    } else {
      throw std::invalid_argument("gradient: parameter '" + name_of(i) + "' is not reachable from the scalar");
    }
  }
  return result;
}

}  // namespace

std::vector<Variable> gradient(const Variable& scalar, std::span<const Variable> wrt, GradOptions options) {
  return gradient_impl(scalar, wrt, {}, options);
}

VarMap gradient(const Variable& scalar, const VarMap& wrt, GradOptions options) {
  std::vector<Variable> vars;
  std::vector<std::string> names;
  vars.reserve(wrt.size());
  names.reserve(wrt.size());
  for (const auto& [name, v] : wrt) {
    vars.push_back(v);
    names.push_back(name);
  }
  std::vector<Variable> g = gradient_impl(scalar, vars, names, options);
  VarMap out;
  for (std::size_t i = 0; i < names.size(); ++i) out.emplace(names[i], std::move(g[i]));
  return out;
}

ParamSet values(const VarMap& vars) {
  ParamSet out;
  for (const auto& [name, v] : vars) out.emplace(name, v.value());
  return out;
}

VarMap constants(const ParamSet& params) {
  VarMap out;
  for (const auto& [name, t] : params) out.emplace(name, Variable::constant(t));
  return out;
}

ParamSet finite_difference_gradient(const std::function<double(const ParamSet&)>& loss, const ParamSet& params,
                                    double eps) {
  if (!(eps > 0.0)) throw std::invalid_argument("finite_difference_gradient: eps must be positive");
  const double base1 = loss(params);
  const double base2 = loss(params);
  if (base1 != base2) {
    throw std::runtime_error("finite_difference_gradient: loss function is not deterministic");
  }
  ParamSet grads;
  ParamSet probe = params;
  for (auto& [name, tensor] : probe) {
    Tensor g(tensor.shape());
    for (std::size_t i = 0; i < tensor.size(); ++i) {
      const double orig = tensor[i];
      tensor[i] = orig + eps;
      const double fp = loss(probe);
      tensor[i] = orig - eps;
      const double fm = loss(probe);
      tensor[i] = orig;
      g[i] = (fp - fm) / (2.0 * eps);
    }
    grads.emplace(name, std::move(g));
  }
  return grads;
}

}  // namespace great::ad
