#pragma once

// Define-by-run reverse-mode differentiation over dense tensors.
//
// Every differentiable operation is appended to a Tape. Gradients are
// themselves expressed with the same operations, so calling gradient() with
// create_graph set records the backward pass and the result can be
// differentiated again.

#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "great/tensor.hpp"

namespace great {

/// Named collection of tensors, iterated in name order.
using ParamSet = std::map<std::string, Tensor>;

namespace ad {

enum class OpKind {
  Leaf,
  Add,
  Sub,
  Mul,
  Scale,
  Matmul,
  Sigmoid,
  Tanh,
  Relu,
  Sin,
  Cos,
  Square,
  Sum,
  Mean,
  Concat,
  Slice,
  Pad,
  BroadcastTo,
  ReduceTo,
  Reshape,
};

std::string_view op_name(OpKind kind);

struct OpAttrs {
  double scalar = 0.0;      // Scale factor
  std::size_t start = 0;    // Slice / Pad offset in the last dimension
  std::size_t length = 0;   // Slice length, or Pad target length
  bool trans_a = false;     // Matmul
  bool trans_b = false;
  Shape shape;              // BroadcastTo / ReduceTo / Reshape target
};

class Tape;

/// Handle to a value. Constants carry no tape; tracked values point at the
/// node that produced them.
class Variable {
 public:
  Variable() = default;

  static Variable constant(Tensor value);

  bool defined() const { return value_ != nullptr; }
  bool requires_grad() const { return tape_ != nullptr; }
  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  Tape* tape() const { return tape_; }
  int id() const { return id_; }

  /// Same value, cut from the tape.
  Variable detach() const;

 private:
  friend class Tape;
  friend Variable make_tracked(Tape&, int, std::shared_ptr<const Tensor>);
  std::shared_ptr<const Tensor> value_;
  Tape* tape_ = nullptr;
  int id_ = -1;
};

using VarMap = std::map<std::string, Variable>;

struct Node {
  OpKind kind = OpKind::Leaf;
  std::vector<Variable> inputs;
  OpAttrs attrs;
  std::shared_ptr<const Tensor> value;
  std::string name;  // leaves only
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Variable leaf(Tensor value, std::string name = {});
  /// Registers every tensor of `params` as a leaf.
  VarMap leaves(const ParamSet& params);

  std::size_t size() const { return nodes_.size(); }
  const Node& node(int id) const { return nodes_.at(static_cast<std::size_t>(id)); }

  /// Re-evaluates every recorded node from its inputs in tape order.
  std::vector<Tensor> replay() const;

 private:
  friend Variable record(OpKind, std::span<const Variable>, const OpAttrs&);
  friend Variable make_tracked(Tape&, int, std::shared_ptr<const Tensor>);

  Variable push(Node node);

  std::deque<Node> nodes_;
};

/// Computes the forward value of `kind` and, when any input is tracked,
/// appends the operation to that input's tape.
Variable record(OpKind kind, std::span<const Variable> inputs, const OpAttrs& attrs = {});

Variable add(const Variable& a, const Variable& b);
Variable sub(const Variable& a, const Variable& b);
Variable mul(const Variable& a, const Variable& b);
Variable scale(const Variable& a, double factor);
Variable neg(const Variable& a);
Variable matmul(const Variable& a, const Variable& b, bool trans_a = false, bool trans_b = false);
Variable sigmoid(const Variable& a);
Variable tanh(const Variable& a);
Variable relu(const Variable& a);
Variable sin(const Variable& a);
Variable cos(const Variable& a);
Variable square(const Variable& a);
Variable sum(const Variable& a);
Variable mean(const Variable& a);
/// Concatenates along the last dimension.
Variable concat(std::span<const Variable> parts);
/// Columns [start, start + length) of the last dimension.
Variable slice(const Variable& a, std::size_t start, std::size_t length);
/// Embeds `a` at column `start` of a zero tensor whose last dimension is `length`.
Variable pad(const Variable& a, std::size_t start, std::size_t length);
Variable broadcast_to(const Variable& a, const Shape& shape);
/// Sums leading repetitions down to `shape` (inverse of broadcast_to).
Variable reduce_to(const Variable& a, const Shape& shape);
Variable reshape(const Variable& a, const Shape& shape);

inline Variable operator+(const Variable& a, const Variable& b) { return add(a, b); }
inline Variable operator-(const Variable& a, const Variable& b) { return sub(a, b); }
inline Variable operator*(const Variable& a, const Variable& b) { return mul(a, b); }
inline Variable operator*(double c, const Variable& a) { return scale(a, c); }
inline Variable operator-(const Variable& a) { return neg(a); }

struct GradOptions {
  bool create_graph = false;
  /// Return zeros instead of throwing for parameters the scalar does not reach.
  bool allow_unused = false;
};

/// d scalar / d p for every p in `wrt`. With create_graph the returned
/// variables are tracked on the scalar's tape.
VarMap gradient(const Variable& scalar, const VarMap& wrt, GradOptions options = {});
std::vector<Variable> gradient(const Variable& scalar, std::span<const Variable> wrt,
                               GradOptions options = {});

ParamSet values(const VarMap& vars);
VarMap constants(const ParamSet& params);

/// Central-difference estimate of d loss / d p for every coordinate.
/// Throws if two baseline evaluations of `loss` disagree.
ParamSet finite_difference_gradient(const std::function<double(const ParamSet&)>& loss,
                                    const ParamSet& params, double eps);

}  // namespace ad
}  // namespace great
