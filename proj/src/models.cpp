#include "great/models.hpp"

#include <cmath>
#include <stdexcept>

namespace great {

using ad::Variable;
using ad::VarMap;

Activation parse_activation(const std::string& name) {
  if (name == "tanh") return Activation::Tanh;
  if (name == "relu") return Activation::Relu;
  if (name == "identity") return Activation::Identity;
  throw std::invalid_argument("unknown activation '" + name + "'");
}

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::Tanh: return "tanh";
    case Activation::Relu: return "relu";
    case Activation::Identity: return "identity";
  }
  return "identity";
}

void MlpSpec::validate() const {
  if (widths.size() < 2) throw std::invalid_argument("MLP needs at least input and output widths");
  for (auto w : widths) {
    if (w == 0) throw std::invalid_argument("MLP widths must be positive");
  }
  if (activations.size() != widths.size() - 2) {
    throw std::invalid_argument("MLP needs one activation per hidden layer");
  }
}

MlpSpec make_mlp_spec(std::size_t in, std::size_t hidden, std::size_t out, Activation act) {
  return MlpSpec{{in, hidden, out}, {act}};
}

namespace {

Tensor uniform(Shape shape, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

const Variable& param(const VarMap& params, const std::string& name) {
  auto it = params.find(name);
  if (it == params.end()) throw std::invalid_argument("missing parameter '" + name + "'");
  return it->second;
}

Variable apply(Activation a, const Variable& v) {
  switch (a) {
    case Activation::Tanh: return ad::tanh(v);
    case Activation::Relu: return ad::relu(v);
    case Activation::Identity: return v;
  }
  return v;
}

std::string layer_prefix(std::size_t l) { return "lstm." + std::to_string(l) + "."; }

void expect_shape(const ParamSet& p, const std::string& name, const Shape& shape) {
  auto it = p.find(name);
  if (it == p.end()) throw std::invalid_argument("missing parameter '" + name + "'");
  if (it->second.shape() != shape) {
    throw std::invalid_argument("parameter '" + name + "' has shape " + shape_string(it->second.shape()) +
                                ", expected " + shape_string(shape));
  }
}

void validate_mlp(const MlpSpec& spec, const ParamSet& p, const std::string& prefix) {
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    const std::string base = prefix + std::to_string(l);
    expect_shape(p, base + ".w", {spec.widths[l], spec.widths[l + 1]});
    expect_shape(p, base + ".b", {spec.widths[l + 1]});
  }
  if (p.size() != 2 * spec.num_layers()) {
    throw std::invalid_argument("unexpected extra parameters under '" + prefix + "'");
  }
}

}  // namespace

ParamSet init_mlp(const MlpSpec& spec, const std::string& prefix, std::mt19937_64& rng, bool zero_last_layer) {
  spec.validate();
  ParamSet p;
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    const std::size_t in = spec.widths[l];
    const std::size_t out = spec.widths[l + 1];
    const std::string base = prefix + std::to_string(l);
    const bool last = l + 1 == spec.num_layers();
    if (last && zero_last_layer) {
      p[base + ".w"] = Tensor({in, out});
    } else {
      p[base + ".w"] = uniform({in, out}, std::sqrt(6.0 / static_cast<double>(in + out)), rng);
    }
    p[base + ".b"] = Tensor({out});
  }
  return p;
}

Variable mlp_forward(const MlpSpec& spec, const VarMap& params, const std::string& prefix, const Variable& x) {
  spec.validate();
  if (x.value().cols() != spec.input_dim()) {
    throw std::invalid_argument("MLP '" + prefix + "' layer 0: input width " + std::to_string(x.value().cols()) +
                                " does not match " + std::to_string(spec.input_dim()));
  }
  Variable v = x;
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    const std::string base = prefix + std::to_string(l);
    const Variable& w = param(params, base + ".w");
    const Variable& b = param(params, base + ".b");
    const Shape want{spec.widths[l], spec.widths[l + 1]};
    if (w.shape() != want || b.shape() != Shape{spec.widths[l + 1]}) {
      throw std::invalid_argument("MLP '" + prefix + "' layer " + std::to_string(l) + ": weight shape " +
                                  shape_string(w.shape()) + " does not match " + shape_string(want));
    }
    v = ad::add(ad::matmul(v, w), b);
    if (l + 1 < spec.num_layers()) v = apply(spec.activations[l], v);
  }
  return v;
}

ParamSet init_predictor(const ModelDims& dims, std::mt19937_64& rng) {
  const std::size_t H = dims.hidden_dim;
  const double bound = 1.0 / std::sqrt(static_cast<double>(H));
  ParamSet p;
  for (std::size_t l = 0; l < dims.num_layers; ++l) {
    const std::size_t in = l == 0 ? dims.input_dim : H;
    const std::string base = layer_prefix(l);
    p[base + "w_x"] = uniform({in, 4 * H}, bound, rng);
    p[base + "w_h"] = uniform({H, 4 * H}, bound, rng);
    Tensor b({4 * H});
    for (std::size_t j = H; j < 2 * H; ++j) b[j] = 1.0;  // forget gate
    p[base + "b"] = std::move(b);
  }
  p["head.w"] = uniform({H, 1}, bound, rng);
  p["head.b"] = Tensor({1});
  return p;
}

TransformParams init_transforms(const ModelDims& dims, std::mt19937_64& rng) {
  TransformParams tf;
  tf.input = init_mlp(dims.input_transform(), kInputTransformPrefix, rng, true);
  tf.hidden = init_mlp(dims.hidden_transform(), kHiddenTransformPrefix, rng, true);
  tf.input_rec = init_mlp(dims.input_transform(), kInputRecPrefix, rng, true);
  tf.hidden_rec = init_mlp(dims.hidden_transform(), kHiddenRecPrefix, rng, true);
  return tf;
}

void validate_predictor(const ModelDims& dims, const ParamSet& theta) {
  const std::size_t H = dims.hidden_dim;
  for (std::size_t l = 0; l < dims.num_layers; ++l) {
    const std::size_t in = l == 0 ? dims.input_dim : H;
    expect_shape(theta, layer_prefix(l) + "w_x", {in, 4 * H});
    expect_shape(theta, layer_prefix(l) + "w_h", {H, 4 * H});
    expect_shape(theta, layer_prefix(l) + "b", {4 * H});
  }
  expect_shape(theta, "head.w", {H, 1});
  expect_shape(theta, "head.b", {1});
  if (theta.size() != 3 * dims.num_layers + 2) throw std::invalid_argument("unexpected extra predictor parameters");
}

void validate_transforms(const ModelDims& dims, const TransformParams& tf) {
  validate_mlp(dims.input_transform(), tf.input, kInputTransformPrefix);
  validate_mlp(dims.hidden_transform(), tf.hidden, kHiddenTransformPrefix);
  validate_mlp(dims.input_transform(), tf.input_rec, kInputRecPrefix);
  validate_mlp(dims.hidden_transform(), tf.hidden_rec, kHiddenRecPrefix);
}

Variable residual_forward(const MlpSpec& spec, const VarMap& params, const std::string& prefix, const Variable& v) {
  return ad::add(v, mlp_forward(spec, params, prefix, v));
}

Variable transform_input(const ModelDims& dims, const VarMap& phi_x, const Variable& x) {
  return residual_forward(dims.input_transform(), phi_x, kInputTransformPrefix, x);
}

Variable transform_hidden(const ModelDims& dims, const VarMap& phi_h, const Variable& h, std::size_t layer) {
  if (layer + 1 != dims.num_layers) {
    throw std::logic_error("hidden transform applies to the final LSTM layer only (got layer " +
                           std::to_string(layer) + " of " + std::to_string(dims.num_layers) + ")");
  }
  return residual_forward(dims.hidden_transform(), phi_h, kHiddenTransformPrefix, h);
}

LstmState zero_state(const ModelDims& dims, std::size_t batch) {
  LstmState s;
  const Variable zeros = Variable::constant(Tensor({batch, dims.hidden_dim}));
  s.h.assign(dims.num_layers, zeros);
  s.c.assign(dims.num_layers, zeros);
  return s;
}

namespace {

// One layer's gate update; returns (h', c').
std::pair<Variable, Variable> lstm_cell(const ModelDims& dims, const VarMap& theta, std::size_t layer,
                                        const Variable& x, const Variable& h, const Variable& c) {
  const std::size_t H = dims.hidden_dim;
  const std::string base = layer_prefix(layer);
  const Variable& wx = param(theta, base + "w_x");
  const Variable& wh = param(theta, base + "w_h");
  if (x.value().cols() != wx.shape()[0] || h.value().cols() != H || h.shape() != c.shape()) {
    throw std::invalid_argument("lstm layer " + std::to_string(layer) + ": input " + shape_string(x.shape()) +
                                " / state " + shape_string(h.shape()) + " do not match weights " +
                                shape_string(wx.shape()));
  }
  const Variable z = ad::add(ad::add(ad::matmul(x, wx), ad::matmul(h, wh)), param(theta, base + "b"));
  const Variable i = ad::sigmoid(ad::slice(z, 0, H));
  const Variable f = ad::sigmoid(ad::slice(z, H, H));
  const Variable g = ad::tanh(ad::slice(z, 2 * H, H));
  const Variable o = ad::sigmoid(ad::slice(z, 3 * H, H));
  const Variable c_next = ad::add(ad::mul(f, c), ad::mul(i, g));
  const Variable h_next = ad::mul(o, ad::tanh(c_next));
  return {h_next, c_next};
}

Variable head(const VarMap& theta, const Variable& h) {
  return ad::add(ad::matmul(h, param(theta, "head.w")), param(theta, "head.b"));
}

}  // namespace

namespace {

// Advances every layer by one step without applying the head.
LstmState advance(const ModelDims& dims, const VarMap& theta, const Variable& x_t, const LstmState& state) {
  if (state.h.size() != dims.num_layers || state.c.size() != dims.num_layers) {
    throw std::invalid_argument("lstm_step: state has " + std::to_string(state.h.size()) + " layers, expected " +
                                std::to_string(dims.num_layers));
  }
  LstmState next;
  next.h.resize(dims.num_layers);
  next.c.resize(dims.num_layers);
  Variable input = x_t;
  for (std::size_t l = 0; l < dims.num_layers; ++l) {
    auto [h, c] = lstm_cell(dims, theta, l, input, state.h[l], state.c[l]);
    next.h[l] = h;
    next.c[l] = c;
    input = h;
  }
  return next;
}

}  // namespace

StepResult lstm_step(const ModelDims& dims, const VarMap& theta, const Variable& x_t, const LstmState& state) {
  StepResult r;
  r.state = advance(dims, theta, x_t, state);
  r.y = head(theta, r.state.h.back());
  return r;
}

std::vector<Variable> split_steps(const Tensor& x) {
  if (x.rank() != 3) throw std::invalid_argument("expected a [B, T, F] tensor, got " + shape_string(x.shape()));
  const std::size_t B = x.shape()[0], T = x.shape()[1], F = x.shape()[2];
  std::vector<Variable> steps;
  steps.reserve(T);
  for (std::size_t t = 0; t < T; ++t) {
    Tensor s({B, F});
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t f = 0; f < F; ++f) s.at(b, f) = x[(b * T + t) * F + f];
    steps.push_back(Variable::constant(std::move(s)));
  }
  return steps;
}

SequenceTrace run_sequence(const ModelDims& dims, const VarMap& theta, const std::vector<Variable>& steps,
                           TransformBinding tf, bool keep_layers) {
  if (steps.empty()) throw std::invalid_argument("cannot predict an empty sequence");
  const std::size_t B = steps.front().value().rows();
  const std::size_t top = dims.num_layers - 1;
  LstmState state = zero_state(dims, B);
  if (tf.hidden) state.h[top] = transform_hidden(dims, *tf.hidden, state.h[top], top);

  SequenceTrace trace;
  trace.top_hidden.reserve(steps.size());
  if (keep_layers) trace.layers.assign(dims.num_layers, {});
  std::vector<Variable> outputs;
  outputs.reserve(steps.size());

  for (const Variable& x : steps) {
    const Variable input = tf.input ? transform_input(dims, *tf.input, x) : x;
    state = advance(dims, theta, input, state);
    trace.top_hidden.push_back(state.h[top]);
    if (keep_layers) {
      for (std::size_t l = 0; l < dims.num_layers; ++l) trace.layers[l].push_back(state.h[l]);
    }
    if (tf.hidden) state.h[top] = transform_hidden(dims, *tf.hidden, state.h[top], top);
    outputs.push_back(head(theta, state.h[top]));
  }
  trace.predictions = ad::concat(outputs);
  return trace;
}

Variable predict_sequence(const ModelDims& dims, const VarMap& theta, const std::vector<Variable>& steps) {
  return run_sequence(dims, theta, steps).predictions;
}

Variable predict_transformed(const ModelDims& dims, const VarMap& theta, const VarMap& phi_x, const VarMap& phi_h,
                             const std::vector<Variable>& steps) {
  return run_sequence(dims, theta, steps, {&phi_x, &phi_h}).predictions;
}

}  // namespace great
