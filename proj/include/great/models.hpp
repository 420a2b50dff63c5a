#pragma once

#include <cstddef>
#include <random>
#include <string>
#include <vector>

#include "great/autodiff.hpp"

namespace great {

inline constexpr std::size_t kNumFeatures = 7;

enum class Activation { Tanh, Relu, Identity };

Activation parse_activation(const std::string& name);
std::string activation_name(Activation a);

/// Affine + activation stack. `activations` has one entry per hidden layer;
/// the output layer is always affine.
struct MlpSpec {
  std::vector<std::size_t> widths;
  std::vector<Activation> activations;

  std::size_t input_dim() const { return widths.front(); }
  std::size_t output_dim() const { return widths.back(); }
  std::size_t num_layers() const { return widths.size() - 1; }
  void validate() const;
};

MlpSpec make_mlp_spec(std::size_t in, std::size_t hidden, std::size_t out, Activation act = Activation::Tanh);

/// Parameters are named `<prefix><layer>.w` ([in, out]) and `<prefix><layer>.b` ([out]).
ParamSet init_mlp(const MlpSpec& spec, const std::string& prefix, std::mt19937_64& rng, bool zero_last_layer);

ad::Variable mlp_forward(const MlpSpec& spec, const ad::VarMap& params, const std::string& prefix,
                         const ad::Variable& x);

struct ModelDims {
  std::size_t input_dim = kNumFeatures;
  std::size_t hidden_dim = 32;
  std::size_t num_layers = 1;
  std::size_t transform_width = 32;

  MlpSpec input_transform() const { return make_mlp_spec(input_dim, transform_width, input_dim); }
  MlpSpec hidden_transform() const { return make_mlp_spec(hidden_dim, transform_width, hidden_dim); }

  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

inline const std::string kInputTransformPrefix = "g_input.";
inline const std::string kHiddenTransformPrefix = "g_hidden.";
inline const std::string kInputRecPrefix = "rec_input.";
inline const std::string kHiddenRecPrefix = "rec_hidden.";

/// phi_x, phi_h and the two reconstruction heads psi_x, psi_h.
struct TransformParams {
  ParamSet input;
  ParamSet hidden;
  ParamSet input_rec;
  ParamSet hidden_rec;

  friend bool operator==(const TransformParams&, const TransformParams&) = default;
};

/// LSTM gate weights per layer plus a linear head on the top layer.
ParamSet init_predictor(const ModelDims& dims, std::mt19937_64& rng);

/// Residual transforms and reconstruction heads whose last layers are zero,
/// so every module starts as the exact identity.
TransformParams init_transforms(const ModelDims& dims, std::mt19937_64& rng);

void validate_predictor(const ModelDims& dims, const ParamSet& theta);
void validate_transforms(const ModelDims& dims, const TransformParams& tf);

/// g(v) = v + MLP(v)
ad::Variable residual_forward(const MlpSpec& spec, const ad::VarMap& params, const std::string& prefix,
                              const ad::Variable& v);

ad::Variable transform_input(const ModelDims& dims, const ad::VarMap& phi_x, const ad::Variable& x);

/// Only the final LSTM layer may be transformed; `layer` is checked against that.
ad::Variable transform_hidden(const ModelDims& dims, const ad::VarMap& phi_h, const ad::Variable& h,
                              std::size_t layer);

struct LstmState {
  std::vector<ad::Variable> h;  // per layer, [B, H]
  std::vector<ad::Variable> c;
};

LstmState zero_state(const ModelDims& dims, std::size_t batch);

struct StepResult {
  ad::Variable y;  // [B, 1]
  LstmState state;
};

/// One step of the stacked LSTM (gate order i, f, g, o) followed by the head.
StepResult lstm_step(const ModelDims& dims, const ad::VarMap& theta, const ad::Variable& x_t,
                     const LstmState& state);

/// Optional transformation bindings for a forward pass; null means absent.
struct TransformBinding {
  const ad::VarMap* input = nullptr;
  const ad::VarMap* hidden = nullptr;
};

struct SequenceTrace {
  ad::Variable predictions;                       // [B, T]
  std::vector<ad::Variable> top_hidden;           // raw final-layer h_t, t = 1..T
  std::vector<std::vector<ad::Variable>> layers;  // [layer][t] raw h_t (only when requested)
};

/// Splits a [B, T, F] tensor into T constant [B, F] steps.
std::vector<ad::Variable> split_steps(const Tensor& x);

/// Runs the recurrence over `steps`. With a hidden transform, h~_t = g_hidden(h_t)
/// feeds both the head at step t and the recurrence at t+1 (h~_0 = g_hidden(0)).
SequenceTrace run_sequence(const ModelDims& dims, const ad::VarMap& theta, const std::vector<ad::Variable>& steps,
                           TransformBinding tf = {}, bool keep_layers = false);

/// Plain predictions y^ (normalized units), [B, T].
ad::Variable predict_sequence(const ModelDims& dims, const ad::VarMap& theta, const std::vector<ad::Variable>& steps);

/// Predictions y~ with both transforms applied on the forward pass, [B, T].
ad::Variable predict_transformed(const ModelDims& dims, const ad::VarMap& theta, const ad::VarMap& phi_x,
                                 const ad::VarMap& phi_h, const std::vector<ad::Variable>& steps);

}  // namespace great
