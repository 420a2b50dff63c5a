#pragma once

#include <cstddef>
#include <vector>

#include "great/models.hpp"

namespace great {

/// A window batch with sparse labels. `mask` holds 1 where a label exists.
struct MaskedBatch {
  Tensor x;     // [B, T, 7]
  Tensor y;     // [B, T]
  Tensor mask;  // [B, T], 0 or 1

  std::size_t batch_size() const { return x.shape()[0]; }
  std::size_t length() const { return x.shape()[1]; }
  std::size_t observed() const;
  /// Shape and mask checks; throws on an empty mask.
  void validate() const;
  std::vector<ad::Variable> steps() const { return split_steps(x); }
};

struct LossWeights {
  double lambda = 1.0;  // transformed-prediction weight
  double gamma = 0.1;   // upper-level reconstruction weight
  double eta = 0.1;     // pre-training reconstruction weight

  void validate() const;
};

/// Transformation and reconstruction parameters; null entries are absent.
struct TransformVars {
  const ad::VarMap* input = nullptr;
  const ad::VarMap* hidden = nullptr;
  const ad::VarMap* input_rec = nullptr;
  const ad::VarMap* hidden_rec = nullptr;

  TransformBinding forward() const { return {input, hidden}; }
};

/// Original data fed to the reconstruction losses: inputs and final-layer
/// hidden states at the labeled positions of the source batch.
struct ReconstructionData {
  Tensor inputs;  // [N, 7]
  Tensor hidden;  // [N, H]
};

/// Individual terms of a loss. Absent terms stay undefined.
struct LossTerms {
  ad::Variable total;
  ad::Variable prediction;
  ad::Variable transformed;
  ad::Variable rec_input;
  ad::Variable rec_hidden;
};

ad::Variable masked_mse(const ad::Variable& pred, const Tensor& y, const Tensor& mask);

/// Mean over rows of ||v - rec(g(v))||^2 with residual g and rec.
ad::Variable reconstruction_loss(const MlpSpec& g_spec, const ad::VarMap& g, const std::string& g_prefix,
                                 const MlpSpec& rec_spec, const ad::VarMap& rec, const std::string& rec_prefix,
                                 const ad::Variable& v);

/// Runs the plain predictor on the batch and collects the labeled rows.
ReconstructionData reconstruction_data(const ModelDims& dims, const ad::VarMap& theta, const MaskedBatch& batch);

/// mse(y^) + lambda * mse(y~). Without any transform only the plain term is used.
LossTerms lower_loss(const ModelDims& dims, const MaskedBatch& batch, const ad::VarMap& theta,
                     const TransformVars& tf, double lambda);

/// rec_x + rec_h over the available transform/reconstruction pairs.
LossTerms reconstruction_terms(const ModelDims& dims, const TransformVars& tf, const ReconstructionData& data);

/// mse on the auxiliary batch at theta_lower (no transforms) + gamma * (rec_x + rec_h).
LossTerms upper_loss(const ModelDims& dims, const MaskedBatch& aux, const ad::VarMap& theta_lower,
                     const TransformVars& tf, double gamma, const ReconstructionData& source_rec);

/// -mse(y~) + eta * (rec_x + rec_h) with a frozen predictor.
LossTerms pretrain_transform_loss(const ModelDims& dims, const MaskedBatch& batch, const ad::VarMap& theta,
                                  const TransformVars& tf, double eta, const ReconstructionData& source_rec);

}  // namespace great
