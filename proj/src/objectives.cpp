#include "great/objectives.hpp"

#include <cmath>
#include <stdexcept>

namespace great {

using ad::Variable;
using ad::VarMap;

std::size_t MaskedBatch::observed() const {
  std::size_t n = 0;
  for (double m : mask.data()) n += m != 0.0;
  return n;
}

void MaskedBatch::validate() const {
  if (x.rank() != 3 || x.shape()[2] != kNumFeatures) {
    throw std::invalid_argument("batch features must be [B, T, 7], got " + shape_string(x.shape()));
  }
  const Shape bt{x.shape()[0], x.shape()[1]};
  if (y.shape() != bt || mask.shape() != bt) {
    throw std::invalid_argument("batch labels and mask must be " + shape_string(bt) + ", got " +
                                shape_string(y.shape()) + " and " + shape_string(mask.shape()));
  }
  for (double m : mask.data()) {
    if (m != 0.0 && m != 1.0) throw std::invalid_argument("batch mask entries must be 0 or 1");
  }
  if (observed() == 0) throw std::invalid_argument("batch has no observed labels");
}

void LossWeights::validate() const {
  const auto check = [](double v, const char* name) {
    if (!std::isfinite(v) || v < 0.0) {
      throw std::invalid_argument(std::string("loss weight ") + name + " must be finite and non-negative");
    }
  };
  check(lambda, "lambda");
  check(gamma, "gamma");
  check(eta, "eta");
}

Variable masked_mse(const Variable& pred, const Tensor& y, const Tensor& mask) {
  if (pred.shape() != y.shape() || y.shape() != mask.shape()) {
    throw std::invalid_argument("masked_mse: shapes " + shape_string(pred.shape()) + ", " +
                                shape_string(y.shape()) + " and " + shape_string(mask.shape()) + " differ");
  }
  double count = 0.0;
  for (double m : mask.data()) count += m;
  if (count == 0.0) throw std::invalid_argument("masked_mse: mask is empty");
  const Variable err = ad::square(ad::sub(pred, Variable::constant(y)));
  return ad::scale(ad::sum(ad::mul(err, Variable::constant(mask))), 1.0 / count);
}

Variable reconstruction_loss(const MlpSpec& g_spec, const VarMap& g, const std::string& g_prefix,
                             const MlpSpec& rec_spec, const VarMap& rec, const std::string& rec_prefix,
                             const Variable& v) {
  if (v.value().rank() != 2) throw std::invalid_argument("reconstruction_loss: data must be [N, d]");
  const std::size_t d = v.value().cols();
  if (g_spec.input_dim() != d || g_spec.output_dim() != rec_spec.input_dim() || rec_spec.output_dim() != d) {
    throw std::invalid_argument("reconstruction_loss: dimension mismatch (data " + std::to_string(d) +
                                ", transform " + std::to_string(g_spec.input_dim()) + "->" +
                                std::to_string(g_spec.output_dim()) + ", head " +
                                std::to_string(rec_spec.input_dim()) + "->" + std::to_string(rec_spec.output_dim()) +
                                ")");
  }
  const Variable transformed = residual_forward(g_spec, g, g_prefix, v);
  const Variable back = residual_forward(rec_spec, rec, rec_prefix, transformed);
  const double rows = static_cast<double>(v.value().rows());
  return ad::scale(ad::sum(ad::square(ad::sub(v, back))), 1.0 / rows);
}

ReconstructionData reconstruction_data(const ModelDims& dims, const VarMap& theta, const MaskedBatch& batch) {
  VarMap frozen;
  for (const auto& [name, var] : theta) frozen.emplace(name, var.detach());
  const SequenceTrace trace = run_sequence(dims, frozen, batch.steps());

  const std::size_t B = batch.batch_size(), T = batch.length(), F = kNumFeatures, H = dims.hidden_dim;
  const std::size_t n = batch.observed();
  ReconstructionData out{Tensor({n, F}), Tensor({n, H})};
  std::size_t row = 0;
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t t = 0; t < T; ++t) {
      if (batch.mask.at(b, t) == 0.0) continue;
      for (std::size_t f = 0; f < F; ++f) out.inputs[row * F + f] = batch.x[(b * T + t) * F + f];
      const Tensor& h = trace.top_hidden[t].value();
      for (std::size_t j = 0; j < H; ++j) out.hidden[row * H + j] = h.at(b, j);
      ++row;
    }
  }
  return out;
}

LossTerms lower_loss(const ModelDims& dims, const MaskedBatch& batch, const VarMap& theta, const TransformVars& tf,
                     double lambda) {
  const auto steps = batch.steps();
  LossTerms terms;
  terms.prediction = masked_mse(run_sequence(dims, theta, steps).predictions, batch.y, batch.mask);
  terms.total = terms.prediction;
  if (tf.input != nullptr || tf.hidden != nullptr) {
    terms.transformed =
        masked_mse(run_sequence(dims, theta, steps, tf.forward()).predictions, batch.y, batch.mask);
    terms.total = ad::add(terms.prediction, ad::scale(terms.transformed, lambda));
  }
  return terms;
}

LossTerms reconstruction_terms(const ModelDims& dims, const TransformVars& tf, const ReconstructionData& data) {
  LossTerms terms;
  if (tf.input != nullptr && tf.input_rec != nullptr) {
    terms.rec_input = reconstruction_loss(dims.input_transform(), *tf.input, kInputTransformPrefix,
                                          dims.input_transform(), *tf.input_rec, kInputRecPrefix,
                                          Variable::constant(data.inputs));
    terms.total = terms.rec_input;
  }
  if (tf.hidden != nullptr && tf.hidden_rec != nullptr) {
    terms.rec_hidden = reconstruction_loss(dims.hidden_transform(), *tf.hidden, kHiddenTransformPrefix,
                                           dims.hidden_transform(), *tf.hidden_rec, kHiddenRecPrefix,
                                           Variable::constant(data.hidden));
    terms.total = terms.total.defined() ? ad::add(terms.total, terms.rec_hidden) : terms.rec_hidden;
  }
  return terms;
}

LossTerms upper_loss(const ModelDims& dims, const MaskedBatch& aux, const VarMap& theta_lower,
                     const TransformVars& tf, double gamma, const ReconstructionData& source_rec) {
  LossTerms terms = reconstruction_terms(dims, tf, source_rec);
  terms.prediction = masked_mse(predict_sequence(dims, theta_lower, aux.steps()), aux.y, aux.mask);
  const Variable rec = terms.total;
  terms.total = rec.defined() ? ad::add(terms.prediction, ad::scale(rec, gamma)) : terms.prediction;
  return terms;
}

LossTerms pretrain_transform_loss(const ModelDims& dims, const MaskedBatch& batch, const VarMap& theta,
                                  const TransformVars& tf, double eta, const ReconstructionData& source_rec) {
  if (tf.input == nullptr && tf.hidden == nullptr) {
    throw std::invalid_argument("pretrain_transform_loss: no transformation to train");
  }
  LossTerms terms = reconstruction_terms(dims, tf, source_rec);
  terms.transformed =
      masked_mse(run_sequence(dims, theta, batch.steps(), tf.forward()).predictions, batch.y, batch.mask);
  const Variable rec = terms.total;
  terms.total = ad::neg(terms.transformed);
  if (rec.defined()) terms.total = ad::add(terms.total, ad::scale(rec, eta));
  return terms;
}

}  // namespace great
