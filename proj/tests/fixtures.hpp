#pragma once

// Small random models and batches for tests.

#include <random>

#include "great/objectives.hpp"
#include "test_util.hpp"

namespace great::testing {

inline ModelDims small_dims(std::size_t hidden = 4, std::size_t layers = 1) {
  ModelDims d;
  d.hidden_dim = hidden;
  d.num_layers = layers;
  d.transform_width = 5;
  return d;
}

/// Non-identity transforms: last layers drawn small instead of zero.
inline TransformParams random_transforms(const ModelDims& dims, std::mt19937_64& rng, double scale = 0.5) {
  TransformParams tf;
  tf.input = init_mlp(dims.input_transform(), kInputTransformPrefix, rng, false);
  tf.hidden = init_mlp(dims.hidden_transform(), kHiddenTransformPrefix, rng, false);
  tf.input_rec = init_mlp(dims.input_transform(), kInputRecPrefix, rng, false);
  tf.hidden_rec = init_mlp(dims.hidden_transform(), kHiddenRecPrefix, rng, false);
  for (ParamSet* set : {&tf.input, &tf.hidden, &tf.input_rec, &tf.hidden_rec}) {
    for (auto& [name, t] : *set) {
      for (auto& v : t.data()) v *= scale;
    }
  }
  return tf;
}

/// Labels drawn around zero, each kept with probability `density` (at least one kept).
inline MaskedBatch random_batch(std::size_t B, std::size_t T, std::mt19937_64& rng, double density = 0.5) {
  MaskedBatch b{random_tensor({B, T, kNumFeatures}, rng, -1.5, 1.5), random_tensor({B, T}, rng, -1, 1),
                Tensor({B, T})};
  std::bernoulli_distribution keep(density);
  for (auto& m : b.mask.data()) m = keep(rng) ? 1.0 : 0.0;
  b.mask[0] = 1.0;
  return b;
}

/// Splits a flat variable map into predictor and transform groups by prefix.
struct Groups {
  ad::VarMap theta, input, hidden, input_rec, hidden_rec;

  explicit Groups(const ad::VarMap& all) {
    for (const auto& [name, var] : all) {
      if (name.starts_with(kInputTransformPrefix)) input.emplace(name, var);
      else if (name.starts_with(kHiddenTransformPrefix)) hidden.emplace(name, var);
      else if (name.starts_with(kInputRecPrefix)) input_rec.emplace(name, var);
      else if (name.starts_with(kHiddenRecPrefix)) hidden_rec.emplace(name, var);
      else theta.emplace(name, var);
    }
  }
  TransformVars transforms() const { return {&input, &hidden, &input_rec, &hidden_rec}; }
};

inline ParamSet merge(std::initializer_list<const ParamSet*> sets) {
  ParamSet out;
  for (const ParamSet* s : sets) out.insert(s->begin(), s->end());
  return out;
}

}  // namespace great::testing
