#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "great/data.hpp"
#include "great/objectives.hpp"

namespace great {

/// Training diverged or cannot make progress.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class HypergradMode { Exact, FirstOrder };

std::string hypergrad_mode_name(HypergradMode m);
HypergradMode parse_hypergrad_mode(const std::string& name);

struct Ablation {
  bool no_pre = false;       // skip both pre-training phases
  bool no_bi = false;        // joint single-level training instead of the bi-level loop
  bool no_g = false;         // no transformation modules at all
  bool no_g_hidden = false;  // input transformation only

  bool uses_input_transform() const { return !no_g; }
  bool uses_hidden_transform() const { return !no_g && !no_g_hidden; }
  friend bool operator==(const Ablation&, const Ablation&) = default;
};

struct TrainConfig {
  ModelDims dims;
  LossWeights weights;
  double alpha = 1e-2;  // inner SGD step
  std::size_t inner_steps = 1;
  double upper_lr = 1e-3;
  double pretrain_lr = 1e-3;
  double transform_lr = 1e-3;
  std::size_t pretrain_epochs = 30;
  std::size_t transform_epochs = 5;
  std::size_t bilevel_epochs = 100;
  std::size_t iterations_per_epoch = 20;
  std::size_t patience = 20;
  std::size_t batch_size = 16;
  std::size_t window_length = 365;
  std::size_t window_stride = 183;
  double clip_norm = 5.0;
  double rec_ceiling = 1.0;
  std::size_t rec_patience = 3;
  bool commit_lower = true;
  HypergradMode hypergrad_mode = HypergradMode::Exact;
  Ablation ablation;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Adaptive-moment state for one parameter group.
struct AdamState {
  ParamSet m;
  ParamSet v;
  std::size_t step = 0;

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

/// In-place Adam update (beta1 0.9, beta2 0.999, eps 1e-8).
void adam_update(ParamSet& params, const ParamSet& grads, AdamState& state, double lr);

/// Scales every gradient so the global L2 norm is at most `max_norm`; returns the norm before scaling.
double clip_global_norm(std::vector<ParamSet*> groups, double max_norm);

/// Names of the optimizer groups.
inline const std::string kPredictorGroup = "theta";

struct TrainState {
  ModelDims dims;
  ParamSet theta;
  TransformParams transforms;
  std::map<std::string, AdamState> moments;
  std::size_t epoch = 0;
  std::size_t iteration = 0;
  double best_metric = 0.0;
  std::size_t best_epoch = 0;
  ParamSet best_theta;
  TransformParams best_transforms;

  friend bool operator==(const TrainState&, const TrainState&) = default;
};

/// One row of the per-epoch training log.
struct EpochRecord {
  std::string phase;
  std::size_t epoch = 0;
  double lower_loss = 0.0;
  double upper_loss = 0.0;
  double rec_input = 0.0;
  double rec_hidden = 0.0;
  double aux_rmse = 0.0;  // normalized units; 0 when not evaluated
  double wall_time = 0.0;

  std::string to_json() const;
};

using EpochCallback = std::function<void(const EpochRecord&)>;
using WarningCallback = std::function<void(const std::string&)>;

/// Draws shuffled window batches from one dataset; reshuffles after every pass.
class BatchSampler {
 public:
  BatchSampler(const DomainDataset& ds, std::size_t length, std::size_t stride, std::size_t batch_size,
               std::uint64_t seed);

  MaskedBatch next();
  std::size_t batches_per_epoch() const;
  std::size_t windows() const { return index_.windows.size(); }

 private:
  void reshuffle();

  const DomainDataset* ds_;
  WindowIndex index_;
  std::size_t length_;
  std::size_t batch_size_;
  std::mt19937_64 rng_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

struct PretrainResult {
  ParamSet theta;
  std::vector<double> epoch_loss;
};

/// Source-only predictor training (Adam on masked MSE).
PretrainResult pretrain_predictor(const DomainDataset& source, const TrainConfig& config,
                                  const EpochCallback& on_epoch = {});

struct TransformPretrainResult {
  TransformParams transforms;
  std::vector<double> epoch_rec;  // mean rec_x + rec_h per epoch
};

/// Adversarial initialization of the transforms with the predictor frozen.
TransformPretrainResult pretrain_transforms(const DomainDataset& source, const ParamSet& theta,
                                            const TrainConfig& config, const EpochCallback& on_epoch = {});

/// K plain SGD steps of size alpha on `loss`. With create_graph the result stays a
/// differentiable function of the inputs of `loss`. The loss before each step is
/// appended to `losses`.
ad::VarMap unrolled_sgd(const std::function<ad::Variable(const ad::VarMap&)>& loss, const ad::VarMap& theta0,
                        double alpha, std::size_t steps, bool create_graph, std::vector<double>* losses = nullptr);

/// Unrolled SGD on lower_loss. Without create_graph the transforms are detached.
ad::VarMap lower_step(const ModelDims& dims, const ad::VarMap& theta0, const TransformVars& tf,
                      const MaskedBatch& source, double lambda, double alpha, std::size_t steps, bool create_graph,
                      std::vector<double>* losses = nullptr);

/// Parameters and their upper-level gradients for one iteration.
struct Hypergradient {
  ParamSet theta_lower;
  std::map<std::string, ParamSet> grads;  // by group name
  LossTerms upper;
  double lower_loss = 0.0;
};

/// Steps (1) to (3) of a bi-level iteration: lower step, upper loss, gradients.
Hypergradient compute_hypergradient(const TrainState& state, const MaskedBatch& source, const MaskedBatch& aux,
                                    const TrainConfig& config);

struct IterationReport {
  bool applied = false;
  double lower_loss = 0.0;
  double upper_loss = 0.0;
  double rec_input = 0.0;
  double rec_hidden = 0.0;
};

/// One bi-level iteration. A non-finite loss leaves `state` unchanged and emits a warning.
IterationReport bilevel_iteration(TrainState& state, const MaskedBatch& source, const MaskedBatch& aux,
                                  const TrainConfig& config, const WarningCallback& warn = {});

/// Joint single-level update on lower loss + auxiliary MSE + gamma * reconstruction.
IterationReport joint_iteration(TrainState& state, const MaskedBatch& source, const MaskedBatch& aux,
                                const TrainConfig& config, const WarningCallback& warn = {});

/// Pre-trained parameters that may be shared between runs.
struct Pretrained {
  ParamSet theta;
  std::optional<TransformParams> transforms;
};

struct TrainHooks {
  EpochCallback on_epoch;
  WarningCallback on_warning;
  const Pretrained* pretrained = nullptr;
};

/// RMSE over the observed labels of `ds`, in normalized units.
double evaluate_rmse(const ModelDims& dims, const ParamSet& theta, const DomainDataset& ds);

/// Predictor and transform pre-training as configured, then the bi-level (or joint)
/// loop with early stopping on auxiliary RMSE. Returns the best snapshot.
TrainState train_great(const DomainDataset& source, const std::vector<DomainDataset>& aux, const TrainConfig& config,
                       const TrainHooks& hooks = {});

/// Pre-training as train_great would run it, for sharing across runs.
Pretrained pretrain_all(const DomainDataset& source, const TrainConfig& config, const TrainHooks& hooks = {});

/// Plain forward pass per segment (normalized units), no transforms or updates.
std::vector<std::vector<double>> zero_shot_predict(const ModelDims& dims, const ParamSet& theta,
                                                   const DomainDataset& target);

}  // namespace great
