#include "great/trainer.hpp"

#include <chrono>
#include <cmath>
#include <numeric>

#include "json.hpp"

namespace great {

using ad::Variable;
using ad::VarMap;

namespace {

// Independent random streams derived from one seed.
enum Stream : std::uint64_t {
  kPredictorInit = 1,
  kPredictorBatches,
  kTransformInit,
  kTransformBatches,
  kSourceBatches,
  kAuxBatches,
};

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + stream * 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

const std::string kInputGroup = "g_input";
const std::string kHiddenGroup = "g_hidden";
const std::string kInputRecGroup = "rec_input";
const std::string kHiddenRecGroup = "rec_hidden";

ParamSet& transform_group(TransformParams& tf, const std::string& group) {
  if (group == kInputGroup) return tf.input;
  if (group == kHiddenGroup) return tf.hidden;
  if (group == kInputRecGroup) return tf.input_rec;
  return tf.hidden_rec;
}

const ParamSet& transform_group(const TransformParams& tf, const std::string& group) {
  return transform_group(const_cast<TransformParams&>(tf), group);
}

std::vector<std::string> active_transform_groups(const Ablation& a) {
  std::vector<std::string> g;
  if (a.uses_input_transform()) g.insert(g.end(), {kInputGroup, kInputRecGroup});
  if (a.uses_hidden_transform()) g.insert(g.end(), {kHiddenGroup, kHiddenRecGroup});
  return g;
}

/// Leaves for the active transform groups of one tape.
struct TransformLeaves {
  std::map<std::string, VarMap> groups;

  TransformLeaves(ad::Tape& tape, const TransformParams& tf, const Ablation& a) {
    for (const auto& g : active_transform_groups(a)) groups[g] = tape.leaves(transform_group(tf, g));
  }
  TransformVars vars() const {
    const auto get = [&](const std::string& g) { return groups.count(g) ? &groups.at(g) : nullptr; };
    return {get(kInputGroup), get(kHiddenGroup), get(kInputRecGroup), get(kHiddenRecGroup)};
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::map<std::string, ParamSet> split_grads(const VarMap& grads, const std::map<std::string, VarMap>& groups,
                                            const VarMap& theta) {
  std::map<std::string, ParamSet> out;
  for (const auto& [name, v] : theta) out[kPredictorGroup].emplace(name, grads.at(name).value());
  for (const auto& [group, vars] : groups) {
    for (const auto& [name, v] : vars) out[group].emplace(name, grads.at(name).value());
  }
  return out;
}

void apply_updates(TrainState& state, std::map<std::string, ParamSet>& grads, const TrainConfig& config) {
  std::vector<ParamSet*> all;
  for (auto& [g, set] : grads) all.push_back(&set);
  clip_global_norm(all, config.clip_norm);
  for (auto& [group, g] : grads) {
    ParamSet& params = group == kPredictorGroup ? state.theta : transform_group(state.transforms, group);
    adam_update(params, g, state.moments[group], config.upper_lr);
  }
  ++state.iteration;
}

struct ErrorSum {
  double sum = 0.0;
  double count = 0.0;
};

ErrorSum squared_errors(const ModelDims& dims, const ParamSet& theta, const DomainDataset& ds) {
  DomainDataset labeled = ds;
  std::erase_if(labeled.segments, [](const SegmentSeries& s) { return s.observed() == 0; });
  ErrorSum e;
  if (labeled.segments.empty()) return e;
  const auto preds = zero_shot_predict(dims, theta, labeled);
  for (std::size_t s = 0; s < labeled.segments.size(); ++s) {
    const auto& seg = labeled.segments[s];
    for (std::size_t t = 0; t < seg.length(); ++t) {
      if (!seg.mask[t]) continue;
      const double d = preds[s][t] - seg.labels[t];
      e.sum += d * d;
      e.count += 1.0;
    }
  }
  return e;
}

}  // namespace

std::string hypergrad_mode_name(HypergradMode m) { return m == HypergradMode::Exact ? "exact" : "first_order"; }

HypergradMode parse_hypergrad_mode(const std::string& name) {
  if (name == "exact") return HypergradMode::Exact;
  if (name == "first_order") return HypergradMode::FirstOrder;
  throw std::invalid_argument("hypergrad_mode must be 'exact' or 'first_order', got '" + name + "'");
}

void TrainConfig::validate() const {
  weights.validate();
  const auto positive = [](double v, const char* name) {
    if (!std::isfinite(v) || v <= 0.0) throw std::invalid_argument(std::string(name) + " must be finite and positive");
  };
  if (!std::isfinite(alpha) || alpha < 0.0) throw std::invalid_argument("alpha must be finite and non-negative");
  positive(upper_lr, "upper_lr");
  positive(pretrain_lr, "pretrain_lr");
  positive(transform_lr, "transform_lr");
  positive(clip_norm, "clip_norm");
  positive(rec_ceiling, "rec_ceiling");
  if (inner_steps < 1) throw std::invalid_argument("inner_steps must be at least 1");
  if (batch_size < 1 || window_length < 1 || window_stride < 1 || iterations_per_epoch < 1) {
    throw std::invalid_argument("batch_size, window_length, window_stride and iterations_per_epoch must be positive");
  }
  if (dims.hidden_dim < 1 || dims.num_layers < 1 || dims.transform_width < 1 || dims.input_dim != kNumFeatures) {
    throw std::invalid_argument("invalid model dimensions");
  }
}

void adam_update(ParamSet& params, const ParamSet& grads, AdamState& st, double lr) {
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  ++st.step;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(st.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(st.step));
  for (auto& [name, p] : params) {
    const Tensor& g = grads.at(name);
    auto [mit, m_new] = st.m.try_emplace(name, Tensor(p.shape()));
    auto [vit, v_new] = st.v.try_emplace(name, Tensor(p.shape()));
    Tensor& m = mit->second;
    Tensor& v = vit->second;
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      p[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
    }
  }
}

double clip_global_norm(std::vector<ParamSet*> groups, double max_norm) {
  double sq = 0.0;
  for (const ParamSet* g : groups) {
    for (const auto& [n, t] : *g) {
      for (double v : t.data()) sq += v * v;
    }
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double s = max_norm / norm;
    for (ParamSet* g : groups) {
      for (auto& [n, t] : *g) {
        for (double& v : t.data()) v *= s;
      }
    }
  }
  return norm;
}

std::string EpochRecord::to_json() const {
  const nlohmann::json j{{"phase", phase},           {"epoch", epoch},         {"lower_loss", lower_loss},
                         {"upper_loss", upper_loss}, {"rec_input", rec_input}, {"rec_hidden", rec_hidden},
                         {"aux_rmse", aux_rmse},     {"wall_time", wall_time}};
  return j.dump();
}

// ---- sampling ---------------------------------------------------------------

BatchSampler::BatchSampler(const DomainDataset& ds, std::size_t length, std::size_t stride, std::size_t batch_size,
                           std::uint64_t seed)
    : ds_(&ds), index_(make_windows(ds, length, stride)), length_(length), batch_size_(batch_size), rng_(seed) {
  order_.resize(index_.windows.size());
  reshuffle();
}

void BatchSampler::reshuffle() {
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  for (std::size_t i = order_.size(); i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(order_[i - 1], order_[pick(rng_)]);
  }
  pos_ = 0;
}

std::size_t BatchSampler::batches_per_epoch() const {
  return (index_.windows.size() + batch_size_ - 1) / batch_size_;
}

MaskedBatch BatchSampler::next() {
  if (order_.empty()) throw DataError("dataset '" + ds_->name + "' has no labeled windows");
  if (pos_ >= order_.size()) reshuffle();
  const std::size_t n = std::min(batch_size_, order_.size() - pos_);
  std::vector<Window> picked;
  for (std::size_t i = 0; i < n; ++i) picked.push_back(index_.windows[order_[pos_ + i]]);
  pos_ += n;
  return gather_batch(*ds_, picked, length_);
}

// ---- pre-training -------------------------------------------------------------

PretrainResult pretrain_predictor(const DomainDataset& source, const TrainConfig& config,
                                  const EpochCallback& on_epoch) {
  config.validate();
  BatchSampler sampler(source, config.window_length, config.window_stride, config.batch_size,
                       stream_seed(config.seed, kPredictorBatches));
  if (sampler.windows() == 0) throw DataError("source '" + source.name + "' has no labeled windows");
  std::mt19937_64 rng(stream_seed(config.seed, kPredictorInit));
  PretrainResult out{init_predictor(config.dims, rng), {}};
  AdamState adam;
  const auto t0 = std::chrono::steady_clock::now();
  for (std::size_t epoch = 1; epoch <= config.pretrain_epochs; ++epoch) {
    double total = 0.0;
    const std::size_t n = sampler.batches_per_epoch();
    for (std::size_t b = 0; b < n; ++b) {
      const MaskedBatch batch = sampler.next();
      ad::Tape tape;
      const VarMap theta = tape.leaves(out.theta);
      const Variable loss = masked_mse(predict_sequence(config.dims, theta, batch.steps()), batch.y, batch.mask);
      ParamSet grads = ad::values(ad::gradient(loss, theta));
      clip_global_norm({&grads}, config.clip_norm);
      adam_update(out.theta, grads, adam, config.pretrain_lr);
      total += loss.value().item();
    }
    out.epoch_loss.push_back(total / static_cast<double>(n));
    if (on_epoch) {
      EpochRecord r;
      r.phase = "pretrain_predictor";
      r.epoch = epoch;
      r.lower_loss = out.epoch_loss.back();
      r.wall_time = seconds_since(t0);
      on_epoch(r);
    }
  }
  return out;
}

TransformPretrainResult pretrain_transforms(const DomainDataset& source, const ParamSet& theta_star,
                                            const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  std::mt19937_64 rng(stream_seed(config.seed, kTransformInit));
  TransformPretrainResult out{init_transforms(config.dims, rng), {}};
  const auto groups = active_transform_groups(config.ablation);
  if (groups.empty()) return out;

  BatchSampler sampler(source, config.window_length, config.window_stride, config.batch_size,
                       stream_seed(config.seed, kTransformBatches));
  if (sampler.windows() == 0) throw DataError("source '" + source.name + "' has no labeled windows");
  const VarMap theta = ad::constants(theta_star);
  std::map<std::string, AdamState> moments;
  std::size_t above = 0;
  const auto t0 = std::chrono::steady_clock::now();
  for (std::size_t epoch = 1; epoch <= config.transform_epochs; ++epoch) {
    double total = 0.0, rec_x = 0.0, rec_h = 0.0;
    const std::size_t n = sampler.batches_per_epoch();
    for (std::size_t b = 0; b < n; ++b) {
      const MaskedBatch batch = sampler.next();
      ad::Tape tape;
      const TransformLeaves leaves(tape, out.transforms, config.ablation);
      const ReconstructionData rec = reconstruction_data(config.dims, theta, batch);
      const LossTerms terms =
          pretrain_transform_loss(config.dims, batch, theta, leaves.vars(), config.weights.eta, rec);
      VarMap wrt;
      for (const auto& [g, vars] : leaves.groups) wrt.insert(vars.begin(), vars.end());
      const VarMap grads = ad::gradient(terms.total, wrt, {.allow_unused = true});
      std::map<std::string, ParamSet> split;
      for (const auto& [g, vars] : leaves.groups) {
        for (const auto& [name, v] : vars) split[g].emplace(name, grads.at(name).value());
      }
      std::vector<ParamSet*> all;
      for (auto& [g, set] : split) all.push_back(&set);
      clip_global_norm(all, config.clip_norm);
      for (auto& [g, set] : split) adam_update(transform_group(out.transforms, g), set, moments[g], config.transform_lr);
      total += terms.total.value().item();
      if (terms.rec_input.defined()) rec_x += terms.rec_input.value().item();
      if (terms.rec_hidden.defined()) rec_h += terms.rec_hidden.value().item();
    }
    const double dn = static_cast<double>(n);
    out.epoch_rec.push_back((rec_x + rec_h) / dn);
    if (on_epoch) {
      EpochRecord r;
      r.phase = "pretrain_transforms";
      r.epoch = epoch;
      r.lower_loss = total / dn;
      r.rec_input = rec_x / dn;
      r.rec_hidden = rec_h / dn;
      r.wall_time = seconds_since(t0);
      on_epoch(r);
    }
    above = out.epoch_rec.back() > config.rec_ceiling ? above + 1 : 0;
    if (above >= config.rec_patience) {
      throw TrainingError("reconstruction loss " + std::to_string(out.epoch_rec.back()) + " stayed above the ceiling " +
                          std::to_string(config.rec_ceiling) + " for " + std::to_string(above) +
                          " epochs; increase eta");
    }
  }
  return out;
}

// ---- bi-level -------------------------------------------------------------------

VarMap unrolled_sgd(const std::function<Variable(const VarMap&)>& loss, const VarMap& theta0, double alpha,
                    std::size_t steps, bool create_graph, std::vector<double>* losses) {
  if (steps < 1) throw std::invalid_argument("unrolled_sgd: at least one step required");
  VarMap theta = theta0;
  for (std::size_t k = 0; k < steps; ++k) {
    if (create_graph) {
      const Variable l = loss(theta);
      if (losses) losses->push_back(l.value().item());
      const VarMap grads = ad::gradient(l, theta, {.create_graph = true});
      for (auto& [name, p] : theta) p = ad::sub(p, ad::scale(grads.at(name), alpha));
    } else {
      ad::Tape tape;
      ParamSet current = ad::values(theta);
      const VarMap vars = tape.leaves(current);
      const Variable l = loss(vars);
      if (losses) losses->push_back(l.value().item());
      const VarMap grads = ad::gradient(l, vars);
      for (auto& [name, p] : theta) p = ad::sub(p.detach(), ad::scale(grads.at(name), alpha));
    }
  }
  return theta;
}

VarMap lower_step(const ModelDims& dims, const VarMap& theta0, const TransformVars& tf, const MaskedBatch& source,
                  double lambda, double alpha, std::size_t steps, bool create_graph, std::vector<double>* losses) {
  if (create_graph) {
    return unrolled_sgd([&](const VarMap& th) { return lower_loss(dims, source, th, tf, lambda).total; }, theta0,
                        alpha, steps, true, losses);
  }
  // Detached transforms so the inner tapes never reach the caller's tape.
  const auto detach = [](const VarMap* m) {
    VarMap out;
    if (m) {
      for (const auto& [n, v] : *m) out.emplace(n, v.detach());
    }
    return out;
  };
  const VarMap px = detach(tf.input), ph = detach(tf.hidden);
  const TransformVars frozen{tf.input ? &px : nullptr, tf.hidden ? &ph : nullptr, nullptr, nullptr};
  return unrolled_sgd([&](const VarMap& th) { return lower_loss(dims, source, th, frozen, lambda).total; }, theta0,
                      alpha, steps, false, losses);
}

Hypergradient compute_hypergradient(const TrainState& state, const MaskedBatch& source, const MaskedBatch& aux,
                                    const TrainConfig& config) {
  const ModelDims& dims = state.dims;
  ad::Tape tape;
  const VarMap theta0 = tape.leaves(state.theta);
  const TransformLeaves leaves(tape, state.transforms, config.ablation);
  const TransformVars tv = leaves.vars();
  const bool exact = config.hypergrad_mode == HypergradMode::Exact;

  Hypergradient out;
  std::vector<double> losses;
  VarMap lower = lower_step(dims, theta0, tv, source, config.weights.lambda, config.alpha, config.inner_steps, exact,
                            &losses);
  out.lower_loss = losses.front();
  VarMap wrt_theta = theta0;
  if (!exact) {
    // First order: differentiate at theta_lower as if it were theta_0.
    ParamSet values = ad::values(lower);
    lower = tape.leaves(values);
    wrt_theta = lower;
  }
  const ReconstructionData rec = reconstruction_data(dims, theta0, source);
  out.upper = upper_loss(dims, aux, lower, tv, config.weights.gamma, rec);

  VarMap wrt = wrt_theta;
  for (const auto& [g, vars] : leaves.groups) wrt.insert(vars.begin(), vars.end());
  const VarMap grads = ad::gradient(out.upper.total, wrt, {.allow_unused = true});
  out.grads = split_grads(grads, leaves.groups, wrt_theta);
  out.theta_lower = ad::values(lower);
  return out;
}

namespace {

IterationReport report_of(const LossTerms& upper, double lower) {
  IterationReport r;
  r.applied = true;
  r.lower_loss = lower;
  r.upper_loss = upper.total.value().item();
  if (upper.rec_input.defined()) r.rec_input = upper.rec_input.value().item();
  if (upper.rec_hidden.defined()) r.rec_hidden = upper.rec_hidden.value().item();
  return r;
}

}  // namespace

IterationReport bilevel_iteration(TrainState& state, const MaskedBatch& source, const MaskedBatch& aux,
                                  const TrainConfig& config, const WarningCallback& warn) {
  source.validate();
  aux.validate();
  Hypergradient hg;
  try {
    hg = compute_hypergradient(state, source, aux, config);
  } catch (const NonFiniteError& e) {
    if (warn) warn("iteration " + std::to_string(state.iteration) + " skipped: " + e.what());
    return {};
  }
  if (config.commit_lower) state.theta = hg.theta_lower;
  apply_updates(state, hg.grads, config);
  return report_of(hg.upper, hg.lower_loss);
}

IterationReport joint_iteration(TrainState& state, const MaskedBatch& source, const MaskedBatch& aux,
                                const TrainConfig& config, const WarningCallback& warn) {
  source.validate();
  aux.validate();
  const ModelDims& dims = state.dims;
  std::map<std::string, ParamSet> grads;
  LossTerms terms;
  double lower_value = 0.0;
  try {
    ad::Tape tape;
    const VarMap theta = tape.leaves(state.theta);
    const TransformLeaves leaves(tape, state.transforms, config.ablation);
    const TransformVars tv = leaves.vars();
    const LossTerms lower = lower_loss(dims, source, theta, tv, config.weights.lambda);
    terms = upper_loss(dims, aux, theta, tv, config.weights.gamma, reconstruction_data(dims, theta, source));
    terms.total = ad::add(lower.total, terms.total);
    lower_value = lower.prediction.value().item();
    VarMap wrt = theta;
    for (const auto& [g, vars] : leaves.groups) wrt.insert(vars.begin(), vars.end());
    grads = split_grads(ad::gradient(terms.total, wrt, {.allow_unused = true}), leaves.groups, theta);
  } catch (const NonFiniteError& e) {
    if (warn) warn("iteration " + std::to_string(state.iteration) + " skipped: " + e.what());
    return {};
  }
  apply_updates(state, grads, config);
  return report_of(terms, lower_value);
}

// ---- orchestration ------------------------------------------------------------

double evaluate_rmse(const ModelDims& dims, const ParamSet& theta, const DomainDataset& ds) {
  const ErrorSum e = squared_errors(dims, theta, ds);
  if (e.count == 0.0) throw DataError("dataset '" + ds.name + "' has no observed labels to score");
  return std::sqrt(e.sum / e.count);
}

Pretrained pretrain_all(const DomainDataset& source, const TrainConfig& config, const TrainHooks& hooks) {
  config.validate();
  Pretrained out;
  if (config.ablation.no_pre) {
    std::mt19937_64 rng(stream_seed(config.seed, kPredictorInit));
    out.theta = init_predictor(config.dims, rng);
    return out;
  }
  out.theta = pretrain_predictor(source, config, hooks.on_epoch).theta;
  if (config.ablation.uses_input_transform()) {
    out.transforms = pretrain_transforms(source, out.theta, config, hooks.on_epoch).transforms;
  }
  return out;
}

TrainState train_great(const DomainDataset& source, const std::vector<DomainDataset>& aux, const TrainConfig& config,
                       const TrainHooks& hooks) {
  config.validate();
  std::size_t aux_labels = 0;
  for (const auto& a : aux) aux_labels += a.observed();
  if (aux_labels == 0) throw DataError("all auxiliary domains lack labels; the upper level is undefined");

  const Pretrained pre = hooks.pretrained ? *hooks.pretrained : pretrain_all(source, config, hooks);
  TrainState state;
  state.dims = config.dims;
  state.theta = pre.theta;
  validate_predictor(config.dims, state.theta);
  if (pre.transforms && config.ablation.uses_input_transform()) {
    state.transforms = *pre.transforms;
  } else {
    std::mt19937_64 rng(stream_seed(config.seed, kTransformInit));
    state.transforms = init_transforms(config.dims, rng);
  }
  if (!config.ablation.uses_hidden_transform()) {
    // Identity hidden transform: freshly initialized, never updated.
    std::mt19937_64 rng(stream_seed(config.seed, kTransformInit));
    const TransformParams ident = init_transforms(config.dims, rng);
    state.transforms.hidden = ident.hidden;
    state.transforms.hidden_rec = ident.hidden_rec;
  }

  BatchSampler source_batches(source, config.window_length, config.window_stride, config.batch_size,
                              stream_seed(config.seed, kSourceBatches));
  if (source_batches.windows() == 0) throw DataError("source '" + source.name + "' has no labeled windows");
  std::vector<BatchSampler> aux_batches;
  for (std::size_t i = 0; i < aux.size(); ++i) {
    BatchSampler s(aux[i], config.window_length, config.window_stride, config.batch_size,
                   stream_seed(config.seed, kAuxBatches + i));
    if (s.windows() > 0) aux_batches.push_back(std::move(s));
  }
  if (aux_batches.empty()) throw DataError("no auxiliary domain has a labeled window");

  const auto aux_rmse = [&](const ParamSet& theta) {
    ErrorSum total;
    for (const auto& a : aux) {
      const ErrorSum e = squared_errors(config.dims, theta, a);
      total.sum += e.sum;
      total.count += e.count;
    }
    return std::sqrt(total.sum / total.count);
  };

  state.best_metric = aux_rmse(state.theta);
  state.best_epoch = 0;
  state.best_theta = state.theta;
  state.best_transforms = state.transforms;
  const auto t0 = std::chrono::steady_clock::now();
  std::size_t stale = 0;
  for (std::size_t epoch = 1; epoch <= config.bilevel_epochs; ++epoch) {
    EpochRecord rec;
    rec.phase = config.ablation.no_bi ? "joint" : "bilevel";
    rec.epoch = epoch;
    std::size_t applied = 0;
    for (std::size_t it = 0; it < config.iterations_per_epoch; ++it) {
      const MaskedBatch sb = source_batches.next();
      const MaskedBatch ab = aux_batches[state.iteration % aux_batches.size()].next();
      const IterationReport r = config.ablation.no_bi ? joint_iteration(state, sb, ab, config, hooks.on_warning)
                                                      : bilevel_iteration(state, sb, ab, config, hooks.on_warning);
      if (!r.applied) {
        ++state.iteration;
        continue;
      }
      ++applied;
      rec.lower_loss += r.lower_loss;
      rec.upper_loss += r.upper_loss;
      rec.rec_input += r.rec_input;
      rec.rec_hidden += r.rec_hidden;
    }
    if (applied == 0) throw TrainingError("every iteration of epoch " + std::to_string(epoch) + " diverged");
    const double n = static_cast<double>(applied);
    rec.lower_loss /= n;
    rec.upper_loss /= n;
    rec.rec_input /= n;
    rec.rec_hidden /= n;
    rec.aux_rmse = aux_rmse(state.theta);
    rec.wall_time = seconds_since(t0);
    state.epoch = epoch;
    if (hooks.on_epoch) hooks.on_epoch(rec);
    if (rec.aux_rmse < state.best_metric) {
      state.best_metric = rec.aux_rmse;
      state.best_epoch = epoch;
      state.best_theta = state.theta;
      state.best_transforms = state.transforms;
      stale = 0;
    } else if (++stale >= config.patience) {
      break;
    }
  }
  state.theta = state.best_theta;
  state.transforms = state.best_transforms;
  return state;
}

std::vector<std::vector<double>> zero_shot_predict(const ModelDims& dims, const ParamSet& theta,
                                                   const DomainDataset& target) {
  std::string missing;
  for (std::size_t f = 0; f < kNumFeatures; ++f) {
    const bool ok = f < target.feature_names.size() && target.feature_names[f] == kFeatureNames[f];
    if (!ok) missing += (missing.empty() ? "" : ", ") + std::string(kFeatureNames[f]);
  }
  if (!missing.empty() || target.feature_names.size() != kNumFeatures) {
    throw DataError("dataset '" + target.name + "' does not match the feature schema; missing or misplaced: " +
                    (missing.empty() ? std::string("extra columns") : missing));
  }
  const VarMap params = ad::constants(theta);
  std::vector<std::vector<double>> out(target.segments.size());
  std::map<std::size_t, std::vector<Window>> by_length;
  for (std::size_t s = 0; s < target.segments.size(); ++s) {
    by_length[target.segments[s].length()].push_back({s, 0});
  }
  for (const auto& [T, windows] : by_length) {
    const MaskedBatch b = gather_batch(target, windows, T);
    const Tensor pred = predict_sequence(dims, params, b.steps()).value();
    for (std::size_t i = 0; i < windows.size(); ++i) {
      out[windows[i].segment].assign(pred.data().begin() + static_cast<long>(i * T),
                                     pred.data().begin() + static_cast<long>((i + 1) * T));
    }
  }
  return out;
}

}  // namespace great
