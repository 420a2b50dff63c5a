#include "great/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "great/version.hpp"
#include "json.hpp"

namespace great {

using ad::Variable;
using nlohmann::json;

namespace {

std::string number(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::vector<std::string> non_primary(const std::vector<std::string>& domains, const std::string& primary) {
  std::vector<std::string> out;
  for (const auto& d : domains) {
    if (d != primary) out.push_back(d);
  }
  return out;
}

std::set<std::string> as_set(const std::vector<std::string>& v) { return {v.begin(), v.end()}; }

std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (const auto& s : v) out += (out.empty() ? "" : ", ") + s;
  return out;
}

}  // namespace

// ---- metrics ----------------------------------------------------------------------

double rmse(std::span<const double> pred, std::span<const double> y, std::span<const std::uint8_t> mask) {
  if (pred.size() != y.size() || y.size() != mask.size()) {
    throw std::invalid_argument("rmse: prediction, label and mask lengths differ (" + std::to_string(pred.size()) +
                                ", " + std::to_string(y.size()) + ", " + std::to_string(mask.size()) + ")");
  }
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (!mask[i]) continue;
    const double d = pred[i] - y[i];
    sum += d * d;
    ++n;
  }
  if (n == 0) throw std::invalid_argument("rmse: mask selects no labels");
  return std::sqrt(sum / static_cast<double>(n));
}

Summary summarize(std::span<const double> values) {
  Summary s;
  if (values.empty()) return s;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  if (values.size() < 2) return s;
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  return s;
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

// ---- experiment spec ------------------------------------------------------------------

std::string setting_name(Setting s) {
  switch (s) {
    case Setting::Single:
      return "single";
    case Setting::Multi:
      return "multi";
    case Setting::BaselineLstm:
      return "baseline_lstm";
  }
  return "?";
}

Setting parse_setting(std::string_view name) {
  if (name == "single") return Setting::Single;
  if (name == "multi") return Setting::Multi;
  if (name == "baseline_lstm") return Setting::BaselineLstm;
  throw std::invalid_argument("unknown setting '" + std::string(name) + "' (expected single, multi or baseline_lstm)");
}

void ExperimentSpec::validate(const std::vector<std::string>& domains) const {
  const auto known = as_set(domains);
  if (!known.count(primary)) throw std::invalid_argument("primary domain '" + primary + "' is not in the benchmark");
  for (const auto* list : {&auxiliary, &targets}) {
    if (as_set(*list).size() != list->size()) throw std::invalid_argument("domain listed twice: " + join(*list));
    for (const auto& d : *list) {
      if (!known.count(d)) throw std::invalid_argument("domain '" + d + "' is not in the benchmark");
      if (d == primary) throw std::invalid_argument("primary domain '" + d + "' cannot be auxiliary or target");
    }
  }
  for (const auto& d : auxiliary) {
    if (as_set(targets).count(d)) throw std::invalid_argument("domain '" + d + "' is both auxiliary and target");
  }
  if (n_seeds == 0) throw std::invalid_argument("n_seeds must be at least 1");
  if (!(sparsity > 0.0 && sparsity <= 1.0)) throw std::invalid_argument("sparsity must lie in (0, 1]");
  if (attribution_steps != 0 && attribution_steps < 16) {
    throw std::invalid_argument("attribution needs at least 16 steps");
  }
  const auto others = non_primary(domains, primary);
  switch (setting) {
    case Setting::Single:
      if (auxiliary.size() != 1) throw std::invalid_argument("single setting needs exactly one auxiliary domain");
      if (targets.size() + 1 != others.size()) {
        throw std::invalid_argument("single setting: every remaining non-primary domain must be a target");
      }
      break;
    case Setting::Multi:
      if (targets.size() != 1 || auxiliary.size() + 1 != others.size()) {
        throw std::invalid_argument("multi setting: all but one non-primary domain are auxiliary, the other is the target");
      }
      break;
    case Setting::BaselineLstm:
      if (!auxiliary.empty()) throw std::invalid_argument("baseline_lstm takes no auxiliary domains");
      if (targets.empty()) throw std::invalid_argument("baseline_lstm needs at least one target");
      break;
  }
  config.validate();
}

std::vector<ExperimentSpec> single_rotations(const std::vector<std::string>& domains, const std::string& primary,
                                             const ExperimentSpec& base) {
  std::vector<ExperimentSpec> out;
  const auto others = non_primary(domains, primary);
  for (const auto& aux : others) {
    ExperimentSpec s = base;
    s.setting = Setting::Single;
    s.primary = primary;
    s.auxiliary = {aux};
    s.targets.clear();
    for (const auto& t : others) {
      if (t != aux) s.targets.push_back(t);
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<ExperimentSpec> multi_rotations(const std::vector<std::string>& domains, const std::string& primary,
                                            const ExperimentSpec& base) {
  std::vector<ExperimentSpec> out;
  const auto others = non_primary(domains, primary);
  for (const auto& held_out : others) {
    ExperimentSpec s = base;
    s.setting = Setting::Multi;
    s.primary = primary;
    s.targets = {held_out};
    s.auxiliary.clear();
    for (const auto& a : others) {
      if (a != held_out) s.auxiliary.push_back(a);
    }
    out.push_back(std::move(s));
  }
  return out;
}

// ---- benchmark data ---------------------------------------------------------------------

const DomainDataset& BenchmarkData::domain(const std::string& name) const {
  const auto it = domains.find(name);
  if (it == domains.end()) throw DataError("benchmark has no domain '" + name + "'");
  return it->second;
}

std::vector<std::string> BenchmarkData::names() const {
  std::vector<std::string> out;
  for (const auto& d : manifest.domains) out.push_back(d.name);
  return out;
}

BenchmarkData generate_benchmark(const BenchmarkManifest& m) {
  m.validate();
  BenchmarkData out;
  out.manifest = m;
  out.manifest_hash = hash_hex(fnv1a(manifest_to_string(m)));
  for (const auto& d : m.domains) out.domains.emplace(d.name, generate_domain(m, d));
  return out;
}

BenchmarkData load_benchmark(const BenchmarkManifest& m, const std::filesystem::path& dir) {
  m.validate();
  BenchmarkData out;
  out.manifest = m;
  out.manifest_hash = hash_hex(fnv1a(manifest_to_string(m)));
  for (const auto& d : m.domains) out.domains.emplace(d.name, load_csv(dir / (d.name + ".csv"), d.name, d.role));
  return out;
}

void write_benchmark(const BenchmarkData& data, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());
  for (const auto& [name, ds] : data.domains) write_csv(ds, dir / (name + ".csv"));
  write_text(dir / "manifest.json", manifest_to_string(data.manifest));
}

PreparedDomains prepare_domains(const BenchmarkData& data, const std::string& primary,
                                const std::vector<std::string>& aux, double sparsity, std::uint64_t seed) {
  const DateRange train = data.manifest.train_range();
  PreparedDomains out;
  const DomainDataset source = slice_dates(data.domain(primary), train);
  out.stats = fit_normalization(source);
  out.source = apply_normalization(source, out.stats);
  for (const auto& name : aux) {
    const DomainDataset a = apply_normalization(slice_dates(data.domain(name), train), out.stats);
    out.aux.push_back(subsample_labels(a, sparsity, fnv1a(name + "#" + std::to_string(seed))));
  }
  return out;
}

double target_rmse(const BenchmarkData& data, const std::string& name, const NormStats& stats, const ModelDims& dims,
                   const ParamSet& theta) {
  const DomainDataset raw = slice_dates(data.domain(name), data.manifest.test_range());
  const auto preds = zero_shot_predict(dims, theta, apply_normalization(raw, stats));
  std::vector<double> p, y;
  std::vector<std::uint8_t> m;
  for (std::size_t s = 0; s < raw.segments.size(); ++s) {
    const auto& seg = raw.segments[s];
    for (std::size_t t = 0; t < seg.length(); ++t) {
      p.push_back(stats.denormalize_label(preds[s][t]));
      y.push_back(seg.labels[t]);
      m.push_back(seg.mask[t]);
    }
  }
  if (std::find(m.begin(), m.end(), 1) == m.end()) {
    throw DataError("target '" + name + "' has no observed labels in the test window");
  }
  return rmse(p, y, m);
}

// ---- pre-training cache -------------------------------------------------------------------

namespace {

std::string source_key(const DomainDataset& source) { return source.name + "@" + hash_hex(fnv1a(to_csv(source))); }

std::string predictor_key(const DomainDataset& source, const TrainConfig& c) {
  TrainConfig k;
  k.seed = c.seed;
  k.dims = c.dims;
  k.pretrain_lr = c.pretrain_lr;
  k.pretrain_epochs = c.pretrain_epochs;
  k.batch_size = c.batch_size;
  k.window_length = c.window_length;
  k.window_stride = c.window_stride;
  k.clip_norm = c.clip_norm;
  return source_key(source) + "\n" + config_to_text(k);
}

std::string transform_key(const DomainDataset& source, const TrainConfig& c) {
  TrainConfig k;
  k.transform_lr = c.transform_lr;
  k.transform_epochs = c.transform_epochs;
  k.weights.eta = c.weights.eta;
  k.rec_ceiling = c.rec_ceiling;
  k.rec_patience = c.rec_patience;
  k.ablation.no_g_hidden = c.ablation.no_g_hidden;
  return predictor_key(source, c) + config_to_text(k);
}

}  // namespace

namespace {

void replay(const std::vector<EpochRecord>& log, const EpochCallback& on_epoch) {
  if (!on_epoch) return;
  for (const auto& r : log) on_epoch(r);
}

}  // namespace

const ParamSet& PretrainCache::predictor(const DomainDataset& source, const TrainConfig& config,
                                         const EpochCallback& on_epoch) {
  const std::string key = predictor_key(source, config);
  auto it = predictors_.find(key);
  if (it == predictors_.end()) {
    std::vector<EpochRecord> log;
    ParamSet theta = pretrain_predictor(source, config, [&](const EpochRecord& r) { log.push_back(r); }).theta;
    it = predictors_.emplace(key, Entry<ParamSet>{std::move(theta), std::move(log)}).first;
  }
  replay(it->second.log, on_epoch);
  return it->second.value;
}

const TransformParams& PretrainCache::transforms(const DomainDataset& source, const TrainConfig& config,
                                                 const EpochCallback& on_epoch) {
  const std::string key = transform_key(source, config);
  auto it = transforms_.find(key);
  if (it == transforms_.end()) {
    const ParamSet& theta = predictor(source, config);
    std::vector<EpochRecord> log;
    TransformParams tf =
        pretrain_transforms(source, theta, config, [&](const EpochRecord& r) { log.push_back(r); }).transforms;
    it = transforms_.emplace(key, Entry<TransformParams>{std::move(tf), std::move(log)}).first;
  }
  replay(it->second.log, on_epoch);
  return it->second.value;
}

Pretrained PretrainCache::pretrained(const DomainDataset& source, const TrainConfig& config,
                                     const EpochCallback& on_epoch) {
  if (config.ablation.no_pre) return pretrain_all(source, config);
  Pretrained out;
  out.theta = predictor(source, config, on_epoch);
  if (config.ablation.uses_input_transform()) out.transforms = transforms(source, config, on_epoch);
  return out;
}

// ---- run_experiment --------------------------------------------------------------------

const TargetMetrics& MetricsReport::target(const std::string& name) const {
  for (const auto& t : targets) {
    if (t.name == name) return t;
  }
  throw std::invalid_argument("report has no target '" + name + "'");
}

std::vector<double> MetricsReport::all_rmse() const {
  std::vector<double> out;
  for (const auto& t : targets) out.insert(out.end(), t.per_seed.begin(), t.per_seed.end());
  return out;
}

void aggregate(MetricsReport& report) {
  for (auto& t : report.targets) {
    t.per_seed.clear();
    for (const auto& s : report.seeds) {
      if (const auto it = s.target_rmse.find(t.name); s.error.empty() && it != s.target_rmse.end()) {
        t.per_seed.push_back(it->second);
      }
    }
    const Summary sum = summarize(t.per_seed);
    t.mean = sum.mean;
    t.std = sum.std;
  }
}

MetricsReport run_experiment(const ExperimentSpec& spec, const BenchmarkData& data, const ExperimentOptions& options) {
  spec.validate(data.names());
  PretrainCache local;
  PretrainCache& cache = options.cache ? *options.cache : local;
  const auto log = [&](const std::string& msg) {
    if (options.log) options.log(msg);
  };
  const bool baseline = spec.setting == Setting::BaselineLstm;

  MetricsReport report;
  report.setting = setting_name(spec.setting);
  report.primary = spec.primary;
  report.auxiliary = spec.auxiliary;
  report.sparsity = spec.sparsity;
  for (const auto& t : spec.targets) report.targets.push_back({t, {}, 0.0, 0.0});
  report.provenance.config = config_to_text(spec.config);
  report.provenance.config_hash = hash_hex(fnv1a(report.provenance.config));
  report.provenance.manifest_hash = data.manifest_hash;
  report.provenance.seed = spec.config.seed;
  report.provenance.version = kFrameworkVersion;

  std::map<std::pair<std::string, std::string>, std::array<double, kNumFeatures>> attribution_sum;  // (target, model)
  std::size_t attributed = 0;

  for (std::size_t i = 0; i < spec.n_seeds; ++i) {
    TrainConfig config = spec.config;
    config.seed = spec.config.seed + i;
    SeedRun run;
    run.seed = config.seed;
    std::vector<CurveRow> curve;
    const EpochCallback collect = [&](const EpochRecord& r) {
      curve.push_back({config.seed, r.phase, r.epoch, r.lower_loss, r.upper_loss, r.rec_input, r.rec_hidden,
                       r.aux_rmse});
    };
    const PreparedDomains prep = prepare_domains(data, spec.primary, spec.auxiliary, spec.sparsity, config.seed);
    try {
      Checkpoint model{config.dims, config.seed, kFrameworkVersion, {}, {}};
      if (baseline) {
        model.predictor = cache.predictor(prep.source, config, collect);
        std::mt19937_64 rng(0);
        model.transforms = init_transforms(config.dims, rng);
      } else {
        const Pretrained pre = cache.pretrained(prep.source, config, collect);
        TrainHooks hooks;
        hooks.on_epoch = collect;
        hooks.on_warning = [&](const std::string& w) { log("seed " + std::to_string(config.seed) + ": " + w); };
        hooks.pretrained = &pre;
        const TrainState state = train_great(prep.source, prep.aux, config, hooks);
        model.predictor = state.theta;
        model.transforms = state.transforms;
        run.best_epoch = state.best_epoch;
        run.best_aux_rmse = state.best_metric;
      }
      for (const auto& t : spec.targets) {
        run.target_rmse[t] = target_rmse(data, t, prep.stats, config.dims, model.predictor);
      }
      if (spec.attribution_steps > 0) {
        for (const auto& t : spec.targets) {
          const DomainDataset test =
              apply_normalization(slice_dates(data.domain(t), data.manifest.test_range()), prep.stats);
          const auto add = [&](const std::string& label, const ParamSet& theta) {
            const auto a = dataset_attribution(config.dims, theta, test, spec.attribution_steps);
            auto& acc = attribution_sum.try_emplace({t, label}).first->second;
            for (std::size_t f = 0; f < kNumFeatures; ++f) acc[f] += a[f];
          };
          if (!baseline) add("great", model.predictor);
          add("lstm", cache.predictor(prep.source, config));
        }
        ++attributed;
      }
      if (options.on_model) options.on_model(config.seed, model);
      std::string line = "seed " + std::to_string(config.seed) + ":";
      for (const auto& [t, v] : run.target_rmse) line += " " + t + "=" + number(v);
      log(line);
    } catch (const TrainingError& e) {
      run.error = e.what();
      log("seed " + std::to_string(config.seed) + " failed: " + run.error);
    } catch (const NonFiniteError& e) {
      run.error = e.what();
      log("seed " + std::to_string(config.seed) + " failed: " + run.error);
    }
    run.epochs_run = curve.size();
    report.curves.insert(report.curves.end(), curve.begin(), curve.end());
    report.seeds.push_back(std::move(run));
  }

  for (const auto& [key, sum] : attribution_sum) {
    AttributionColumn col{key.second, key.first, {}};
    for (std::size_t f = 0; f < kNumFeatures; ++f) col.values[f] = sum[f] / static_cast<double>(attributed);
    report.attribution.push_back(col);
  }
  aggregate(report);
  return report;
}

// ---- integrated gradients --------------------------------------------------------------

std::array<double, kNumFeatures> IgResult::per_feature() const {
  if (attribution.cols() != kNumFeatures) {
    throw std::invalid_argument("per_feature: attribution has " + std::to_string(attribution.cols()) + " features");
  }
  std::array<double, kNumFeatures> out{};
  for (std::size_t t = 0; t < attribution.rows(); ++t) {
    for (std::size_t f = 0; f < kNumFeatures; ++f) out[f] += attribution.at(t, f);
  }
  return out;
}

double IgResult::completeness_error() const {
  double total = 0.0;
  for (double v : attribution.data()) total += v;
  const double delta = f_input - f_baseline;
  const double gap = std::abs(total - delta);
  return delta == 0.0 ? gap : gap / std::abs(delta);
}

namespace {

// Composite Simpson weights over steps + 1 equally spaced points on [0, 1]; for an odd
// step count the last three intervals use the 3/8 rule.
double path_weight(std::size_t k, std::size_t steps) {
  const std::size_t simpson_end = steps % 2 == 0 ? steps : steps - 3;
  const double h = 1.0 / static_cast<double>(steps);
  if (k > simpson_end) return (k == steps ? 3.0 : 9.0) / 8.0 * h;
  double w = (k == 0 || k == simpson_end) ? 1.0 : (k % 2 == 1 ? 4.0 : 2.0);
  w *= h / 3.0;
  if (k == simpson_end && k != steps) w += 3.0 / 8.0 * h;
  return w;
}

}  // namespace

IgResult integrated_gradients(const SequenceFunction& f, const Tensor& x, const Tensor& baseline, std::size_t steps,
                              std::size_t chunk) {
  if (x.rank() != 2 || x.shape() != baseline.shape()) {
    throw std::invalid_argument("integrated_gradients: input " + shape_string(x.shape()) + " and baseline " +
                                shape_string(baseline.shape()) + " must both be [T, F]");
  }
  if (steps < 16) throw std::invalid_argument("integrated_gradients: at least 16 steps required");
  if (chunk == 0) throw std::invalid_argument("integrated_gradients: chunk must be positive");
  const std::size_t T = x.shape()[0], F = x.shape()[1];
  const std::size_t points = steps + 1;
  IgResult out{Tensor({T, F}), 0.0, 0.0};
  Tensor weighted_grad({T, F});

  for (std::size_t first = 0; first < points; first += chunk) {
    const std::size_t B = std::min(chunk, points - first);
    ad::Tape tape;
    std::vector<Variable> leaves;
    leaves.reserve(T);
    for (std::size_t t = 0; t < T; ++t) {
      Tensor step({B, F});
      for (std::size_t b = 0; b < B; ++b) {
        const double a = static_cast<double>(first + b) / static_cast<double>(steps);
        for (std::size_t j = 0; j < F; ++j) step.at(b, j) = baseline.at(t, j) + a * (x.at(t, j) - baseline.at(t, j));
      }
      leaves.push_back(tape.leaf(std::move(step)));
    }
    const Variable values = f(leaves);
    if (values.value().size() != B) {
      throw std::invalid_argument("integrated_gradients: function returned " + shape_string(values.shape()) +
                                  " for " + std::to_string(B) + " path points");
    }
    const auto grads = ad::gradient(ad::sum(values), std::span<const Variable>(leaves), {.allow_unused = true});
    for (std::size_t b = 0; b < B; ++b) {
      const std::size_t k = first + b;
      const double w = path_weight(k, steps);
      if (k == 0) out.f_baseline = values.value()[b];
      if (k == steps) out.f_input = values.value()[b];
      for (std::size_t t = 0; t < T; ++t) {
        const Tensor& g = grads[t].value();
        for (std::size_t j = 0; j < F; ++j) weighted_grad.at(t, j) += w * g.at(b, j);
      }
    }
  }
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t j = 0; j < F; ++j) out.attribution.at(t, j) = (x.at(t, j) - baseline.at(t, j)) * weighted_grad.at(t, j);
  }
  return out;
}

IgResult integrated_gradients(const ModelDims& dims, const ParamSet& theta, const Tensor& x, std::size_t steps) {
  validate_predictor(dims, theta);
  const ad::VarMap params = ad::constants(theta);
  const std::size_t T = x.shape().at(0);
  const Variable averager = Variable::constant(Tensor({T, 1}, 1.0 / static_cast<double>(T)));
  const SequenceFunction f = [&](const std::vector<Variable>& steps_in) {
    return ad::matmul(predict_sequence(dims, params, steps_in), averager);
  };
  return integrated_gradients(f, x, Tensor(x.shape()), steps);
}

std::array<double, kNumFeatures> dataset_attribution(const ModelDims& dims, const ParamSet& theta,
                                                     const DomainDataset& ds, std::size_t steps) {
  if (ds.segments.empty()) throw DataError("dataset '" + ds.name + "' has no segments to attribute");
  std::array<double, kNumFeatures> out{};
  for (const auto& seg : ds.segments) {
    const Tensor x({seg.length(), kNumFeatures}, seg.features);
    const auto a = integrated_gradients(dims, theta, x, steps).per_feature();
    for (std::size_t f = 0; f < kNumFeatures; ++f) out[f] += std::abs(a[f]);
  }
  for (auto& v : out) v /= static_cast<double>(ds.segments.size());
  return out;
}

// ---- reports ---------------------------------------------------------------------------

std::string metrics_to_json(const MetricsReport& r) {
  json seeds = json::array();
  for (const auto& s : r.seeds) {
    seeds.push_back({{"seed", s.seed},
                     {"error", s.error},
                     {"target_rmse", s.target_rmse},
                     {"epochs_run", s.epochs_run},
                     {"best_epoch", s.best_epoch},
                     {"best_aux_rmse", s.best_aux_rmse}});
  }
  json targets = json::array();
  for (const auto& t : r.targets) {
    targets.push_back({{"name", t.name}, {"per_seed", t.per_seed}, {"mean", t.mean}, {"std", t.std}});
  }
  json curves = json::array();
  for (const auto& c : r.curves) {
    curves.push_back({{"seed", c.seed},
                      {"phase", c.phase},
                      {"epoch", c.epoch},
                      {"lower_loss", c.lower_loss},
                      {"upper_loss", c.upper_loss},
                      {"rec_input", c.rec_input},
                      {"rec_hidden", c.rec_hidden},
                      {"aux_rmse", c.aux_rmse}});
  }
  json attribution = json::array();
  for (const auto& a : r.attribution) {
    attribution.push_back({{"model", a.model}, {"target", a.target}, {"values", a.values}});
  }
  const json doc = {{"setting", r.setting},
                    {"primary", r.primary},
                    {"auxiliary", r.auxiliary},
                    {"sparsity", r.sparsity},
                    {"seeds", seeds},
                    {"targets", targets},
                    {"curves", curves},
                    {"attribution", attribution},
                    {"provenance",
                     {{"config_hash", r.provenance.config_hash},
                      {"manifest_hash", r.provenance.manifest_hash},
                      {"seed", r.provenance.seed},
                      {"version", r.provenance.version},
                      {"config", r.provenance.config}}}};
  return doc.dump(2) + "\n";
}

MetricsReport metrics_from_json(const std::string& text) {
  MetricsReport r;
  try {
    const json doc = json::parse(text);
    r.setting = doc.at("setting").get<std::string>();
    r.primary = doc.at("primary").get<std::string>();
    r.auxiliary = doc.at("auxiliary").get<std::vector<std::string>>();
    r.sparsity = doc.at("sparsity").get<double>();
    for (const auto& s : doc.at("seeds")) {
      r.seeds.push_back({s.at("seed").get<std::uint64_t>(), s.at("error").get<std::string>(),
                         s.at("target_rmse").get<std::map<std::string, double>>(),
                         s.at("epochs_run").get<std::size_t>(), s.at("best_epoch").get<std::size_t>(),
                         s.at("best_aux_rmse").get<double>()});
    }
    for (const auto& t : doc.at("targets")) {
      r.targets.push_back({t.at("name").get<std::string>(), t.at("per_seed").get<std::vector<double>>(),
                           t.at("mean").get<double>(), t.at("std").get<double>()});
    }
    for (const auto& c : doc.at("curves")) {
      r.curves.push_back({c.at("seed").get<std::uint64_t>(), c.at("phase").get<std::string>(),
                          c.at("epoch").get<std::size_t>(), c.at("lower_loss").get<double>(),
                          c.at("upper_loss").get<double>(), c.at("rec_input").get<double>(),
                          c.at("rec_hidden").get<double>(), c.at("aux_rmse").get<double>()});
    }
    for (const auto& a : doc.at("attribution")) {
      r.attribution.push_back({a.at("model").get<std::string>(), a.at("target").get<std::string>(),
                               a.at("values").get<std::array<double, kNumFeatures>>()});
    }
    const json& p = doc.at("provenance");
    r.provenance = {p.at("config_hash").get<std::string>(), p.at("manifest_hash").get<std::string>(),
                    p.at("seed").get<std::uint64_t>(), p.at("version").get<std::string>(),
                    p.at("config").get<std::string>()};
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed metrics report: ") + e.what());
  }
  return r;
}

std::string curves_csv(const MetricsReport& r) {
  std::string out = "seed,phase,epoch,lower_loss,upper_loss,rec_input,rec_hidden,aux_rmse\n";
  for (const auto& c : r.curves) {
    out += std::to_string(c.seed) + "," + c.phase + "," + std::to_string(c.epoch) + "," + number(c.lower_loss) + "," +
           number(c.upper_loss) + "," + number(c.rec_input) + "," + number(c.rec_hidden) + "," + number(c.aux_rmse) +
           "\n";
  }
  return out;
}

std::string attribution_csv(const MetricsReport& r) {
  std::string out = "feature";
  for (const auto& a : r.attribution) out += "," + a.model + "/" + a.target;
  out += "\n";
  for (std::size_t f = 0; f < kNumFeatures; ++f) {
    out += std::string(kFeatureNames[f]);
    for (const auto& a : r.attribution) out += "," + number(a.values[f]);
    out += "\n";
  }
  return out;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  out.flush();
  if (!out) throw DataError("write failed for " + path.string());
}

void emit_report(const MetricsReport& report, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw DataError("cannot create " + out_dir.string() + ": " + ec.message());
  write_text(out_dir / "metrics.json", metrics_to_json(report));
  write_text(out_dir / "curves.csv", curves_csv(report));
  write_text(out_dir / "attribution.csv", attribution_csv(report));
}

MetricsReport load_report(const std::filesystem::path& out_dir) {
  return metrics_from_json(read_text(out_dir / "metrics.json"));
}

}  // namespace great
