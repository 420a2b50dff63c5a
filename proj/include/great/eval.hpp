#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "great/checkpoint.hpp"
#include "great/config.hpp"
#include "great/data.hpp"
#include "great/trainer.hpp"

namespace great {

/// sqrt of the mean squared error over entries where mask is set.
double rmse(std::span<const double> pred, std::span<const double> y, std::span<const std::uint8_t> mask);

/// Mean and sample standard deviation (0 for a single value).
struct Summary {
  double mean = 0.0;
  double std = 0.0;
};
Summary summarize(std::span<const double> values);

double median(std::vector<double> values);

enum class Setting { Single, Multi, BaselineLstm };

std::string setting_name(Setting s);
Setting parse_setting(std::string_view name);

struct ExperimentSpec {
  Setting setting = Setting::Single;
  std::string primary;
  std::vector<std::string> auxiliary;
  std::vector<std::string> targets;
  double sparsity = 0.01;
  std::size_t n_seeds = 5;
  TrainConfig config;           // seeds are config.seed, config.seed + 1, ...
  std::size_t attribution_steps = 0;  // 0 disables attribution

  /// Checks the protocol against every domain of the benchmark.
  void validate(const std::vector<std::string>& domains) const;
};

/// Each non-primary domain in turn as the single auxiliary; the rest are targets.
std::vector<ExperimentSpec> single_rotations(const std::vector<std::string>& domains, const std::string& primary,
                                             const ExperimentSpec& base);
/// Each non-primary domain in turn held out as the sole target; the rest are auxiliaries.
std::vector<ExperimentSpec> multi_rotations(const std::vector<std::string>& domains, const std::string& primary,
                                            const ExperimentSpec& base);

/// Raw (degC) datasets of one benchmark together with its date split.
struct BenchmarkData {
  BenchmarkManifest manifest;
  std::map<std::string, DomainDataset> domains;
  std::string manifest_hash;

  const DomainDataset& domain(const std::string& name) const;
  std::vector<std::string> names() const;  // manifest order
};

BenchmarkData generate_benchmark(const BenchmarkManifest& m);
/// Reads `<dir>/<name>.csv` for every domain of the manifest.
BenchmarkData load_benchmark(const BenchmarkManifest& m, const std::filesystem::path& dir);
void write_benchmark(const BenchmarkData& data, const std::filesystem::path& dir);

/// Normalized training inputs derived from a benchmark for one seed.
struct PreparedDomains {
  NormStats stats;                  // fit on the primary training window
  DomainDataset source;             // normalized
  std::vector<DomainDataset> aux;   // normalized, labels subsampled
};

PreparedDomains prepare_domains(const BenchmarkData& data, const std::string& primary,
                                const std::vector<std::string>& aux, double sparsity, std::uint64_t seed);

/// Normalized test window of `name`, scored in degC against the raw labels.
double target_rmse(const BenchmarkData& data, const std::string& name, const NormStats& stats, const ModelDims& dims,
                   const ParamSet& theta);

/// Pre-training results reused across runs that share the source data and the
/// pre-training part of the configuration.
class PretrainCache {
 public:
  /// `on_epoch` sees the pre-training log whether or not the result was cached.
  const ParamSet& predictor(const DomainDataset& source, const TrainConfig& config, const EpochCallback& on_epoch = {});
  const TransformParams& transforms(const DomainDataset& source, const TrainConfig& config,
                                    const EpochCallback& on_epoch = {});
  /// What pretrain_all would return.
  Pretrained pretrained(const DomainDataset& source, const TrainConfig& config, const EpochCallback& on_epoch = {});

 private:
  template <class T>
  struct Entry {
    T value;
    std::vector<EpochRecord> log;
  };
  std::map<std::string, Entry<ParamSet>> predictors_;
  std::map<std::string, Entry<TransformParams>> transforms_;
};

struct SeedRun {
  std::uint64_t seed = 0;
  std::string error;  // empty on success
  std::map<std::string, double> target_rmse;  // degC
  std::size_t epochs_run = 0;  // every phase, one curve row each
  std::size_t best_epoch = 0;
  double best_aux_rmse = 0.0;

  friend bool operator==(const SeedRun&, const SeedRun&) = default;
};

struct TargetMetrics {
  std::string name;
  std::vector<double> per_seed;
  double mean = 0.0;
  double std = 0.0;

  friend bool operator==(const TargetMetrics&, const TargetMetrics&) = default;
};

struct CurveRow {
  std::uint64_t seed = 0;
  std::string phase;
  std::size_t epoch = 0;
  double lower_loss = 0.0;
  double upper_loss = 0.0;
  double rec_input = 0.0;
  double rec_hidden = 0.0;
  double aux_rmse = 0.0;

  friend bool operator==(const CurveRow&, const CurveRow&) = default;
};

/// Mean absolute attribution per feature for one model on one target.
struct AttributionColumn {
  std::string model;
  std::string target;
  std::array<double, kNumFeatures> values{};

  friend bool operator==(const AttributionColumn&, const AttributionColumn&) = default;
};

struct Provenance {
  std::string config_hash;
  std::string manifest_hash;
  std::uint64_t seed = 0;
  std::string version;
  std::string config;  // full key = value text

  friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct MetricsReport {
  std::string setting;
  std::string primary;
  std::vector<std::string> auxiliary;
  double sparsity = 0.0;
  std::vector<SeedRun> seeds;
  std::vector<TargetMetrics> targets;
  std::vector<CurveRow> curves;
  std::vector<AttributionColumn> attribution;
  Provenance provenance;

  const TargetMetrics& target(const std::string& name) const;
  /// Every successful per-seed target RMSE.
  std::vector<double> all_rmse() const;

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

/// Recomputes per-target mean/std from the stored per-seed values.
void aggregate(MetricsReport& report);

struct ExperimentOptions {
  PretrainCache* cache = nullptr;
  std::function<void(const std::string&)> log;
  /// Called with each seed's final model.
  std::function<void(std::uint64_t seed, const Checkpoint&)> on_model;
};

MetricsReport run_experiment(const ExperimentSpec& spec, const BenchmarkData& data,
                             const ExperimentOptions& options = {});

/// Integrated Gradients of a scalar sequence function.
struct IgResult {
  Tensor attribution;  // [T, F]
  double f_input = 0.0;
  double f_baseline = 0.0;

  std::array<double, kNumFeatures> per_feature() const;  // summed over time
  double completeness_error() const;                     // relative
};

/// `f` maps T steps of shape [B, F] to one value per row, shape [B] or [B, 1].
using SequenceFunction = std::function<ad::Variable(const std::vector<ad::Variable>&)>;

/// Trapezoid rule over `steps` intervals of the straight path from `baseline` to `x`
/// ([T, F] each), evaluated in chunks of `chunk` path points.
IgResult integrated_gradients(const SequenceFunction& f, const Tensor& x, const Tensor& baseline, std::size_t steps,
                              std::size_t chunk = 64);

/// Attribution of the mean predicted sequence, baseline all zeros.
IgResult integrated_gradients(const ModelDims& dims, const ParamSet& theta, const Tensor& x, std::size_t steps);

/// Mean absolute per-feature attribution over every segment of a normalized dataset.
std::array<double, kNumFeatures> dataset_attribution(const ModelDims& dims, const ParamSet& theta,
                                                     const DomainDataset& ds, std::size_t steps);

std::string metrics_to_json(const MetricsReport& report);
MetricsReport metrics_from_json(const std::string& text);
std::string curves_csv(const MetricsReport& report);
std::string attribution_csv(const MetricsReport& report);

/// metrics.json, curves.csv and attribution.csv in `out_dir` (created if needed).
void emit_report(const MetricsReport& report, const std::filesystem::path& out_dir);
MetricsReport load_report(const std::filesystem::path& out_dir);

/// Text file helpers; failures raise DataError.
std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace great
