#pragma once

#include <array>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "great/objectives.hpp"

namespace great {

/// Malformed or unusable input data.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::array<std::string_view, kNumFeatures> kFeatureNames = {"slp",    "elev",   "wid", "airtemp",
                                                                             "rad",    "precip", "evap"};
inline constexpr std::size_t kAirtempFeature = 3;
inline constexpr std::string_view kCsvHeader = "segment_id,date,slp,elev,wid,airtemp,rad,precip,evap,wtemp";

using Date = std::chrono::sys_days;

/// ISO-8601 "YYYY-MM-DD".
Date parse_date(std::string_view text);
std::string format_date(Date d);

struct DateRange {
  Date first;
  Date last;  // inclusive

  bool contains(Date d) const { return first <= d && d <= last; }
};

/// One river segment: a contiguous daily series of features and sparse labels.
struct SegmentSeries {
  std::string id;
  Date start;
  std::vector<double> features;  // T x 7, row-major
  std::vector<double> labels;    // T, meaningful where mask is 1
  std::vector<std::uint8_t> mask;

  std::size_t length() const { return labels.size(); }
  Date date(std::size_t t) const { return start + std::chrono::days(static_cast<long>(t)); }
  double feature(std::size_t t, std::size_t f) const { return features[t * kNumFeatures + f]; }
  std::size_t observed() const;
};

enum class DomainRole { PrimarySource, AuxiliaryReference, Target };

std::string role_name(DomainRole role);
DomainRole parse_role(std::string_view name);

struct DomainDataset {
  std::string name;
  DomainRole role = DomainRole::Target;
  std::vector<std::string> feature_names{kFeatureNames.begin(), kFeatureNames.end()};
  std::vector<SegmentSeries> segments;

  std::size_t observed() const;
};

/// Parses the bit-exact CSV schema; rows of a segment may appear in any date order.
DomainDataset load_csv(const std::filesystem::path& path, std::string name = {},
                       DomainRole role = DomainRole::Target);
DomainDataset parse_csv(std::string_view text, std::string name = {}, DomainRole role = DomainRole::Target);
void write_csv(const DomainDataset& ds, const std::filesystem::path& path);
std::string to_csv(const DomainDataset& ds);

/// Keeps the days inside `range`; segments with no day inside are dropped.
DomainDataset slice_dates(const DomainDataset& ds, DateRange range);

struct NormStats {
  std::array<double, kNumFeatures> feature_mean{};
  std::array<double, kNumFeatures> feature_std{};
  double label_mean = 0.0;
  double label_std = 1.0;

  double normalize_label(double y) const { return (y - label_mean) / label_std; }
  double denormalize_label(double z) const { return z * label_std + label_mean; }
  friend bool operator==(const NormStats&, const NormStats&) = default;
};

/// Feature statistics over every day, label statistics over observed days.
NormStats fit_normalization(const DomainDataset& ds);
DomainDataset apply_normalization(const DomainDataset& ds, const NormStats& stats);
DomainDataset invert_normalization(const DomainDataset& ds, const NormStats& stats);

/// Keeps a uniformly random subset of round(fraction * observed) labels.
DomainDataset subsample_labels(const DomainDataset& ds, double fraction, std::uint64_t seed);

struct Window {
  std::size_t segment;
  std::size_t start;
};

struct WindowIndex {
  std::vector<Window> windows;
  std::size_t skipped_segments = 0;  // shorter than the window length
};

/// Windows at offsets 0, stride, 2*stride, ... plus one aligned to the series end
/// when the stride leaves a tail. Windows without an observed label are dropped.
WindowIndex make_windows(const DomainDataset& ds, std::size_t length, std::size_t stride);

MaskedBatch gather_batch(const DomainDataset& ds, std::span<const Window> windows, std::size_t length);

/// Whole segments stacked into one batch; every segment must have the same length.
MaskedBatch full_batch(const DomainDataset& ds);

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

struct SyntheticDomainParams {
  double k = 0.3;           // heat exchange rate, 1/day
  double gw_frac = 0.1;     // groundwater mixing fraction
  double gw_temp = 10.0;    // degC
  double shade = 0.3;       // radiation attenuation
  Range elevation{100.0, 1500.0};  // m
  Range slope{0.001, 0.05};
  Range width{5.0, 60.0};  // m
  double noise_std = 0.3;  // degC

  void validate() const;
};

/// y_t = (1 - gw)(y_{t-1} + k (T_eq,t - y_{t-1})) + gw * gw_temp + noise, clipped at 0.
/// out[0] = y0; the recursion fills t >= 1.
std::vector<double> simulate_water_temperature(const SyntheticDomainParams& params, std::span<const double> t_eq,
                                               double y0, std::mt19937_64& rng);

DomainDataset generate_synthetic_domain(const SyntheticDomainParams& params, std::size_t n_segments,
                                        std::size_t n_days, std::uint64_t seed, Date start, std::string name = {});

struct ManifestDomain {
  std::string name;
  DomainRole role = DomainRole::Target;
  SyntheticDomainParams params;
  std::uint64_t seed = 0;
};

/// A fully reproducible synthetic benchmark.
struct BenchmarkManifest {
  std::string name;
  std::size_t n_segments = 20;
  Date start;
  Date train_end;  // last training day
  Date end;        // last test day
  std::vector<ManifestDomain> domains;

  std::size_t n_days() const { return static_cast<std::size_t>((end - start).count()) + 1; }
  DateRange train_range() const { return {start, train_end}; }
  DateRange test_range() const { return {train_end + std::chrono::days(1), end}; }
  const ManifestDomain& primary() const;
  void validate() const;
};

BenchmarkManifest parse_manifest(std::string_view json_text);
BenchmarkManifest load_manifest(const std::filesystem::path& path);
std::string manifest_to_string(const BenchmarkManifest& m);

DomainDataset generate_domain(const BenchmarkManifest& m, const ManifestDomain& d);

/// Writes the CSV with features replaced by the denormalized input transform of
/// the normalized features; labels kept; segment ids suffixed "_aug". With
/// `interleave` each original segment precedes its augmented copy.
DomainDataset augment_dataset(const DomainDataset& raw, const ModelDims& dims, const ParamSet& phi_x,
                              const NormStats& stats, bool interleave);
void export_augmented(const DomainDataset& raw, const ModelDims& dims, const ParamSet& phi_x,
                      const NormStats& stats, const std::filesystem::path& path, bool interleave);

}  // namespace great
