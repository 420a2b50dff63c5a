#include "great/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include "json.hpp"

namespace great {

namespace {

using std::chrono::days;

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    const std::size_t next = line.find(sep, pos);
    out.push_back(line.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos));
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return out;
}

bool parse_number(std::string_view text, double& out) {
  if (text.empty()) return false;
  if (text.front() == '+') text.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size() && std::isfinite(out);
}

void append_number(std::string& out, double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, ptr);
}

std::string row_prefix(std::size_t line) { return "row " + std::to_string(line) + ": "; }

}  // namespace

Date parse_date(std::string_view text) {
  int y = 0;
  unsigned m = 0, d = 0;
  const auto field = [&](std::string_view part, auto& value) {
    const auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), value);
    return ec == std::errc() && ptr == part.data() + part.size();
  };
  const auto parts = split(text, '-');
  if (text.size() != 10 || parts.size() != 3 || !field(parts[0], y) || !field(parts[1], m) || !field(parts[2], d)) {
    throw DataError("invalid date '" + std::string(text) + "' (expected YYYY-MM-DD)");
  }
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
  if (!ymd.ok()) throw DataError("invalid date '" + std::string(text) + "'");
  return Date{ymd};
}

std::string format_date(Date d) {
  const std::chrono::year_month_day ymd{d};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                static_cast<unsigned>(ymd.day()));
  return buf;
}

std::size_t SegmentSeries::observed() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

std::size_t DomainDataset::observed() const {
  std::size_t n = 0;
  for (const auto& s : segments) n += s.observed();
  return n;
}

std::string role_name(DomainRole role) {
  switch (role) {
    case DomainRole::PrimarySource: return "primary_source";
    case DomainRole::AuxiliaryReference: return "auxiliary_reference";
    case DomainRole::Target: return "target";
  }
  return "target";
}

DomainRole parse_role(std::string_view name) {
  if (name == "primary_source") return DomainRole::PrimarySource;
  if (name == "auxiliary_reference") return DomainRole::AuxiliaryReference;
  if (name == "target") return DomainRole::Target;
  throw DataError("unknown domain role '" + std::string(name) + "'");
}

// ---- CSV ------------------------------------------------------------------

DomainDataset parse_csv(std::string_view text, std::string name, DomainRole role) {
  struct Row {
    Date date;
    std::array<double, kNumFeatures> x;
    double y;
    bool observed;
    std::size_t line;
  };

  std::vector<std::string_view> lines = split(text, '\n');
  for (auto& l : lines) {
    if (!l.empty() && l.back() == '\r') l.remove_suffix(1);
  }
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  if (lines.empty()) throw DataError("empty file: missing header");

  const std::vector<std::string_view> expected = split(kCsvHeader, ',');
  const std::vector<std::string_view> header = split(lines[0], ',');
  if (header != expected) {
    std::string missing;
    for (auto col : expected) {
      if (std::find(header.begin(), header.end(), col) == header.end()) {
        missing += missing.empty() ? "" : ", ";
        missing += col;
      }
    }
    throw DataError(missing.empty() ? "header must be exactly '" + std::string(kCsvHeader) + "'"
                                    : "missing column(s): " + missing);
  }

  std::map<std::string, std::size_t, std::less<>> index;
  std::vector<std::string> ids;
  std::vector<std::vector<Row>> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::size_t line = i + 1;
    const auto fields = split(lines[i], ',');
    if (fields.size() != expected.size()) {
      throw DataError(row_prefix(line) + "expected " + std::to_string(expected.size()) + " fields, got " +
                      std::to_string(fields.size()));
    }
    if (fields[0].empty()) throw DataError(row_prefix(line) + "empty segment_id");
    Row r{};
    r.line = line;
    try {
      r.date = parse_date(fields[1]);
    } catch (const DataError& e) {
      throw DataError(row_prefix(line) + e.what());
    }
    for (std::size_t f = 0; f < kNumFeatures; ++f) {
      if (!parse_number(fields[2 + f], r.x[f])) {
        throw DataError(row_prefix(line) + "non-numeric value '" + std::string(fields[2 + f]) + "' in column '" +
                        std::string(kFeatureNames[f]) + "'");
      }
    }
    r.observed = !fields[9].empty();
    if (r.observed && !parse_number(fields[9], r.y)) {
      throw DataError(row_prefix(line) + "non-numeric value '" + std::string(fields[9]) + "' in column 'wtemp'");
    }
    auto it = index.find(fields[0]);
    if (it == index.end()) {
      it = index.emplace(std::string(fields[0]), ids.size()).first;
      ids.emplace_back(fields[0]);
      rows.emplace_back();
    }
    rows[it->second].push_back(r);
  }

  DomainDataset ds;
  ds.name = std::move(name);
  ds.role = role;
  for (std::size_t s = 0; s < ids.size(); ++s) {
    auto& rs = rows[s];
    std::stable_sort(rs.begin(), rs.end(), [](const Row& a, const Row& b) { return a.date < b.date; });
    SegmentSeries seg;
    seg.id = ids[s];
    seg.start = rs.front().date;
    for (std::size_t t = 0; t < rs.size(); ++t) {
      if (t > 0 && rs[t].date != rs[t - 1].date + days(1)) {
        const std::string what = rs[t].date == rs[t - 1].date ? "duplicate date " + format_date(rs[t].date)
                                                              : "dates jump from " + format_date(rs[t - 1].date) +
                                                                    " to " + format_date(rs[t].date);
        throw DataError("segment '" + seg.id + "': " + what + " (row " + std::to_string(rs[t].line) + ")");
      }
      seg.features.insert(seg.features.end(), rs[t].x.begin(), rs[t].x.end());
      seg.labels.push_back(rs[t].observed ? rs[t].y : 0.0);
      seg.mask.push_back(rs[t].observed ? 1 : 0);
    }
    ds.segments.push_back(std::move(seg));
  }
  return ds;
}

DomainDataset load_csv(const std::filesystem::path& path, std::string name, DomainRole role) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  if (name.empty()) name = path.stem().string();
  try {
    return parse_csv(buf.str(), std::move(name), role);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

std::string to_csv(const DomainDataset& ds) {
  std::string out(kCsvHeader);
  out += '\n';
  for (const auto& seg : ds.segments) {
    for (std::size_t t = 0; t < seg.length(); ++t) {
      out += seg.id;
      out += ',';
      out += format_date(seg.date(t));
      for (std::size_t f = 0; f < kNumFeatures; ++f) {
        out += ',';
        append_number(out, seg.feature(t, f));
      }
      out += ',';
      if (seg.mask[t]) append_number(out, seg.labels[t]);
      out += '\n';
    }
  }
  return out;
}

void write_csv(const DomainDataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_csv(ds);
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

DomainDataset slice_dates(const DomainDataset& ds, DateRange range) {
  DomainDataset out = ds;
  out.segments.clear();
  for (const auto& seg : ds.segments) {
    std::size_t first = seg.length(), last = 0;
    for (std::size_t t = 0; t < seg.length(); ++t) {
      if (range.contains(seg.date(t))) {
        first = std::min(first, t);
        last = t;
      }
    }
    if (first == seg.length()) continue;
    SegmentSeries s;
    s.id = seg.id;
    s.start = seg.date(first);
    s.features.assign(seg.features.begin() + static_cast<long>(first * kNumFeatures),
                      seg.features.begin() + static_cast<long>((last + 1) * kNumFeatures));
    s.labels.assign(seg.labels.begin() + static_cast<long>(first), seg.labels.begin() + static_cast<long>(last + 1));
    s.mask.assign(seg.mask.begin() + static_cast<long>(first), seg.mask.begin() + static_cast<long>(last + 1));
    out.segments.push_back(std::move(s));
  }
  return out;
}

// ---- normalization ----------------------------------------------------------

NormStats fit_normalization(const DomainDataset& ds) {
  NormStats st;
  std::array<double, kNumFeatures> sum{}, sq{};
  double n = 0.0, ysum = 0.0, ysq = 0.0, yn = 0.0;
  for (const auto& seg : ds.segments) {
    for (std::size_t t = 0; t < seg.length(); ++t) {
      for (std::size_t f = 0; f < kNumFeatures; ++f) sum[f] += seg.feature(t, f);
      n += 1.0;
      if (seg.mask[t]) {
        ysum += seg.labels[t];
        yn += 1.0;
      }
    }
  }
  if (n == 0.0) throw DataError("cannot fit normalization on an empty dataset");
  if (yn == 0.0) throw DataError("cannot fit normalization: dataset '" + ds.name + "' has no observed labels");
  for (std::size_t f = 0; f < kNumFeatures; ++f) st.feature_mean[f] = sum[f] / n;
  st.label_mean = ysum / yn;
  for (const auto& seg : ds.segments) {
    for (std::size_t t = 0; t < seg.length(); ++t) {
      for (std::size_t f = 0; f < kNumFeatures; ++f) {
        const double d = seg.feature(t, f) - st.feature_mean[f];
        sq[f] += d * d;
      }
      if (seg.mask[t]) ysq += (seg.labels[t] - st.label_mean) * (seg.labels[t] - st.label_mean);
    }
  }
  for (std::size_t f = 0; f < kNumFeatures; ++f) {
    st.feature_std[f] = std::sqrt(sq[f] / n);
    if (!(st.feature_std[f] > 0.0)) {
      throw DataError("feature '" + std::string(kFeatureNames[f]) + "' has zero variance in '" + ds.name + "'");
    }
  }
  st.label_std = std::sqrt(ysq / yn);
  if (!(st.label_std > 0.0)) throw DataError("label 'wtemp' has zero variance in '" + ds.name + "'");
  return st;
}

DomainDataset apply_normalization(const DomainDataset& ds, const NormStats& st) {
  DomainDataset out = ds;
  for (auto& seg : out.segments) {
    for (std::size_t i = 0; i < seg.features.size(); ++i) {
      const std::size_t f = i % kNumFeatures;
      seg.features[i] = (seg.features[i] - st.feature_mean[f]) / st.feature_std[f];
    }
    for (std::size_t t = 0; t < seg.length(); ++t) {
      if (seg.mask[t]) seg.labels[t] = st.normalize_label(seg.labels[t]);
    }
  }
  return out;
}

DomainDataset invert_normalization(const DomainDataset& ds, const NormStats& st) {
  DomainDataset out = ds;
  for (auto& seg : out.segments) {
    for (std::size_t i = 0; i < seg.features.size(); ++i) {
      const std::size_t f = i % kNumFeatures;
      seg.features[i] = seg.features[i] * st.feature_std[f] + st.feature_mean[f];
    }
    for (std::size_t t = 0; t < seg.length(); ++t) {
      if (seg.mask[t]) seg.labels[t] = st.denormalize_label(seg.labels[t]);
    }
  }
  return out;
}

// ---- sparsity and windows ---------------------------------------------------

DomainDataset subsample_labels(const DomainDataset& ds, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw std::invalid_argument("label fraction must lie in (0, 1], got " + std::to_string(fraction));
  }
  std::vector<std::pair<std::size_t, std::size_t>> observed;
  for (std::size_t s = 0; s < ds.segments.size(); ++s) {
    const auto& m = ds.segments[s].mask;
    for (std::size_t t = 0; t < m.size(); ++t) {
      if (m[t]) observed.emplace_back(s, t);
    }
  }
  const auto keep = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(observed.size())));
  if (keep == 0) {
    throw DataError("keeping " + std::to_string(fraction) + " of " + std::to_string(observed.size()) + " labels in '" +
                    ds.name + "' leaves none; use a larger fraction");
  }
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < keep; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, observed.size() - 1);
    std::swap(observed[i], observed[pick(rng)]);
  }
  DomainDataset out = ds;
  for (auto& seg : out.segments) std::fill(seg.mask.begin(), seg.mask.end(), std::uint8_t{0});
  for (std::size_t i = 0; i < keep; ++i) out.segments[observed[i].first].mask[observed[i].second] = 1;
  for (auto& seg : out.segments) {
    for (std::size_t t = 0; t < seg.length(); ++t) {
      if (!seg.mask[t]) seg.labels[t] = 0.0;
    }
  }
  return out;
}

WindowIndex make_windows(const DomainDataset& ds, std::size_t length, std::size_t stride) {
  if (length == 0 || stride == 0) throw std::invalid_argument("window length and stride must be positive");
  WindowIndex idx;
  for (std::size_t s = 0; s < ds.segments.size(); ++s) {
    const auto& seg = ds.segments[s];
    const std::size_t T = seg.length();
    if (T < length) {
      ++idx.skipped_segments;
      continue;
    }
    std::vector<std::size_t> starts;
    for (std::size_t start = 0; start + length <= T; start += stride) starts.push_back(start);
    if (starts.back() + length < T) starts.push_back(T - length);
    for (std::size_t start : starts) {
      const auto first = seg.mask.begin() + static_cast<long>(start);
      if (std::find(first, first + static_cast<long>(length), std::uint8_t{1}) != first + static_cast<long>(length)) {
        idx.windows.push_back({s, start});
      }
    }
  }
  return idx;
}

MaskedBatch gather_batch(const DomainDataset& ds, std::span<const Window> windows, std::size_t length) {
  if (windows.empty()) throw std::invalid_argument("gather_batch: no windows");
  const std::size_t B = windows.size(), F = kNumFeatures;
  MaskedBatch b{Tensor({B, length, F}), Tensor({B, length}), Tensor({B, length})};
  for (std::size_t i = 0; i < B; ++i) {
    const auto& seg = ds.segments.at(windows[i].segment);
    const std::size_t start = windows[i].start;
    if (start + length > seg.length()) throw std::invalid_argument("gather_batch: window exceeds segment");
    std::copy_n(seg.features.begin() + static_cast<long>(start * F), length * F,
                b.x.data().begin() + static_cast<long>(i * length * F));
    for (std::size_t t = 0; t < length; ++t) {
      if (seg.mask[start + t]) {
        b.y[i * length + t] = seg.labels[start + t];
        b.mask[i * length + t] = 1.0;
      }
    }
  }
  return b;
}

MaskedBatch full_batch(const DomainDataset& ds) {
  if (ds.segments.empty()) throw DataError("dataset '" + ds.name + "' has no segments");
  const std::size_t T = ds.segments.front().length();
  std::vector<Window> windows;
  for (std::size_t s = 0; s < ds.segments.size(); ++s) {
    if (ds.segments[s].length() != T) {
      throw DataError("dataset '" + ds.name + "': segments differ in length (" + ds.segments[s].id + ")");
    }
    windows.push_back({s, 0});
  }
  return gather_batch(ds, windows, T);
}

// ---- synthetic generator ----------------------------------------------------

void SyntheticDomainParams::validate() const {
  const auto bad = [](const std::string& what) { throw DataError("synthetic parameter " + what); };
  if (!(k > 0.0 && k < 1.0)) bad("k must lie in (0, 1)");
  if (!(gw_frac >= 0.0 && gw_frac < 1.0) && gw_frac != 1.0) bad("gw_frac must lie in [0, 1]");
  if (!std::isfinite(gw_temp)) bad("gw_temp must be finite");
  if (!(shade >= 0.0 && shade <= 1.0)) bad("shade must lie in [0, 1]");
  if (!(noise_std >= 0.0) || !std::isfinite(noise_std)) bad("noise_std must be finite and non-negative");
  for (const auto& [r, name] : {std::pair{elevation, "elevation"}, {slope, "slope"}, {width, "width"}}) {
    if (!(std::isfinite(r.lo) && std::isfinite(r.hi) && r.lo <= r.hi)) bad(std::string(name) + " range is invalid");
  }
  if (width.lo <= 0.0) bad("width must be positive");
}

std::vector<double> simulate_water_temperature(const SyntheticDomainParams& p, std::span<const double> t_eq,
                                               double y0, std::mt19937_64& rng) {
  std::normal_distribution<double> noise(0.0, 1.0);
  std::vector<double> y(t_eq.size());
  if (y.empty()) return y;
  y[0] = y0;
  for (std::size_t t = 1; t < y.size(); ++t) {
    const double eps = p.noise_std > 0.0 ? p.noise_std * noise(rng) : 0.0;
    const double mixed =
        (1.0 - p.gw_frac) * (y[t - 1] + p.k * (t_eq[t] - y[t - 1])) + p.gw_frac * p.gw_temp + eps;
    y[t] = std::max(0.0, mixed);
  }
  return y;
}

DomainDataset generate_synthetic_domain(const SyntheticDomainParams& p, std::size_t n_segments, std::size_t n_days,
                                        std::uint64_t seed, Date start, std::string name) {
  p.validate();
  if (n_segments == 0 || n_days == 0) throw DataError("synthetic domain needs at least one segment and one day");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::lognormal_distribution<double> rain(0.5, 1.0);

  // Seasonal phase counts days from January 1 of the first year.
  const std::chrono::year_month_day ymd{start};
  const double offset = static_cast<double>((start - Date{ymd.year() / std::chrono::January / 1}).count());
  const auto lerp = [&](Range r) { return r.lo + (r.hi - r.lo) * unit(rng); };

  DomainDataset ds;
  ds.name = std::move(name);
  for (std::size_t s = 0; s < n_segments; ++s) {
    SegmentSeries seg;
    seg.id = (ds.name.empty() ? "seg" : ds.name) + "_" + std::to_string(s);
    seg.start = start;
    const double elev = lerp(p.elevation), slp = lerp(p.slope), wid = lerp(p.width);
    std::vector<double> t_eq(n_days);
    seg.features.resize(n_days * kNumFeatures);
    double air_noise = 0.0;
    for (std::size_t t = 0; t < n_days; ++t) {
      const double season = std::sin(2.0 * std::numbers::pi * (static_cast<double>(t) + offset - 110.0) / 365.0);
      air_noise = 0.7 * air_noise + 2.0 * normal(rng);
      const double air = 12.0 + 10.0 * season + air_noise;
      const double rad = std::max(0.0, 180.0 + 120.0 * season + 25.0 * normal(rng));
      const double precip = unit(rng) < 0.35 - 0.1 * season ? rain(rng) : 0.0;
      const double evap = std::max(0.0, 2.5 + 2.0 * season + 0.4 * normal(rng));
      const double row[kNumFeatures] = {slp, elev, wid, air, rad, precip, evap};
      std::copy(row, row + kNumFeatures, seg.features.begin() + static_cast<long>(t * kNumFeatures));
      t_eq[t] = air + (1.0 - p.shade) * rad / 150.0 - elev / 500.0;
    }
    const double y0 = std::max(0.0, (1.0 - p.gw_frac) * t_eq[0] + p.gw_frac * p.gw_temp);
    seg.labels = simulate_water_temperature(p, t_eq, y0, rng);
    seg.mask.assign(n_days, 1);
    ds.segments.push_back(std::move(seg));
  }
  return ds;
}

// ---- manifest -----------------------------------------------------------------

const ManifestDomain& BenchmarkManifest::primary() const {
  for (const auto& d : domains) {
    if (d.role == DomainRole::PrimarySource) return d;
  }
  throw DataError("manifest '" + name + "' has no primary_source domain");
}

void BenchmarkManifest::validate() const {
  if (n_segments == 0) throw DataError("manifest: n_segments must be positive");
  if (!(start <= train_end && train_end < end)) throw DataError("manifest: need start <= train_end < end");
  std::size_t primaries = 0;
  for (std::size_t i = 0; i < domains.size(); ++i) {
    primaries += domains[i].role == DomainRole::PrimarySource;
    domains[i].params.validate();
    for (std::size_t j = 0; j < i; ++j) {
      if (domains[j].name == domains[i].name) throw DataError("manifest: duplicate domain '" + domains[i].name + "'");
    }
  }
  if (primaries != 1) throw DataError("manifest: exactly one primary_source domain required");
}

namespace {

using nlohmann::json;

Range range_from(const json& j, const char* key, Range fallback) {
  if (!j.contains(key)) return fallback;
  const auto& a = j.at(key);
  if (!a.is_array() || a.size() != 2) throw DataError(std::string("manifest: '") + key + "' must be [lo, hi]");
  return {a[0].get<double>(), a[1].get<double>()};
}

}  // namespace

BenchmarkManifest parse_manifest(std::string_view text) {
  BenchmarkManifest m;
  try {
    const json j = json::parse(text);
    m.name = j.value("name", std::string("benchmark"));
    m.n_segments = j.value("n_segments", std::size_t{20});
    m.start = parse_date(j.at("start").get<std::string>());
    m.train_end = parse_date(j.at("train_end").get<std::string>());
    m.end = parse_date(j.at("end").get<std::string>());
    for (const auto& d : j.at("domains")) {
      ManifestDomain md;
      md.name = d.at("name").get<std::string>();
      md.role = parse_role(d.value("role", std::string("target")));
      md.seed = d.at("seed").get<std::uint64_t>();
      SyntheticDomainParams& p = md.params;
      p.k = d.value("k", p.k);
      p.gw_frac = d.value("gw_frac", p.gw_frac);
      p.gw_temp = d.value("gw_temp", p.gw_temp);
      p.shade = d.value("shade", p.shade);
      p.noise_std = d.value("noise_std", p.noise_std);
      p.elevation = range_from(d, "elevation", p.elevation);
      p.slope = range_from(d, "slope", p.slope);
      p.width = range_from(d, "width", p.width);
      m.domains.push_back(std::move(md));
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("manifest: ") + e.what());
  }
  m.validate();
  return m;
}

BenchmarkManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open manifest " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_manifest(buf.str());
}

std::string manifest_to_string(const BenchmarkManifest& m) {
  json j;
  j["name"] = m.name;
  j["n_segments"] = m.n_segments;
  j["start"] = format_date(m.start);
  j["train_end"] = format_date(m.train_end);
  j["end"] = format_date(m.end);
  j["domains"] = json::array();
  for (const auto& d : m.domains) {
    const auto& p = d.params;
    j["domains"].push_back({{"name", d.name},
                            {"role", role_name(d.role)},
                            {"seed", d.seed},
                            {"k", p.k},
                            {"gw_frac", p.gw_frac},
                            {"gw_temp", p.gw_temp},
                            {"shade", p.shade},
                            {"noise_std", p.noise_std},
                            {"elevation", {p.elevation.lo, p.elevation.hi}},
                            {"slope", {p.slope.lo, p.slope.hi}},
                            {"width", {p.width.lo, p.width.hi}}});
  }
  return j.dump(2) + "\n";
}

DomainDataset generate_domain(const BenchmarkManifest& m, const ManifestDomain& d) {
  DomainDataset ds = generate_synthetic_domain(d.params, m.n_segments, m.n_days(), d.seed, m.start, d.name);
  ds.role = d.role;
  return ds;
}

// ---- augmentation -----------------------------------------------------------

DomainDataset augment_dataset(const DomainDataset& raw, const ModelDims& dims, const ParamSet& phi_x,
                              const NormStats& stats, bool interleave) {
  const ad::VarMap phi = ad::constants(phi_x);
  DomainDataset out = raw;
  out.segments.clear();
  for (const auto& seg : raw.segments) {
    const std::size_t T = seg.length();
    Tensor x({T, kNumFeatures});
    for (std::size_t i = 0; i < x.size(); ++i) {
      const std::size_t f = i % kNumFeatures;
      x[i] = (seg.features[i] - stats.feature_mean[f]) / stats.feature_std[f];
    }
    const Tensor gx = transform_input(dims, phi, ad::Variable::constant(std::move(x))).value();
    SegmentSeries aug = seg;
    aug.id = seg.id + "_aug";
    for (std::size_t i = 0; i < gx.size(); ++i) {
      const std::size_t f = i % kNumFeatures;
      aug.features[i] = gx[i] * stats.feature_std[f] + stats.feature_mean[f];
    }
    if (interleave) out.segments.push_back(seg);
    out.segments.push_back(std::move(aug));
  }
  return out;
}

void export_augmented(const DomainDataset& raw, const ModelDims& dims, const ParamSet& phi_x, const NormStats& stats,
                      const std::filesystem::path& path, bool interleave) {
  write_csv(augment_dataset(raw, dims, phi_x, stats, interleave), path);
}

}  // namespace great
