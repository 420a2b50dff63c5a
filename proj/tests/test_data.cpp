#include <cmath>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "fixtures.hpp"
#include "great/data.hpp"

using namespace great;
using namespace great::testing;

namespace {

const std::string kHeader = std::string(kCsvHeader) + "\n";

double correlation(const std::vector<double>& a, const std::vector<double>& b) {
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= static_cast<double>(a.size());
  mb /= static_cast<double>(b.size());
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

DomainDataset labeled_dataset(std::size_t segments, std::size_t days, std::uint64_t seed) {
  return generate_synthetic_domain({}, segments, days, seed, parse_date("1984-10-01"), "d");
}

}  // namespace

TEST_CASE("dates parse and format") {
  CHECK(format_date(parse_date("1984-10-01")) == "1984-10-01");
  CHECK(parse_date("2000-03-01") - parse_date("2000-02-28") == std::chrono::days(2));
  CHECK_THROWS_AS(parse_date("2001-02-29"), DataError);
  CHECK_THROWS_AS(parse_date("84-10-01"), DataError);
  CHECK_THROWS_AS(parse_date("1984/10/01"), DataError);
}

TEST_CASE("load_csv examples") {
  const DomainDataset ds = parse_csv(kHeader +
                                     "s1,2001-01-02,0.01,300,12,3.5,100,0,1,\n"
                                     "s1,2001-01-01,0.01,300,12,2.5,90,1.2,1,4.25\n",
                                     "x");
  REQUIRE(ds.segments.size() == 1);
  const auto& s = ds.segments[0];
  CHECK(s.length() == 2);
  CHECK(format_date(s.start) == "2001-01-01");
  CHECK(s.mask == std::vector<std::uint8_t>{1, 0});
  CHECK(s.labels[0] == 4.25);
  CHECK(s.feature(1, kAirtempFeature) == 3.5);
  CHECK(ds.feature_names.size() == 7);

  CHECK_THROWS_WITH_AS(parse_csv(kHeader + "s1,2001-01-01,0.01,300,12,2.5,90,1.2,1,4\n"
                                           "s1,2001-01-04,0.01,300,12,2.5,90,1.2,1,4\n"),
                       doctest::Contains("segment 's1': dates jump from 2001-01-01 to 2001-01-04"), DataError);
  CHECK_THROWS_WITH_AS(parse_csv(kHeader + "s1,2001-01-01,0.01,abc,12,2.5,90,1.2,1,4\n"),
                       doctest::Contains("row 2: non-numeric value 'abc' in column 'elev'"), DataError);
  CHECK_THROWS_WITH_AS(parse_csv("segment_id,date,slp,elev,wid,airtemp,rad,precip,wtemp\n"),
                       doctest::Contains("missing column(s): evap"), DataError);
  CHECK_THROWS_WITH_AS(parse_csv(kHeader + "s1,2001-01-01,0.01,300,12\n"), doctest::Contains("row 2"), DataError);
  CHECK_THROWS_WITH_AS(parse_csv(kHeader + "s1,2001-01-01,0.01,300,12,2.5,90,1.2,1,4\n"
                                           "s1,2001-01-01,0.01,300,12,2.5,90,1.2,1,4\n"),
                       doctest::Contains("duplicate date"), DataError);
  CHECK_THROWS_WITH_AS(parse_csv(kHeader + "s1,2001-13-01,0.01,300,12,2.5,90,1.2,1,4\n"),
                       doctest::Contains("row 2"), DataError);
}

TEST_CASE("csv write and load round-trip exactly") {
  const DomainDataset ds = labeled_dataset(2, 40, 3);
  const DomainDataset sparse = subsample_labels(ds, 0.3, 1);
  const auto path = std::filesystem::temp_directory_path() / "great_data_roundtrip.csv";
  write_csv(sparse, path);
  const DomainDataset back = load_csv(path, "d");
  std::filesystem::remove(path);
  REQUIRE(back.segments.size() == 2);
  for (std::size_t s = 0; s < 2; ++s) {
    CHECK(back.segments[s].features == sparse.segments[s].features);
    CHECK(back.segments[s].labels == sparse.segments[s].labels);
    CHECK(back.segments[s].mask == sparse.segments[s].mask);
    CHECK(back.segments[s].id == sparse.segments[s].id);
  }
  CHECK_THROWS_AS(load_csv("/nonexistent/file.csv"), DataError);
}

TEST_CASE("normalization round trip and moments") {
  const DomainDataset ds = labeled_dataset(3, 400, 4);
  const NormStats st = fit_normalization(ds);
  const DomainDataset z = apply_normalization(ds, st);
  const DomainDataset back = invert_normalization(z, st);
  for (std::size_t s = 0; s < 3; ++s) {
    for (std::size_t i = 0; i < ds.segments[s].features.size(); ++i) {
      CHECK(std::abs(back.segments[s].features[i] - ds.segments[s].features[i]) < 1e-12 * (1 + std::abs(ds.segments[s].features[i])));
    }
    for (std::size_t t = 0; t < ds.segments[s].length(); ++t) {
      CHECK(std::abs(back.segments[s].labels[t] - ds.segments[s].labels[t]) < 1e-12);
    }
  }
  const NormStats zst = fit_normalization(z);
  for (std::size_t f = 0; f < kNumFeatures; ++f) {
    CHECK(std::abs(zst.feature_mean[f]) < 1e-10);
    CHECK(std::abs(zst.feature_std[f] - 1.0) < 1e-10);
  }
  CHECK(std::abs(zst.label_mean) < 1e-10);
  CHECK(std::abs(zst.label_std - 1.0) < 1e-10);

  SyntheticDomainParams other;
  other.elevation = {1800, 2500};
  other.shade = 0.8;
  const DomainDataset aux = generate_synthetic_domain(other, 3, 400, 9, parse_date("1984-10-01"), "aux");
  const NormStats ast = fit_normalization(apply_normalization(aux, st));
  CHECK(std::abs(ast.feature_mean[1]) > 0.5);
  CHECK(std::abs(ast.label_mean) > 0.1);

  DomainDataset flat = ds;
  for (auto& seg : flat.segments) {
    for (std::size_t t = 0; t < seg.length(); ++t) seg.features[t * kNumFeatures + 2] = 7.0;
  }
  CHECK_THROWS_WITH_AS((void)fit_normalization(flat), doctest::Contains("'wid' has zero variance"), DataError);
}

TEST_CASE("subsample_labels keeps exact counts") {
  // 10,000 observed labels at 1% -> 100
  const DomainDataset big = labeled_dataset(4, 2500, 5);
  CHECK(big.observed() == 10000);
  const DomainDataset one = subsample_labels(big, 0.01, 11);
  CHECK(one.observed() == 100);
  CHECK(subsample_labels(big, 0.001, 11).observed() == 10);
  CHECK(subsample_labels(big, 0.0001, 11).observed() == 1);
  CHECK_THROWS_WITH_AS((void)subsample_labels(big, 0.00001, 11), doctest::Contains("larger fraction"), DataError);
  CHECK_THROWS_AS((void)subsample_labels(big, 0.0, 11), std::invalid_argument);

  const DomainDataset again = subsample_labels(big, 0.01, 11);
  for (std::size_t s = 0; s < 4; ++s) CHECK(again.segments[s].mask == one.segments[s].mask);
  const DomainDataset all = subsample_labels(big, 1.0, 11);
  for (std::size_t s = 0; s < 4; ++s) {
    CHECK(all.segments[s].mask == big.segments[s].mask);
    CHECK(all.segments[s].labels == big.segments[s].labels);
  }
  // retained labels keep their values
  for (std::size_t s = 0; s < 4; ++s) {
    for (std::size_t t = 0; t < 2500; ++t) {
      if (one.segments[s].mask[t]) CHECK(one.segments[s].labels[t] == big.segments[s].labels[t]);
    }
  }

  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    DomainDataset ds = labeled_dataset(2, 300 + 37 * static_cast<std::size_t>(trial), 100 + static_cast<std::uint64_t>(trial));
    ds = subsample_labels(ds, 0.2 + 0.05 * trial, rng());
    const std::size_t n = ds.observed();
    for (double fraction : {0.01, 0.1, 0.37}) {
      const auto expected = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
      if (expected == 0) continue;
      CHECK(subsample_labels(ds, fraction, rng()).observed() == expected);
    }
  }
}

TEST_CASE("make_windows examples") {
  CHECK(make_windows(labeled_dataset(1, 365, 1), 365, 365).windows.size() == 1);
  CHECK(make_windows(labeled_dataset(1, 730, 1), 365, 365).windows.size() == 2);
  DomainDataset unlabeled = labeled_dataset(2, 730, 1);
  std::fill(unlabeled.segments[0].mask.begin(), unlabeled.segments[0].mask.end(), std::uint8_t{0});
  const WindowIndex idx = make_windows(unlabeled, 365, 365);
  CHECK(idx.windows.size() == 2);
  for (const auto& w : idx.windows) CHECK(w.segment == 1);

  const WindowIndex tail = make_windows(labeled_dataset(1, 800, 1), 365, 183);
  REQUIRE(tail.windows.size() == 4);
  CHECK(tail.windows.back().start == 435);

  DomainDataset mixed = labeled_dataset(2, 400, 1);
  mixed.segments[0] = slice_dates(mixed, {mixed.segments[0].start, mixed.segments[0].date(99)}).segments[0];
  CHECK(make_windows(mixed, 365, 365).skipped_segments == 1);

  DomainDataset sparse = labeled_dataset(1, 730, 2);
  std::fill(sparse.segments[0].mask.begin(), sparse.segments[0].mask.end(), std::uint8_t{0});
  sparse.segments[0].mask[500] = 1;
  const WindowIndex one = make_windows(sparse, 365, 365);
  REQUIRE(one.windows.size() == 1);
  const MaskedBatch b = gather_batch(sparse, one.windows, 365);
  CHECK(b.observed() == 1);
  CHECK(b.mask[500 - 365] == 1.0);
  CHECK(b.y[500 - 365] == sparse.segments[0].labels[500]);
  CHECK(b.x[(500 - 365) * 7 + 3] == sparse.segments[0].feature(500, 3));
}

TEST_CASE("synthetic recursion closed forms") {
  SyntheticDomainParams p;
  p.noise_std = 0.0;
  p.gw_frac = 0.0;
  p.k = 0.3;
  std::mt19937_64 rng(1);
  const std::vector<double> teq(50, 15.0);
  const auto y = simulate_water_temperature(p, teq, 4.0, rng);
  for (std::size_t t = 0; t < 50; ++t) {
    CHECK(std::abs(std::abs(y[t] - 15.0) - 11.0 * std::pow(0.7, static_cast<double>(t))) < 1e-12);
  }

  p.gw_frac = 1.0;
  p.noise_std = 0.5;
  p.gw_temp = 9.0;
  std::mt19937_64 a(2), b(2);
  const auto yg = simulate_water_temperature(p, teq, 9.0, a);
  std::normal_distribution<double> noise(0.0, 1.0);
  CHECK(yg[0] == 9.0);
  for (std::size_t t = 1; t < 50; ++t) CHECK(yg[t] == doctest::Approx(std::max(0.0, 9.0 + 0.5 * noise(b))).epsilon(1e-14));
}

TEST_CASE("synthetic domains: exchange rate controls air-temperature coupling") {
  SyntheticDomainParams fast, slow;
  fast.k = 0.9;
  slow.k = 0.05;
  fast.gw_frac = slow.gw_frac = 0.0;
  const Date start = parse_date("1984-10-01");
  const auto coupling = [&](const SyntheticDomainParams& p) {
    const DomainDataset ds = generate_synthetic_domain(p, 1, 2000, 3, start);
    std::vector<double> air, y;
    for (std::size_t t = 0; t < 2000; ++t) {
      air.push_back(ds.segments[0].feature(t, kAirtempFeature));
      y.push_back(ds.segments[0].labels[t]);
    }
    return correlation(air, y);
  };
  CHECK(coupling(fast) > coupling(slow));
}

TEST_CASE("synthetic generator is deterministic and bounded") {
  const Date start = parse_date("1984-10-01");
  const DomainDataset a = generate_synthetic_domain({}, 2, 10000, 42, start, "x");
  const DomainDataset b = generate_synthetic_domain({}, 2, 10000, 42, start, "x");
  for (std::size_t s = 0; s < 2; ++s) {
    CHECK(a.segments[s].features == b.segments[s].features);
    CHECK(a.segments[s].labels == b.segments[s].labels);
    for (double y : a.segments[s].labels) {
      CHECK(std::isfinite(y));
      CHECK(y >= 0.0);
      CHECK(y <= 40.0);
    }
    for (double v : a.segments[s].features) CHECK(std::isfinite(v));
  }
  // summer warmer than winter
  const auto& s0 = a.segments[0];
  double jul = 0, jan = 0;
  for (std::size_t t = 0; t < s0.length(); ++t) {
    const unsigned month = static_cast<unsigned>(std::chrono::year_month_day{s0.date(t)}.month());
    if (month == 7) jul += s0.labels[t];
    if (month == 1) jan += s0.labels[t];
  }
  CHECK(jul > jan + 1000.0);

  SyntheticDomainParams bad;
  bad.k = 1.5;
  CHECK_THROWS_AS((void)generate_synthetic_domain(bad, 1, 10, 1, start), DataError);
}

TEST_CASE("manifest parse, validate and round trip") {
  const std::string text = R"({
    "name": "tiny", "n_segments": 2,
    "start": "1984-10-01", "train_end": "1985-09-30", "end": "1986-09-30",
    "domains": [
      {"name": "P", "role": "primary_source", "seed": 1, "k": 0.35, "gw_frac": 0.05, "gw_temp": 10, "shade": 0.1},
      {"name": "A", "seed": 2, "k": 0.15, "gw_frac": 0.3, "gw_temp": 9, "shade": 0.5, "elevation": [500, 900]}
    ]})";
  const BenchmarkManifest m = parse_manifest(text);
  CHECK(m.n_days() == 730);
  CHECK(m.primary().name == "P");
  CHECK(m.domains[1].role == DomainRole::Target);
  CHECK(m.domains[1].params.elevation.lo == 500);
  CHECK(format_date(m.test_range().first) == "1985-10-01");
  const BenchmarkManifest back = parse_manifest(manifest_to_string(m));
  CHECK(manifest_to_string(back) == manifest_to_string(m));

  const DomainDataset p = generate_domain(m, m.primary());
  CHECK(p.role == DomainRole::PrimarySource);
  CHECK(p.segments.size() == 2);
  CHECK(p.segments[0].id == "P_0");
  const DomainDataset train = slice_dates(p, m.train_range());
  CHECK(train.segments[0].length() == 365);

  CHECK_THROWS_AS((void)parse_manifest("{}"), DataError);
  std::string two_primary = text;
  two_primary.replace(two_primary.find("\"name\": \"A\","), 12, "\"name\": \"A\", \"role\": \"primary_source\",");
  CHECK_THROWS_WITH_AS((void)parse_manifest(two_primary), doctest::Contains("exactly one primary"), DataError);
}

TEST_CASE("augmented export") {
  std::mt19937_64 rng(3);
  const ModelDims dims = small_dims(4);
  const DomainDataset raw = labeled_dataset(2, 30, 7);
  const NormStats st = fit_normalization(raw);
  const TransformParams ident = init_transforms(dims, rng);

  const DomainDataset same = augment_dataset(raw, dims, ident.input, st, false);
  REQUIRE(same.segments.size() == 2);
  CHECK(same.segments[0].id == raw.segments[0].id + "_aug");
  for (std::size_t s = 0; s < 2; ++s) {
    for (std::size_t i = 0; i < raw.segments[s].features.size(); ++i) {
      CHECK(std::abs(same.segments[s].features[i] - raw.segments[s].features[i]) < 1e-9);
    }
    CHECK(same.segments[s].labels == raw.segments[s].labels);
  }

  const TransformParams tf = random_transforms(dims, rng);
  const auto path = std::filesystem::temp_directory_path() / "great_aug.csv";
  export_augmented(raw, dims, tf.input, st, path, true);
  const DomainDataset back = load_csv(path);
  std::filesystem::remove(path);
  REQUIRE(back.segments.size() == 4);
  CHECK(back.segments[0].id == raw.segments[0].id);
  CHECK(back.segments[1].id == raw.segments[0].id + "_aug");
  double diff = 0.0;
  for (std::size_t i = 0; i < raw.segments[0].features.size(); ++i) {
    diff = std::max(diff, std::abs(back.segments[1].features[i] - raw.segments[0].features[i]));
  }
  CHECK(diff > 0.0);
  CHECK(back.segments[1].labels == raw.segments[0].labels);
}
