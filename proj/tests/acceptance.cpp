// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
//
//   acceptance [--only 1,5,9]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <set>
#include <sstream>
#include <string>

#include "cli.hpp"
#include "fixtures.hpp"
#include "great/checkpoint.hpp"
#include "great/eval.hpp"

using namespace great;
using namespace great::testing;
using ad::Variable;
using ad::VarMap;
namespace fs = std::filesystem;

namespace {

const fs::path kBenchmarks = GREAT_BENCHMARK_DIR;
constexpr std::size_t kSeeds = 5;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---- shared benchmark state -------------------------------------------------------

struct Bench {
  BenchmarkData data = generate_benchmark(load_manifest(kBenchmarks / "acceptance.json"));
  TrainConfig config = load_config(kBenchmarks / "acceptance.cfg");
  std::string primary = data.manifest.primary().name;
  PretrainCache cache;

  ExperimentSpec base(double sparsity) const {
    ExperimentSpec s;
    s.primary = primary;
    s.sparsity = sparsity;
    s.n_seeds = kSeeds;
    s.config = config;
    return s;
  }
  TrainConfig seeded(std::uint64_t seed) const {
    TrainConfig c = config;
    c.seed = seed;
    return c;
  }
};

Bench& bench() {
  static Bench b;
  return b;
}

/// Per-seed RMSE on every unseen domain of every rotation, with the models behind them.
struct RotationResults {
  std::vector<MetricsReport> reports;                       // one per rotation
  std::vector<std::vector<std::string>> targets;            // per rotation
  std::vector<std::map<std::uint64_t, Checkpoint>> models;  // per rotation, by seed

  std::vector<double> values() const {
    std::vector<double> out;
    for (const auto& r : reports) {
      const auto v = r.all_rmse();
      out.insert(out.end(), v.begin(), v.end());
    }
    return out;
  }
};

RotationResults run_rotations(double sparsity, const Ablation& ablation = {}) {
  Bench& b = bench();
  ExperimentSpec base = b.base(sparsity);
  base.config.ablation = ablation;
  RotationResults out;
  for (const auto& spec : single_rotations(b.data.names(), b.primary, base)) {
    std::map<std::uint64_t, Checkpoint> models;
    ExperimentOptions opts;
    opts.cache = &b.cache;
    opts.on_model = [&](std::uint64_t seed, const Checkpoint& c) { models.emplace(seed, c); };
    MetricsReport r = run_experiment(spec, b.data, opts);
    for (const auto& s : r.seeds) {
      if (!s.error.empty()) throw std::runtime_error("seed " + std::to_string(s.seed) + " failed: " + s.error);
    }
    out.reports.push_back(std::move(r));
    out.targets.push_back(spec.targets);
    out.models.push_back(std::move(models));
  }
  return out;
}

const RotationResults& great_at(double sparsity) {
  static std::map<double, RotationResults> memo;
  auto it = memo.find(sparsity);
  if (it == memo.end()) it = memo.emplace(sparsity, run_rotations(sparsity)).first;
  return it->second;
}

const MetricsReport& baseline_report() {
  static const MetricsReport r = [] {
    Bench& b = bench();
    ExperimentSpec s = b.base(0.01);
    s.setting = Setting::BaselineLstm;
    for (const auto& n : b.data.names()) {
      if (n != b.primary) s.targets.push_back(n);
    }
    ExperimentOptions opts;
    opts.cache = &b.cache;
    return run_experiment(s, b.data, opts);
  }();
  return r;
}

/// Baseline RMSEs paired one-to-one with the values of `great`.
std::vector<double> matched_baseline(const RotationResults& great) {
  const MetricsReport& base = baseline_report();
  std::vector<double> out;
  for (const auto& r : great.reports) {
    for (const auto& t : r.targets) {
      const auto& v = base.target(t.name).per_seed;
      out.insert(out.end(), v.begin(), v.end());
    }
  }
  return out;
}

// ---- 1: loss gradients ---------------------------------------------------------------

Outcome loss_gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  std::size_t checks = 0;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    std::mt19937_64 rng(seed);
    const ModelDims dims = small_dims(8);
    const ParamSet theta = init_predictor(dims, rng);
    const TransformParams tf = random_transforms(dims, rng);
    const MaskedBatch source = random_batch(2, 10, rng);
    const MaskedBatch aux = random_batch(2, 10, rng, 0.3);
    const ReconstructionData rec = reconstruction_data(dims, ad::constants(theta), source);
    const ParamSet all = merge({&theta, &tf.input, &tf.hidden, &tf.input_rec, &tf.hidden_rec});
    const ParamSet transforms = merge({&tf.input, &tf.hidden, &tf.input_rec, &tf.hidden_rec});
    const VarMap frozen = ad::constants(theta);
    const ParamSet lower_params = merge({&theta, &tf.input, &tf.hidden});
    const ParamSet prediction{{"pred", random_tensor({2, 10}, rng, -1, 1)}};

    const std::vector<std::pair<std::function<Variable(const VarMap&)>, const ParamSet*>> losses = {
        {[&](const VarMap& v) { return masked_mse(v.at("pred"), source.y, source.mask); }, &prediction},
        {[&](const VarMap& v) {
           Groups g(v);
           return lower_loss(dims, source, g.theta, g.transforms(), 0.8).total;
         },
         &lower_params},
        {[&](const VarMap& v) {
           Groups g(v);
           return upper_loss(dims, aux, g.theta, g.transforms(), 0.5, rec).total;
         },
         &all},
        {[&](const VarMap& v) { return reconstruction_terms(dims, Groups(v).transforms(), rec).total; }, &transforms},
        {[&](const VarMap& v) {
           return pretrain_transform_loss(dims, source, frozen, Groups(v).transforms(), 0.3, rec).total;
         },
         &transforms},
    };
    for (const auto& [loss, params] : losses) {
      worst = std::max(worst, gradient_check(loss, *params));
      ++checks;
    }
  }
  const double t = seconds_since(t0);
  return {worst < 1e-5 && t < 60.0,
          std::to_string(checks) + " checks, max rel err " + fmt("%.2e", worst) + " (< 1e-5), " + fmt("%.1f", t) +
              " s (< 60)"};
}

// ---- 2: hypergradient ------------------------------------------------------------------

Outcome hypergradient() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  for (std::size_t K : {1u, 3u}) {
    TrainConfig c;
    c.dims = small_dims(4);
    c.inner_steps = K;
    c.alpha = 0.05;
    c.weights = {0.8, 0.5, 0.1};
    std::mt19937_64 rng(40 + K);
    TrainState s;
    s.dims = c.dims;
    s.theta = init_predictor(c.dims, rng);
    s.transforms = random_transforms(c.dims, rng, 0.3);
    const MaskedBatch source = random_batch(2, 6, rng);
    const MaskedBatch aux = random_batch(2, 6, rng);
    const Hypergradient hg = compute_hypergradient(s, source, aux, c);
    const ReconstructionData rec = reconstruction_data(c.dims, ad::constants(s.theta), source);
    const auto pipeline = [&](const ParamSet& flat) {
      const Groups g(ad::constants(flat));
      const VarMap lower = lower_step(c.dims, g.theta, g.transforms(), source, c.weights.lambda, c.alpha, K, false);
      return upper_loss(c.dims, aux, lower, g.transforms(), c.weights.gamma, rec).total.value().item();
    };
    const ParamSet flat = merge({&s.theta, &s.transforms.input, &s.transforms.hidden, &s.transforms.input_rec,
                                 &s.transforms.hidden_rec});
    const ParamSet numeric = ad::finite_difference_gradient(pipeline, flat, 1e-5);
    for (const auto& [group, grads] : hg.grads) {
      ParamSet num;
      for (const auto& [name, t] : grads) num.emplace(name, numeric.at(name));
      worst = std::max(worst, relative_error(grads, num));
    }
  }
  const double t = seconds_since(t0);
  return {worst < 1e-4 && t < 120.0,
          "K = 1 and 3, every group: max rel err " + fmt("%.2e", worst) + " (< 1e-4), " + fmt("%.1f", t) + " s (< 120)"};
}

// ---- 3: scalar quadratic ----------------------------------------------------------------

Outcome quadratic_toy() {
  const double c = 1.75;
  const auto loss = [&](const VarMap& v) { return ad::square(ad::sub(v.at("t"), Variable::constant(Tensor::scalar(c)))); };
  double worst_value = 0.0, worst_jac = 0.0;
  for (double alpha : {0.01, 0.1, 0.3, 0.45}) {
    for (double t0 : {-3.0, -0.5, 0.0, 2.25, 10.0}) {
      ad::Tape tape;
      const VarMap theta{{"t", tape.leaf(Tensor::scalar(t0), "t")}};
      const VarMap lower = unrolled_sgd(loss, theta, alpha, 1, true);
      const double expect = t0 - 2 * alpha * (t0 - c);
      worst_value = std::max(worst_value, std::abs(lower.at("t").value().item() - expect) / std::max(1.0, std::abs(expect)));
      const double jac = ad::gradient(lower.at("t"), theta).at("t").value().item();
      worst_jac = std::max(worst_jac, std::abs(jac - (1 - 2 * alpha)));
    }
  }
  const double eps = std::numeric_limits<double>::epsilon();
  return {worst_value <= 4 * eps && worst_jac <= 4 * eps,
          "max |theta_lower error| " + fmt("%.1e", worst_value) + ", max |Jacobian error| " + fmt("%.1e", worst_jac) +
              " (<= 4 ulp)"};
}

// ---- 4: identity collapse ---------------------------------------------------------------

Outcome identity_collapse() {
  std::size_t identical = 0, cases = 0, nonzero = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    const ModelDims dims = small_dims(6, 1 + seed % 2);
    const ParamSet theta = init_predictor(dims, rng);
    const TransformParams ident = init_transforms(dims, rng);
    const MaskedBatch b = random_batch(3, 8, rng);
    const VarMap th = ad::constants(theta);
    const Tensor plain = predict_sequence(dims, th, b.steps()).value();
    const Tensor transformed =
        predict_transformed(dims, th, ad::constants(ident.input), ad::constants(ident.hidden), b.steps()).value();
    identical += plain == transformed;
    ++cases;

    const TransformParams tf = random_transforms(dims, rng);
    ad::Tape tape;
    const Groups g(tape.leaves(merge({&theta, &tf.input, &tf.hidden})));
    const Variable loss = lower_loss(dims, b, g.theta, g.transforms(), 0.0).total;
    VarMap phi = g.input;
    phi.insert(g.hidden.begin(), g.hidden.end());
    for (const auto& [name, grad] : ad::gradient(loss, phi)) {
      for (double v : grad.value().data()) nonzero += v != 0.0;
    }
  }
  return {identical == cases && nonzero == 0, std::to_string(identical) + "/" + std::to_string(cases) +
                                                  " bit-identical; " + std::to_string(nonzero) +
                                                  " nonzero transform gradients at lambda = 0"};
}

// ---- 5: adversarial pre-training ---------------------------------------------------------

Outcome adversarial_pretraining() {
  Bench& b = bench();
  std::size_t harder = 0;
  double worst_rec = 0.0;
  std::string margins;
  for (std::uint64_t seed = 0; seed < kSeeds; ++seed) {
    const TrainConfig c = b.seeded(seed);
    const PreparedDomains prep = prepare_domains(b.data, b.primary, {}, 1.0, seed);
    std::vector<EpochRecord> log;
    const ParamSet& theta = b.cache.predictor(prep.source, c);
    const TransformParams& tf = b.cache.transforms(prep.source, c, [&](const EpochRecord& r) { log.push_back(r); });
    const EpochRecord& last = log.back();
    worst_rec = std::max({worst_rec, last.rec_input, last.rec_hidden});

    const DomainDataset held_out =
        apply_normalization(slice_dates(b.data.domain(b.primary), b.data.manifest.test_range()), prep.stats);
    const MaskedBatch batch = full_batch(held_out);
    const VarMap th = ad::constants(theta);
    const double plain = masked_mse(predict_sequence(c.dims, th, batch.steps()), batch.y, batch.mask).value().item();
    const double transformed =
        masked_mse(predict_transformed(c.dims, th, ad::constants(tf.input), ad::constants(tf.hidden), batch.steps()),
                   batch.y, batch.mask)
            .value()
            .item();
    harder += transformed > plain;
    margins += (margins.empty() ? "" : " ") + fmt("%.3f", transformed - plain);
  }
  return {harder == kSeeds && worst_rec < 0.05,
          std::to_string(harder) + "/5 seeds transformed MSE > plain (margins " + margins +
              "); final reconstruction max " + fmt("%.4f", worst_rec) + " (< 0.05)"};
}

// ---- 6: unseen-domain RMSE vs source-only LSTM, and sparsity robustness -------------------

Outcome unseen_domain_rmse() {
  const auto t0 = std::chrono::steady_clock::now();
  const double lstm = median(matched_baseline(great_at(0.01)));
  const double dense = median(great_at(0.01).values());
  const double sparse = median(great_at(0.0001).values());
  const double t = seconds_since(t0);
  const double reduction = 1.0 - dense / lstm;
  const double degrade = sparse / dense - 1.0;
  return {reduction >= 0.15 && degrade < 0.10 && t < 1800.0,
          "median RMSE degC: LSTM " + fmt("%.3f", lstm) + ", GREAT 1% " + fmt("%.3f", dense) + " (" +
              fmt("%.1f", 100 * reduction) + "% lower, need >= 15), GREAT 0.01% " + fmt("%.3f", sparse) + " (" +
              fmt("%+.1f", 100 * degrade) + "%, need < 10); " + fmt("%.0f", t) + " s (< 1800)"};
}

// ---- 7: ablation ordering ---------------------------------------------------------------

Outcome ablation_ordering() {
  Ablation no_hidden;
  no_hidden.no_g_hidden = true;
  Ablation no_g;
  no_g.no_g = true;
  const double full = median(great_at(0.01).values());
  const double without_hidden = median(run_rotations(0.01, no_hidden).values());
  const double without_g = median(run_rotations(0.01, no_g).values());
  const bool ok = full <= 1.02 * without_hidden && without_hidden <= 1.02 * without_g;
  return {ok, "median RMSE degC: full " + fmt("%.3f", full) + " <= w/o g_hidden " + fmt("%.3f", without_hidden) +
                  " <= w/o g " + fmt("%.3f", without_g) + " (2% tie tolerance)"};
}

// ---- 8: sparsity arithmetic ---------------------------------------------------------------

Outcome sparsity_arithmetic() {
  DomainDataset ds;
  ds.name = "dense";
  for (int s = 0; s < 10; ++s) {
    SegmentSeries seg;
    seg.id = "s" + std::to_string(s);
    seg.features.assign(1000 * kNumFeatures, 0.0);
    seg.labels.assign(1000, 1.0 + s);
    seg.mask.assign(1000, 1);
    ds.segments.push_back(seg);
  }
  const std::size_t hundred = subsample_labels(ds, 0.01, 7).observed();
  std::size_t wrong = 0, cases = 0;
  std::mt19937_64 rng(8);
  for (double fraction : {0.5, 0.1, 0.01, 0.001, 0.0001, 0.00015, 0.00005}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      ++cases;
      const std::size_t expect = static_cast<std::size_t>(std::llround(fraction * 10000.0));
      try {
        const DomainDataset kept = subsample_labels(ds, fraction, seed);
        bool subset = true;
        for (std::size_t s = 0; s < ds.segments.size(); ++s) {
          for (std::size_t t = 0; t < 1000; ++t) {
            if (kept.segments[s].mask[t] && kept.segments[s].labels[t] != ds.segments[s].labels[t]) subset = false;
          }
        }
        wrong += kept.observed() != expect || !subset;
      } catch (const DataError&) {
        wrong += expect != 0;
      }
    }
  }
  return {hundred == 100 && wrong == 0, "1% of 10,000 -> " + std::to_string(hundred) + "; " +
                                            std::to_string(cases - wrong) + "/" + std::to_string(cases) +
                                            " fractions keep exactly round(f * N)"};
}

// ---- 9: Integrated Gradients completeness -------------------------------------------------

Outcome ig_completeness() {
  Bench& b = bench();
  const PreparedDomains prep = prepare_domains(b.data, b.primary, {}, 1.0, 0);
  const ParamSet& theta = b.cache.predictor(prep.source, b.seeded(0));
  std::mt19937_64 rng(9);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const Tensor x = random_tensor({30, kNumFeatures}, rng, -2.0, 2.0);
    worst = std::max(worst, integrated_gradients(b.config.dims, theta, x, 256).completeness_error());
  }
  return {worst < 0.01, "trained predictor, 100 random sequences, max relative completeness error " +
                            fmt("%.2e", worst) + " (< 1%)"};
}

// ---- 10: determinism ----------------------------------------------------------------------

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / "great_acceptance_determinism";
  fs::remove_all(root);
  const std::string manifest = (kBenchmarks / "acceptance.json").string();
  const std::vector<std::string> tiny = {"--manifest",     manifest, "--hidden_dim", "4", "--transform_width", "4",
                                         "--window_length", "60",    "--window_stride", "60", "--pretrain_epochs", "2",
                                         "--transform_epochs", "1",  "--bilevel_epochs", "2", "--iterations_per_epoch",
                                         "2",              "--seed", "3"};
  std::vector<std::string> files;
  std::size_t commands = 0;
  std::string failure;
  for (const char* rep : {"a", "b"}) {
    const fs::path d = root / rep;
    fs::create_directories(d);
    const auto run = [&](std::vector<std::string> args, bool common = true) {
      args.insert(args.begin(), "great");
      if (common) args.insert(args.end(), tiny.begin(), tiny.end());
      std::ostringstream out, err;
      if (cli::run(args, out, err) != 0) failure = args[1] + ": " + err.str();
      commands += rep[0] == 'a';
    };
    const auto p = [&](const std::string& f) { return (d / f).string(); };
    run({"generate", "--manifest", manifest, "--out", p("data")}, false);
    run({"pretrain", "--out", p("pre.json")});
    run({"train", "--aux", "NOR", "--out", p("train.json")});
    run({"evaluate", "--checkpoint", p("train.json"), "--out", p("eval.json")});
    run({"attribute", "--checkpoint", p("train.json"), "--steps", "16", "--targets", "EST", "--out", p("attr.csv")});
    run({"export-augmented", "--checkpoint", p("train.json"), "--out", p("aug.csv")});
    run({"experiment", "--aux", "SOU", "--seeds", "2", "--checkpoints", "--attribution-steps", "16", "--out",
         p("xp")});
    if (files.empty()) {
      for (const auto& e : fs::recursive_directory_iterator(d)) {
        if (e.is_regular_file()) files.push_back(fs::relative(e.path(), d).string());
      }
    }
  }
  std::size_t same = 0;
  for (const auto& f : files) same += read_text(root / "a" / f) == read_text(root / "b" / f);
  fs::remove_all(root);
  if (!failure.empty()) return {false, "command failed: " + failure};
  return {same == files.size() && !files.empty(),
          std::to_string(commands) + " commands, " + std::to_string(same) + "/" + std::to_string(files.size()) +
              " output files bit-identical across repeats"};
}

// ---- 11: augmented-data utility -------------------------------------------------------------

Outcome augmented_utility() {
  Bench& b = bench();
  const RotationResults& great = great_at(0.01);
  const DomainDataset train_raw = slice_dates(b.data.domain(b.primary), b.data.manifest.train_range());
  std::vector<double> with_aug, original, longer;
  std::string per_seed;
  for (std::uint64_t seed = 0; seed < kSeeds; ++seed) {
    const TrainConfig c = b.seeded(seed);
    TrainConfig twice = c;
    twice.pretrain_epochs *= 2;
    const PreparedDomains prep = prepare_domains(b.data, b.primary, {}, 1.0, seed);
    const ParamSet& plain = b.cache.predictor(prep.source, c);
    const ParamSet plain_twice = pretrain_predictor(prep.source, twice).theta;
    double sum_aug = 0.0, sum_plain = 0.0, sum_twice = 0.0;
    std::size_t n = 0;
    for (std::size_t r = 0; r < great.reports.size(); ++r) {
      const Checkpoint& model = great.models[r].at(seed);
      DomainDataset combined = train_raw;
      const DomainDataset aug = augment_dataset(train_raw, c.dims, model.transforms.input, prep.stats, false);
      combined.segments.insert(combined.segments.end(), aug.segments.begin(), aug.segments.end());
      const ParamSet fresh = pretrain_predictor(apply_normalization(combined, prep.stats), c).theta;
      for (const auto& t : great.targets[r]) {
        sum_aug += target_rmse(b.data, t, prep.stats, c.dims, fresh);
        sum_plain += target_rmse(b.data, t, prep.stats, c.dims, plain);
        sum_twice += target_rmse(b.data, t, prep.stats, c.dims, plain_twice);
        ++n;
      }
    }
    const double k = static_cast<double>(n);
    with_aug.push_back(sum_aug / k);
    original.push_back(sum_plain / k);
    longer.push_back(sum_twice / k);
    per_seed += (per_seed.empty() ? "" : " ") + fmt("%.2f", with_aug.back()) + "/" + fmt("%.2f", original.back());
  }
  const double a = median(with_aug), o = median(original);
  return {a < o, "median over seeds of mean unseen-domain RMSE degC: original + augmented " + fmt("%.3f", a) +
                     " vs original only " + fmt("%.3f", o) + " (per seed " + per_seed +
                     "; original only at 2x epochs " + fmt("%.3f", median(longer)) + ")"};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i + 1 < argc; ++i) {
    if (std::string(argv[i]) != "--only") continue;
    std::stringstream list(argv[i + 1]);
    for (std::string item; std::getline(list, item, ',');) only.insert(std::stoi(item));
  }
  const std::vector<std::pair<std::string, Outcome (*)()>> criteria = {
      {"loss gradients match finite differences", loss_gradients},
      {"exact hypergradient matches finite differences", hypergradient},
      {"scalar quadratic lower step and Jacobian", quadratic_toy},
      {"identity transforms and lambda = 0 collapse", identity_collapse},
      {"adversarial pre-training hardens held-out data", adversarial_pretraining},
      {"unseen-domain RMSE vs source-only LSTM, sparsity robustness", unseen_domain_rmse},
      {"ablation ordering", ablation_ordering},
      {"label subsampling arithmetic", sparsity_arithmetic},
      {"Integrated Gradients completeness", ig_completeness},
      {"command determinism", determinism},
      {"augmented data improves a fresh LSTM", augmented_utility},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!only.empty() && !only.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("[%s] %2d %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(),
                o.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
