#include "cli.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>

#include "CLI11.hpp"
#include "great/checkpoint.hpp"
#include "great/config.hpp"
#include "great/eval.hpp"
#include "great/version.hpp"

namespace great::cli {

namespace {

namespace fs = std::filesystem;

/// Options shared by every subcommand that touches data or training.
struct Common {
  std::string config_file;
  std::map<std::string, std::string> overrides;
  std::string manifest;
  std::string data_dir;
  std::string primary;

  TrainConfig config() const {
    TrainConfig c = config_file.empty() ? TrainConfig{} : load_config(config_file);
    for (const auto& [key, value] : overrides) set_config_value(c, key, value.empty() ? "true" : value);
    c.validate();
    return c;
  }

  BenchmarkData data() const {
    if (manifest.empty()) throw std::invalid_argument("--manifest is required");
    const BenchmarkManifest m = load_manifest(manifest);
    return data_dir.empty() ? generate_benchmark(m) : load_benchmark(m, data_dir);
  }

  std::string primary_of(const BenchmarkData& d) const { return primary.empty() ? d.manifest.primary().name : primary; }
};

void add_common(CLI::App& app, Common& c) {
  app.add_option("--config", c.config_file, "key = value configuration file");
  app.add_option("--manifest", c.manifest, "benchmark manifest (JSON)");
  app.add_option("--data", c.data_dir, "directory of <domain>.csv files; generated from the manifest when omitted");
  app.add_option("--primary", c.primary, "primary source domain (default: the manifest's)");
  for (const auto& key : config_keys()) {
    auto* opt = app.add_option_function<std::string>(
        "--" + key.name, [&c, name = key.name](const std::string& v) { c.overrides[name] = v; }, key.help);
    if (key.get(TrainConfig{}) == "true" || key.get(TrainConfig{}) == "false") opt->expected(0, 1);
  }
}

std::vector<std::string> others(const BenchmarkData& data, const std::string& primary) {
  std::vector<std::string> out;
  for (const auto& n : data.names()) {
    if (n != primary) out.push_back(n);
  }
  return out;
}

/// Appends one JSON line per epoch; wall-clock time is the only non-deterministic field.
class JsonlLog {
 public:
  explicit JsonlLog(const std::string& path) {
    if (path.empty()) return;
    file_.emplace(path, std::ios::binary);
    if (!*file_) throw DataError("cannot write " + path);
  }
  EpochCallback callback() {
    if (!file_) return {};
    return [this](const EpochRecord& r) { *file_ << r.to_json() << "\n" << std::flush; };
  }

 private:
  std::optional<std::ofstream> file_;
};

Checkpoint make_checkpoint(const TrainConfig& config, const ParamSet& theta, const TransformParams& tf) {
  return {config.dims, config.seed, kFrameworkVersion, theta, tf};
}

TransformParams identity_transforms(const ModelDims& dims) {
  std::mt19937_64 rng(0);
  return init_transforms(dims, rng);
}

std::string fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Bi-level learned augmentation for zero-shot stream-temperature prediction", "great"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kFrameworkVersion);

  Common common;

  // generate
  auto* gen = app.add_subcommand("generate", "write the synthetic benchmark of a manifest as CSV files");
  std::string gen_out;
  gen->add_option("--manifest", common.manifest, "benchmark manifest (JSON)")->required();
  gen->add_option("--out", gen_out, "output directory")->required();

  // pretrain
  auto* pre = app.add_subcommand("pretrain", "pre-train the predictor and transforms on the primary domain");
  add_common(*pre, common);
  std::string pre_out, pre_log;
  pre->add_option("--out", pre_out, "checkpoint to write")->required();
  pre->add_option("--log", pre_log, "per-epoch JSONL log");

  // train
  auto* train = app.add_subcommand("train", "full bi-level training with auxiliary reference domains");
  add_common(*train, common);
  std::vector<std::string> train_aux;
  double train_sparsity = 0.01;
  std::string train_out, train_log, train_init;
  train->add_option("--aux", train_aux, "auxiliary reference domains")->required();
  train->add_option("--sparsity", train_sparsity, "fraction of auxiliary labels kept");
  train->add_option("--pretrained", train_init, "start from this pre-trained checkpoint");
  train->add_option("--out", train_out, "checkpoint to write")->required();
  train->add_option("--log", train_log, "per-epoch JSONL log");

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "zero-shot RMSE (degC) of a checkpoint on target test windows");
  add_common(*eval, common);
  std::string eval_ckpt, eval_out;
  std::vector<std::string> eval_targets;
  eval->add_option("--checkpoint", eval_ckpt, "model checkpoint")->required();
  eval->add_option("--targets", eval_targets, "target domains (default: every non-primary domain)");
  eval->add_option("--out", eval_out, "write the scores as JSON");

  // attribute
  auto* attr = app.add_subcommand("attribute", "Integrated Gradients feature attribution on target test windows");
  add_common(*attr, common);
  std::string attr_ckpt, attr_out, attr_label = "model";
  std::vector<std::string> attr_targets;
  std::size_t attr_steps = 256;
  attr->add_option("--checkpoint", attr_ckpt, "model checkpoint")->required();
  attr->add_option("--targets", attr_targets, "target domains (default: every non-primary domain)");
  attr->add_option("--steps", attr_steps, "interpolation intervals")->check(CLI::Range(16, 1 << 20));
  attr->add_option("--label", attr_label, "column label of this model");
  attr->add_option("--out", attr_out, "attribution CSV")->required();

  // export-augmented
  auto* exp = app.add_subcommand("export-augmented", "write the primary training data passed through the input transform");
  add_common(*exp, common);
  std::string exp_ckpt, exp_out;
  bool exp_interleave = false;
  exp->add_option("--checkpoint", exp_ckpt, "model checkpoint")->required();
  exp->add_option("--out", exp_out, "CSV to write")->required();
  exp->add_flag("--interleave", exp_interleave, "keep each original segment before its augmented copy");

  // experiment
  auto* xp = app.add_subcommand("experiment", "multi-seed Single / Multi / baseline protocol with reports");
  add_common(*xp, common);
  std::string xp_setting = "single", xp_out;
  std::vector<std::string> xp_aux, xp_targets;
  double xp_sparsity = 0.01;
  std::size_t xp_seeds = 5, xp_attr_steps = 0;
  bool xp_checkpoints = false;
  xp->add_option("--setting", xp_setting, "single, multi or baseline_lstm");
  xp->add_option("--aux", xp_aux, "auxiliary domains (default: every rotation)");
  xp->add_option("--targets", xp_targets, "target domains (default: implied by the setting)");
  xp->add_option("--sparsity", xp_sparsity, "fraction of auxiliary labels kept");
  xp->add_option("--seeds", xp_seeds, "number of seeds, starting at --seed");
  xp->add_option("--attribution-steps", xp_attr_steps, "Integrated Gradients intervals (0 disables)");
  xp->add_flag("--checkpoints", xp_checkpoints, "also write one checkpoint per seed");
  xp->add_option("--out", xp_out, "report directory")->required();

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << kFrameworkVersion << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    for (auto* sub : app.get_subcommands()) err << "run 'great " << sub->get_name() << " --help' for usage\n";
    return kExitUsage;
  }

  const auto note = [&](const std::string& msg) { err << msg << "\n"; };

  try {
    if (gen->parsed()) {
      const BenchmarkData data = generate_benchmark(load_manifest(common.manifest));
      write_benchmark(data, gen_out);
      out << "wrote " << data.domains.size() << " domains to " << gen_out << "\n";
    } else if (pre->parsed()) {
      const TrainConfig config = common.config();
      const BenchmarkData data = common.data();
      const PreparedDomains prep = prepare_domains(data, common.primary_of(data), {}, 1.0, config.seed);
      JsonlLog log(pre_log);
      TrainHooks hooks;
      hooks.on_epoch = log.callback();
      const Pretrained p = pretrain_all(prep.source, config, hooks);
      save_checkpoint(make_checkpoint(config, p.theta, p.transforms.value_or(identity_transforms(config.dims))),
                      pre_out);
      out << "source RMSE (normalized) " << fixed(evaluate_rmse(config.dims, p.theta, prep.source)) << "\n";
    } else if (train->parsed()) {
      const TrainConfig config = common.config();
      const BenchmarkData data = common.data();
      const PreparedDomains prep =
          prepare_domains(data, common.primary_of(data), train_aux, train_sparsity, config.seed);
      JsonlLog log(train_log);
      TrainHooks hooks;
      hooks.on_epoch = log.callback();
      hooks.on_warning = note;
      std::optional<Pretrained> init;
      if (!train_init.empty()) {
        const Checkpoint c = load_checkpoint(train_init);
        if (!(c.dims == config.dims)) throw std::invalid_argument("--pretrained checkpoint has different dimensions");
        init = Pretrained{c.predictor, c.transforms};
        hooks.pretrained = &*init;
      }
      const TrainState state = train_great(prep.source, prep.aux, config, hooks);
      save_checkpoint(make_checkpoint(config, state.theta, state.transforms), train_out);
      out << "best epoch " << state.best_epoch << ", auxiliary RMSE (normalized) " << fixed(state.best_metric)
          << "\n";
    } else if (eval->parsed()) {
      const BenchmarkData data = common.data();
      const std::string primary = common.primary_of(data);
      const Checkpoint ckpt = load_checkpoint(eval_ckpt);
      const NormStats stats = prepare_domains(data, primary, {}, 1.0, 0).stats;
      if (eval_targets.empty()) eval_targets = others(data, primary);
      std::map<std::string, double> scores;
      for (const auto& t : eval_targets) {
        scores[t] = target_rmse(data, t, stats, ckpt.dims, ckpt.predictor);
        out << t << " " << fixed(scores[t]) << "\n";
      }
      if (!eval_out.empty()) {
        std::string json = "{\n  \"rmse\": {";
        bool first = true;
        for (const auto& [t, v] : scores) {
          char buf[64];
          std::snprintf(buf, sizeof buf, "%.17g", v);
          json += std::string(first ? "\n" : ",\n") + "    \"" + t + "\": " + buf;
          first = false;
        }
        json += "\n  },\n  \"manifest_hash\": \"" + data.manifest_hash + "\",\n  \"seed\": " +
                std::to_string(ckpt.seed) + ",\n  \"version\": \"" + kFrameworkVersion + "\"\n}\n";
        write_text(eval_out, json);
      }
    } else if (attr->parsed()) {
      const BenchmarkData data = common.data();
      const std::string primary = common.primary_of(data);
      const Checkpoint ckpt = load_checkpoint(attr_ckpt);
      const NormStats stats = prepare_domains(data, primary, {}, 1.0, 0).stats;
      if (attr_targets.empty()) attr_targets = others(data, primary);
      MetricsReport report;
      for (const auto& t : attr_targets) {
        const DomainDataset test =
            apply_normalization(slice_dates(data.domain(t), data.manifest.test_range()), stats);
        report.attribution.push_back({attr_label, t, dataset_attribution(ckpt.dims, ckpt.predictor, test, attr_steps)});
      }
      write_text(attr_out, attribution_csv(report));
      out << attribution_csv(report);
    } else if (exp->parsed()) {
      const BenchmarkData data = common.data();
      const std::string primary = common.primary_of(data);
      const Checkpoint ckpt = load_checkpoint(exp_ckpt);
      const DomainDataset train_raw = slice_dates(data.domain(primary), data.manifest.train_range());
      export_augmented(train_raw, ckpt.dims, ckpt.transforms.input, fit_normalization(train_raw), exp_out,
                       exp_interleave);
      out << "wrote augmented data to " << exp_out << "\n";
    } else if (xp->parsed()) {
      ExperimentSpec base;
      base.config = common.config();
      const BenchmarkData data = common.data();
      const std::string primary = common.primary_of(data);
      base.setting = parse_setting(xp_setting);
      base.primary = primary;
      base.sparsity = xp_sparsity;
      base.n_seeds = xp_seeds;
      base.attribution_steps = xp_attr_steps;
      base.auxiliary = xp_aux;
      base.targets = xp_targets;

      std::vector<std::pair<std::string, ExperimentSpec>> runs;
      if (base.setting == Setting::BaselineLstm) {
        if (base.targets.empty()) base.targets = others(data, primary);
        runs.emplace_back("", base);
      } else if (!xp_aux.empty() || !xp_targets.empty()) {
        const auto rest = others(data, primary);
        if (base.setting == Setting::Single && base.targets.empty()) {
          for (const auto& n : rest) {
            if (std::find(xp_aux.begin(), xp_aux.end(), n) == xp_aux.end()) base.targets.push_back(n);
          }
        }
        if (base.setting == Setting::Multi && base.auxiliary.empty()) {
          for (const auto& n : rest) {
            if (std::find(xp_targets.begin(), xp_targets.end(), n) == xp_targets.end()) base.auxiliary.push_back(n);
          }
        }
        runs.emplace_back("", base);
      } else {
        const auto specs = base.setting == Setting::Single ? single_rotations(data.names(), primary, base)
                                                            : multi_rotations(data.names(), primary, base);
        for (const auto& s : specs) {
          runs.emplace_back(base.setting == Setting::Single ? "aux_" + s.auxiliary.front() : "target_" + s.targets.front(),
                            s);
        }
      }

      PretrainCache cache;
      for (const auto& [name, spec] : runs) {
        const fs::path dir = name.empty() ? fs::path(xp_out) : fs::path(xp_out) / name;
        ExperimentOptions opts;
        opts.cache = &cache;
        opts.log = [&, label = name](const std::string& m) { note((label.empty() ? "" : label + " ") + m); };
        if (xp_checkpoints) {
          opts.on_model = [dir](std::uint64_t seed, const Checkpoint& c) {
            fs::create_directories(dir);
            save_checkpoint(c, dir / ("seed_" + std::to_string(seed) + ".ckpt.json"));
          };
        }
        const MetricsReport report = run_experiment(spec, data, opts);
        emit_report(report, dir);
        for (const auto& t : report.targets) {
          out << (name.empty() ? "" : name + " ") << t.name << " " << fixed(t.mean) << " +- " << fixed(t.std) << " ("
              << t.per_seed.size() << " seeds)\n";
        }
      }
    }
  } catch (const TrainingError& e) {
    err << "training error: " << e.what() << "\n";
    return kExitTraining;
  } catch (const NonFiniteError& e) {
    err << "training diverged: " << e.what() << "\n";
    return kExitTraining;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
  return kExitOk;
}

}  // namespace great::cli
