#include "great/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace great {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

double parse_double(const char* key, const std::string& v) {
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw std::invalid_argument(std::string("config '") + key + "': not a number: '" + v + "'");
  }
  return out;
}

std::uint64_t parse_unsigned(const char* key, const std::string& v) {
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw std::invalid_argument(std::string("config '") + key + "': not a non-negative integer: '" + v + "'");
  }
  return out;
}

bool parse_bool(const char* key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw std::invalid_argument(std::string("config '") + key + "': not a boolean: '" + v + "'");
}

std::string format_double(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

#define REAL_KEY(key, field, help)                                                             \
  ConfigKey {                                                                                  \
    key, help, [](TrainConfig& c, const std::string& v) { c.field = parse_double(key, v); }, \
        [](const TrainConfig& c) { return format_double(c.field); }                           \
  }
#define COUNT_KEY(key, field, help)                                                                       \
  ConfigKey {                                                                                             \
    key, help, [](TrainConfig& c, const std::string& v) { c.field = parse_unsigned(key, v); },          \
        [](const TrainConfig& c) { return std::to_string(c.field); }                                     \
  }
#define FLAG_KEY(key, field, help)                                                           \
  ConfigKey {                                                                                \
    key, help, [](TrainConfig& c, const std::string& v) { c.field = parse_bool(key, v); }, \
        [](const TrainConfig& c) { return std::string(c.field ? "true" : "false"); }        \
  }

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = {
      REAL_KEY("lambda", weights.lambda, "weight of the transformed-prediction loss"),
      REAL_KEY("gamma", weights.gamma, "upper-level reconstruction weight"),
      REAL_KEY("eta", weights.eta, "pre-training reconstruction weight"),
      REAL_KEY("alpha", alpha, "inner SGD step size"),
      COUNT_KEY("inner_steps", inner_steps, "inner SGD steps per iteration"),
      REAL_KEY("upper_lr", upper_lr, "Adam learning rate of the outer loop"),
      REAL_KEY("pretrain_lr", pretrain_lr, "Adam learning rate of predictor pre-training"),
      REAL_KEY("transform_lr", transform_lr, "Adam learning rate of transform pre-training"),
      COUNT_KEY("pretrain_epochs", pretrain_epochs, "predictor pre-training epochs"),
      COUNT_KEY("transform_epochs", transform_epochs, "transform pre-training epochs"),
      COUNT_KEY("bilevel_epochs", bilevel_epochs, "maximum outer epochs"),
      COUNT_KEY("iterations_per_epoch", iterations_per_epoch, "outer iterations between validations"),
      COUNT_KEY("patience", patience, "early-stopping patience in epochs"),
      COUNT_KEY("batch_size", batch_size, "windows per batch"),
      COUNT_KEY("window_length", window_length, "days per training window"),
      COUNT_KEY("window_stride", window_stride, "days between window starts"),
      COUNT_KEY("hidden_dim", dims.hidden_dim, "LSTM hidden units"),
      COUNT_KEY("num_layers", dims.num_layers, "stacked LSTM layers"),
      COUNT_KEY("transform_width", dims.transform_width, "hidden width of transforms and heads"),
      REAL_KEY("clip_norm", clip_norm, "global gradient-norm clip"),
      REAL_KEY("rec_ceiling", rec_ceiling, "reconstruction ceiling during transform pre-training"),
      COUNT_KEY("rec_patience", rec_patience, "epochs allowed above the reconstruction ceiling"),
      FLAG_KEY("commit_lower", commit_lower, "commit the lower step into theta_0"),
      ConfigKey{"hypergrad_mode", "exact or first_order",
                [](TrainConfig& c, const std::string& v) { c.hypergrad_mode = parse_hypergrad_mode(v); },
                [](const TrainConfig& c) { return hypergrad_mode_name(c.hypergrad_mode); }},
      FLAG_KEY("no_pre", ablation.no_pre, "skip pre-training"),
      FLAG_KEY("no_bi", ablation.no_bi, "joint instead of bi-level training"),
      FLAG_KEY("no_g", ablation.no_g, "disable both transforms"),
      FLAG_KEY("no_g_hidden", ablation.no_g_hidden, "disable the hidden-state transform"),
      COUNT_KEY("seed", seed, "random seed"),
  };
  return keys;
}

void set_config_value(TrainConfig& config, std::string_view key, const std::string& value) {
  for (const auto& k : config_keys()) {
    if (k.name == key) {
      k.set(config, value);
      return;
    }
  }
  throw std::invalid_argument("unknown config key '" + std::string(key) + "'");
}

void apply_config_text(TrainConfig& config, std::string_view text) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw std::invalid_argument("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    try {
      set_config_value(config, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
}

TrainConfig load_config(const std::filesystem::path& path, TrainConfig base) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot open config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  apply_config_text(base, buf.str());
  return base;
}

std::string config_to_text(const TrainConfig& config) {
  std::string out;
  for (const auto& k : config_keys()) out += k.name + " = " + k.get(config) + "\n";
  return out;
}

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace great
