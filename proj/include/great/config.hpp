#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "great/trainer.hpp"

namespace great {

/// One settable TrainConfig field.
struct ConfigKey {
  std::string name;
  std::string help;
  void (*set)(TrainConfig&, const std::string&);
  std::string (*get)(const TrainConfig&);
};

const std::vector<ConfigKey>& config_keys();

/// Sets `key` from its text form; unknown keys and malformed values throw std::invalid_argument.
void set_config_value(TrainConfig& config, std::string_view key, const std::string& value);

/// `key = value` lines; `#` starts a comment; blank lines ignored.
void apply_config_text(TrainConfig& config, std::string_view text);
TrainConfig load_config(const std::filesystem::path& path, TrainConfig base = {});

/// Every key in canonical order, one `key = value` line each.
std::string config_to_text(const TrainConfig& config);

/// 64-bit FNV-1a, printed as 16 hex digits.
std::uint64_t fnv1a(std::string_view bytes);
std::string hash_hex(std::uint64_t h);

}  // namespace great
