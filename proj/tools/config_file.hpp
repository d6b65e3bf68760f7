// Effective configuration of one CLI invocation: config-file values merged
// under explicit flags, plus the provenance block written next to outputs.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "anisosr/inference.hpp"
#include "anisosr/keyvalue.hpp"
#include "anisosr/training.hpp"

namespace anisosr::cli {

struct CommandConfig {
  TrainConfig train;
  InferenceConfig inference;
  EncoderConfig encoder;
  DecoderConfig decoder;
  double kaiming_a = kDefaultKaimingA;
  std::uint64_t seed = 0;
  std::string log_level = "info";
};

/// Overwrites every field named in `kv`; unknown keys are a ValidationError.
void apply_key_values(const KeyValues& kv, CommandConfig& cfg);

KeyValues to_key_values(const CommandConfig& cfg);

/// FNV-1a of the formatted effective config.
std::uint64_t config_hash(const CommandConfig& cfg);

struct Provenance {
  std::string command_line;
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  std::string code_version;
  std::string config_text;

  std::string to_json() const;
  /// Short form for the 80-byte NIfTI description field.
  std::string short_text() const;
};

Provenance make_provenance(const std::vector<std::string>& argv, const CommandConfig& cfg);

}  // namespace anisosr::cli
