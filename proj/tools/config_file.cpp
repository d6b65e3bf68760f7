#include "config_file.hpp"

#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

namespace anisosr::cli {

namespace {

std::string num(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

std::string flag(bool b) { return b ? "true" : "false"; }

}  // namespace

void apply_key_values(const KeyValues& kv, CommandConfig& cfg) {
  TrainConfig& t = cfg.train;
  InferenceConfig& inf = cfg.inference;
  for (const auto& [key, value] : kv) {
    if (key == "seed") {
      cfg.seed = kv_size(kv, key);
    } else if (key == "log_level") {
      cfg.log_level = value;
    } else if (key == "train.epochs_offline") {
      t.epochs_offline = kv_size(kv, key);
    } else if (key == "train.epochs_online") {
      t.epochs_online = kv_size(kv, key);
    } else if (key == "train.batch_patches") {
      t.batch_patches = kv_size(kv, key);
    } else if (key == "train.samples_per_patch") {
      t.samples_per_patch = kv_size(kv, key);
    } else if (key == "train.steps_per_image") {
      t.steps_per_image = kv_size(kv, key);
    } else if (key == "train.lr") {
      t.lr = kv_double(kv, key);
    } else if (key == "train.lr_online") {
      t.lr_online = kv_double(kv, key);
    } else if (key == "train.adam_beta1") {
      t.adam_beta1 = kv_double(kv, key);
    } else if (key == "train.adam_beta2") {
      t.adam_beta2 = kv_double(kv, key);
    } else if (key == "train.adam_eps") {
      t.adam_eps = kv_double(kv, key);
    } else if (key == "train.checkpoint_every") {
      t.checkpoint_every = kv_size(kv, key);
    } else if (key == "train.scale_range") {
      const auto items = kv_list(kv, key);
      if (items.size() != 2) throw ValidationError("train.scale_range needs two values");
      KeyValues tmp{{"lo", items[0]}, {"hi", items[1]}};
      t.scale_range = {kv_double(tmp, "lo"), kv_double(tmp, "hi")};
    } else if (key == "inference.chunk_size") {
      inf.chunk_size = kv_size(kv, key);
    } else if (key == "inference.clamp") {
      inf.clamp = kv_bool(kv, key);
    } else if (key == "inference.encode_voxel_budget") {
      inf.encode_voxel_budget = kv_size(kv, key);
    } else if (key == "encoder.feature_channels") {
      cfg.encoder.feature_channels = kv_size(kv, key);
      cfg.decoder.in_features = 2 * cfg.encoder.feature_channels;
    } else if (key == "encoder.base_channels") {
      cfg.encoder.base_channels = kv_size(kv, key);
    } else if (key == "encoder.num_blocks") {
      cfg.encoder.num_blocks = kv_size(kv, key);
    } else if (key == "encoder.layers_per_block") {
      cfg.encoder.layers_per_block = kv_size(kv, key);
    } else if (key == "encoder.growth") {
      cfg.encoder.growth = kv_size(kv, key);
    } else if (key == "decoder.layers") {
      cfg.decoder.layers = kv_size(kv, key);
    } else if (key == "decoder.hidden") {
      cfg.decoder.hidden = kv_size(kv, key);
    } else if (key == "decoder.residual") {
      cfg.decoder.residual = kv_bool(kv, key);
    } else if (key == "model.kaiming_a") {
      cfg.kaiming_a = kv_double(kv, key);
    } else {
      throw ValidationError("unknown config key '" + key + "'");
    }
  }
}

KeyValues to_key_values(const CommandConfig& cfg) {
  const TrainConfig& t = cfg.train;
  const InferenceConfig& inf = cfg.inference;
  KeyValues kv{
      {"seed", std::to_string(cfg.seed)},
      {"train.epochs_offline", std::to_string(t.epochs_offline)},
      {"train.epochs_online", std::to_string(t.epochs_online)},
      {"train.batch_patches", std::to_string(t.batch_patches)},
      {"train.samples_per_patch", std::to_string(t.samples_per_patch)},
      {"train.steps_per_image", std::to_string(t.steps_per_image)},
      {"train.lr", num(t.lr)},
      {"train.adam_beta1", num(t.adam_beta1)},
      {"train.adam_beta2", num(t.adam_beta2)},
      {"train.adam_eps", num(t.adam_eps)},
      {"train.checkpoint_every", std::to_string(t.checkpoint_every)},
      {"train.scale_range", "[" + num(t.scale_range[0]) + ", " + num(t.scale_range[1]) + "]"},
      {"inference.chunk_size", std::to_string(inf.chunk_size)},
      {"inference.clamp", flag(inf.clamp)},
      {"inference.encode_voxel_budget", std::to_string(inf.encode_voxel_budget)},
      {"encoder.feature_channels", std::to_string(cfg.encoder.feature_channels)},
      {"encoder.base_channels", std::to_string(cfg.encoder.base_channels)},
      {"encoder.num_blocks", std::to_string(cfg.encoder.num_blocks)},
      {"encoder.layers_per_block", std::to_string(cfg.encoder.layers_per_block)},
      {"encoder.growth", std::to_string(cfg.encoder.growth)},
      {"decoder.layers", std::to_string(cfg.decoder.layers)},
      {"decoder.hidden", std::to_string(cfg.decoder.hidden)},
      {"decoder.residual", flag(cfg.decoder.residual)},
      {"model.kaiming_a", num(cfg.kaiming_a)},
  };
  if (t.lr_online) kv["train.lr_online"] = num(*t.lr_online);
  return kv;
}

std::uint64_t config_hash(const CommandConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : format_key_values(to_key_values(cfg))) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string Provenance::to_json() const {
  std::ostringstream hash;
  hash << "0x" << std::hex << config_hash;
  nlohmann::json j{{"command_line", command_line},
                   {"config_hash", hash.str()},
                   {"seed", seed},
                   {"code_version", code_version},
                   {"config", config_text}};
  return j.dump(2);
}

std::string Provenance::short_text() const {
  std::ostringstream os;
  os << "anisosr " << code_version << " cfg " << std::hex << config_hash << std::dec << " seed " << seed;
  return os.str();
}

Provenance make_provenance(const std::vector<std::string>& argv, const CommandConfig& cfg) {
  Provenance p;
  for (std::size_t n = 0; n < argv.size(); ++n) p.command_line += (n ? " " : "") + argv[n];
  p.config_hash = config_hash(cfg);
  p.seed = cfg.seed;
  p.code_version = ANISOSR_VERSION;
  p.config_text = format_key_values(to_key_values(cfg));
  return p;
}

}  // namespace anisosr::cli
