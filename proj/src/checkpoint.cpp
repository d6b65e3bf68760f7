#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "anisosr/keyvalue.hpp"
#include "anisosr/training.hpp"

namespace anisosr {

namespace {

constexpr char kMagic[8] = {'A', 'N', 'S', 'R', 'C', 'K', 'P', '1'};

template <typename V>
void put(std::ostream& os, V v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <typename V>
V get(std::istream& is, const std::string& path) {
  V v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(V))) throw IoError("truncated checkpoint " + path);
  return v;
}

std::string hex(std::uint64_t v) {
  std::ostringstream os;
  os << "0x" << std::hex << v;
  return os.str();
}

KeyValues config_values(const EncoderConfig& e, const DecoderConfig& d) {
  return {{"encoder.in_channels", std::to_string(e.in_channels)},
          {"encoder.feature_channels", std::to_string(e.feature_channels)},
          {"encoder.base_channels", std::to_string(e.base_channels)},
          {"encoder.num_blocks", std::to_string(e.num_blocks)},
          {"encoder.layers_per_block", std::to_string(e.layers_per_block)},
          {"encoder.growth", std::to_string(e.growth)},
          {"decoder.in_features", std::to_string(d.in_features)},
          {"decoder.layers", std::to_string(d.layers)},
          {"decoder.hidden", std::to_string(d.hidden)},
          {"decoder.residual", d.residual ? "true" : "false"},
          {"decoder.out_features", std::to_string(d.out_features)}};
}

}  // namespace

std::filesystem::path checkpoint_sidecar(const std::filesystem::path& path) {
  return std::filesystem::path(path.string() + ".toml");
}

void save_checkpoint(const ModelParams& model, const std::filesystem::path& path) {
  const std::uint64_t fp = model.fingerprint();
  {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write checkpoint " + path.string());
    os.write(kMagic, sizeof(kMagic));
    put<std::uint64_t>(os, fp);
    const auto params = model.parameters();
    put<std::uint64_t>(os, params.size());
    for (const Param<float>* p : params) {
      put<std::uint64_t>(os, p->name.size());
      os.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
      put<std::uint64_t>(os, static_cast<std::uint64_t>(p->value.rows()));
      put<std::uint64_t>(os, static_cast<std::uint64_t>(p->value.cols()));
      os.write(reinterpret_cast<const char*>(p->value.data()),
               static_cast<std::streamsize>(p->value.size() * sizeof(float)));
    }
    if (!os) throw IoError("failed writing checkpoint " + path.string());
  }
  KeyValues kv = config_values(model.encoder_config(), model.decoder_config());
  kv["fingerprint"] = hex(fp);
  kv["format"] = "anisosr-checkpoint-1";
  std::ofstream side(checkpoint_sidecar(path));
  if (!side) throw IoError("cannot write checkpoint sidecar for " + path.string());
  side << format_key_values(kv);
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  const std::string p = path.string();
  const auto side_path = checkpoint_sidecar(path);
  if (!std::filesystem::exists(path)) throw IoError("missing checkpoint " + p);
  if (!std::filesystem::exists(side_path)) throw IoError("missing checkpoint sidecar " + side_path.string());

  EncoderConfig enc;
  DecoderConfig dec;
  std::string side_fp;
  try {
    const KeyValues kv = read_key_values_file(side_path.string());
    enc.in_channels = kv_size(kv, "encoder.in_channels");
    enc.feature_channels = kv_size(kv, "encoder.feature_channels");
    enc.base_channels = kv_size(kv, "encoder.base_channels");
    enc.num_blocks = kv_size(kv, "encoder.num_blocks");
    enc.layers_per_block = kv_size(kv, "encoder.layers_per_block");
    enc.growth = kv_size(kv, "encoder.growth");
    dec.in_features = kv_size(kv, "decoder.in_features");
    dec.layers = kv_size(kv, "decoder.layers");
    dec.hidden = kv_size(kv, "decoder.hidden");
    dec.residual = kv_bool(kv, "decoder.residual");
    dec.out_features = kv_size(kv, "decoder.out_features");
    const auto it = kv.find("fingerprint");
    if (it == kv.end()) throw ValidationError("missing fingerprint");
    side_fp = it->second;
  } catch (const ValidationError& e) {
    throw IoError("corrupt checkpoint sidecar " + side_path.string() + ": " + e.what());
  }

  const std::uint64_t cfg_fp = config_fingerprint(enc, dec);
  if (side_fp != hex(cfg_fp)) {
    throw FingerprintMismatch("sidecar configs hash to " + hex(cfg_fp) + " but record " + side_fp);
  }

  std::ifstream is(path, std::ios::binary);
  char magic[sizeof(kMagic)];
  if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw IoError("not a checkpoint: " + p);
  }
  const auto bin_fp = get<std::uint64_t>(is, p);
  if (bin_fp != cfg_fp) throw FingerprintMismatch("checkpoint " + hex(bin_fp) + " vs sidecar " + hex(cfg_fp));

  ModelParams model(enc, dec, 0);
  std::map<std::string, Param<float>*> by_name;
  for (Param<float>* q : model.parameters()) by_name[q->name] = q;
  const auto count = get<std::uint64_t>(is, p);
  if (count != by_name.size()) throw IoError("checkpoint " + p + " has the wrong number of arrays");
  for (std::uint64_t n = 0; n < count; ++n) {
    const auto len = get<std::uint64_t>(is, p);
    if (len > 4096) throw IoError("corrupt array name in " + p);
    std::string name(len, '\0');
    if (!is.read(name.data(), static_cast<std::streamsize>(len))) throw IoError("truncated checkpoint " + p);
    const auto rows = get<std::uint64_t>(is, p);
    const auto cols = get<std::uint64_t>(is, p);
    const auto it = by_name.find(name);
    if (it == by_name.end()) throw IoError("unexpected array '" + name + "' in " + p);
    MatrixR<float>& v = it->second->value;
    if (rows != static_cast<std::uint64_t>(v.rows()) || cols != static_cast<std::uint64_t>(v.cols())) {
      throw IoError("array '" + name + "' has the wrong shape in " + p);
    }
    if (!is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(float)))) {
      throw IoError("truncated checkpoint " + p);
    }
    by_name.erase(it);
  }
  return model;
}

}  // namespace anisosr
