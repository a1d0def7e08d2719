#include "misstsm/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

#include <json.hpp>

namespace misstsm {

namespace {

constexpr char kFormatTag[] = "misstsm-checkpoint-v1";

void put_u64(std::ostream& os, std::uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(buf), 8);
}

std::uint64_t get_u64(std::istream& is) {
  unsigned char buf[8];
  is.read(reinterpret_cast<char*>(buf), 8);
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return v;
}

void put_f64(std::ostream& os, double d) { put_u64(os, std::bit_cast<std::uint64_t>(d)); }

double get_f64(std::istream& is) { return std::bit_cast<double>(get_u64(is)); }

nlohmann::json config_to_json(const ModelConfig& cfg) {
  nlohmann::json j;
  j["use_misstsm"] = cfg.use_misstsm;
  j["layer"] = {
      {"embed_dim", cfg.layer.embed_dim},
      {"key_dim", cfg.layer.key_dim},
      {"heads", cfg.layer.heads},
      {"out_dim", cfg.layer.out_dim},
      {"mode", cfg.layer.mode == LayerMode::Wrapper ? "wrapper" : "direct"},
      {"eta", cfg.layer.eta},
  };
  j["backbone"] = {
      {"model_dim", cfg.backbone.model_dim},
      {"n_enc", cfg.backbone.n_enc},
      {"n_dec", cfg.backbone.n_dec},
      {"heads", cfg.backbone.heads},
      {"ff_dim", cfg.backbone.ff_dim},
  };
  j["n_variates"] = cfg.n_variates;
  j["context_len"] = cfg.context_len;
  j["horizon"] = cfg.horizon;
  j["n_classes"] = cfg.n_classes;
  return j;
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig cfg;
  cfg.use_misstsm = j.at("use_misstsm").get<bool>();
  const nlohmann::json& l = j.at("layer");
  cfg.layer.embed_dim = l.at("embed_dim").get<std::size_t>();
  cfg.layer.key_dim = l.at("key_dim").get<std::size_t>();
  cfg.layer.heads = l.at("heads").get<std::size_t>();
  cfg.layer.out_dim = l.at("out_dim").get<std::size_t>();
  const std::string mode = l.at("mode").get<std::string>();
  if (mode != "wrapper" && mode != "direct") {
    throw std::runtime_error("checkpoint: unknown layer mode '" + mode + "'");
  }
  cfg.layer.mode = mode == "wrapper" ? LayerMode::Wrapper : LayerMode::Direct;
  cfg.layer.eta = l.at("eta").get<double>();
  const nlohmann::json& b = j.at("backbone");
  cfg.backbone.model_dim = b.at("model_dim").get<std::size_t>();
  cfg.backbone.n_enc = b.at("n_enc").get<std::size_t>();
  cfg.backbone.n_dec = b.at("n_dec").get<std::size_t>();
  cfg.backbone.heads = b.at("heads").get<std::size_t>();
  cfg.backbone.ff_dim = b.at("ff_dim").get<std::size_t>();
  cfg.n_variates = j.at("n_variates").get<std::size_t>();
  cfg.context_len = j.at("context_len").get<std::size_t>();
  cfg.horizon = j.at("horizon").get<std::size_t>();
  cfg.n_classes = j.at("n_classes").get<std::size_t>();
  return cfg;
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelConfig& cfg, const ParamStore& store) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("checkpoint: cannot open '" + path + "' for writing");

  nlohmann::json header;
  header["format"] = kFormatTag;
  header["model"] = config_to_json(cfg);
  const std::string header_text = header.dump();
  put_u64(os, header_text.size());
  os.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));

  put_u64(os, store.slots().size());
  for (const auto& [name, slot] : store.slots()) {
    put_u64(os, name.size());
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u64(os, slot.value.rank());
    for (std::size_t d : slot.value.shape) put_u64(os, d);
    for (double v : slot.value.data) put_f64(os, v);
  }
  os.flush();
  if (!os) throw std::runtime_error("checkpoint: write to '" + path + "' failed");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open '" + path + "'");

  const std::uint64_t header_len = get_u64(is);
  std::string header_text(header_len, '\0');
  is.read(header_text.data(), static_cast<std::streamsize>(header_len));
  if (!is) throw std::runtime_error("checkpoint: truncated header");
  nlohmann::json header = nlohmann::json::parse(header_text);
  if (header.at("format").get<std::string>() != kFormatTag) {
    throw std::runtime_error("checkpoint: unrecognized format tag");
  }

  Checkpoint ckpt;
  ckpt.config = config_from_json(header.at("model"));
  const std::uint64_t n_tensors = get_u64(is);
  for (std::uint64_t t = 0; t < n_tensors; ++t) {
    const std::uint64_t name_len = get_u64(is);
    std::string name(name_len, '\0');
    is.read(name.data(), static_cast<std::streamsize>(name_len));
    if (!is) throw std::runtime_error("checkpoint: truncated tensor name");
    const std::uint64_t rank = get_u64(is);
    std::vector<std::size_t> shape(rank);
    for (std::uint64_t d = 0; d < rank; ++d) shape[d] = get_u64(is);
    Tensor value(shape);
    for (double& v : value.data) v = get_f64(is);
    ckpt.params.add(name, std::move(value));
  }
  return ckpt;
}

Model load_model(const std::string& path) {
  Checkpoint ckpt = load_checkpoint(path);
  return Model(ckpt.config, std::move(ckpt.params));
}

}  // namespace misstsm
