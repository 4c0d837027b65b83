#include "evostack/nn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

static_assert(std::endian::native == std::endian::little,
              "checkpoints are little-endian; big-endian hosts unsupported");

namespace evostack::nn {

namespace {

constexpr char kMagic[4] = {'E', 'T', 'N', 'N'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ofstream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint32_t read_u32(std::ifstream& in, const std::string& path) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw IoError(path + ": truncated checkpoint header");
  return v;
}

template <class ParamList>
void write_container(const std::filesystem::path& path,
                     const nlohmann::ordered_json& meta,
                     const ParamList& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(kMagic, 4);
  write_u32(out, kVersion);
  const std::string json = meta.dump();
  write_u32(out, static_cast<std::uint32_t>(json.size()));
  out.write(json.data(), static_cast<std::streamsize>(json.size()));
  for (const auto& p : params) {
    out.write(reinterpret_cast<const char*>(p.value.data()),
              static_cast<std::streamsize>(p.value.size() * sizeof(float)));
  }
  if (!out) throw IoError("failed writing " + path.string());
}

nlohmann::json read_container(std::ifstream& in, const std::string& path) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw IoError(path + ": not a checkpoint file (bad magic)");
  const std::uint32_t version = read_u32(in, path);
  if (version != kVersion)
    throw IoError(path + ": unsupported checkpoint version " +
                  std::to_string(version));
  const std::uint32_t json_len = read_u32(in, path);
  std::string json(json_len, '\0');
  in.read(json.data(), json_len);
  if (!in) throw IoError(path + ": truncated checkpoint metadata");
  try {
    return nlohmann::json::parse(json);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path + ": bad checkpoint metadata: " + e.what());
  }
}

template <class ParamList>
void read_tensors(std::ifstream& in, const std::string& path,
                  ParamList& params) {
  for (auto& p : params) {
    in.read(reinterpret_cast<char*>(p.value.data()),
            static_cast<std::streamsize>(p.value.size() * sizeof(float)));
    if (!in)
      throw IoError(path + ": truncated tensor data for " + p.name);
  }
  char extra;
  if (in.read(&extra, 1))
    throw IoError(path + ": trailing bytes after tensor data");
}

const char* head_kind_name(HeadKind k) {
  switch (k) {
    case HeadKind::Binary: return "binary";
    case HeadKind::MultiLabel: return "multilabel";
    case HeadKind::MultiClass: return "multiclass";
  }
  return "multiclass";
}

HeadKind head_kind_from_name(const std::string& name,
                             const std::string& path) {
  if (name == "binary") return HeadKind::Binary;
  if (name == "multilabel") return HeadKind::MultiLabel;
  if (name == "multiclass") return HeadKind::MultiClass;
  throw IoError(path + ": unknown head kind '" + name + "'");
}

}  // namespace

void save_vit_checkpoint(const std::filesystem::path& path,
                         const VitModel<float>& model) {
  nlohmann::ordered_json meta;
  meta["kind"] = "vit";
  meta["architecture"] =
      nlohmann::ordered_json::parse(architecture_to_json(model.arch(),
                                                         model.fixed()));
  meta["head"] = {{"kind", head_kind_name(model.head().kind)},
                  {"width", model.head().width}};
  write_container(path, meta, model.params());
}

VitModel<float> load_vit_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const auto meta = read_container(in, path.string());
  if (meta.value("kind", "") != "vit")
    throw IoError(path.string() + ": not a vit checkpoint");
  auto [arch, fixed] = architecture_from_json(meta.at("architecture").dump());
  HeadDescriptor head;
  head.kind = head_kind_from_name(
      meta.at("head").at("kind").get<std::string>(), path.string());
  head.width = meta.at("head").at("width").get<int>();

  RngStream scratch(0);
  VitModel<float> model(std::move(arch), fixed, head, scratch);
  read_tensors(in, path.string(), model.params());
  return model;
}

void save_mlp_checkpoint(const std::filesystem::path& path,
                         const MlpModel<float>& model) {
  nlohmann::ordered_json meta;
  meta["kind"] = "mlp";
  meta["widths"] = model.widths();
  write_container(path, meta, model.params());
}

MlpModel<float> load_mlp_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const auto meta = read_container(in, path.string());
  if (meta.value("kind", "") != "mlp")
    throw IoError(path.string() + ": not an mlp checkpoint");
  RngStream scratch(0);
  MlpModel<float> model(meta.at("widths").get<std::vector<int>>(), scratch);
  read_tensors(in, path.string(), model.params());
  return model;
}

void save_backbone_checkpoint(const std::filesystem::path& path,
                              const Backbone& backbone) {
  nlohmann::ordered_json meta;
  meta["kind"] = "backbone";
  meta["stage_widths"] = backbone.config().stage_widths;
  meta["in_channels"] = backbone.config().in_channels;
  meta["seed"] = backbone.config().seed;

  struct View {
    std::string name;
    const std::vector<float>& value;
  };
  std::vector<View> params;
  for (std::size_t s = 0; s < 4; ++s) {
    params.push_back({"stage" + std::to_string(s) + ".weight",
                      backbone.stage_weights()[s]});
    params.push_back({"stage" + std::to_string(s) + ".bias",
                      backbone.stage_biases()[s]});
  }
  write_container(path, meta, params);
}

Backbone load_backbone_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const auto meta = read_container(in, path.string());
  if (meta.value("kind", "") != "backbone")
    throw IoError(path.string() + ": not a backbone checkpoint");
  BackboneConfig cfg;
  cfg.stage_widths = meta.at("stage_widths").get<std::vector<int>>();
  cfg.in_channels = meta.at("in_channels").get<int>();
  cfg.seed = meta.at("seed").get<std::uint64_t>();
  Backbone backbone(cfg);

  std::vector<std::vector<float>> weights = backbone.stage_weights();
  std::vector<std::vector<float>> biases = backbone.stage_biases();
  struct View {
    std::string name;
    std::vector<float>& value;
  };
  std::vector<View> params;
  for (std::size_t s = 0; s < 4; ++s) {
    params.push_back({"stage" + std::to_string(s) + ".weight", weights[s]});
    params.push_back({"stage" + std::to_string(s) + ".bias", biases[s]});
  }
  read_tensors(in, path.string(), params);
  backbone.load_parameters(std::move(weights), std::move(biases));
  return backbone;
}

}  // namespace evostack::nn
