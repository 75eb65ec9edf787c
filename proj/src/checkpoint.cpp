#include "tinyattn/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <fstream>
#include <set>

#include <json.hpp>

#include "tinyattn/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload assumes a little-endian host");

namespace tinyattn {

namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'T', 'A', 'T', 'N', 'C', 'K', 'P', 'T'};

json backbone_to_json(const BackboneConfig& c) {
  return {{"layers", c.layers},   {"hidden", c.hidden}, {"attn_heads", c.attn_heads},
          {"ffn", c.ffn},         {"vocab", c.vocab},   {"max_seq", c.max_seq}};
}

BackboneConfig backbone_from_json(const json& j) {
  BackboneConfig c;
  c.layers = j.at("layers").get<int64_t>();
  c.hidden = j.at("hidden").get<int64_t>();
  c.attn_heads = j.at("attn_heads").get<int64_t>();
  c.ffn = j.at("ffn").get<int64_t>();
  c.vocab = j.at("vocab").get<int64_t>();
  c.max_seq = j.at("max_seq").get<int64_t>();
  return c;
}

}  // namespace

void save_checkpoint(const std::string& path, Model& model, uint64_t seed) {
  json header;
  header["version"] = kCheckpointVersion;
  header["seed"] = seed;
  header["backbone"] = backbone_to_json(model.backbone.config);
  if (!model.adapters.empty()) {
    const TinyAttnAdapter& a = model.adapters.front();
    header["adapter"] = {{"heads", a.num_heads()},
                         {"dim", a.dim},
                         {"with_biases", a.with_biases},
                         {"merged_scale", a.merged_scale},
                         {"placement", to_string(model.placement)}};
  } else {
    header["adapter"] = nullptr;
  }
  header["decoder_classes"] = model.decoder.b.shape.empty() ? 0 : model.decoder.b.shape[0];

  auto params = model.named_params();
  json index = json::array();
  for (const auto& p : params) {
    index.push_back(
        {{"name", p.name}, {"shape", p.tensor->shape}, {"trainable", p.tensor->trainable}});
  }
  header["tensors"] = std::move(index);

  const std::string header_text = header.dump();
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp + "' for writing");
    out.write(kMagic, sizeof(kMagic));
    const uint32_t version = kCheckpointVersion;
    out.write(reinterpret_cast<const char*>(&version), sizeof(version));
    const uint64_t hlen = header_text.size();
    out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
    for (const auto& p : params) {
      const auto& v = p.tensor->values;
      out.write(reinterpret_cast<const char*>(v.data()),
                static_cast<std::streamsize>(v.size() * sizeof(double)));
    }
    if (!out) throw IoError("short write to '" + tmp + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw IoError("cannot rename '" + tmp + "' to '" + path + "'");
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path + "'");
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::string_view(magic, 8) != std::string_view(kMagic, 8))
    throw IoError("'" + path + "' is not a tinyattn checkpoint");
  uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  if (!in || version != kCheckpointVersion)
    throw IoError("checkpoint '" + path + "' has unsupported version " + std::to_string(version));
  uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  if (!in || hlen == 0 || hlen > (64ull << 20)) throw IoError("corrupt checkpoint header");
  std::string header_text(hlen, '\0');
  in.read(header_text.data(), static_cast<std::streamsize>(hlen));
  if (!in) throw IoError("truncated checkpoint header");

  json header;
  try {
    header = json::parse(header_text);
  } catch (const json::exception& e) {
    throw IoError(std::string("invalid checkpoint header: ") + e.what());
  }

  LoadedCheckpoint ck;
  ck.seed = header.at("seed").get<uint64_t>();
  const BackboneConfig cfg = backbone_from_json(header.at("backbone"));
  cfg.validate();

  Rng dummy(0);
  ck.model.backbone = Backbone::init(cfg, dummy);
  ck.model.placement = Placement::none;
  if (!header.at("adapter").is_null()) {
    const json& a = header.at("adapter");
    TinyAttnAdapter proto = TinyAttnAdapter::zeros(cfg.hidden, a.at("heads").get<int64_t>(),
                                                   a.at("dim").get<int64_t>(),
                                                   a.at("with_biases").get<bool>());
    proto.merged_scale = a.at("merged_scale").get<double>();
    ck.model.adapters.assign(static_cast<size_t>(cfg.layers), proto);
    ck.model.placement = placement_from_string(a.at("placement").get<std::string>());
  }
  const int64_t classes = header.at("decoder_classes").get<int64_t>();
  if (classes > 0) ck.model.decoder = Decoder::init(cfg.hidden, classes, dummy);

  auto params = ck.model.named_params();
  const json& index = header.at("tensors");
  if (index.size() != params.size())
    throw IoError("checkpoint tensor count " + std::to_string(index.size()) +
                  " does not match model (" + std::to_string(params.size()) + ")");
  std::set<std::string> seen;
  for (size_t i = 0; i < params.size(); ++i) {
    const json& e = index[i];
    const std::string name = e.at("name").get<std::string>();
    if (!seen.insert(name).second) throw IoError("duplicate tensor name '" + name + "'");
    if (name != params[i].name)
      throw IoError("tensor order mismatch: expected '" + params[i].name + "', found '" + name +
                    "'");
    const auto shape = e.at("shape").get<std::vector<int64_t>>();
    if (shape != params[i].tensor->shape)
      throw IoError("tensor '" + name + "' shape mismatch");
    params[i].tensor->trainable = e.at("trainable").get<bool>();
    auto& v = params[i].tensor->values;
    in.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(double)));
    if (!in) throw IoError("truncated checkpoint payload at '" + name + "'");
  }
  return ck;
}

}  // namespace tinyattn
