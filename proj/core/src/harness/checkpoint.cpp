#include "bdl/harness/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <map>

#include "bdl/errors.hpp"
#include "bdl/harness/files.hpp"

namespace bdl::harness {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'B', 'D', 'L', 'K'};


void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

void put_section(std::string& out, const char tag[4], std::string_view body) {
  out.append(tag, 4);
  put_u64(out, body.size());
  out.append(body);
}

json mlp_json(const Mlp& m) {
  json layers = json::array();
  for (const auto& l : m.spec().layers) layers.push_back({{"out", l.out}, {"activation", to_string(l.activation)}});
  return {{"in", m.spec().in}, {"layers", layers}};
}

MlpSpec mlp_spec(const json& j) {
  MlpSpec s;
  s.in = j.at("in").get<std::size_t>();
  for (const auto& l : j.at("layers")) {
    s.layers.push_back({l.at("out").get<std::size_t>(), activation_from_string(l.at("activation").get<std::string>())});
  }
  if (s.in == 0 || s.layers.empty()) throw FormatError("checkpoint descriptor has an empty network");
  for (const auto& l : s.layers) {
    if (l.out == 0) throw FormatError("checkpoint descriptor has a zero-width layer");
  }
  return s;
}

json shape_json(const ImageShape& s) { return json::array({s.height, s.width, s.channels}); }

ImageShape shape_from_json(const json& j) {
  if (!j.is_array() || j.size() != 3) throw FormatError("checkpoint image_shape must have three entries");
  return {j[0].get<std::size_t>(), j[1].get<std::size_t>(), j[2].get<std::size_t>()};
}

// Networks in payload order.
std::vector<const Mlp*> networks(const Model& model) {
  if (const auto* ae = std::get_if<AutoencoderModel>(&model)) return {&ae->encoder, &ae->decoder};
  const auto& gan = std::get<GanModel>(model);
  std::vector<const Mlp*> out{&gan.generator.net, &gan.discriminators.d};
  if (gan.discriminators.d_bd) out.push_back(&*gan.discriminators.d_bd);
  return out;
}

void append_floats(std::string& out, const std::vector<float>& values) {
  for (float f : values) {
    const auto bits = std::bit_cast<std::uint32_t>(f);
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
  }
}

std::vector<float> read_floats(const unsigned char* p, std::size_t count) {
  std::vector<float> out(count);
  for (std::size_t k = 0; k < count; ++k) {
    const unsigned char* q = p + 4 * k;
    const std::uint32_t bits = static_cast<std::uint32_t>(q[0]) | (static_cast<std::uint32_t>(q[1]) << 8) |
                               (static_cast<std::uint32_t>(q[2]) << 16) | (static_cast<std::uint32_t>(q[3]) << 24);
    out[k] = std::bit_cast<float>(bits);
  }
  return out;
}

json parse_json_section(const std::string& body, const char* tag) {
  try {
    return json::parse(body);
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint section ") + tag + " is not valid JSON: " + e.what());
  }
}

}  // namespace

json architecture_descriptor(const Model& model) {
  if (const auto* ae = std::get_if<AutoencoderModel>(&model)) {
    return {{"model", "autoencoder"},
            {"image_shape", shape_json(ae->image_shape)},
            {"loss", to_string(ae->loss)},
            {"networks", json::array({{{"name", "encoder"}, {"mlp", mlp_json(ae->encoder)}},
                                      {{"name", "decoder"}, {"mlp", mlp_json(ae->decoder)}}})}};
  }
  const auto& gan = std::get<GanModel>(model);
  json nets = json::array({{{"name", "generator"}, {"mlp", mlp_json(gan.generator.net)}},
                           {{"name", "discriminator"}, {"mlp", mlp_json(gan.discriminators.d)}}});
  if (gan.discriminators.d_bd) {
    nets.push_back({{"name", "backdoor_discriminator"}, {"mlp", mlp_json(*gan.discriminators.d_bd)}});
  }
  return {{"model", "gan"},
          {"image_shape", shape_json(gan.generator.image_shape)},
          {"noise_dim", gan.generator.noise_dim},
          {"networks", nets}};
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
  std::string out(kMagic, 4);
  out.push_back(static_cast<char>(kCheckpointVersion));
  put_section(out, "ARCH", architecture_descriptor(ckpt.model).dump());
  put_section(out, "CONF", ckpt.config.dump());
  put_section(out, "METR", ckpt.metrics.dump());
  std::string params;
  for (const Mlp* m : networks(ckpt.model)) append_floats(params, m->flatten());
  put_section(out, "PARM", params);
  return out;
}

Checkpoint decode_checkpoint(std::string_view bytes) {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 5) throw LengthError("checkpoint truncated: " + std::to_string(bytes.size()) + " bytes");
  if (std::memcmp(p, kMagic, 4) != 0) throw FormatError("not a checkpoint (bad magic)");
  const unsigned version = p[4];
  if (version != kCheckpointVersion) {
    throw VersionError("checkpoint format version " + std::to_string(version) + " is not supported (expected version " +
                       std::to_string(kCheckpointVersion) + ")");
  }

  std::map<std::string, std::string> sections;
  std::size_t pos = 5;
  while (pos < bytes.size()) {
    if (bytes.size() - pos < 12) throw LengthError("checkpoint truncated inside a section header");
    std::string tag(bytes.substr(pos, 4));
    const std::uint64_t len = get_u64(p + pos + 4);
    pos += 12;
    if (len > bytes.size() - pos) {
      throw LengthError("checkpoint section " + tag + " claims " + std::to_string(len) + " bytes, " +
                        std::to_string(bytes.size() - pos) + " remain");
    }
    sections[tag] = std::string(bytes.substr(pos, len));
    pos += len;
  }
  for (const char* tag : {"ARCH", "CONF", "METR", "PARM"}) {
    if (!sections.count(tag)) throw FormatError(std::string("checkpoint is missing section ") + tag);
  }

  const json arch = parse_json_section(sections["ARCH"], "ARCH");
  Checkpoint ckpt;
  ckpt.config = parse_json_section(sections["CONF"], "CONF");
  ckpt.metrics = parse_json_section(sections["METR"], "METR");

  std::vector<MlpSpec> specs;
  ImageShape shape;
  std::string model_kind;
  try {
    model_kind = arch.at("model").get<std::string>();
    shape = shape_from_json(arch.at("image_shape"));
    for (const auto& n : arch.at("networks")) specs.push_back(mlp_spec(n.at("mlp")));
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad checkpoint descriptor: ") + e.what());
  }

  std::size_t expected = 0;
  for (const auto& s : specs) expected += s.parameter_count();
  const std::string& payload = sections["PARM"];
  if (payload.size() != 4 * expected) {
    throw LengthError("checkpoint parameter payload is " + std::to_string(payload.size()) +
                      " bytes; descriptor implies " + std::to_string(4 * expected));
  }

  // Parameters are overwritten below, so the init stream is irrelevant.
  Rng rng(0);
  std::vector<Mlp> nets;
  std::size_t offset = 0;
  const auto* raw = reinterpret_cast<const unsigned char*>(payload.data());
  for (const auto& s : specs) {
    Mlp m(s, rng);
    const std::size_t n = s.parameter_count();
    m.load_flat(read_floats(raw + 4 * offset, n));
    offset += n;
    nets.push_back(std::move(m));
  }

  try {
    if (model_kind == "autoencoder") {
      if (nets.size() != 2) throw FormatError("autoencoder checkpoint needs two networks");
      AutoencoderModel ae;
      ae.encoder = std::move(nets[0]);
      ae.decoder = std::move(nets[1]);
      ae.image_shape = shape;
      ae.loss = loss_kind_from_string(arch.at("loss").get<std::string>());
      ckpt.model = std::move(ae);
    } else if (model_kind == "gan") {
      if (nets.size() != 2 && nets.size() != 3) throw FormatError("gan checkpoint needs two or three networks");
      GanModel gan;
      gan.generator = Generator{std::move(nets[0]), arch.at("noise_dim").get<std::size_t>(), shape};
      gan.discriminators.d = std::move(nets[1]);
      if (nets.size() == 3) gan.discriminators.d_bd = std::move(nets[2]);
      ckpt.model = std::move(gan);
    } else {
      throw FormatError("unknown checkpoint model '" + model_kind + "'");
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad checkpoint descriptor: ") + e.what());
  }
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  write_file_atomic(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

}  // namespace bdl::harness
