#include "egocast/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace egocast {

namespace {

constexpr char kMagic[8] = {'E', 'G', 'O', 'C', 'K', 'P', 'T', '1'};

void append_le_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t read_le_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void append_le_f64(std::string& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  if constexpr (std::endian::native == std::endian::big) {
    std::uint64_t swapped = 0;
    for (int i = 0; i < 8; ++i) swapped |= ((bits >> (8 * i)) & 0xFF) << (8 * (7 - i));
    bits = swapped;
  }
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

double read_le_f64(const unsigned char* p) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  if constexpr (std::endian::native == std::endian::big) {
    std::uint64_t swapped = 0;
    for (int i = 0; i < 8; ++i) swapped |= ((bits >> (8 * i)) & 0xFF) << (8 * (7 - i));
    bits = swapped;
  }
  double v;
  std::memcpy(&v, &bits, sizeof(v));
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const std::string& kind,
                     const nlohmann::json& config, long step, std::span<const NamedParam> params) {
  nlohmann::json manifest;
  manifest["version"] = 1;
  manifest["kind"] = kind;
  manifest["config"] = config;
  manifest["step"] = step;
  nlohmann::json tensors = nlohmann::json::array();
  for (const NamedParam& p : params) {
    nlohmann::json entry;
    entry["name"] = p.name;
    entry["shape"] = p.tensor.shape();
    tensors.push_back(std::move(entry));
  }
  manifest["tensors"] = std::move(tensors);
  const std::string manifest_text = manifest.dump();

  std::string blob;
  blob.append(kMagic, sizeof(kMagic));
  append_le_u32(blob, static_cast<std::uint32_t>(manifest_text.size()));
  blob += manifest_text;
  for (const NamedParam& p : params)
    for (double v : p.tensor.values()) append_le_f64(blob, v);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  if (!out) throw DataError("failed while writing '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "' for reading");
  std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  if (blob.size() < sizeof(kMagic) + 4 || std::memcmp(blob.data(), kMagic, sizeof(kMagic)) != 0)
    throw FormatError("'" + path + "' is not an egocast checkpoint");
  const auto* bytes = reinterpret_cast<const unsigned char*>(blob.data());
  const std::uint32_t manifest_len = read_le_u32(bytes + sizeof(kMagic));
  const std::size_t manifest_start = sizeof(kMagic) + 4;
  if (manifest_start + manifest_len > blob.size())
    throw FormatError("checkpoint manifest is truncated");

  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(blob.substr(manifest_start, manifest_len));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(std::string("checkpoint manifest is not valid JSON: ") + e.what());
  }

  Checkpoint ckpt;
  ckpt.version = manifest.at("version").get<int>();
  if (ckpt.version != 1)
    throw FormatError("unsupported checkpoint version " + std::to_string(ckpt.version));
  ckpt.kind = manifest.at("kind").get<std::string>();
  ckpt.config = manifest.at("config");
  ckpt.step = manifest.at("step").get<long>();

  std::size_t offset = manifest_start + manifest_len;
  for (const auto& entry : manifest.at("tensors")) {
    const std::string name = entry.at("name").get<std::string>();
    const Shape shape = entry.at("shape").get<Shape>();
    const std::size_t count = static_cast<std::size_t>(shape_numel(shape));
    if (offset + count * 8 > blob.size())
      throw FormatError("checkpoint payload is truncated at tensor '" + name + "'");
    std::vector<double> values(count);
    for (std::size_t i = 0; i < count; ++i) values[i] = read_le_f64(bytes + offset + i * 8);
    offset += count * 8;
    ckpt.tensors.emplace_back(name, Tensor(shape, std::move(values)));
  }
  if (offset != blob.size())
    throw FormatError("checkpoint has " + std::to_string(blob.size() - offset) +
                      " trailing bytes");
  return ckpt;
}

void restore_parameters(const Checkpoint& checkpoint, std::span<NamedParam> params) {
  if (checkpoint.tensors.size() != params.size())
    throw FormatError("checkpoint holds " + std::to_string(checkpoint.tensors.size()) +
                      " tensors, model has " + std::to_string(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& [name, tensor] = checkpoint.tensors[i];
    if (name != params[i].name)
      throw FormatError("checkpoint tensor '" + name + "' does not match parameter '" +
                        params[i].name + "'");
    if (tensor.shape() != params[i].tensor.shape())
      throw FormatError("checkpoint tensor '" + name + "' has shape " +
                        shape_str(tensor.shape()) + ", parameter wants " +
                        shape_str(params[i].tensor.shape()));
    auto dst = params[i].tensor.raw_values();
    const auto src = tensor.values();
    std::copy(src.begin(), src.end(), dst.begin());
  }
}

void require_checkpoint_config(const Checkpoint& checkpoint, const std::string& kind,
                               const nlohmann::json& expected_config) {
  if (checkpoint.kind != kind)
    throw ConfigError("checkpoint kind '" + checkpoint.kind + "', expected '" + kind + "'");
  if (checkpoint.config != expected_config)
    throw ConfigError("checkpoint config echo does not match the loading config");
}

}  // namespace egocast
