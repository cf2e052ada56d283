#include "lssl/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace lssl {

namespace {

constexpr char kMagic[8] = {'L', 'S', 'S', 'L', 'C', 'K', 'P', 'T'};

void write_u64_le(std::ofstream& out, std::uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
  out.write(reinterpret_cast<const char*>(buf), 8);
}

std::uint64_t read_u64_le(std::ifstream& in) {
  unsigned char buf[8];
  in.read(reinterpret_cast<char*>(buf), 8);
  if (!in) throw std::runtime_error("checkpoint: truncated header length");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return v;
}

void write_f32_le(std::ofstream& out, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  unsigned char buf[4];
  for (int i = 0; i < 4; ++i) buf[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xFF);
  out.write(reinterpret_cast<const char*>(buf), 4);
}

float read_f32_le(const unsigned char* p) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  float f;
  std::memcpy(&f, &bits, 4);
  return f;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  nlohmann::json header;
  header["version"] = ckpt.format_version;
  header["mode"] = ckpt.mode;
  header["config"] = ckpt.config;

  std::uint64_t offset = 0;
  nlohmann::json dir = nlohmann::json::array();
  for (const auto& [name, t] : ckpt.tensors) {
    nlohmann::json entry;
    entry["name"] = name;
    entry["shape"] = t.shape();
    entry["offset"] = offset;
    entry["count"] = t.size();
    dir.push_back(entry);
    offset += 4 * static_cast<std::uint64_t>(t.size());
  }
  header["tensors"] = dir;

  const std::string header_bytes = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("checkpoint: cannot open for write: " + path);
  out.write(kMagic, 8);
  write_u64_le(out, header_bytes.size());
  out.write(header_bytes.data(), static_cast<std::streamsize>(header_bytes.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    (void)name;
    for (double v : t.data()) write_f32_le(out, static_cast<float>(v));
  }
  if (!out) throw std::runtime_error("checkpoint: write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open: " + path);

  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);

  const std::uint64_t header_size = read_u64_le(in);
  std::string header_bytes(header_size, '\0');
  in.read(header_bytes.data(), static_cast<std::streamsize>(header_size));
  if (!in) throw std::runtime_error("checkpoint: truncated header in " + path);

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_bytes);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("checkpoint: header is not valid JSON in " + path + ": " + e.what());
  }

  Checkpoint ckpt;
  ckpt.format_version = header.at("version").get<int>();
  if (ckpt.format_version != 1)
    throw std::runtime_error("checkpoint: unsupported version in " + path);
  ckpt.mode = header.at("mode").get<std::string>();
  ckpt.config = header.at("config").get<std::map<std::string, std::string>>();

  std::vector<unsigned char> payload(std::istreambuf_iterator<char>(in), {});
  for (const auto& entry : header.at("tensors")) {
    const std::string name = entry.at("name").get<std::string>();
    const Shape shape = entry.at("shape").get<Shape>();
    const std::uint64_t offset = entry.at("offset").get<std::uint64_t>();
    const std::uint64_t count = entry.at("count").get<std::uint64_t>();
    if (count != numel(shape))
      throw std::runtime_error("checkpoint: count/shape mismatch for " + name);
    if (offset + 4 * count > payload.size())
      throw std::runtime_error("checkpoint: truncated payload for " + name);
    std::vector<double> values(count);
    for (std::uint64_t i = 0; i < count; ++i)
      values[i] = static_cast<double>(read_f32_le(payload.data() + offset + 4 * i));
    ckpt.tensors.emplace_back(name, Tensor(shape, std::move(values)));
  }
  return ckpt;
}

Checkpoint checkpoint_from_bundle(const ModelBundle& bundle,
                                  const std::map<std::string, std::string>& config) {
  Checkpoint ckpt;
  ckpt.mode = mode_name(bundle.mode);
  ckpt.config = config;
  ckpt.tensors = bundle.named_parameters();
  return ckpt;
}

void load_into_bundle(ModelBundle& bundle, const Checkpoint& ckpt) {
  if (ckpt.mode != mode_name(bundle.mode))
    throw std::runtime_error("checkpoint: mode is '" + ckpt.mode + "' but bundle is '" +
                             mode_name(bundle.mode) + "'");

  auto params = bundle.named_parameters();
  std::map<std::string, Tensor> by_name(params.begin(), params.end());
  if (by_name.size() != params.size())
    throw std::logic_error("checkpoint: duplicate parameter names in bundle");
  if (ckpt.tensors.size() != params.size())
    throw std::runtime_error("checkpoint: tensor count mismatch: file has " +
                             std::to_string(ckpt.tensors.size()) + ", bundle has " +
                             std::to_string(params.size()));

  for (const auto& [name, src] : ckpt.tensors) {
    auto it = by_name.find(name);
    if (it == by_name.end())
      throw std::runtime_error("checkpoint: no bundle parameter named " + name);
    Tensor dst = it->second;
    if (dst.shape() != src.shape())
      throw std::runtime_error("checkpoint: shape mismatch for " + name + ": file " +
                               shape_str(src.shape()) + ", bundle " + shape_str(dst.shape()));
    dst.data() = src.data();
  }
}

}  // namespace lssl
