#include "dustk/ckptio.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "dustk/errors.hpp"
#include "json.hpp"

namespace dustk {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::string_view kExtension = ".safetensors";
constexpr std::string_view kConfigSuffix = ".config.json";

void put_u64_le(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_u64_le(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

template <typename Bits>
void put_le(std::uint8_t* dst, Bits bits) {
  for (std::size_t i = 0; i < sizeof(Bits); ++i) {
    dst[i] = static_cast<std::uint8_t>(bits >> (8 * i));
  }
}

template <typename Bits>
Bits get_le(const std::uint8_t* src) {
  Bits bits = 0;
  for (std::size_t i = sizeof(Bits); i-- > 0;) bits = (bits << 8) | src[i];
  return bits;
}

DType parse_dtype(const std::string& s) {
  if (s == "F32") return DType::kFloat32;
  if (s == "F64") return DType::kFloat64;
  throw FormatError("unknown dtype: " + s);
}

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& path, const void* data, std::size_t size) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace

CheckpointPaths CheckpointPaths::resolve(const fs::path& path) {
  std::string s = path.string();
  if (s.ends_with(kExtension)) s.resize(s.size() - kExtension.size());
  return {fs::path(s + std::string(kExtension)), fs::path(s + std::string(kConfigSuffix))};
}

std::vector<std::uint8_t> encode_safetensors(const Checkpoint& ckpt) {
  const std::size_t elem = dtype_size(ckpt.dtype);
  json header = json::object();
  std::size_t offset = 0;
  // std::map iteration gives ascending key order for both header and payload.
  for (const auto& [name, tensor] : ckpt.tensors) {
    const std::size_t bytes = tensor.data.size() * elem;
    header[name] = {{"dtype", dtype_name(ckpt.dtype)},
                    {"shape", tensor.shape},
                    {"data_offsets", {offset, offset + bytes}}};
    offset += bytes;
  }
  std::string header_text = header.dump();
  // Pad to 8-byte alignment with spaces, as the reference writer does.
  while (header_text.size() % 8 != 0) header_text.push_back(' ');

  std::vector<std::uint8_t> out;
  out.reserve(8 + header_text.size() + offset);
  put_u64_le(out, header_text.size());
  out.insert(out.end(), header_text.begin(), header_text.end());
  const std::size_t payload_start = out.size();
  out.resize(payload_start + offset);
  std::uint8_t* dst = out.data() + payload_start;
  for (const auto& [name, tensor] : ckpt.tensors) {
    for (double v : tensor.data) {
      if (ckpt.dtype == DType::kFloat32) {
        put_le(dst, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
        dst += 4;
      } else {
        put_le(dst, std::bit_cast<std::uint64_t>(v));
        dst += 8;
      }
    }
  }
  return out;
}

Checkpoint decode_safetensors(const std::vector<std::uint8_t>& bytes, bool strict) {
  if (bytes.size() < 8) throw FormatError("file shorter than the 8-byte header length");
  const std::uint64_t header_len = get_u64_le(bytes.data());
  if (header_len > bytes.size() - 8) {
    throw FormatError("header length exceeds file size");
  }
  json header;
  try {
    header = json::parse(bytes.begin() + 8,
                         bytes.begin() + 8 + static_cast<std::ptrdiff_t>(header_len));
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("malformed header: ") + e.what());
  }
  if (!header.is_object()) throw FormatError("malformed header: not a JSON object");

  const std::uint8_t* payload = bytes.data() + 8 + header_len;
  const std::size_t payload_size = bytes.size() - 8 - header_len;

  Checkpoint ckpt;
  bool saw_f32 = false;
  bool saw_f64 = false;
  for (const auto& [name, entry] : header.items()) {
    if (name == "__metadata__") continue;
    if (!entry.is_object() || !entry.contains("dtype") || !entry.contains("shape") ||
        !entry.contains("data_offsets")) {
      throw FormatError("malformed header entry for " + name);
    }
    const DType dtype = parse_dtype(entry.at("dtype").get<std::string>());
    (dtype == DType::kFloat32 ? saw_f32 : saw_f64) = true;
    std::vector<std::size_t> shape;
    std::size_t begin = 0;
    std::size_t end = 0;
    try {
      shape = entry.at("shape").get<std::vector<std::size_t>>();
      const auto offsets = entry.at("data_offsets").get<std::vector<std::size_t>>();
      if (offsets.size() != 2) throw FormatError("data_offsets must have two entries");
      begin = offsets[0];
      end = offsets[1];
    } catch (const json::exception& e) {
      throw FormatError("malformed header entry for " + name + ": " + e.what());
    }
    const std::size_t elem = dtype_size(dtype);
    const std::size_t count = shape_numel(shape);
    if (end < begin || end - begin != count * elem) {
      throw FormatError("byte range of " + name + " does not match its shape");
    }
    if (end > payload_size) {
      throw FormatError("payload shorter than header declares");
    }
    Tensor t;
    t.shape = std::move(shape);
    t.data.resize(count);
    const std::uint8_t* src = payload + begin;
    for (std::size_t i = 0; i < count; ++i) {
      if (dtype == DType::kFloat32) {
        t.data[i] = std::bit_cast<float>(get_le<std::uint32_t>(src + 4 * i));
      } else {
        t.data[i] = std::bit_cast<double>(get_le<std::uint64_t>(src + 8 * i));
      }
    }
    ckpt.tensors.emplace(name, std::move(t));
  }
  if (saw_f32 && saw_f64 && strict) {
    throw FormatError("mixed tensor dtypes in one container");
  }
  ckpt.dtype = saw_f64 ? DType::kFloat64 : DType::kFloat32;
  return ckpt;
}

Checkpoint load_checkpoint(const fs::path& path, bool strict) {
  const auto paths = CheckpointPaths::resolve(path);
  Checkpoint ckpt = decode_safetensors(read_file(paths.tensors), strict);
  if (fs::exists(paths.config)) {
    const auto text = read_file(paths.config);
    json j;
    try {
      j = json::parse(text.begin(), text.end());
    } catch (const json::parse_error& e) {
      throw FormatError("malformed config sidecar: " + std::string(e.what()));
    }
    ckpt.config = config_from_json(j);
  } else if (strict) {
    throw FormatError("missing config sidecar " + paths.config.string());
  }
  if (strict) require_valid(ckpt);
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const fs::path& path) {
  require_valid(ckpt);
  const auto paths = CheckpointPaths::resolve(path);
  if (paths.tensors.has_parent_path()) {
    fs::create_directories(paths.tensors.parent_path());
  }
  const auto bytes = encode_safetensors(ckpt);
  write_file(paths.tensors, bytes.data(), bytes.size());
  const std::string config_text = config_to_json(ckpt.config).dump(2) + "\n";
  write_file(paths.config, config_text.data(), config_text.size());
}

}  // namespace dustk
