#include "rtsac/nets.hpp"

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>

namespace rtsac::nn {

// Checkpoint layout (little-endian):
//   "RTSP" | u32 format=1 | u64 param_version | u32 tensor_count
//   per tensor: u16 name_len | name | u8 ndim | u32 dims[] | f32 data[]

namespace {

constexpr char kMagic[4] = {'R', 'T', 'S', 'P'};

template <class T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

template <class T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, ParameterSet& params) {
  const auto parent = std::filesystem::path(path).parent_path();
  if (!parent.empty()) std::filesystem::create_directories(parent);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot open " + path);
  out.write(kMagic, 4);
  write_pod<std::uint32_t>(out, 1);
  write_pod<std::uint64_t>(out, params.version);
  std::uint32_t count = 0;
  params.for_each([&](const std::string&, Tensor&) { ++count; });
  write_pod<std::uint32_t>(out, count);
  params.for_each([&](const std::string& name, Tensor& t) {
    write_pod<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod<std::uint8_t>(out, static_cast<std::uint8_t>(t.ndim()));
    for (int d : t.shape) write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    out.write(reinterpret_cast<const char*>(t.data.data()),
              static_cast<std::streamsize>(t.data.size() * sizeof(float)));
  });
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

ParameterSet load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  if (read_pod<std::uint32_t>(in) != 1)
    throw std::runtime_error("checkpoint: unsupported format version");
  const std::uint64_t param_version = read_pod<std::uint64_t>(in);
  const std::uint32_t count = read_pod<std::uint32_t>(in);

  std::map<std::string, Tensor> loaded;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = read_pod<std::uint16_t>(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const auto ndim = read_pod<std::uint8_t>(in);
    std::vector<int> shape(ndim);
    for (auto& d : shape) d = static_cast<int>(read_pod<std::uint32_t>(in));
    Tensor t(shape);
    in.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(float)));
    if (!in) throw std::runtime_error("checkpoint: truncated tensor " + name);
    loaded.emplace(std::move(name), std::move(t));
  }

  ParameterSet params;
  params.version = param_version;
  params.for_each([&](const std::string& name, Tensor& t) {
    const auto it = loaded.find(name);
    if (it == loaded.end())
      throw std::runtime_error("checkpoint: missing tensor " + name);
    t = it->second;
  });
  return params;
}

}  // namespace rtsac::nn
