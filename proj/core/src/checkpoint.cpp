#include "protofed/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include <json.hpp>

namespace protofed {

namespace {
constexpr char kMagic[4] = {'P', 'F', 'C', 'K'};
}

void save_checkpoint(const std::string& path, const ParamStore& params) {
  nlohmann::json header;
  header["version"] = 1;
  header["dtype"] = "f64le";
  auto& tensors = header["tensors"] = nlohmann::json::array();
  params.for_each([&](const std::string& name, const Tensor& t, bool trainable) {
    tensors.push_back({{"name", name}, {"shape", t.shape}, {"trainable", trainable}});
  });
  const std::string header_str = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("checkpoint: cannot open " + path + " for writing");
  out.write(kMagic, 4);
  const std::uint32_t len = static_cast<std::uint32_t>(header_str.size());
  out.write(reinterpret_cast<const char*>(&len), 4);
  out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  params.for_each([&](const std::string&, const Tensor& t, bool) {
    out.write(reinterpret_cast<const char*>(t.data.data()),
              static_cast<std::streamsize>(t.data.size() * sizeof(double)));
  });
  if (!out) throw DataError("checkpoint: write failed for " + path);
}

void load_checkpoint(const std::string& path, ParamStore& params) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("checkpoint: cannot open " + path);
  char magic[4];
  std::uint32_t len = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&len), 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) {
    throw DataError("checkpoint: bad magic in " + path);
  }
  std::string header_str(len, '\0');
  in.read(header_str.data(), len);
  if (!in) throw DataError("checkpoint: truncated header in " + path);

  nlohmann::json header = nlohmann::json::parse(header_str, nullptr, false);
  if (header.is_discarded()) throw DataError("checkpoint: malformed header JSON");
  if (header.value("dtype", "") != "f64le") {
    throw DataError("checkpoint: unsupported dtype");
  }

  for (const auto& entry : header.at("tensors")) {
    const std::string name = entry.at("name").get<std::string>();
    const std::vector<std::size_t> shape = entry.at("shape").get<std::vector<std::size_t>>();
    if (!params.contains(name)) throw DataError("checkpoint: unknown tensor " + name);
    Tensor& t = params.at(name);
    if (t.shape != shape) throw DimensionError("checkpoint: shape mismatch for " + name);
    in.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    if (!in) throw DataError("checkpoint: truncated data for " + name);
  }
}

}  // namespace protofed
