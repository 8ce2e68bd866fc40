#include "rotla/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace rotla::checkpoint {

namespace {

constexpr std::uint32_t kMagic = 0x524f544cU;  // "ROTL"
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ostream& os, std::uint32_t x) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((x >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, std::uint64_t x) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((x >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  std::uint32_t x = 0;
  for (int i = 0; i < 4; ++i) x |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return x;
}

std::uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t x = 0;
  for (int i = 0; i < 8; ++i) x |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return x;
}

}  // namespace

void save(const std::string& path, const model::Parameters& params, ad::Precision precision) {
  std::ofstream os(path, std::ios::binary);
  check(os.good(), "cannot open checkpoint for writing: " + path);
  put_u32(os, kMagic);
  put_u32(os, kVersion);
  put_u32(os, static_cast<std::uint32_t>(params.items().size()));
  for (const auto& [name, tensor] : params.items()) {
    put_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    os.put(precision == ad::Precision::f64 ? 0 : 1);
    os.put(static_cast<char>(tensor.rank()));
    for (std::int64_t i = 0; i < tensor.rank(); ++i) put_u64(os, static_cast<std::uint64_t>(tensor.dim(i)));
    if (precision == ad::Precision::f64) {
      for (std::int64_t i = 0; i < tensor.size(); ++i) {
        std::uint64_t bits;
        const double v = tensor.at(i);
        std::memcpy(&bits, &v, 8);
        put_u64(os, bits);
      }
    } else {
      for (std::int64_t i = 0; i < tensor.size(); ++i) {
        const float v = static_cast<float>(tensor.at(i));
        std::uint32_t bits;
        std::memcpy(&bits, &v, 4);
        put_u32(os, bits);
      }
    }
  }
  check(os.good(), "checkpoint write failed: " + path);
}

model::Parameters load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  check(is.good(), "cannot open checkpoint: " + path);
  check(get_u32(is) == kMagic, "not a checkpoint file: " + path);
  const std::uint32_t version = get_u32(is);
  check(version == kVersion, "unsupported checkpoint version " + std::to_string(version));
  const std::uint32_t count = get_u32(is);
  model::Parameters params;
  for (std::uint32_t n = 0; n < count; ++n) {
    const std::uint32_t name_len = get_u32(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    const int dtype = is.get();
    const int rank = is.get();
    check(dtype == 0 || dtype == 1, "corrupt checkpoint dtype");
    check(rank >= 1 && rank <= 8, "corrupt checkpoint rank");
    std::vector<std::int64_t> shape(static_cast<std::size_t>(rank));
    for (auto& d : shape) d = static_cast<std::int64_t>(get_u64(is));
    Tensor t(shape);
    for (std::int64_t i = 0; i < t.size(); ++i) {
      if (dtype == 0) {
        const std::uint64_t bits = get_u64(is);
        double v;
        std::memcpy(&v, &bits, 8);
        t.at(i) = v;
      } else {
        const std::uint32_t bits = get_u32(is);
        float v;
        std::memcpy(&v, &bits, 4);
        t.at(i) = static_cast<double>(v);
      }
    }
    params.add(std::move(name), std::move(t));
    check(is.good(), "truncated checkpoint: " + path);
  }
  return params;
}

}  // namespace rotla::checkpoint
