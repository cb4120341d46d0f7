#include "nus/autodiff.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>

namespace nus::ad {
namespace {

constexpr std::array<char, 8> kMagic = {'N', 'U', 'S', 'C', 'K', 'P', 'T', '1'};

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_f64(std::ostream& os, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t get_u32(std::istream& is, const std::string& path) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw std::runtime_error("checkpoint truncated: " + path);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

double get_f64(std::istream& is, const std::string& path) {
  unsigned char b[8];
  if (!is.read(reinterpret_cast<char*>(b), 8)) throw std::runtime_error("checkpoint truncated: " + path);
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

}  // namespace

void save_checkpoint(const std::string& path, const ParameterStore& params) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write checkpoint: " + path);
  os.write(kMagic.data(), kMagic.size());
  put_u32(os, kCheckpointVersion);
  put_u32(os, static_cast<std::uint32_t>(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    put_u32(os, static_cast<std::uint32_t>(p.name.size()));
    os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    put_u32(os, static_cast<std::uint32_t>(p.value.rows()));
    put_u32(os, static_cast<std::uint32_t>(p.value.cols()));
    for (Eigen::Index k = 0; k < p.value.size(); ++k) put_f64(os, p.value.data()[k]);
  }
  if (!os) throw std::runtime_error("failed writing checkpoint: " + path);
}

void load_checkpoint(const std::string& path, ParameterStore& params) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read checkpoint: " + path);
  std::array<char, 8> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kMagic)
    throw std::runtime_error("not a checkpoint file: " + path);
  const auto version = get_u32(is, path);
  if (version != kCheckpointVersion)
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  const auto count = get_u32(is, path);
  if (count != params.size())
    throw std::runtime_error("checkpoint has " + std::to_string(count) + " parameters, model expects " +
                             std::to_string(params.size()));
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = get_u32(is, path);
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw std::runtime_error("checkpoint truncated: " + path);
    auto* p = params.find(name);
    if (!p) throw std::runtime_error("checkpoint parameter not in model: " + name);
    const auto rows = get_u32(is, path);
    const auto cols = get_u32(is, path);
    if (rows != p->value.rows() || cols != p->value.cols())
      throw std::runtime_error("checkpoint shape mismatch for " + name);
    for (Eigen::Index k = 0; k < p->value.size(); ++k) p->value.data()[k] = get_f64(is, path);
  }
}

}  // namespace nus::ad
