#include "imu2emg/model/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <zlib.h>

#include "imu2emg/core/errors.hpp"
#include "imu2emg/core/files.hpp"

namespace fs = std::filesystem;

namespace imu2emg::model {
namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_f32(std::string& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

std::uint32_t crc_of(const char* data, std::size_t n) {
  return static_cast<std::uint32_t>(::crc32(0L, reinterpret_cast<const Bytef*>(data), static_cast<uInt>(n)));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes, std::size_t end) : bytes_(bytes), end_(end) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > end_) throw LoadError("checkpoint truncated");
  }
  const std::string& bytes_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const ModelParams<float>& params) {
  std::string out(kCheckpointMagic, sizeof(kCheckpointMagic));
  put_u32(out, kCheckpointVersion);
  const std::string cfg = params.config.to_json();
  put_u32(out, static_cast<std::uint32_t>(cfg.size()));
  out += cfg;
  std::uint32_t blobs = 0;
  params.for_each_const([&](const std::string&, const Tensor<float>&) { ++blobs; });
  put_u32(out, blobs);
  params.for_each_const([&](const std::string& name, const Tensor<float>& t) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    for (float v : t.data()) put_f32(out, v);
  });
  put_u32(out, crc_of(out.data(), out.size()));
  return out;
}

ModelParams<float> decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < sizeof(kCheckpointMagic) || std::memcmp(bytes.data(), kCheckpointMagic, sizeof(kCheckpointMagic)))
    throw LoadError("not a checkpoint (bad magic)");
  if (bytes.size() < sizeof(kCheckpointMagic) + 8) throw LoadError("checkpoint truncated");
  const std::size_t body = bytes.size() - 4;
  Reader r(bytes, body);
  r.str(sizeof(kCheckpointMagic));
  const auto version = r.u32();
  if (version != kCheckpointVersion)
    throw LoadError("checkpoint version " + std::to_string(version) + " unsupported (expected " +
                    std::to_string(kCheckpointVersion) + ")");
  Reader tail(bytes, bytes.size());
  tail.str(body);
  if (tail.u32() != crc_of(bytes.data(), body)) throw LoadError("checkpoint checksum mismatch (corrupt or truncated)");

  ModelConfig cfg;
  try {
    cfg = ModelConfig::from_json(r.str(r.u32()));
    cfg.validate();
  } catch (const ConfigError& e) {
    throw LoadError(std::string("checkpoint config invalid: ") + e.what());
  }
  auto params = empty_params<float>(cfg);
  const auto blobs = r.u32();
  std::uint32_t seen = 0;
  params.for_each([&](const std::string& name, Tensor<float>& t) {
    if (seen++ >= blobs) throw LoadError("checkpoint is missing parameter " + name);
    const auto stored = r.str(r.u32());
    if (stored != name) throw LoadError("checkpoint blob '" + stored + "' where '" + name + "' was expected");
    const auto rank = r.u32();
    Shape shape;
    for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(r.u32());
    if (shape != t.shape())
      throw LoadError("checkpoint blob " + name + " has shape " + shape_str(shape) + ", expected " + shape_str(t.shape()));
    for (auto& v : t.data()) v = r.f32();
  });
  if (seen != blobs || r.pos() != body) throw LoadError("checkpoint has trailing parameter data");
  params.set_requires_grad(true);
  return params;
}

void save_checkpoint(const ModelParams<float>& params, const fs::path& path) {
  write_file_atomic(path, encode_checkpoint(params));
}

ModelParams<float> load_checkpoint(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw LoadError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  try {
    return decode_checkpoint(ss.str());
  } catch (const LoadError& e) {
    throw LoadError(path.string() + ": " + e.what());
  }
}

}  // namespace imu2emg::model
