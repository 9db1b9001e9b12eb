#include "pt/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "pt/errors.hpp"

namespace pt {

namespace {

constexpr char kMagic[4] = {'P', 'T', 'C', 'K'};

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  std::string text(std::size_t n) {
    need(n);
    std::string s(bytes_.begin() + static_cast<std::ptrdiff_t>(pos_),
                  bytes_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return s;
  }
  float f32() {
    const std::uint32_t bits = u32();
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size())
      fail(ErrorKind::Format, "checkpoint truncated at byte " + std::to_string(pos_));
  }
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const ModelConfig& config,
                                            const ModelParams<float>& params) {
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  put_u32(out, kCheckpointVersion);
  std::string cfg;
  for (const auto& [k, v] : config.to_kv()) cfg += k + "=" + v + "\n";
  put_u32(out, static_cast<std::uint32_t>(cfg.size()));
  out.insert(out.end(), cfg.begin(), cfg.end());
  std::uint32_t blocks = 0;
  params.visit([&](const std::string&, const Tensor<float>&) { ++blocks; });
  put_u32(out, blocks);
  params.visit([&](const std::string& name, const Tensor<float>& t) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    for (float v : t.data()) {
      std::uint32_t bits;
      std::memcpy(&bits, &v, 4);
      put_u32(out, bits);
    }
  });
  return out;
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    fail(ErrorKind::Format, "not a checkpoint (bad magic)");
  std::vector<std::uint8_t> body(bytes.begin() + 4, bytes.end());
  Reader r(body);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    fail(ErrorKind::Format, "unsupported checkpoint version " + std::to_string(version));
  Checkpoint ck;
  std::istringstream cfg(r.text(r.u32()));
  std::string line;
  while (std::getline(cfg, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos || !ck.config.apply(line.substr(0, eq), line.substr(eq + 1)))
      fail(ErrorKind::Format, "bad config entry in checkpoint: '" + line + "'");
  }
  ck.config.validate();
  // The expected layout comes from the config; blocks must match it one to one.
  ck.params = init_params<float>(ck.config, 0);
  std::uint32_t expected = 0;
  ck.params.visit([&](const std::string&, const Tensor<float>&) { ++expected; });
  const std::uint32_t blocks = r.u32();
  if (blocks != expected)
    fail(ErrorKind::Format, "checkpoint has " + std::to_string(blocks) + " parameter blocks, " +
                                "config implies " + std::to_string(expected));
  ck.params.visit([&](const std::string& name, Tensor<float>& t) {
    const std::string got = r.text(r.u32());
    if (got != name)
      fail(ErrorKind::Format, "expected parameter block '" + name + "', found '" + got + "'");
    const std::uint32_t rank = r.u32();
    Shape shape;
    for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(r.u32());
    if (shape != t.shape())
      fail(ErrorKind::Format, "parameter '" + name + "' has shape " + to_string(shape) +
                                  ", config implies " + to_string(t.shape()));
    for (float& v : t.mutable_data()) v = r.f32();
  });
  if (!r.done()) fail(ErrorKind::Format, "trailing bytes after checkpoint payload");
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& config,
                     const ModelParams<float>& params) {
  const auto bytes = encode_checkpoint(config, params);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::Io, "checkpoint write failed for " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in),
                                  std::istreambuf_iterator<char>()};
  return decode_checkpoint(bytes);
}

}  // namespace pt
