#include <charconv>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include "pt/errors.hpp"
#include "pt/pointcloud.hpp"

namespace pt {

namespace fs = std::filesystem;

namespace {

constexpr char kCloudMagic[4] = {'P', 'C', 'L', '1'};

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Load, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_u32_le(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void put_u32_le(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

PointCloud decode_binary(const std::vector<std::uint8_t>& bytes, const fs::path& path) {
  if (bytes.size() < 8) fail(ErrorKind::Format, path.string() + ": truncated header");
  const std::uint32_t n = read_u32_le(bytes.data() + 4);
  const std::size_t expected = 8 + static_cast<std::size_t>(n) * 12;
  if (bytes.size() != expected)
    fail(ErrorKind::Format, path.string() + ": expected " + std::to_string(expected) +
                                " bytes for " + std::to_string(n) + " points, found " +
                                std::to_string(bytes.size()));
  PointCloud pc;
  pc.points.resize(n);
  for (std::uint32_t i = 0; i < n; ++i)
    for (int d = 0; d < 3; ++d) {
      const std::uint32_t bits = read_u32_le(bytes.data() + 8 + (i * 3 + d) * 4);
      std::memcpy(&pc.points[i][d], &bits, 4);
    }
  return pc;
}

PointCloud decode_text(const std::vector<std::uint8_t>& bytes, const fs::path& path) {
  PointCloud pc;
  std::istringstream in(std::string(bytes.begin(), bytes.end()));
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ls(line);
    Point3 p{};
    std::string extra;
    if (!(ls >> p[0] >> p[1] >> p[2]) || (ls >> extra))
      fail(ErrorKind::Format,
           path.string() + ":" + std::to_string(lineno) + ": expected three decimal coordinates");
    pc.points.push_back(p);
  }
  return pc;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) parts.push_back(trim(cur));
  return parts;
}

std::string format_float(float v) {
  char buf[32];
  auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

}  // namespace

PointCloud read_cloud(const fs::path& path) {
  const auto bytes = read_bytes(path);
  PointCloud pc = (bytes.size() >= 4 && std::memcmp(bytes.data(), kCloudMagic, 4) == 0)
                      ? decode_binary(bytes, path)
                      : decode_text(bytes, path);
  pc.id = path.stem().string();
  validate_points(pc);
  return pc;
}

std::vector<std::uint8_t> encode_binary_cloud(const PointCloud& pc) {
  std::vector<std::uint8_t> out(kCloudMagic, kCloudMagic + 4);
  put_u32_le(out, static_cast<std::uint32_t>(pc.size()));
  for (const auto& p : pc.points)
    for (float v : p) {
      std::uint32_t bits;
      std::memcpy(&bits, &v, 4);
      put_u32_le(out, bits);
    }
  return out;
}

void write_binary_cloud(const fs::path& path, const PointCloud& pc) {
  const auto bytes = encode_binary_cloud(pc);
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::Io, "write failed for " + path.string());
}

void write_text_cloud(const fs::path& path, const PointCloud& pc) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot write " + path.string());
  for (const auto& p : pc.points)
    out << format_float(p[0]) << ' ' << format_float(p[1]) << ' ' << format_float(p[2]) << '\n';
  if (!out) fail(ErrorKind::Io, "write failed for " + path.string());
}

LabeledDataset load_dataset(const fs::path& manifest, const LoadOptions& options) {
  std::ifstream in(manifest);
  if (!in) fail(ErrorKind::Load, "cannot open manifest " + manifest.string());
  const fs::path base = manifest.parent_path();
  LabeledDataset ds;
  ds.split = options.split;
  bool have_classes = false;
  bool prenormalized = false;
  std::string line;
  std::size_t lineno = 0;
  auto where = [&] { return manifest.string() + ":" + std::to_string(lineno) + ": "; };
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    if (line.rfind("classes:", 0) == 0) {
      ds.class_names = split(line.substr(8), ';');
      if (ds.class_names.empty() || ds.class_names.back().empty())
        fail(ErrorKind::Load, where() + "empty class list");
      have_classes = true;
      continue;
    }
    if (line.rfind("prenormalized:", 0) == 0) {
      prenormalized = trim(line.substr(14)) == "true";
      continue;
    }
    if (!have_classes) fail(ErrorKind::Load, where() + "missing 'classes:' header");
    const auto fields = split(line, ',');
    if (fields.size() != 3 || fields[0].empty() || fields[2].empty())
      fail(ErrorKind::Load, where() + "expected '<path>,<label>,<id>'");
    int label = 0;
    const auto [ptr, ec] =
        std::from_chars(fields[1].data(), fields[1].data() + fields[1].size(), label);
    if (ec != std::errc() || ptr != fields[1].data() + fields[1].size())
      fail(ErrorKind::Load, where() + "malformed label '" + fields[1] + "'");
    if (label < 0 || static_cast<std::size_t>(label) >= ds.class_names.size())
      fail(ErrorKind::Load, where() + "label " + std::to_string(label) + " out of range for " +
                                std::to_string(ds.class_names.size()) + " classes");
    const fs::path cloud_path = base / fields[0];
    if (!fs::exists(cloud_path)) fail(ErrorKind::Load, where() + "missing file " + cloud_path.string());
    PointCloud pc;
    try {
      pc = read_cloud(cloud_path);
    } catch (const Error& e) {
      fail(e.kind() == ErrorKind::Format ? ErrorKind::Format : ErrorKind::Load,
           where() + e.message());
    }
    pc.id = fields[2];
    pc.label = label;
    if (prenormalized) {
      pc.normalized = true;
    } else {
      pc = normalize_unit_sphere(pc);
    }
    if (options.sampling) {
      SamplingSpec spec = *options.sampling;
      spec.seed = mix_seed(spec.seed, hash_string(pc.id));
      if (pc.size() < spec.target_count)
        fail(ErrorKind::Sampling, where() + "cloud has " + std::to_string(pc.size()) +
                                      " points, fewer than the sampling target " +
                                      std::to_string(spec.target_count));
      pc = apply_sampling(pc, spec);
    }
    ds.samples.push_back(std::move(pc));
  }
  if (!have_classes) fail(ErrorKind::Load, manifest.string() + ": missing 'classes:' header");
  ds.validate();
  return ds;
}

fs::path write_dataset(const fs::path& dir, const LabeledDataset& ds, CloudEncoding encoding) {
  fs::create_directories(dir);
  const fs::path manifest = dir / "manifest.txt";
  std::ofstream out(manifest);
  if (!out) fail(ErrorKind::Io, "cannot write " + manifest.string());
  out << "classes:";
  for (std::size_t i = 0; i < ds.class_names.size(); ++i)
    out << (i ? ";" : "") << ds.class_names[i];
  out << "\nprenormalized:true\n";
  for (const auto& s : ds.samples) {
    const std::string name = s.id + (encoding == CloudEncoding::Binary ? ".pcl" : ".xyz");
    if (encoding == CloudEncoding::Binary)
      write_binary_cloud(dir / name, s);
    else
      write_text_cloud(dir / name, s);
    out << name << ',' << s.label.value_or(0) << ',' << s.id << '\n';
  }
  if (!out) fail(ErrorKind::Io, "write failed for " + manifest.string());
  return manifest;
}

}  // namespace pt
