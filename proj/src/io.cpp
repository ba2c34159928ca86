#include "deepls/io.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace deepls {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

namespace {

std::vector<char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing " + path);
}

class Writer {
 public:
  template <typename T>
  void put(T value) {
    char buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    bytes_.append(buf, sizeof(T));
  }
  void raw(const char* data, std::size_t n) { bytes_.append(data, n); }
  const std::string& bytes() const { return bytes_; }

 private:
  std::string bytes_;
};

class Reader {
 public:
  Reader(const std::vector<char>& data, std::string what) : data_(data), what_(std::move(what)) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }
  void expect_magic(const char (&magic)[5]) {
    need(4);
    if (std::memcmp(data_.data() + pos_, magic, 4) != 0) {
      throw FormatError(what_ + ": bad magic (expected " + std::string(magic, 4) + ")");
    }
    pos_ += 4;
  }
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw FormatError(what_ + ": truncated file");
  }
  bool done() const { return pos_ == data_.size(); }
  void expect_end() const {
    if (!done()) throw FormatError(what_ + ": trailing bytes after payload");
  }

 private:
  const std::vector<char>& data_;
  std::size_t pos_ = 0;
  std::string what_;
};

bool ends_with(const std::string& s, const std::string& suffix) {
  if (s.size() < suffix.size()) return false;
  std::string tail = s.substr(s.size() - suffix.size());
  for (auto& c : tail) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return tail == suffix;
}

double parse_double(const std::string& token, const std::string& where) {
  try {
    std::size_t used = 0;
    const double v = std::stod(token, &used);
    if (used != token.size()) throw std::invalid_argument(token);
    return v;
  } catch (const std::exception&) {
    throw FormatError(where + ": invalid number '" + token + "'");
  }
}

long parse_long(const std::string& token, const std::string& where) {
  long v = 0;
  const char* end = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(token.data(), end, v);
  if (ec != std::errc() || ptr != end) throw FormatError(where + ": invalid index '" + token + "'");
  return v;
}

}  // namespace

// ------------------------------------------------------------------- meshes

TriangleMesh load_obj(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  TriangleMesh mesh;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string where = path + ":" + std::to_string(line_no);
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      Vec3 p;
      std::string tok;
      for (int a = 0; a < 3; ++a) {
        if (!(ls >> tok)) throw FormatError(where + ": vertex needs three coordinates");
        p(a) = parse_double(tok, where);
      }
      mesh.vertices.push_back(p);
    } else if (tag == "f") {
      std::vector<int> face;
      std::string tok;
      while (ls >> tok) {
        const std::string head = tok.substr(0, tok.find('/'));
        long idx = parse_long(head, where);
        const auto n = static_cast<long>(mesh.vertices.size());
        if (idx < 0) idx = n + idx + 1;  // relative index
        if (idx < 1 || idx > n) {
          throw FormatError(where + ": face index " + head + " out of range (" + std::to_string(n) + " vertices)");
        }
        face.push_back(static_cast<int>(idx - 1));
      }
      if (face.size() < 3) throw FormatError(where + ": face needs at least three vertices");
      for (std::size_t k = 1; k + 1 < face.size(); ++k) mesh.triangles.push_back({face[0], face[k], face[k + 1]});
    }
  }
  return mesh;
}

void save_obj(const TriangleMesh& mesh, const std::string& path) {
  mesh.validate();
  std::ostringstream out;
  out.precision(17);
  for (const auto& v : mesh.vertices) out << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  for (const auto& t : mesh.triangles) out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
  write_file(path, out.str());
}

TriangleMesh load_ply(const std::string& path) {
  const auto data = read_file(path);
  const std::string text(data.begin(), data.end());
  const auto header_end = text.find("end_header\n");
  if (text.rfind("ply\n", 0) != 0 || header_end == std::string::npos) {
    throw FormatError(path + ": not a PLY file");
  }
  struct Property {
    std::string name;
    std::string type;
    std::string count_type;  // list properties only
  };
  struct Element {
    std::string name;
    std::size_t count = 0;
    std::vector<Property> props;
  };
  std::vector<Element> elements;
  std::istringstream header(text.substr(0, header_end));
  std::string line;
  bool binary_le = false;
  while (std::getline(header, line)) {
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "format") {
      std::string fmt;
      ls >> fmt;
      binary_le = fmt == "binary_little_endian";
    } else if (tag == "element") {
      Element e;
      ls >> e.name >> e.count;
      elements.push_back(e);
    } else if (tag == "property") {
      if (elements.empty()) throw FormatError(path + ": property before element");
      Property p;
      ls >> p.type;
      if (p.type == "list") ls >> p.count_type >> p.type;
      ls >> p.name;
      elements.back().props.push_back(p);
    }
  }
  if (!binary_le) throw FormatError(path + ": only binary_little_endian PLY is supported");
  const std::vector<char> body(data.begin() + static_cast<long>(header_end + 11), data.end());
  Reader r(body, path);
  auto read_scalar = [&](const std::string& type) -> double {
    if (type == "float" || type == "float32") return r.get<float>();
    if (type == "double" || type == "float64") return r.get<double>();
    if (type == "uchar" || type == "uint8") return r.get<std::uint8_t>();
    if (type == "char" || type == "int8") return r.get<std::int8_t>();
    if (type == "ushort" || type == "uint16") return r.get<std::uint16_t>();
    if (type == "short" || type == "int16") return r.get<std::int16_t>();
    if (type == "uint" || type == "uint32") return r.get<std::uint32_t>();
    if (type == "int" || type == "int32") return r.get<std::int32_t>();
    throw FormatError(path + ": unsupported PLY type " + type);
  };
  TriangleMesh mesh;
  for (const auto& e : elements) {
    for (std::size_t i = 0; i < e.count; ++i) {
      Vec3 p = Vec3::Zero();
      std::vector<int> face;
      for (const auto& prop : e.props) {
        if (!prop.count_type.empty()) {
          const auto n = static_cast<std::size_t>(read_scalar(prop.count_type));
          for (std::size_t k = 0; k < n; ++k) face.push_back(static_cast<int>(read_scalar(prop.type)));
          continue;
        }
        const double value = read_scalar(prop.type);
        if (e.name == "vertex") {
          if (prop.name == "x") p.x() = value;
          if (prop.name == "y") p.y() = value;
          if (prop.name == "z") p.z() = value;
        }
      }
      if (e.name == "vertex") mesh.vertices.push_back(p);
      if (e.name == "face") {
        if (face.size() < 3) throw FormatError(path + ": face with fewer than three vertices");
        for (std::size_t k = 1; k + 1 < face.size(); ++k) mesh.triangles.push_back({face[0], face[k], face[k + 1]});
      }
    }
  }
  r.expect_end();
  try {
    mesh.validate();
  } catch (const DataError& e) {
    throw FormatError(path + ": " + e.what());
  }
  return mesh;
}

void save_ply(const TriangleMesh& mesh, const std::string& path) {
  mesh.validate();
  std::ostringstream header;
  header << "ply\nformat binary_little_endian 1.0\n"
         << "element vertex " << mesh.vertices.size() << "\n"
         << "property float x\nproperty float y\nproperty float z\n"
         << "element face " << mesh.triangles.size() << "\n"
         << "property list uchar int vertex_indices\nend_header\n";
  Writer w;
  const std::string h = header.str();
  w.raw(h.data(), h.size());
  for (const auto& v : mesh.vertices)
    for (int a = 0; a < 3; ++a) w.put(static_cast<float>(v(a)));
  for (const auto& t : mesh.triangles) {
    w.put(static_cast<std::uint8_t>(3));
    for (int idx : t) w.put(static_cast<std::int32_t>(idx));
  }
  write_file(path, w.bytes());
}

TriangleMesh load_mesh(const std::string& path) {
  return ends_with(path, ".ply") ? load_ply(path) : load_obj(path);
}

void save_mesh(const TriangleMesh& mesh, const std::string& path) {
  if (ends_with(path, ".ply")) {
    save_ply(mesh, path);
  } else {
    save_obj(mesh, path);
  }
}

// ------------------------------------------------------------------- depth

void save_depth(const DepthFrame& frame, const std::string& path) {
  frame.validate();
  Writer w;
  w.raw("DLSD", 4);
  w.put(static_cast<std::uint32_t>(frame.width));
  w.put(static_cast<std::uint32_t>(frame.height));
  w.put(frame.fx);
  w.put(frame.fy);
  w.put(frame.cx);
  w.put(frame.cy);
  for (float m : frame.camera_to_world) w.put(m);
  for (float d : frame.depth) w.put(d);
  write_file(path, w.bytes());
}

DepthFrame load_depth(const std::string& path) {
  const auto data = read_file(path);
  Reader r(data, path);
  r.expect_magic("DLSD");
  DepthFrame f;
  const auto w = r.get<std::uint32_t>();
  const auto h = r.get<std::uint32_t>();
  if (w == 0 || h == 0) throw FormatError(path + ": frame has zero size");
  if (static_cast<std::uint64_t>(w) * h > (1ULL << 28)) throw FormatError(path + ": frame is implausibly large");
  f.width = static_cast<int>(w);
  f.height = static_cast<int>(h);
  f.fx = r.get<float>();
  f.fy = r.get<float>();
  f.cx = r.get<float>();
  f.cy = r.get<float>();
  for (auto& m : f.camera_to_world) m = r.get<float>();
  r.need(static_cast<std::size_t>(w) * h * sizeof(float));
  f.depth.resize(static_cast<std::size_t>(w) * h);
  for (auto& d : f.depth) d = r.get<float>();
  r.expect_end();
  try {
    f.validate();
  } catch (const DataError& e) {
    throw FormatError(path + ": " + e.what());
  }
  return f;
}

// -------------------------------------------------------------- checkpoint

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  const auto& dec = ck.decoder;
  dec.validate();
  const MlpSpec& spec = dec.spec();
  Writer w;
  w.raw("DLS1", 4);
  w.put(kCheckpointVersion);
  w.put(static_cast<std::uint32_t>(dec.dim));
  w.put(static_cast<std::uint32_t>(dec.code_dim));
  w.put(static_cast<std::uint32_t>(spec.hidden_dim));
  w.put(static_cast<std::uint32_t>(spec.num_layers));
  w.put(static_cast<std::uint32_t>(spec.output_dim));
  w.put(spec.leaky_slope);
  w.put(dec.truncation);
  w.put(dec.tanh_clamp);
  for (const auto& layer : dec.mlp.layers()) {
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) w.put(static_cast<float>(layer.weights(r, c)));
    for (Eigen::Index r = 0; r < layer.biases.size(); ++r) w.put(static_cast<float>(layer.biases(r)));
  }
  w.put(static_cast<std::uint8_t>(ck.optimizer ? 1 : 0));
  if (ck.optimizer) {
    const auto& opt = *ck.optimizer;
    if (opt.size() != dec.mlp.parameter_count()) throw ContractError("optimizer state does not match the decoder");
    w.put(static_cast<std::uint64_t>(opt.step_count()));
    w.put(opt.config().lr);
    w.put(opt.config().beta1);
    w.put(opt.config().beta2);
    w.put(opt.config().eps);
    for (Real m : opt.first_moment()) w.put(static_cast<float>(m));
    for (Real v : opt.second_moment()) w.put(static_cast<float>(v));
  }
  w.put(static_cast<std::uint8_t>(ck.grid ? 1 : 0));
  if (ck.grid) {
    const auto& grid = *ck.grid;
    if (grid.code_dim() != dec.code_dim) throw ContractError("grid code size does not match the decoder");
    for (int a = 0; a < 3; ++a) w.put(grid.origin()(a));
    w.put(grid.voxel_size());
    w.put(static_cast<std::uint64_t>(grid.size()));
    for (std::size_t s = 0; s < grid.size(); ++s) {
      const auto& idx = grid.indices()[s];
      w.put(static_cast<std::int32_t>(idx.i));
      w.put(static_cast<std::int32_t>(idx.j));
      w.put(static_cast<std::int32_t>(idx.k));
      const auto code = grid.code(static_cast<int>(s));
      for (Eigen::Index c = 0; c < code.size(); ++c) w.put(static_cast<float>(code(c)));
    }
  }
  write_file(path, w.bytes());
}

Checkpoint load_checkpoint(const std::string& path) {
  const auto data = read_file(path);
  Reader r(data, path);
  r.expect_magic("DLS1");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw FormatError(path + ": unsupported checkpoint version " + std::to_string(version) + " (this build reads " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  DecoderConfig cfg;
  cfg.dim = static_cast<int>(r.get<std::uint32_t>());
  cfg.code_dim = static_cast<int>(r.get<std::uint32_t>());
  cfg.hidden_dim = static_cast<int>(r.get<std::uint32_t>());
  cfg.num_layers = static_cast<int>(r.get<std::uint32_t>());
  const auto output_dim = r.get<std::uint32_t>();
  cfg.leaky_slope = r.get<double>();
  cfg.truncation = r.get<double>();
  const double tanh_clamp = r.get<double>();
  if (output_dim != 1) throw FormatError(path + ": decoder output must be scalar");
  if (cfg.code_dim <= 0 || cfg.code_dim > 1 << 16 || cfg.hidden_dim <= 0 || cfg.hidden_dim > 1 << 16 ||
      cfg.num_layers < 1 || cfg.num_layers > 64) {
    throw FormatError(path + ": implausible decoder dimensions");
  }
  if (!(tanh_clamp > 0.0 && tanh_clamp < 1.0)) throw FormatError(path + ": invalid tanh clamp");
  Checkpoint ck;
  try {
    ck.decoder = DecoderParams<Real>::zeros(cfg);
  } catch (const ConfigError& e) {
    throw FormatError(path + ": " + e.what());
  }
  ck.decoder.tanh_clamp = tanh_clamp;
  {
    auto& layers = ck.decoder.mlp.mutable_layers();
    for (auto& layer : layers) {
      r.need(static_cast<std::size_t>(layer.weights.size() + layer.biases.size()) * sizeof(float));
      for (Eigen::Index i = 0; i < layer.weights.rows(); ++i)
        for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) layer.weights(i, c) = static_cast<Real>(r.get<float>());
      for (Eigen::Index i = 0; i < layer.biases.size(); ++i) layer.biases(i) = static_cast<Real>(r.get<float>());
    }
  }
  const std::size_t count = ck.decoder.mlp.parameter_count();
  if (r.get<std::uint8_t>() != 0) {
    const auto step = r.get<std::uint64_t>();
    AdamConfig ac;
    ac.lr = r.get<double>();
    ac.beta1 = r.get<double>();
    ac.beta2 = r.get<double>();
    ac.eps = r.get<double>();
    r.need(2 * count * sizeof(float));
    std::vector<Real> m(count);
    std::vector<Real> v(count);
    for (auto& x : m) x = static_cast<Real>(r.get<float>());
    for (auto& x : v) x = static_cast<Real>(r.get<float>());
    AdamState<Real> state(count, ac);
    try {
      state.restore(step, std::move(m), std::move(v));
    } catch (const Error& e) {
      throw FormatError(path + ": " + e.what());
    }
    ck.optimizer = std::move(state);
  }
  if (r.get<std::uint8_t>() != 0) {
    Vec3 origin;
    for (int a = 0; a < 3; ++a) origin(a) = r.get<double>();
    const double voxel = r.get<double>();
    const auto entries = r.get<std::uint64_t>();
    const std::size_t entry_bytes = 3 * sizeof(std::int32_t) + static_cast<std::size_t>(cfg.code_dim) * sizeof(float);
    if (entries > (1ULL << 40) / entry_bytes) throw FormatError(path + ": implausible grid size");
    r.need(static_cast<std::size_t>(entries) * entry_bytes);
    std::vector<VoxelIndex> idx(static_cast<std::size_t>(entries));
    MatrixX<Real> codes(cfg.code_dim, static_cast<Eigen::Index>(entries));
    for (std::size_t e = 0; e < idx.size(); ++e) {
      idx[e].i = r.get<std::int32_t>();
      idx[e].j = r.get<std::int32_t>();
      idx[e].k = r.get<std::int32_t>();
      for (int c = 0; c < cfg.code_dim; ++c) codes(c, static_cast<Eigen::Index>(e)) = static_cast<Real>(r.get<float>());
    }
    try {
      LatentGrid grid(origin, voxel, cfg.code_dim);
      grid.assign(std::move(idx), std::move(codes));
      ck.grid = std::move(grid);
    } catch (const Error& e) {
      throw FormatError(path + ": " + e.what());
    }
  }
  r.expect_end();
  return ck;
}

// ----------------------------------------------------------------- samples

void save_samples(const std::vector<SdfSample>& samples, const std::string& path) {
  std::ostringstream out;
  out.precision(17);
  out << "x,y,z,sdf,weight\n";
  for (const auto& s : samples) {
    out << s.position.x() << ',' << s.position.y() << ',' << s.position.z() << ',' << s.sdf << ',' << s.weight << '\n';
  }
  write_file(path, out.str());
}

std::vector<SdfSample> load_samples(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line.rfind("x,y,z,sdf,weight", 0) != 0) {
    throw FormatError(path + ": expected header x,y,z,sdf,weight");
  }
  std::vector<SdfSample> out;
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    if (line.back() == '\r') line.pop_back();
    const std::string where = path + ":" + std::to_string(line_no);
    std::array<double, 5> v{};
    std::size_t start = 0;
    for (int k = 0; k < 5; ++k) {
      const std::size_t comma = line.find(',', start);
      if ((k < 4) != (comma != std::string::npos)) throw FormatError(where + ": expected five columns");
      v[k] = parse_double(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start), where);
      start = comma + 1;
    }
    if (!(v[4] > 0.0) || !std::isfinite(v[4])) throw FormatError(where + ": weight must be positive");
    for (double x : v)
      if (!std::isfinite(x)) throw FormatError(where + ": non-finite value");
    out.push_back({Vec3(v[0], v[1], v[2]), v[3], v[4]});
  }
  return out;
}

// -------------------------------------------------------------------- tsdf

void save_tsdf(const TsdfVolume& volume, const std::string& path) {
  Writer w;
  w.raw("DLST", 4);
  w.put(kTsdfVersion);
  for (int a = 0; a < 3; ++a) w.put(volume.origin()(a));
  w.put(volume.voxel_size());
  w.put(volume.truncation());
  for (int d : volume.dims()) w.put(static_cast<std::int32_t>(d));
  for (float t : volume.tsdf_values()) w.put(t);
  for (float x : volume.weights()) w.put(x);
  write_file(path, w.bytes());
}

TsdfVolume load_tsdf(const std::string& path) {
  const auto data = read_file(path);
  Reader r(data, path);
  r.expect_magic("DLST");
  const auto version = r.get<std::uint32_t>();
  if (version != kTsdfVersion) throw FormatError(path + ": unsupported TSDF version " + std::to_string(version));
  Vec3 origin;
  for (int a = 0; a < 3; ++a) origin(a) = r.get<double>();
  const double voxel = r.get<double>();
  const double trunc = r.get<double>();
  std::array<int, 3> dims{};
  for (auto& d : dims) d = r.get<std::int32_t>();
  for (int d : dims)
    if (d < 1 || d > 1 << 14) throw FormatError(path + ": implausible volume dimensions");
  const std::size_t n = static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  r.need(2 * n * sizeof(float));
  std::vector<float> tsdf(n);
  std::vector<float> weight(n);
  for (auto& t : tsdf) t = r.get<float>();
  for (auto& x : weight) x = r.get<float>();
  r.expect_end();
  try {
    TsdfVolume volume(origin, voxel, dims, trunc);
    volume.assign(std::move(tsdf), std::move(weight));
    return volume;
  } catch (const Error& e) {
    throw FormatError(path + ": " + e.what());
  }
}

}  // namespace deepls
