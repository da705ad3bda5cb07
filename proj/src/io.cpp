// Copyright 2026 The cssmamba Authors
// SPDX-License-Identifier: Apache-2.0

#include "cssm/io.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace cssm {

namespace {

class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void bytes(std::string_view s) { buf_.append(s); }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s);
  }
  void f64s(std::span<const double> v) {
    u64(v.size());
    for (double x : v) f64(x);
  }
  void sizes(std::span<const std::size_t> v) {
    u64(v.size());
    for (std::size_t x : v) u64(x);
  }
  std::string take() { return std::move(buf_); }
  std::size_t size() const { return buf_.size(); }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  std::string buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string_view data, std::uint64_t base = 0) : data_(data), base_(base) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string_view bytes(std::size_t n) {
    need(n);
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::string str() {
    const std::uint32_t n = u32();
    return std::string(bytes(n));
  }
  std::vector<double> f64s() {
    const std::uint64_t n = count(8);
    std::vector<double> v(n);
    for (double& x : v) x = f64();
    return v;
  }
  std::vector<std::size_t> sizes() {
    const std::uint64_t n = count(8);
    std::vector<std::size_t> v(n);
    for (std::size_t& x : v) x = u64();
    return v;
  }
  // Element count followed by elements of `width` bytes each.
  std::uint64_t count(std::size_t width) {
    const std::uint64_t n = u64();
    if (n > (data_.size() - pos_) / width) throw FormatError("element count " + std::to_string(n) + " exceeds data", offset());
    return n;
  }
  std::uint64_t offset() const { return base_ + pos_; }
  bool done() const { return pos_ == data_.size(); }

 private:
  // Truncation is reported at the length the data would have needed.
  void need(std::size_t n) {
    if (data_.size() - pos_ < n) {
      throw FormatError("truncated: need " + std::to_string(n) + " more bytes, " +
                            std::to_string(data_.size() - pos_) + " remain",
                        offset() + n);
    }
  }
  std::uint64_t get(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= std::uint64_t{static_cast<unsigned char>(data_[pos_ + i])} << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::string_view data_;
  std::uint64_t base_;
  std::size_t pos_ = 0;
};

}  // namespace

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      std::filesystem::remove(tmp);
      throw std::runtime_error("write failed for " + tmp.string());
    }
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// ---- container ---------------------------------------------------------------

std::string encode_container(const Dataset& data) {
  const HsiCube& cube = data.cube;
  if (cube.data.size() != cube.bands * cube.pixels() || data.labels.labels.size() != cube.pixels()) {
    throw ShapeError("encode_container: cube/label sizes do not match the header dimensions");
  }
  ByteWriter w;
  w.bytes("HSIB");
  w.u16(kContainerVersion);
  w.u32(static_cast<std::uint32_t>(cube.height));
  w.u32(static_cast<std::uint32_t>(cube.width));
  w.u32(static_cast<std::uint32_t>(cube.bands));
  w.u16(static_cast<std::uint16_t>(data.num_classes()));
  for (int i = 0; i < 16; ++i) w.u8(0);
  for (double v : cube.data) w.f32(static_cast<float>(v));
  for (int y : data.labels.labels) {
    if (y < 0 || static_cast<std::size_t>(y) > data.num_classes()) {
      throw DatasetError("encode_container: label " + std::to_string(y) + " outside 0.." +
                         std::to_string(data.num_classes()));
    }
    w.u16(static_cast<std::uint16_t>(y));
  }
  for (const auto& name : data.class_names) w.str(name);
  return w.take();
}

Dataset decode_container(std::string_view bytes) {
  ByteReader r(bytes);
  if (bytes.size() < kContainerHeaderSize) {
    throw FormatError("truncated header: expected " + std::to_string(kContainerHeaderSize) + " bytes, file has " +
                          std::to_string(bytes.size()),
                      kContainerHeaderSize);
  }
  if (r.bytes(4) != "HSIB") throw FormatError("bad magic, expected HSIB", 0);
  const std::uint16_t version = r.u16();
  if (version != kContainerVersion) {
    throw FormatError("unsupported container version " + std::to_string(version) + ", expected " +
                          std::to_string(kContainerVersion),
                      4);
  }
  Dataset d;
  d.cube.height = r.u32();
  d.cube.width = r.u32();
  d.cube.bands = r.u32();
  const std::uint16_t classes = r.u16();
  r.bytes(16);
  const std::uint64_t l = std::uint64_t{d.cube.height} * d.cube.width;
  const std::uint64_t body = kContainerHeaderSize + l * d.cube.bands * 4 + l * 2;
  if (bytes.size() < body) {
    throw FormatError("truncated: header requires at least " + std::to_string(body) + " bytes, file has " +
                          std::to_string(bytes.size()),
                      body);
  }
  d.cube.data.resize(l * d.cube.bands);
  for (double& v : d.cube.data) v = r.f32();
  d.labels.height = d.cube.height;
  d.labels.width = d.cube.width;
  d.labels.labels.resize(l);
  for (int& y : d.labels.labels) {
    const std::uint64_t at = r.offset();
    y = r.u16();
    if (static_cast<std::size_t>(y) > classes) {
      throw FormatError("label " + std::to_string(y) + " exceeds class count " + std::to_string(classes), at);
    }
  }
  for (std::uint16_t c = 0; c < classes; ++c) d.class_names.push_back(r.str());
  if (!r.done()) {
    throw FormatError("trailing bytes after class names: file has " + std::to_string(bytes.size()) + " bytes",
                      r.offset());
  }
  return d;
}

void save_container(const std::filesystem::path& path, const Dataset& data) {
  write_file_atomic(path, encode_container(data));
}

Dataset read_container(const std::filesystem::path& path) { return decode_container(read_file(path)); }

Dataset load_container(const std::filesystem::path& path) {
  Dataset d = read_container(path);
  normalize_bands(d.cube);
  return d;
}

void normalize_bands(HsiCube& cube) {
  const std::size_t l = cube.pixels();
  for (std::size_t b = 0; b < cube.bands; ++b) {
    auto first = cube.data.begin() + static_cast<std::ptrdiff_t>(b * l);
    auto last = first + static_cast<std::ptrdiff_t>(l);
    const auto [lo, hi] = std::minmax_element(first, last);
    const double mn = *lo, range = *hi - *lo;
    for (auto it = first; it != last; ++it) *it = range > 0.0 ? (*it - mn) / range : 0.0;
  }
}

// ---- maps ----------------------------------------------------------------------

std::vector<Rgb> default_palette() {
  return {{0, 0, 0},       {230, 25, 75},   {60, 180, 75},   {255, 225, 25}, {0, 130, 200},  {245, 130, 48},
          {145, 30, 180},  {70, 240, 240},  {240, 50, 230},  {210, 245, 60}, {250, 190, 212}, {0, 128, 128},
          {220, 190, 255}, {170, 110, 40},  {255, 250, 200}, {128, 0, 0},    {170, 255, 195}};
}

namespace {

std::string pnm_header(const char* magic, std::size_t height, std::size_t width) {
  return std::string(magic) + "\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
}

}  // namespace

std::string encode_ppm(std::span<const int> classes, std::size_t height, std::size_t width,
                       const std::vector<Rgb>& palette) {
  if (classes.size() != height * width) throw ShapeError("encode_ppm: map size does not match dimensions");
  std::string out = pnm_header("P6", height, width);
  out.reserve(out.size() + 3 * classes.size());
  for (int c : classes) {
    if (c < 0 || static_cast<std::size_t>(c) >= palette.size()) {
      throw IndexError("encode_ppm: class " + std::to_string(c) + " has no palette entry");
    }
    for (std::uint8_t v : palette[static_cast<std::size_t>(c)]) out.push_back(static_cast<char>(v));
  }
  return out;
}

std::string encode_pgm(std::span<const int> values, std::size_t height, std::size_t width) {
  if (values.size() != height * width) throw ShapeError("encode_pgm: map size does not match dimensions");
  std::string out = pnm_header("P5", height, width);
  for (int v : values) {
    if (v < 0 || v > 255) throw IndexError("encode_pgm: value " + std::to_string(v) + " outside 0..255");
    out.push_back(static_cast<char>(v));
  }
  return out;
}

GrayImage decode_pgm(std::string_view bytes) {
  std::size_t pos = 0;
  auto token = [&]() -> std::string_view {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
    const std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    if (start == pos) throw FormatError("truncated PGM header", pos);
    return bytes.substr(start, pos - start);
  };
  auto number = [&]() {
    const auto t = token();
    std::size_t v = 0;
    const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
    if (res.ec != std::errc{} || res.ptr != t.data() + t.size()) {
      throw FormatError("bad PGM header field '" + std::string(t) + "'", pos);
    }
    return v;
  };
  if (token() != "P5") throw FormatError("not a binary PGM (P5)", 0);
  GrayImage img;
  img.width = number();
  img.height = number();
  if (number() != 255) throw FormatError("only maxval 255 is supported", pos);
  ++pos;  // single whitespace byte before the raster
  const std::size_t n = img.width * img.height;
  if (bytes.size() < pos + n) throw FormatError("truncated PGM raster", bytes.size());
  img.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) img.values[i] = static_cast<unsigned char>(bytes[pos + i]);
  return img;
}

// ---- run configuration -----------------------------------------------------------

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

template <class T>
T parse_number(std::string_view v, const std::string& where) {
  T out{};
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc{} || res.ptr != v.data() + v.size()) {
    throw ConfigError(where + ": cannot parse '" + std::string(v) + "'");
  }
  return out;
}

bool parse_bool(std::string_view v, const std::string& where) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(where + ": expected a boolean, got '" + std::string(v) + "'");
}

}  // namespace

RunConfig parse_run_config(std::string_view text) {
  RunConfig cfg;
  using Setter = std::function<void(std::string_view, const std::string&)>;
  auto size_key = [](std::size_t& dst) -> Setter {
    return [&dst](std::string_view v, const std::string& w) {
      dst = parse_number<std::size_t>(v, w);
      if (dst == 0) throw ConfigError(w + ": must be positive");
    };
  };
  auto real_key = [](double& dst, bool allow_zero) -> Setter {
    return [&dst, allow_zero](std::string_view v, const std::string& w) {
      dst = parse_number<double>(v, w);
      if (!(dst > 0.0 || (allow_zero && dst == 0.0))) throw ConfigError(w + ": must be positive");
    };
  };
  auto bool_key = [](bool& dst) -> Setter {
    return [&dst](std::string_view v, const std::string& w) { dst = parse_bool(v, w); };
  };
  const std::map<std::string, Setter, std::less<>> keys = {
      {"container", [&](std::string_view v, const std::string&) { cfg.container = std::string(v); }},
      {"out_dir", [&](std::string_view v, const std::string&) { cfg.out_dir = std::string(v); }},
      {"seed", [&](std::string_view v, const std::string& w) { cfg.train.seed = parse_number<std::uint64_t>(v, w); }},
      {"lr", real_key(cfg.train.lr, false)},
      {"epochs", size_key(cfg.train.epochs)},
      {"cluster_weight", real_key(cfg.train.cluster_weight, true)},
      {"use_cluster_loss", bool_key(cfg.train.use_cluster_loss)},
      {"momentum", real_key(cfg.train.momentum, false)},
      {"tau", real_key(cfg.train.tau, false)},
      {"hidden", size_key(cfg.model.hidden)},
      {"state_dim", size_key(cfg.model.state_dim)},
      {"expand", size_key(cfg.model.expand)},
      {"attn_dim", size_key(cfg.model.attn_dim)},
      {"group_size", size_key(cfg.model.group_size)},
      {"clusters_per_class", size_key(cfg.model.clusters_per_class)},
      {"keep_ratio", real_key(cfg.model.keep_ratio, false)},
      {"use_attention", bool_key(cfg.model.use_attention)},
      {"fusion",
       [&](std::string_view v, const std::string& w) {
         if (v == "sum") cfg.model.fusion = Fusion::kSum;
         else if (v == "concat") cfg.model.fusion = Fusion::kConcat;
         else throw ConfigError(w + ": fusion must be 'sum' or 'concat'");
       }},
  };
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = "config line " + std::to_string(line_no);
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(where + ": expected key = value");
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    const auto it = keys.find(key);
    if (it == keys.end()) throw ConfigError(where + ": unknown key '" + std::string(key) + "'");
    it->second(value, where + " (" + std::string(key) + ")");
  }
  if (cfg.train.momentum >= 1.0) throw ConfigError("config: momentum must lie in (0,1)");
  if (cfg.model.keep_ratio > 1.0) throw ConfigError("config: keep_ratio must lie in (0,1]");
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) { return parse_run_config(read_file(path)); }

std::string format_run_config(const RunConfig& cfg) {
  std::ostringstream os;
  os.precision(17);
  os << "container = " << cfg.container << "\n"
     << "out_dir = " << cfg.out_dir << "\n"
     << "seed = " << cfg.train.seed << "\n"
     << "lr = " << cfg.train.lr << "\n"
     << "epochs = " << cfg.train.epochs << "\n"
     << "cluster_weight = " << cfg.train.cluster_weight << "\n"
     << "use_cluster_loss = " << (cfg.train.use_cluster_loss ? "true" : "false") << "\n"
     << "momentum = " << cfg.train.momentum << "\n"
     << "tau = " << cfg.train.tau << "\n"
     << "hidden = " << cfg.model.hidden << "\n"
     << "state_dim = " << cfg.model.state_dim << "\n"
     << "expand = " << cfg.model.expand << "\n"
     << "attn_dim = " << cfg.model.attn_dim << "\n"
     << "group_size = " << cfg.model.group_size << "\n"
     << "clusters_per_class = " << cfg.model.clusters_per_class << "\n"
     << "keep_ratio = " << cfg.model.keep_ratio << "\n"
     << "use_attention = " << (cfg.model.use_attention ? "true" : "false") << "\n"
     << "fusion = " << (cfg.model.fusion == Fusion::kSum ? "sum" : "concat") << "\n";
  return os.str();
}

// ---- checkpoint ------------------------------------------------------------------

namespace {

std::uint32_t crc32_of(std::string_view bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size()));
  return static_cast<std::uint32_t>(crc);
}

}  // namespace

std::string encode_checkpoint(const Trainer& trainer) {
  ByteWriter w;
  const ModelConfig& m = trainer.model_config();
  for (std::size_t v : {m.bands, m.num_classes, m.hidden, m.state_dim, m.expand, m.attn_dim, m.group_size,
                        m.clusters_per_class}) {
    w.u64(v);
  }
  w.f64(m.keep_ratio);
  w.u8(m.use_attention ? 1 : 0);
  w.u8(m.fusion == Fusion::kSum ? 0 : 1);

  const TrainConfig& t = trainer.train_config();
  w.f64(t.lr);
  w.u64(t.epochs);
  w.f64(t.cluster_weight);
  w.u8(t.use_cluster_loss ? 1 : 0);
  w.f64(t.momentum);
  w.f64(t.tau);
  w.u64(t.seed);

  const HsiCube& cube = trainer.data().cube;
  w.u64(cube.height);
  w.u64(cube.width);
  w.u64(cube.bands);

  const SplitSpec& s = trainer.split();
  w.u64(s.seed);
  w.u64(s.rule.train_per_class);
  w.u64(s.rule.val_per_class);
  w.u64(s.rule.small_class_threshold);
  w.u64(s.train.size());
  for (std::size_t c = 0; c < s.train.size(); ++c) {
    w.sizes(s.train[c]);
    w.sizes(s.val[c]);
    w.sizes(s.test[c]);
  }

  w.u64(trainer.epoch());
  std::ostringstream rng_state;
  rng_state << const_cast<Trainer&>(trainer).rng();
  w.str(rng_state.str());

  const ParamList params = trainer.model().params();
  w.u64(params.size());
  for (const auto& p : params) {
    w.str(p.name);
    w.f64s(p.tensor.data());
  }
  auto& adam = const_cast<Trainer&>(trainer).optimizer();
  w.u64(adam.steps());
  for (std::size_t i = 0; i < params.size(); ++i) {
    w.f64s(adam.first_moments()[i]);
    w.f64s(adam.second_moments()[i]);
  }

  const ClusterState& cs = trainer.clusters();
  w.f64s(cs.centers);
  w.u64(cs.initialized.size());
  for (char c : cs.initialized) w.u8(c ? 1 : 0);
  w.u64(cs.assignment.size());
  for (int a : cs.assignment) w.u32(static_cast<std::uint32_t>(a));
  w.f64s(cs.prior);

  const std::string payload = w.take();
  ByteWriter out;
  out.bytes("CSMK");
  out.u32(kCheckpointVersion);
  out.u64(payload.size());
  out.bytes(payload);
  out.u32(crc32_of(payload));
  return out.take();
}

std::unique_ptr<Trainer> decode_checkpoint(std::string_view bytes, const Dataset& data) {
  ByteReader head(bytes);
  if (head.bytes(4) != "CSMK") throw FormatError("bad checkpoint magic", 0);
  const std::uint32_t version = head.u32();
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint version " + std::to_string(version) + " is not supported (this build reads version " +
                          std::to_string(kCheckpointVersion) + ")",
                      4);
  }
  const std::uint64_t len = head.u64();
  const std::string_view payload = head.bytes(len);
  const std::uint32_t stored = head.u32();
  if (!head.done()) throw FormatError("trailing bytes after checkpoint", head.offset());
  if (crc32_of(payload) != stored) throw FormatError("checkpoint checksum mismatch", 16 + len);

  ByteReader r(payload, 16);
  ModelConfig m;
  for (std::size_t* v : {&m.bands, &m.num_classes, &m.hidden, &m.state_dim, &m.expand, &m.attn_dim, &m.group_size,
                         &m.clusters_per_class}) {
    *v = r.u64();
  }
  m.keep_ratio = r.f64();
  m.use_attention = r.u8() != 0;
  m.fusion = r.u8() == 0 ? Fusion::kSum : Fusion::kConcat;

  TrainConfig t;
  t.lr = r.f64();
  t.epochs = r.u64();
  t.cluster_weight = r.f64();
  t.use_cluster_loss = r.u8() != 0;
  t.momentum = r.f64();
  t.tau = r.f64();
  t.seed = r.u64();

  const std::uint64_t h = r.u64(), wd = r.u64(), c = r.u64();
  if (h != data.cube.height || wd != data.cube.width || c != data.cube.bands) {
    throw ConfigError("checkpoint was trained on a " + std::to_string(h) + "x" + std::to_string(wd) + "x" +
                      std::to_string(c) + " cube");
  }

  SplitSpec s;
  s.seed = r.u64();
  s.rule.train_per_class = r.u64();
  s.rule.val_per_class = r.u64();
  s.rule.small_class_threshold = r.u64();
  const std::uint64_t classes = r.u64();
  s.train.resize(classes);
  s.val.resize(classes);
  s.test.resize(classes);
  for (std::size_t k = 0; k < classes; ++k) {
    s.train[k] = r.sizes();
    s.val[k] = r.sizes();
    s.test[k] = r.sizes();
  }

  auto trainer = std::make_unique<Trainer>(data, std::move(s), m, t);
  trainer->set_epoch(r.u64());
  std::istringstream rng_state(r.str());
  rng_state >> trainer->rng();

  ParamList params = trainer->model().params();
  if (r.u64() != params.size()) throw FormatError("checkpoint parameter count does not match the model", r.offset());
  for (auto& p : params) {
    const std::string name = r.str();
    const std::uint64_t at = r.offset();
    auto values = r.f64s();
    if (name != p.name || values.size() != p.tensor.numel()) {
      throw FormatError("checkpoint parameter '" + name + "' does not match model parameter '" + p.name + "'", at);
    }
    std::copy(values.begin(), values.end(), p.tensor.mutable_data().begin());
  }
  Adam& adam = trainer->optimizer();
  adam.set_steps(r.u64());
  for (std::size_t i = 0; i < params.size(); ++i) {
    adam.first_moments()[i] = r.f64s();
    adam.second_moments()[i] = r.f64s();
    if (adam.first_moments()[i].size() != params[i].tensor.numel() ||
        adam.second_moments()[i].size() != params[i].tensor.numel()) {
      throw FormatError("optimizer state size mismatch for " + params[i].name, r.offset());
    }
  }

  ClusterState& cs = trainer->clusters();
  auto centers = r.f64s();
  if (centers.size() != cs.centers.size()) throw FormatError("cluster center size mismatch", r.offset());
  cs.centers = std::move(centers);
  const std::uint64_t ni = r.count(1);
  if (ni != cs.initialized.size()) throw FormatError("cluster flag count mismatch", r.offset());
  for (char& f : cs.initialized) f = static_cast<char>(r.u8());
  const std::uint64_t na = r.count(4);
  if (na != cs.assignment.size()) throw FormatError("cluster map size mismatch", r.offset());
  for (int& a : cs.assignment) {
    a = static_cast<int>(r.u32());
    if (a < 0 || static_cast<std::size_t>(a) >= cs.num_clusters()) throw FormatError("cluster id out of range", r.offset());
  }
  auto prior = r.f64s();
  if (prior.size() != cs.prior.size()) throw FormatError("cluster prior size mismatch", r.offset());
  cs.prior = std::move(prior);
  if (!r.done()) throw FormatError("unexpected bytes at end of checkpoint payload", r.offset());
  return trainer;
}

void save_checkpoint(const std::filesystem::path& path, const Trainer& trainer) {
  write_file_atomic(path, encode_checkpoint(trainer));
}

std::unique_ptr<Trainer> load_checkpoint(const std::filesystem::path& path, const Dataset& data) {
  return decode_checkpoint(read_file(path), data);
}

// ---- synthetic data --------------------------------------------------------------

Dataset generate_synthetic(const SynthConfig& cfg) {
  if (cfg.height == 0 || cfg.width == 0 || cfg.bands == 0 || cfg.classes == 0 || cfg.block == 0) {
    throw ConfigError("synthetic: all dimensions must be positive");
  }
  if (cfg.classes > 16) throw ConfigError("synthetic: at most 16 classes");
  if (!(cfg.noise >= 0.0) || !(cfg.gain >= 0.0 && cfg.gain < 1.0)) {
    throw ConfigError("synthetic: noise must be non-negative and gain in [0, 1)");
  }
  Dataset d;
  d.cube.height = cfg.height;
  d.cube.width = cfg.width;
  d.cube.bands = cfg.bands;
  d.labels.height = cfg.height;
  d.labels.width = cfg.width;
  const std::size_t l = cfg.height * cfg.width;
  d.labels.labels.resize(l);
  // Tile rows advance by the tile-grid width when that is narrower than the
  // class count (2x2 quadrants for 4 classes), else by one (Latin square).
  const std::size_t tiles_w = (cfg.width + cfg.block - 1) / cfg.block;
  const std::size_t stride = tiles_w < cfg.classes ? tiles_w : 1;
  for (std::size_t r = 0; r < cfg.height; ++r)
    for (std::size_t c = 0; c < cfg.width; ++c)
      d.labels.labels[r * cfg.width + c] =
          static_cast<int>(((r / cfg.block) * stride + c / cfg.block) % cfg.classes) + 1;

  // Bell-shaped signatures with centers spread evenly across the bands.
  const double width = std::max(1.0, static_cast<double>(cfg.bands) / static_cast<double>(cfg.classes));
  std::vector<double> mean(cfg.classes * cfg.bands);
  for (std::size_t k = 0; k < cfg.classes; ++k) {
    const double center = (static_cast<double>(k) + 0.5) * static_cast<double>(cfg.bands) / static_cast<double>(cfg.classes);
    for (std::size_t b = 0; b < cfg.bands; ++b) {
      const double z = (static_cast<double>(b) + 0.5 - center) / width;
      mean[k * cfg.bands + b] = 0.2 + 0.5 * std::exp(-0.5 * z * z);
    }
  }
  Rng rng(cfg.seed);
  std::normal_distribution<double> noise(0.0, cfg.noise);
  std::uniform_real_distribution<double> gain(1.0 - cfg.gain, 1.0 + cfg.gain);
  d.cube.data.resize(cfg.bands * l);
  for (std::size_t p = 0; p < l; ++p) {
    const auto k = static_cast<std::size_t>(d.labels.labels[p] - 1);
    const double g = gain(rng);
    for (std::size_t b = 0; b < cfg.bands; ++b) {
      // Stored as f32 in the container; round here so files round-trip.
      d.cube.data[b * l + p] = static_cast<double>(static_cast<float>(g * mean[k * cfg.bands + b] + noise(rng)));
    }
  }
  for (std::size_t k = 0; k < cfg.classes; ++k) d.class_names.push_back("signature-" + std::to_string(k + 1));
  return d;
}

}  // namespace cssm
