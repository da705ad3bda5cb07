// Copyright 2026 The cssmamba Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstring>
#include <filesystem>
#include <random>

#include "cssm/io.hpp"
#include "doctest.h"

using namespace cssm;
namespace fs = std::filesystem;

namespace {

void put_le(std::string& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  put_le(out, bits, 4);
}

// 2x2 image, 3 bands, 2 classes, assembled byte by byte.
std::string hand_container() {
  std::string b = "HSIB";
  put_le(b, 1, 2);
  put_le(b, 2, 4);
  put_le(b, 2, 4);
  put_le(b, 3, 4);
  put_le(b, 2, 2);
  b.append(16, '\0');
  for (int i = 0; i < 12; ++i) put_f32(b, 0.125f * static_cast<float>(i) - 0.5f);
  for (int l : {1, 0, 2, 2}) put_le(b, static_cast<std::uint64_t>(l), 2);
  for (std::string name : {"grass", "w\xc3\xa4sser"}) {
    put_le(b, name.size(), 4);
    b += name;
  }
  return b;
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("cssm_test_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

Dataset tiny_scene() {
  SynthConfig cfg;
  cfg.height = 8;
  cfg.width = 8;
  cfg.bands = 6;
  cfg.classes = 2;
  cfg.block = 4;
  return generate_synthetic(cfg);
}

ModelConfig tiny_model(const Dataset& d) {
  ModelConfig m;
  m.bands = d.cube.bands;
  m.num_classes = d.num_classes();
  m.hidden = 8;
  m.state_dim = 4;
  m.attn_dim = 4;
  m.group_size = 2;
  m.clusters_per_class = 2;
  return m;
}

SplitSpec small_split(const Dataset& d) {
  SplitRule rule;
  rule.train_per_class = 6;
  rule.val_per_class = 2;
  rule.small_class_threshold = 8;
  return make_splits(d.labels, d.num_classes(), 3, rule);
}

std::vector<double> all_params(const Trainer& t) {
  std::vector<double> v;
  for (const auto& np : t.model().params()) v.insert(v.end(), np.tensor.data().begin(), np.tensor.data().end());
  return v;
}

}  // namespace

TEST_CASE("hand-written container decodes and re-encodes bit-exactly") {
  const std::string bytes = hand_container();
  CHECK(bytes.size() == 36 + 12 * 4 + 4 * 2 + 4 + 5 + 4 + 7);
  const Dataset d = decode_container(bytes);
  CHECK(d.cube.height == 2);
  CHECK(d.cube.width == 2);
  CHECK(d.cube.bands == 3);
  CHECK(d.cube.at(1, 0, 1) == 0.125 * 5 - 0.5);
  CHECK(d.labels.labels == std::vector<int>{1, 0, 2, 2});
  CHECK(d.class_names == std::vector<std::string>{"grass", "w\xc3\xa4sser"});
  CHECK(encode_container(d) == bytes);

  TempDir tmp;
  save_container(tmp.path / "a.hsib", d);
  CHECK(read_file(tmp.path / "a.hsib") == bytes);
  const Dataset back = read_container(tmp.path / "a.hsib");
  CHECK(back.cube.data == d.cube.data);
}

TEST_CASE("container errors carry the byte offset") {
  const std::string good = hand_container();
  auto offset_of = [](std::string_view bytes) -> std::uint64_t {
    try {
      decode_container(bytes);
    } catch (const FormatError& e) {
      return e.offset;
    }
    return ~std::uint64_t{0};
  };
  std::string bad_magic = good;
  bad_magic[1] = 'X';
  CHECK(offset_of(bad_magic) == 0);

  std::string bad_version = good;
  bad_version[4] = 2;
  CHECK(offset_of(bad_version) == 4);

  // Truncation anywhere after the header reports the expected total length.
  CHECK(offset_of(good.substr(0, 20)) == 36);
  CHECK(offset_of(good.substr(0, good.size() - 30)) == 36 + 48 + 8);
  CHECK(offset_of(good.substr(0, good.size() - 1)) == good.size());
  CHECK(offset_of(good + "!") == good.size());

  std::string overflow = good;
  overflow[36 + 48 + 2] = 3;  // second label = 3 > 2 classes
  CHECK(offset_of(overflow) == 36 + 48 + 2);
}

TEST_CASE("per-band normalization on a hand cube") {
  HsiCube c{1, 3, 2, {2.0, 4.0, 6.0, 5.0, 5.0, 5.0}};
  normalize_bands(c);
  CHECK(c.data == std::vector<double>{0.0, 0.5, 1.0, 0.0, 0.0, 0.0});
}

TEST_CASE("ppm and pgm encoding") {
  auto palette = default_palette();
  palette[1] = {255, 0, 0};
  const std::vector<int> one = {1};
  const std::string ppm = encode_ppm(one, 1, 1, palette);
  CHECK(ppm == std::string("P6\n1 1\n255\n\xff\x00\x00", 14));

  const std::vector<int> blank(6, 0);
  const std::string dark = encode_ppm(blank, 2, 3, palette);
  CHECK(dark.substr(0, 11) == "P6\n3 2\n255\n");
  CHECK(dark.substr(11) == std::string(18, '\0'));

  const std::vector<int> beyond = {17};
  CHECK_THROWS(encode_ppm(beyond, 1, 1, palette));

  const std::vector<int> idx = {0, 3, 7, 255, 1, 2};
  const std::string pgm = encode_pgm(idx, 2, 3);
  CHECK(pgm.substr(0, 11) == "P5\n3 2\n255\n");
  const GrayImage g = decode_pgm(pgm);
  CHECK(g.height == 2);
  CHECK(g.width == 3);
  CHECK(g.values == idx);
  CHECK_THROWS_AS(decode_pgm("P5\n3 2\n255\n\x01"), FormatError);
}

TEST_CASE("run config parsing") {
  const RunConfig c = parse_run_config(
      "# experiment\n"
      "container = data/scene.hsib\n"
      "seed=7\n"
      "lr = 0.002  # faster\n"
      "clusters_per_class = 4\n"
      "use_attention = false\n"
      "fusion = concat\n");
  CHECK(c.container == "data/scene.hsib");
  CHECK(c.train.seed == 7);
  CHECK(c.train.lr == 0.002);
  CHECK(c.model.clusters_per_class == 4);
  CHECK_FALSE(c.model.use_attention);
  CHECK(c.model.fusion == Fusion::kConcat);
  CHECK(c.train.epochs == 200);
  CHECK(c.model.hidden == 128);

  const RunConfig again = parse_run_config(format_run_config(c));
  CHECK(format_run_config(again) == format_run_config(c));

  auto message = [](std::string_view text) {
    try {
      parse_run_config(text);
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(message("seed = 1\nlearning_rate = 0.1\n").find("line 2") != std::string::npos);
  CHECK(message("epochs = many\n").find("line 1") != std::string::npos);
  CHECK(message("lr = -1\n") != "");
  CHECK(message("momentum = 1\n") != "");
  CHECK(message("keep_ratio = 1.5\n") != "");
  CHECK(message("fusion = product\n") != "");
  CHECK(message("seed\n") != "");
}

TEST_CASE("checkpoint round trip resumes bit-identically") {
  const Dataset d = tiny_scene();
  Trainer a(d, small_split(d), tiny_model(d), TrainConfig{});
  for (int i = 0; i < 3; ++i) a.step();
  const std::string blob = encode_checkpoint(a);
  const auto b = decode_checkpoint(blob, d);

  CHECK(b->epoch() == 3);
  CHECK(b->clusters().centers == a.clusters().centers);
  CHECK(b->clusters().assignment == a.clusters().assignment);
  CHECK(b->split().test == a.split().test);
  CHECK(encode_checkpoint(*b) == blob);

  const StepStats sa = a.step(), sb = b->step();
  CHECK(sa.total == sb.total);
  CHECK(all_params(a) == all_params(*b));
  CHECK(a.predict() == b->predict());

  TempDir tmp;
  save_checkpoint(tmp.path / "ck.bin", a);
  CHECK(all_params(*load_checkpoint(tmp.path / "ck.bin", d)) == all_params(a));
}

TEST_CASE("checkpoint refuses corruption and foreign versions") {
  const Dataset d = tiny_scene();
  Trainer a(d, small_split(d), tiny_model(d), TrainConfig{});
  a.step();
  const std::string blob = encode_checkpoint(a);

  std::string flipped = blob;
  flipped[blob.size() / 2] ^= 0x10;
  CHECK_THROWS_AS(decode_checkpoint(flipped, d), FormatError);

  std::string future = blob;
  future[4] = 9;
  try {
    decode_checkpoint(future, d);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("version 9") != std::string::npos);
    CHECK(msg.find("version 1") != std::string::npos);
  }

  CHECK_THROWS_AS(decode_checkpoint(blob.substr(0, blob.size() - 5), d), FormatError);

  SynthConfig other;
  other.height = 6;
  other.width = 6;
  other.bands = 6;
  other.classes = 2;
  other.block = 3;
  CHECK_THROWS_AS(decode_checkpoint(blob, generate_synthetic(other)), ConfigError);
}

TEST_CASE("synthetic generator is deterministic and balanced") {
  SynthConfig cfg;
  cfg.seed = 7;
  const std::string a = encode_container(generate_synthetic(cfg));
  const std::string b = encode_container(generate_synthetic(cfg));
  CHECK(a == b);
  cfg.seed = 8;
  CHECK(encode_container(generate_synthetic(cfg)) != a);

  const Dataset d = generate_synthetic(SynthConfig{});
  std::vector<int> counts(5, 0);
  for (int l : d.labels.labels) ++counts[static_cast<std::size_t>(l)];
  CHECK(counts == std::vector<int>{0, 144, 144, 144, 144});

  SynthConfig bad;
  bad.gain = 1.0;
  CHECK_THROWS_AS(generate_synthetic(bad), ConfigError);
}

TEST_CASE("synthetic baseline lands in the calibrated band") {
  SynthConfig cfg;
  Dataset d = decode_container(encode_container(generate_synthetic(cfg)));
  normalize_bands(d.cube);
  const double oa = nearest_mean_baseline(d, make_splits(d.labels, d.num_classes(), 0)).oa;
  CHECK(oa >= 0.85);
  CHECK(oa <= 0.95);
}

TEST_CASE("atomic write replaces the target and leaves no temporary") {
  TempDir tmp;
  const fs::path p = tmp.path / "out.txt";
  write_file_atomic(p, "first");
  write_file_atomic(p, "second");
  CHECK(read_file(p) == "second");
  std::size_t files = 0;
  for ([[maybe_unused]] const auto& e : fs::directory_iterator(tmp.path)) ++files;
  CHECK(files == 1);
  CHECK_THROWS(read_file(tmp.path / "missing"));
}
