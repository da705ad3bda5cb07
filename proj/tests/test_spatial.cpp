// Copyright 2026 The cssmamba Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <random>

#include "cssm/spatial.hpp"
#include "doctest.h"
#include "gradcheck.hpp"

using namespace cssm;
using cssm::testing::normal_values;

namespace {

SpatialConfig small_config(std::size_t clusters, std::size_t d, bool attention = true, double rho = 1.0) {
  SpatialConfig cfg;
  cfg.clusters = clusters;
  cfg.ssm.d_model = d;
  cfg.ssm.d_state = 2;
  cfg.attn_dim = 2;
  cfg.keep_ratio = rho;
  cfg.use_attention = attention;
  return cfg;
}

std::vector<double> vec(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

TEST_CASE("partition examples") {
  const std::vector<int> zeros(6, 0);
  const auto one = partition(zeros, 1, 6, 1);
  CHECK(one.index[0][0] == std::vector<std::size_t>{0, 1, 2, 3, 4, 5});

  const std::vector<int> alt = {0, 1, 0, 1};
  const auto two = partition(alt, 1, 4, 2);
  CHECK(two.index[0][0] == std::vector<std::size_t>{0, 2});
  CHECK(two.index[0][1] == std::vector<std::size_t>{1, 3});

  const std::vector<int> bad = {0, 2};
  CHECK_THROWS_AS(partition(bad, 1, 2, 2), IndexError);
  CHECK_THROWS_AS(partition(alt, 1, 3, 2), ShapeError);
}

TEST_CASE("partition covers every token exactly once") {
  std::mt19937_64 gen(1);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<int> map(2 * 100);
    for (int& m : map) m = static_cast<int>(gen() % 5);
    const auto part = partition(map, 2, 100, 5);
    for (std::size_t b = 0; b < 2; ++b) {
      std::vector<std::size_t> all;
      for (const auto& idx : part.index[b]) {
        CHECK(std::is_sorted(idx.begin(), idx.end()));
        all.insert(all.end(), idx.begin(), idx.end());
      }
      std::sort(all.begin(), all.end());
      std::vector<std::size_t> expect(100);
      for (std::size_t i = 0; i < 100; ++i) expect[i] = i;
      CHECK(all == expect);
    }
  }
}

TEST_CASE("gather then scatter reproduces the tokens") {
  std::mt19937_64 gen(2);
  const Tensor x = Tensor::from({1, 12, 3}, normal_values(36, gen));
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t k = 1 + gen() % 6;
    std::vector<int> map(12);
    for (int& m : map) m = static_cast<int>(gen() % k);
    const auto part = partition(map, 1, 12, k);
    const auto parts = gather_parts(x, part);
    Tensor recon = Tensor::zeros({12, 3});
    for (std::size_t c = 0; c < k; ++c) {
      if (!parts[0][c].defined()) {
        CHECK(part.index[0][c].empty());
        continue;
      }
      recon = add(recon, scatter_rows(reshape(parts[0][c], {part.count(0, c), 3}), part.index[0][c], 12));
    }
    REQUIRE(vec(recon) == vec(x));
  }
}

TEST_CASE("single cluster without reordering is one scan over the raster sequence") {
  Rng rng(3);
  const SpatialConfig cfg = small_config(1, 4, false);
  const SpatialParams p = SpatialParams::init(cfg, rng);
  std::mt19937_64 gen(4);
  const Tensor x = Tensor::from({1, 7, 4}, normal_values(28, gen));
  const std::vector<int> map(7, 0);
  const std::vector<double> prior(7, 1.0);
  const auto z = local_pass(x, partition(map, 1, 7, 1), prior, p, cfg);
  CHECK(vec(z[0][0]) == vec(ssm_forward(x, p.local[0])));

  // With attention on and equal scores the order is the identity as well.
  SpatialConfig attn_cfg = cfg;
  attn_cfg.use_attention = true;
  SpatialParams q = p;
  q.attn[0].alpha.mutable_data()[0] = -1e4;
  const auto za = local_pass(x, partition(map, 1, 7, 1), prior, q, attn_cfg);
  CHECK(vec(za[0][0]) == vec(z[0][0]));
}

TEST_CASE("local outputs of different clusters are independent") {
  Rng rng(5);
  const SpatialConfig cfg = small_config(3, 4);
  const SpatialParams p = SpatialParams::init(cfg, rng);
  std::mt19937_64 gen(6);
  auto xv = normal_values(10 * 4, gen);
  const std::vector<int> map = {0, 1, 2, 0, 1, 1, 2, 0, 0, 2};
  std::vector<double> prior(10);
  for (double& v : prior) v = 0.2 + 0.08 * static_cast<double>(gen() % 10);
  const auto part = partition(map, 1, 10, 3);
  const auto base = local_pass(Tensor::from({1, 10, 4}, xv), part, prior, p, cfg);
  for (std::size_t pos : part.index[0][1])
    for (std::size_t q = 0; q < 4; ++q) xv[pos * 4 + q] += 0.37;
  const auto moved = local_pass(Tensor::from({1, 10, 4}, xv), part, prior, p, cfg);
  CHECK(vec(moved[0][0]) == vec(base[0][0]));
  CHECK(vec(moved[0][2]) == vec(base[0][2]));
  CHECK(vec(moved[0][1]) != vec(base[0][1]));
}

TEST_CASE("empty clusters are skipped and singletons processed") {
  Rng rng(7);
  const SpatialConfig cfg = small_config(4, 3);
  const SpatialParams p = SpatialParams::init(cfg, rng);
  std::mt19937_64 gen(8);
  const Tensor x = Tensor::from({1, 5, 3}, normal_values(15, gen));
  const std::vector<int> map = {0, 0, 3, 0, 0};
  const std::vector<double> prior(5, 0.5);
  const auto part = partition(map, 1, 5, 4);
  const auto z = local_pass(x, part, prior, p, cfg);
  CHECK_FALSE(z[0][1].defined());
  CHECK_FALSE(z[0][2].defined());
  CHECK(z[0][3].shape() == Shape{1, 1, 3});
  CHECK(spatial_forward(x, map, prior, p, cfg).shape() == Shape{1, 5, 3});
}

TEST_CASE("zero local output reduces to the global block on the normalized input") {
  Rng rng(9);
  const SpatialConfig cfg = small_config(2, 4);
  const SpatialParams p = SpatialParams::init(cfg, rng);
  std::mt19937_64 gen(10);
  const Tensor x = Tensor::from({1, 6, 4}, normal_values(24, gen));
  const std::vector<int> map = {0, 1, 1, 0, 1, 0};
  const auto part = partition(map, 1, 6, 2);
  std::vector<std::vector<Tensor>> z(1, std::vector<Tensor>(2));
  z[0][0] = Tensor::zeros({1, 3, 4});
  z[0][1] = Tensor::zeros({1, 3, 4});
  CHECK(vec(reconstruct_and_global(x, z, part, p.global_norm, p.global)) ==
        vec(ssm_forward(p.global_norm(x), p.global)));

  z[0][1] = Tensor::zeros({1, 2, 4});
  CHECK_THROWS_AS(reconstruct_and_global(x, z, part, p.global_norm, p.global), ContractError);
}

TEST_CASE("global scan is independent of the map when local outputs agree") {
  Rng rng(11);
  const SpatialConfig cfg = small_config(2, 3);
  const SpatialParams p = SpatialParams::init(cfg, rng);
  std::mt19937_64 gen(12);
  const Tensor x = Tensor::from({1, 4, 3}, normal_values(12, gen));
  const Tensor zfull = Tensor::from({1, 4, 3}, normal_values(12, gen));
  auto run = [&](const std::vector<int>& map) {
    const auto part = partition(map, 1, 4, 2);
    const auto parts = gather_parts(zfull, part);
    return vec(reconstruct_and_global(x, parts, part, p.global_norm, p.global));
  };
  const auto a = run({0, 0, 1, 1}), b = run({1, 0, 1, 0});
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-14));
}

TEST_CASE("end-to-end spatial gradient on a 3x3 image with two clusters") {
  Rng rng(13);
  const SpatialConfig cfg = small_config(2, 4);
  SpatialParams p = SpatialParams::init(cfg, rng);
  std::mt19937_64 gen(14);
  // Away from init: with the default step sizes some gradients sit near 1e-7,
  // below what central differences at h = 1e-5 resolve.
  for (auto& np : p.params())
    for (double& v : np.tensor.mutable_data()) v += normal_values(1, gen, 0.5)[0];
  Tensor x = testing::random_leaf({1, 9, 4}, gen);
  const Tensor r = testing::random_leaf({1, 9, 4}, gen);
  const std::vector<int> map = {0, 0, 1, 0, 1, 1, 0, 1, 0};
  const std::vector<double> prior = {0.9, 0.3, 0.5, 0.6, 0.8, 0.2, 0.4, 0.7, 0.1};
  ParamList in = p.params();
  in.push_back({"x", x});
  const auto rep = testing::gradcheck([&] { return testing::probe(spatial_forward(x, map, prior, p, cfg), r); }, in);
  CAPTURE(rep.worst_name);
  CHECK(rep.worst <= 1e-4);
}
