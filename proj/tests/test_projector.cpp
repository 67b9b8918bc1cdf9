#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "helpers.hpp"

#include "vp/errors.hpp"
#include "vp/projector.hpp"

#include <cmath>

using namespace vp;

TEST_CASE("project shape contract") {
  ProjectorConfig cfg;
  cfg.in_dim = 64;
  cfg.hidden_dim = 96;
  cfg.out_dim = 96;
  Rng rng(41);
  ProjectorParams p = init_projector(cfg, rng);
  Tensor z = vptest::random_tensor({16, 64}, rng, false);
  Tensor h = project(z, cfg, p);
  CHECK(h.rows() == 16);
  CHECK(h.cols() == 96);
}

TEST_CASE("all-zero parameters give all-zero output") {
  ProjectorConfig cfg;
  cfg.in_dim = 8;
  cfg.hidden_dim = 8;
  cfg.out_dim = 8;
  Rng rng(42);
  ProjectorParams p = init_projector(cfg, rng);
  for (auto& layer : p.layers) {
    for (auto& v : *layer.w.data) v = 0;
    for (auto& v : *layer.b.data) v = 0;
  }
  Tensor z = vptest::random_tensor({4, 8}, rng, false);
  Tensor h = project(z, cfg, p);
  for (std::size_t i = 0; i < h.numel(); ++i) CHECK((*h.data)[i] == 0.0);
}

TEST_CASE("2-layer projector matches the composed affine+GELU+affine oracle") {
  ProjectorConfig cfg;
  cfg.in_dim = 5;
  cfg.hidden_dim = 7;
  cfg.out_dim = 3;
  Rng rng(43);
  ProjectorParams p = init_projector(cfg, rng);
  Tensor z = vptest::random_tensor({4, 5}, rng, false);
  Tensor h = project(z, cfg, p);

  auto gelu_scalar = [](double x) {
    const double c = 0.7978845608028654;
    return 0.5 * x * (1.0 + std::tanh(c * (x + 0.044715 * x * x * x)));
  };
  for (int r = 0; r < 4; ++r) {
    std::vector<double> mid(7, 0.0);
    for (int j = 0; j < 7; ++j) {
      double acc = (*p.layers[0].b.data)[j];
      for (int k = 0; k < 5; ++k) acc += double(z.at(r, k)) * double(p.layers[0].w.at(k, j));
      mid[j] = gelu_scalar(acc);
    }
    for (int j = 0; j < 3; ++j) {
      double acc = (*p.layers[1].b.data)[j];
      for (int k = 0; k < 7; ++k) acc += mid[k] * double(p.layers[1].w.at(k, j));
      CHECK(std::abs(double(h.at(r, j)) - acc) < 1e-6);
    }
  }
}

TEST_CASE("row count is preserved for any input") {
  ProjectorConfig cfg;
  cfg.in_dim = 6;
  cfg.hidden_dim = 6;
  cfg.out_dim = 4;
  Rng rng(44);
  ProjectorParams p = init_projector(cfg, rng);
  for (int n : {1, 3, 17}) {
    Tensor z = vptest::random_tensor({n, 6}, rng, false);
    CHECK(project(z, cfg, p).rows() == n);
  }
}

TEST_CASE("dimension mismatch is a config error") {
  ProjectorConfig cfg;
  cfg.in_dim = 6;
  cfg.hidden_dim = 6;
  cfg.out_dim = 4;
  Rng rng(45);
  ProjectorParams p = init_projector(cfg, rng);
  Tensor z = vptest::random_tensor({2, 5}, rng, false);
  CHECK_THROWS_AS(project(z, cfg, p), config_error);
}

TEST_CASE("num_layers below 2 is rejected") {
  ProjectorConfig cfg;
  cfg.num_layers = 1;
  CHECK_THROWS_AS(cfg.validate(), config_error);
}

TEST_CASE("gradients flow through project (finite differences)") {
  ProjectorConfig cfg;
  cfg.in_dim = 5;
  cfg.hidden_dim = 6;
  cfg.out_dim = 4;
  Rng rng(46);
  ProjectorParams p = init_projector(cfg, rng);
  Tensor z = vptest::random_tensor({3, 5}, rng);
  Tensor w = vptest::random_tensor({3, 4}, rng, false);
  vptest::fd_check([&] { return sum_all(hadamard(project(z, cfg, p), w)); },
                   {&z, &p.layers[0].w, &p.layers[0].b, &p.layers[1].w, &p.layers[1].b},
                   rng);
}
