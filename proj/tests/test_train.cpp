#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "helpers.hpp"

#include "vp/errors.hpp"
#include "vp/train.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace vp;

namespace {

TrainConfig sched_cfg() {
  TrainConfig cfg;
  cfg.base_lr = 1e-3;
  cfg.min_lr = 1e-4;
  cfg.warmup_steps = 10;
  cfg.total_steps = 110;
  cfg.mixture_weights = {1.0};
  cfg.normalize();
  return cfg;
}

ModelBundle tiny_model(uint64_t seed) {
  ViTConfig vit;
  vit.image_size = 8;
  vit.patch_size = 4;
  vit.embed_dim = 8;
  vit.depth = 1;
  vit.heads = 2;
  vit.mlp_ratio = 2.0;
  ProjectorConfig proj;
  proj.in_dim = 8;
  proj.hidden_dim = 12;
  proj.out_dim = 12;
  LMConfig lm;
  lm.vocab_size = 64;
  lm.embed_dim = 12;
  lm.depth = 1;
  lm.heads = 2;
  lm.max_seq_len = 64;
  lm.mlp_ratio = 2.0;
  Tokenizer tok;
  Rng rng(seed);
  for (int i = 0; i < 40; ++i)
    tok.add_corpus_text(describe_scene(random_scene(rng), CaptionStyle::Short));
  return init_model(vit, proj, lm, tok, seed);
}

std::vector<TrainSample> tiny_samples(const ModelBundle& model, uint64_t seed, int n) {
  std::vector<TrainSample> out;
  Rng rng(seed);
  for (int i = 0; i < n; ++i) {
    SceneSpec spec = random_scene(rng);
    TrainSample s;
    s.image = preprocess_image(render_scene(spec, 16), model.vit_cfg.image_size);
    s.instruction = model.tokenizer.tokenize("describe this image .");
    s.response = model.tokenizer.tokenize(describe_scene(spec, CaptionStyle::Short));
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

TEST_CASE("cosine_lr schedule endpoints and midpoint") {
  TrainConfig cfg = sched_cfg();
  CHECK(std::abs(cosine_lr(cfg.warmup_steps, cfg) - cfg.base_lr) < 1e-12);
  CHECK(std::abs(cosine_lr(cfg.total_steps, cfg) - cfg.min_lr) < 1e-12);
  // midpoint of the decay phase: cos(pi/2) = 0
  const int mid = (cfg.warmup_steps + cfg.total_steps) / 2;
  CHECK(std::abs(cosine_lr(mid, cfg) - (cfg.min_lr + (cfg.base_lr - cfg.min_lr) / 2)) <
        1e-12);
  // past the end clamps to min_lr
  CHECK(cosine_lr(cfg.total_steps + 50, cfg) == cfg.min_lr);
  // warmup is linear from 0
  CHECK(std::abs(cosine_lr(5, cfg) - cfg.base_lr * 0.5) < 1e-12);
  // non-increasing after warmup
  double prev = cosine_lr(cfg.warmup_steps, cfg);
  for (int s = cfg.warmup_steps + 1; s <= cfg.total_steps; ++s) {
    const double lr = cosine_lr(s, cfg);
    CHECK(lr <= prev + 1e-15);
    prev = lr;
  }
}

TEST_CASE("clip_gradients contracts") {
  SUBCASE("below the threshold is the identity") {
    std::vector<real> g = {0.3, -0.4};
    const real norm = clip_gradients({&g}, 1.0);
    CHECK(std::abs(double(norm) - 0.5) < 1e-12);
    CHECK(g[0] == real(0.3));
    CHECK(g[1] == real(-0.4));
  }
  SUBCASE("3-4-5 triangle") {
    std::vector<real> g = {3.0, 4.0};
    clip_gradients({&g}, 1.0);
    CHECK(std::abs(double(g[0]) - 0.6) < 1e-12);
    CHECK(std::abs(double(g[1]) - 0.8) < 1e-12);
  }
  SUBCASE("post-clip global norm == min(norm, max_norm) on random multi-tensor sets") {
    Rng rng(71);
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<std::vector<real>> gs(3);
      for (auto& g : gs) {
        g.resize(1 + rng.uniform_int(20));
        for (auto& v : g) v = real(rng.normal(0, 2.0));
      }
      double pre = 0;
      for (const auto& g : gs)
        for (real v : g) pre += double(v) * double(v);
      pre = std::sqrt(pre);
      const real max_norm = real(0.5 + rng.uniform() * 3);
      const real reported = clip_gradients({&gs[0], &gs[1], &gs[2]}, max_norm);
      CHECK(std::abs(double(reported) - pre) < 1e-9);
      double post = 0;
      for (const auto& g : gs)
        for (real v : g) post += double(v) * double(v);
      post = std::sqrt(post);
      CHECK(post <= double(max_norm) + 1e-6);
      CHECK(std::abs(post - std::min(pre, double(max_norm))) < 1e-6);
    }
  }
}

TEST_CASE("AdamW single scalar step matches the hand oracle") {
  Tensor p = Tensor::from({1, 1}, {0.7}, true);
  p.ensure_grad();
  (*p.grad)[0] = real(0.2);
  AdamW opt;
  const double lr = 1e-2;
  opt.step({{"p", &p}}, lr);

  // bias-corrected AdamW, first step
  const double g = 0.2, b1 = 0.9, b2 = 0.999, eps = 1e-8, wd = 0.01;
  const double m = (1 - b1) * g, v = (1 - b2) * g * g;
  const double mhat = m / (1 - b1), vhat = v / (1 - b2);
  const double want = 0.7 - lr * (mhat / (std::sqrt(vhat) + eps) + wd * 0.7);
  CHECK(std::abs(double((*p.data)[0]) - want) < 1e-10);
}

TEST_CASE("AdamW zero gradient moves parameters only by decoupled weight decay") {
  Tensor p = Tensor::from({1, 1}, {0.5}, true);
  p.zero_grad();
  AdamW opt;
  opt.step({{"p", &p}}, 1e-2);
  CHECK(std::abs(double((*p.data)[0]) - 0.5 * (1 - 1e-2 * 0.01)) < 1e-12);
}

TEST_CASE("AdamW skips frozen parameters and keeps no state for them") {
  Tensor frozen = Tensor::from({1, 2}, {1.0, 2.0}, false);
  Tensor live = Tensor::from({1, 2}, {1.0, 2.0}, true);
  live.zero_grad();
  (*live.grad)[0] = real(1.0);
  AdamW opt;
  opt.step({{"frozen", &frozen}, {"live", &live}}, 1e-3);
  CHECK((*frozen.data)[0] == 1.0);
  CHECK((*frozen.data)[1] == 2.0);
  CHECK((*live.data)[0] != 1.0);
  CHECK(opt.has_state_for("live"));
  CHECK(!opt.has_state_for("frozen"));
}

TEST_CASE("freeze policy per stage") {
  FreezePolicy s1 = policy_for_stage(1);
  CHECK(!s1.encoder_trainable);
  CHECK(!s1.lm_trainable);
  CHECK(s1.projector_trainable);
  FreezePolicy s2 = policy_for_stage(2);
  CHECK(s2.encoder_trainable);
  CHECK(s2.lm_trainable);
  CHECK(s2.projector_trainable);
  CHECK_THROWS_AS(policy_for_stage(3), config_error);
}

TEST_CASE("BatchMixer contracts") {
  SUBCASE("weight (1,0) draws only from source 0") {
    BatchMixer mixer({5, 5}, {1.0, 0.0}, 7);
    for (int i = 0; i < 50; ++i) CHECK(mixer.next().first == 0);
  }
  SUBCASE("weights (1,1) are balanced over 10k draws") {
    BatchMixer mixer({100, 100}, {1.0, 1.0}, 8);
    int zero = 0;
    for (int i = 0; i < 10000; ++i) zero += mixer.next().first == 0;
    CHECK(zero >= 4800);
    CHECK(zero <= 5200);
  }
  SUBCASE("same seed gives the identical stream") {
    BatchMixer a({7, 13}, {0.3, 0.7}, 9);
    BatchMixer b({7, 13}, {0.3, 0.7}, 9);
    for (int i = 0; i < 200; ++i) CHECK(a.next() == b.next());
  }
  SUBCASE("within a source, an epoch covers every sample exactly once") {
    BatchMixer mixer({6}, {1.0}, 10);
    std::vector<int> seen(6, 0);
    for (int i = 0; i < 6; ++i) ++seen[mixer.next().second];
    for (int c : seen) CHECK(c == 1);
  }
  SUBCASE("empty source with positive weight is rejected") {
    CHECK_THROWS_AS(BatchMixer({5, 0}, {0.5, 0.5}, 11), config_error);
  }
}

TEST_CASE("TrainConfig invariants") {
  TrainConfig bad = sched_cfg();
  bad.min_lr = bad.base_lr * 2;
  CHECK_THROWS_AS(bad.normalize(), config_error);
  TrainConfig bad2 = sched_cfg();
  bad2.warmup_steps = bad2.total_steps;
  CHECK_THROWS_AS(bad2.normalize(), config_error);
  CHECK_THROWS_AS(BatchMixer({5, 5}, {0.0, 0.0}, 1), config_error);
  TrainConfig defaulted;
  defaulted.total_steps = 200;
  defaulted.mixture_weights = {1.0};
  defaulted.normalize();
  CHECK(defaulted.warmup_steps == 6);  // 3% of total
}

TEST_CASE("stage 1 leaves encoder and LM bit-identical; projector changes") {
  ModelBundle model = tiny_model(72);
  const uint64_t enc0 = model.checksum("enc");
  const uint64_t lm0 = model.checksum("lm");
  const uint64_t proj0 = model.checksum("proj");

  TrainConfig cfg;
  cfg.stage = 1;
  cfg.base_lr = 1e-3;
  cfg.min_lr = 1e-4;
  cfg.total_steps = 50;
  cfg.batch_size = 2;
  cfg.seed = 73;
  cfg.mixture_weights = {1.0};
  run_stage(model, {tiny_samples(model, 74, 4)}, cfg);

  CHECK(model.checksum("enc") == enc0);
  CHECK(model.checksum("lm") == lm0);
  CHECK(model.checksum("proj") != proj0);
}

TEST_CASE("run_stage loss trace is deterministic and stage 2 moves everything") {
  TrainConfig cfg;
  cfg.stage = 2;
  cfg.base_lr = 1e-3;
  cfg.min_lr = 1e-4;
  cfg.total_steps = 8;
  cfg.batch_size = 2;
  cfg.seed = 75;
  cfg.mixture_weights = {1.0};

  ModelBundle m1 = tiny_model(76);
  ModelBundle m2 = tiny_model(76);
  const uint64_t enc0 = m1.checksum("enc");
  LossTrace t1 = run_stage(m1, {tiny_samples(m1, 77, 4)}, cfg);
  LossTrace t2 = run_stage(m2, {tiny_samples(m2, 77, 4)}, cfg);
  REQUIRE(t1.size() == t2.size());
  REQUIRE(t1.size() == 8);
  for (std::size_t i = 0; i < t1.size(); ++i) {
    CHECK(t1[i].loss == t2[i].loss);
    CHECK(t1[i].lr == t2[i].lr);
  }
  CHECK(m1.checksum("enc") != enc0);
  CHECK(m1.checksum("enc") == m2.checksum("enc"));

  // 0 steps leaves the model unchanged
  ModelBundle m3 = tiny_model(76);
  const uint64_t before_enc = m3.checksum("enc"), before_proj = m3.checksum("proj"),
                 before_lm = m3.checksum("lm");
  TrainConfig zero = cfg;
  zero.total_steps = 0;
  LossTrace t3 = run_stage(m3, {tiny_samples(m3, 77, 4)}, zero);
  CHECK(t3.empty());
  CHECK(m3.checksum("enc") == before_enc);
  CHECK(m3.checksum("proj") == before_proj);
  CHECK(m3.checksum("lm") == before_lm);
}

TEST_CASE("loss trace CSV round trip") {
  LossTrace trace = {{1, 1e-3, 2.5}, {2, 9e-4, 2.25}};
  const std::string path = "trace_test.csv";
  write_loss_trace_csv(trace, path);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "step,lr,loss");
  std::getline(in, line);
  CHECK(line.substr(0, 2) == "1,");
  std::filesystem::remove(path);
}
