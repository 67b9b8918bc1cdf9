#include "vp/model.hpp"

#include "vp/errors.hpp"

#include <cstring>

namespace vp {

void ModelBundle::visit_params(const std::function<void(const std::string&, Tensor&)>& fn) {
  visit_vit(enc, "enc", fn);
  visit_projector(proj, "proj", fn);
  visit_lm(lm, "lm", fn);
}

std::vector<std::pair<std::string, Tensor*>> ModelBundle::named_params() {
  std::vector<std::pair<std::string, Tensor*>> out;
  visit_params([&](const std::string& name, Tensor& t) { out.emplace_back(name, &t); });
  return out;
}

void ModelBundle::zero_grads() {
  visit_params([](const std::string&, Tensor& t) { t.zero_grad(); });
}

uint64_t ModelBundle::checksum(const std::string& prefix) {
  uint64_t h = 1469598103934665603ull;
  visit_params([&](const std::string& name, Tensor& t) {
    if (name.rfind(prefix, 0) != 0) return;
    for (real v : *t.data) {
      unsigned char bytes[sizeof(real)];
      std::memcpy(bytes, &v, sizeof(real));
      for (unsigned char b : bytes) {
        h ^= b;
        h *= 1099511628211ull;
      }
    }
  });
  return h;
}

ModelBundle init_model(const ViTConfig& vit_cfg, const ProjectorConfig& proj_cfg,
                       const LMConfig& lm_cfg, const Tokenizer& tokenizer,
                       uint64_t seed) {
  vit_cfg.validate();
  proj_cfg.validate();
  lm_cfg.validate();
  if (proj_cfg.in_dim != vit_cfg.embed_dim)
    throw config_error("assembly: projector in_dim " + std::to_string(proj_cfg.in_dim) +
                       " != encoder embed_dim " + std::to_string(vit_cfg.embed_dim));
  if (proj_cfg.out_dim != lm_cfg.embed_dim)
    throw config_error("assembly: projector out_dim " + std::to_string(proj_cfg.out_dim) +
                       " != lm embed_dim " + std::to_string(lm_cfg.embed_dim));
  if (tokenizer.size() > lm_cfg.vocab_size)
    throw config_error("assembly: tokenizer vocabulary (" + std::to_string(tokenizer.size()) +
                       ") exceeds vocab_size " + std::to_string(lm_cfg.vocab_size));
  if (lm_cfg.max_seq_len < vit_cfg.num_patches() + 2)
    throw config_error("assembly: max_seq_len too small for " +
                       std::to_string(vit_cfg.num_patches()) + " visual tokens");

  ModelBundle m;
  m.vit_cfg = vit_cfg;
  m.proj_cfg = proj_cfg;
  m.lm_cfg = lm_cfg;
  m.tokenizer = tokenizer;
  Rng rng(seed);
  m.enc = init_vit(vit_cfg, rng);
  m.proj = init_projector(proj_cfg, rng);
  m.lm = init_lm(lm_cfg, rng);
  return m;
}

Tensor visual_tokens(ModelBundle& model, const ImageTensor& img) {
  return project(encode(img, model.vit_cfg, model.enc).tokens, model.proj_cfg, model.proj);
}

}  // namespace vp
