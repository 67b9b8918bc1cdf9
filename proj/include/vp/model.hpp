#pragma once

// The three-box model: vision encoder g, MLP projector, language model f.

#include "vp/lm.hpp"
#include "vp/projector.hpp"
#include "vp/vision.hpp"

namespace vp {

struct ModelBundle {
  ViTConfig vit_cfg;
  ProjectorConfig proj_cfg;
  LMConfig lm_cfg;
  Tokenizer tokenizer;

  VitParams enc;
  ProjectorParams proj;
  LmParams lm;

  // Visits every parameter as (name, tensor); names are stable and unique.
  void visit_params(const std::function<void(const std::string&, Tensor&)>& fn);
  std::vector<std::pair<std::string, Tensor*>> named_params();

  void zero_grads();

  // FNV-1a over raw parameter bytes, one entry per component.
  uint64_t checksum(const std::string& prefix);
};

// Validates cross-component dimensions and initializes all parameters.
ModelBundle init_model(const ViTConfig& vit_cfg, const ProjectorConfig& proj_cfg,
                       const LMConfig& lm_cfg, const Tokenizer& tokenizer,
                       uint64_t seed);

// encode -> project, the visual half of a forward pass.
Tensor visual_tokens(ModelBundle& model, const ImageTensor& img);

}  // namespace vp
