#pragma once

// MLP projector: H_v = MLP(Z_v), mapping d_v-dim visual features into the
// language model's embedding space.

#include "vp/rng.hpp"
#include "vp/tensor.hpp"

#include <functional>
#include <string>

namespace vp {

struct ProjectorConfig {
  int in_dim = 64;      // d_v
  int hidden_dim = 96;  // defaults to out_dim
  int out_dim = 96;     // d_lm
  int num_layers = 2;

  void validate() const;
};

struct ProjectorParams {
  struct Layer {
    Tensor w, b;
  };
  std::vector<Layer> layers;
};

ProjectorParams init_projector(const ProjectorConfig& cfg, Rng& rng);
void visit_projector(ProjectorParams& p, const std::string& prefix,
                     const std::function<void(const std::string&, Tensor&)>& fn);

// Stacked affine layers with GELU between them (none after the last).
Tensor project(const Tensor& z, const ProjectorConfig& cfg,
               const ProjectorParams& params);

}  // namespace vp
