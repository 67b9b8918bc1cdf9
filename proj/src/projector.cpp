#include "vp/projector.hpp"

#include "vp/errors.hpp"

namespace vp {

void ProjectorConfig::validate() const {
  if (in_dim <= 0 || hidden_dim <= 0 || out_dim <= 0)
    throw config_error("projector: dimensions must be positive");
  if (num_layers < 2)
    throw config_error("projector: num_layers must be >= 2, got " +
                       std::to_string(num_layers));
}

ProjectorParams init_projector(const ProjectorConfig& cfg, Rng& rng) {
  cfg.validate();
  ProjectorParams p;
  for (int i = 0; i < cfg.num_layers; ++i) {
    const int64_t din = (i == 0) ? cfg.in_dim : cfg.hidden_dim;
    const int64_t dout = (i == cfg.num_layers - 1) ? cfg.out_dim : cfg.hidden_dim;
    ProjectorParams::Layer layer;
    layer.w = Tensor::zeros({din, dout}, true);
    for (real& v : *layer.w.data) v = real(rng.normal(0.0, 0.02));
    layer.b = Tensor::zeros({dout}, true);
    p.layers.push_back(std::move(layer));
  }
  return p;
}

void visit_projector(ProjectorParams& p, const std::string& prefix,
                     const std::function<void(const std::string&, Tensor&)>& fn) {
  for (std::size_t i = 0; i < p.layers.size(); ++i) {
    fn(prefix + ".layers." + std::to_string(i) + ".w", p.layers[i].w);
    fn(prefix + ".layers." + std::to_string(i) + ".b", p.layers[i].b);
  }
}

Tensor project(const Tensor& z, const ProjectorConfig& cfg,
               const ProjectorParams& params) {
  cfg.validate();
  if (z.shape.size() != 2 || z.cols() != cfg.in_dim)
    throw config_error("project: input " + shape_str(z.shape) +
                       " does not match in_dim " + std::to_string(cfg.in_dim));
  Tensor x = z;
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    x = add_bias(matmul(x, params.layers[i].w), params.layers[i].b);
    if (i + 1 < params.layers.size()) x = gelu(x);
  }
  return x;
}

}  // namespace vp
