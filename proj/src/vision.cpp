#include "vp/vision.hpp"

#include "vp/errors.hpp"

#include <algorithm>
#include <cmath>

namespace vp {

void ViTConfig::validate() const {
  if (image_size <= 0 || patch_size <= 0)
    throw config_error("vit: image_size and patch_size must be positive");
  if (image_size % patch_size != 0)
    throw config_error("vit: image_size " + std::to_string(image_size) +
                       " not divisible by patch_size " + std::to_string(patch_size));
  if (heads <= 0 || embed_dim % heads != 0)
    throw config_error("vit: embed_dim " + std::to_string(embed_dim) +
                       " not divisible by heads " + std::to_string(heads));
  if (depth <= 0 || mlp_ratio <= 0)
    throw config_error("vit: depth and mlp_ratio must be positive");
}

VitParams init_vit(const ViTConfig& cfg, Rng& rng) {
  cfg.validate();
  const int64_t d = cfg.embed_dim;
  const int64_t pd = int64_t(3) * cfg.patch_size * cfg.patch_size;
  const real stddev = real(0.02);
  VitParams p;
  p.patch_w = Tensor::zeros({pd, d}, true);
  for (real& v : *p.patch_w.data) v = real(rng.normal(0.0, stddev));
  p.patch_b = Tensor::zeros({d}, true);
  p.pos = Tensor::zeros({cfg.num_patches(), d}, true);
  for (real& v : *p.pos.data) v = real(rng.normal(0.0, stddev));
  const int64_t hidden = static_cast<int64_t>(std::lround(cfg.mlp_ratio * d));
  for (int i = 0; i < cfg.depth; ++i)
    p.blocks.push_back(init_block(d, hidden, rng, stddev));
  p.lnf_gain = Tensor::full({d}, real(1), true);
  p.lnf_bias = Tensor::zeros({d}, true);
  return p;
}

void visit_vit(VitParams& p, const std::string& prefix,
               const std::function<void(const std::string&, Tensor&)>& fn) {
  fn(prefix + ".patch.w", p.patch_w);
  fn(prefix + ".patch.b", p.patch_b);
  fn(prefix + ".pos", p.pos);
  for (std::size_t i = 0; i < p.blocks.size(); ++i)
    visit_block(prefix + ".blocks." + std::to_string(i), p.blocks[i], fn);
  fn(prefix + ".lnf.gain", p.lnf_gain);
  fn(prefix + ".lnf.bias", p.lnf_bias);
}

ImageTensor preprocess_image(const RawImage& raw, int target) {
  if (raw.width <= 0 || raw.height <= 0 || raw.rgb.size() != std::size_t(raw.width) * raw.height * 3)
    throw input_error("preprocess_image: empty or inconsistent image");
  if (target <= 0) throw config_error("preprocess_image: target must be positive");

  ImageTensor out;
  out.size = target;
  out.values.resize(std::size_t(target) * target * 3);

  const double sx = double(raw.width) / target;
  const double sy = double(raw.height) / target;
  for (int y = 0; y < target; ++y) {
    // pixel-center convention: identity mapping when sizes already match
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, double(raw.height - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, raw.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < target; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, double(raw.width - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, raw.width - 1);
      const double wx = fx - x0;
      for (int c = 0; c < 3; ++c) {
        const double v00 = raw.pixel(x0, y0)[c], v10 = raw.pixel(x1, y0)[c];
        const double v01 = raw.pixel(x0, y1)[c], v11 = raw.pixel(x1, y1)[c];
        const double v = (1 - wy) * ((1 - wx) * v00 + wx * v10) +
                         wy * ((1 - wx) * v01 + wx * v11);
        out.values[(std::size_t(y) * target + x) * 3 + c] = real(v / 255.0);
      }
    }
  }
  return out;
}

Tensor patchify(const ImageTensor& img, int patch_size) {
  if (patch_size <= 0 || img.size % patch_size != 0)
    throw config_error("patchify: image size " + std::to_string(img.size) +
                       " not divisible by patch size " + std::to_string(patch_size));
  const int side = img.size / patch_size;
  const int64_t n = int64_t(side) * side;
  const int64_t row_len = int64_t(3) * patch_size * patch_size;
  Tensor out = Tensor::zeros({n, row_len});
  for (int py = 0; py < side; ++py)
    for (int px = 0; px < side; ++px) {
      real* row = out.data->data() + (int64_t(py) * side + px) * row_len;
      int64_t k = 0;
      for (int y = 0; y < patch_size; ++y)
        for (int x = 0; x < patch_size; ++x)
          for (int c = 0; c < 3; ++c)
            row[k++] = img.at(px * patch_size + x, py * patch_size + y, c);
    }
  return out;
}

VisualFeatures encode(const ImageTensor& img, const ViTConfig& cfg,
                      const VitParams& params) {
  cfg.validate();
  if (img.size != cfg.image_size)
    throw config_error("encode: image resolution " + std::to_string(img.size) +
                       " != configured " + std::to_string(cfg.image_size));
  Tensor x = add(add_bias(matmul(patchify(img, cfg.patch_size), params.patch_w),
                          params.patch_b),
                 params.pos);
  for (const BlockParams& block : params.blocks)
    x = transformer_block(x, block, cfg.heads, nullptr);
  return VisualFeatures{layer_norm(x, params.lnf_gain, params.lnf_bias)};
}

}  // namespace vp
