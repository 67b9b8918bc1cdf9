#pragma once

// ViT-style vision encoder: patch embedding + learned positional embeddings
// + pre-norm bidirectional transformer blocks + final layer norm.

#include "vp/image.hpp"
#include "vp/transformer.hpp"

namespace vp {

struct ViTConfig {
  int image_size = 32;
  int patch_size = 8;
  int embed_dim = 64;   // d_v
  int depth = 2;
  int heads = 4;
  double mlp_ratio = 4.0;

  void validate() const;
  int num_patches() const {
    const int side = image_size / patch_size;
    return side * side;
  }
};

struct VisualFeatures {
  Tensor tokens;  // [N_patches x d_v]
};

struct VitParams {
  Tensor patch_w, patch_b;  // [3*p^2 x d_v], [d_v]
  Tensor pos;               // [N_patches x d_v]
  std::vector<BlockParams> blocks;
  Tensor lnf_gain, lnf_bias;
};

VitParams init_vit(const ViTConfig& cfg, Rng& rng);
void visit_vit(VitParams& p, const std::string& prefix,
               const std::function<void(const std::string&, Tensor&)>& fn);

// Bilinear resize to target x target and scale to [0,1].
ImageTensor preprocess_image(const RawImage& raw, int target);

// Row-major patches (top-left first); each row is one flattened
// channel-interleaved patch. Not differentiated (images are inputs).
Tensor patchify(const ImageTensor& img, int patch_size);

// Z_v = g(X_v)
VisualFeatures encode(const ImageTensor& img, const ViTConfig& cfg,
                      const VitParams& params);

}  // namespace vp
