#pragma once

// Pre-norm transformer block shared by the vision encoder (bidirectional)
// and the language model (causal).

#include "vp/rng.hpp"
#include "vp/tensor.hpp"

namespace vp {

struct AttnParams {
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
};

struct BlockParams {
  Tensor ln1_gain, ln1_bias;
  AttnParams attn;
  Tensor ln2_gain, ln2_bias;
  Tensor fc1_w, fc1_b, fc2_w, fc2_b;
};

// Additive mask [L x L]: 0 where position i may attend to j (j <= i),
// a large negative constant elsewhere.
Tensor causal_mask(int64_t len);

// x [L x d]; mask may be null (bidirectional).
Tensor multi_head_attention(const Tensor& x, const AttnParams& p, int heads,
                            const Tensor* mask);

Tensor transformer_block(const Tensor& x, const BlockParams& p, int heads,
                         const Tensor* mask);

BlockParams init_block(int64_t dim, int64_t hidden, Rng& rng, real stddev);

void visit_block(const std::string& prefix, BlockParams& p,
                 const std::function<void(const std::string&, Tensor&)>& fn);

}  // namespace vp
