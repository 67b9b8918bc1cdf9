#include "vp/transformer.hpp"

#include "vp/errors.hpp"

#include <cmath>

namespace vp {

namespace {
// Large enough that exp underflows to exactly 0 after max-subtraction,
// which keeps masked positions bit-exactly out of the attention output.
constexpr real kMaskValue = real(-1e30);

Tensor init_matrix(int64_t r, int64_t c, Rng& rng, real stddev) {
  Tensor t = Tensor::zeros({r, c}, true);
  for (real& v : *t.data) v = real(rng.normal(0.0, stddev));
  return t;
}
}  // namespace

Tensor causal_mask(int64_t len) {
  Tensor m = Tensor::zeros({len, len});
  for (int64_t i = 0; i < len; ++i)
    for (int64_t j = i + 1; j < len; ++j) m.at(i, j) = kMaskValue;
  return m;
}

Tensor multi_head_attention(const Tensor& x, const AttnParams& p, int heads,
                            const Tensor* mask) {
  const int64_t d = x.cols();
  if (d % heads != 0)
    throw config_error("attention: dim " + std::to_string(d) +
                       " not divisible by " + std::to_string(heads) + " heads");
  const int64_t hd = d / heads;
  const real inv_sqrt = real(1) / std::sqrt(real(hd));

  Tensor q = add_bias(matmul(x, p.wq), p.bq);
  Tensor k = add_bias(matmul(x, p.wk), p.bk);
  Tensor v = add_bias(matmul(x, p.wv), p.bv);

  std::vector<Tensor> head_outs;
  head_outs.reserve(heads);
  for (int h = 0; h < heads; ++h) {
    Tensor qh = slice_cols(q, h * hd, hd);
    Tensor kh = slice_cols(k, h * hd, hd);
    Tensor vh = slice_cols(v, h * hd, hd);
    Tensor scores = scale(matmul(qh, transpose(kh)), inv_sqrt);
    if (mask) scores = add(scores, *mask);
    head_outs.push_back(matmul(softmax_rows(scores), vh));
  }
  return add_bias(matmul(concat_cols(head_outs), p.wo), p.bo);
}

Tensor transformer_block(const Tensor& x, const BlockParams& p, int heads,
                         const Tensor* mask) {
  Tensor h = add(x, multi_head_attention(layer_norm(x, p.ln1_gain, p.ln1_bias),
                                         p.attn, heads, mask));
  Tensor m = layer_norm(h, p.ln2_gain, p.ln2_bias);
  m = add_bias(matmul(gelu(add_bias(matmul(m, p.fc1_w), p.fc1_b)), p.fc2_w), p.fc2_b);
  return add(h, m);
}

BlockParams init_block(int64_t dim, int64_t hidden, Rng& rng, real stddev) {
  BlockParams p;
  p.ln1_gain = Tensor::full({dim}, real(1), true);
  p.ln1_bias = Tensor::zeros({dim}, true);
  p.attn.wq = init_matrix(dim, dim, rng, stddev);
  p.attn.bq = Tensor::zeros({dim}, true);
  p.attn.wk = init_matrix(dim, dim, rng, stddev);
  p.attn.bk = Tensor::zeros({dim}, true);
  p.attn.wv = init_matrix(dim, dim, rng, stddev);
  p.attn.bv = Tensor::zeros({dim}, true);
  p.attn.wo = init_matrix(dim, dim, rng, stddev);
  p.attn.bo = Tensor::zeros({dim}, true);
  p.ln2_gain = Tensor::full({dim}, real(1), true);
  p.ln2_bias = Tensor::zeros({dim}, true);
  p.fc1_w = init_matrix(dim, hidden, rng, stddev);
  p.fc1_b = Tensor::zeros({hidden}, true);
  p.fc2_w = init_matrix(hidden, dim, rng, stddev);
  p.fc2_b = Tensor::zeros({dim}, true);
  return p;
}

void visit_block(const std::string& prefix, BlockParams& p,
                 const std::function<void(const std::string&, Tensor&)>& fn) {
  fn(prefix + ".ln1.gain", p.ln1_gain);
  fn(prefix + ".ln1.bias", p.ln1_bias);
  fn(prefix + ".attn.wq", p.attn.wq);
  fn(prefix + ".attn.bq", p.attn.bq);
  fn(prefix + ".attn.wk", p.attn.wk);
  fn(prefix + ".attn.bk", p.attn.bk);
  fn(prefix + ".attn.wv", p.attn.wv);
  fn(prefix + ".attn.bv", p.attn.bv);
  fn(prefix + ".attn.wo", p.attn.wo);
  fn(prefix + ".attn.bo", p.attn.bo);
  fn(prefix + ".ln2.gain", p.ln2_gain);
  fn(prefix + ".ln2.bias", p.ln2_bias);
  fn(prefix + ".mlp.fc1.w", p.fc1_w);
  fn(prefix + ".mlp.fc1.b", p.fc1_b);
  fn(prefix + ".mlp.fc2.w", p.fc2_w);
  fn(prefix + ".mlp.fc2.b", p.fc2_b);
}

}  // namespace vp
