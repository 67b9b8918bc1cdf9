#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "helpers.hpp"

#include "vp/data.hpp"
#include "vp/errors.hpp"
#include "vp/lm.hpp"

#include <cmath>
#include <cstring>

using namespace vp;

namespace {

LMConfig tiny_cfg() {
  LMConfig cfg;
  cfg.vocab_size = 32;
  cfg.embed_dim = 16;
  cfg.depth = 1;
  cfg.heads = 2;
  cfg.max_seq_len = 32;
  cfg.mlp_ratio = 2.0;
  return cfg;
}

}  // namespace

TEST_CASE("tokenizer round trips in-alphabet text") {
  Tokenizer tok;
  tok.add_corpus_text("a red square on a white background");
  CHECK(tok.tokenize("").empty());
  const std::string s = "a red square";
  CHECK(tok.detokenize(tok.tokenize(s)) == s);
}

TEST_CASE("tokenizer specials are stable and unknowns map to UNK") {
  Tokenizer tok;
  CHECK(tok.token(Tokenizer::kPad) == "<pad>");
  CHECK(tok.token(Tokenizer::kBos) == "<bos>");
  CHECK(tok.token(Tokenizer::kEos) == "<eos>");
  CHECK(tok.token(Tokenizer::kImg) == "<img>");
  CHECK(tok.token(Tokenizer::kUnk) == "<unk>");
  tok.add_corpus_text("red");
  const auto ids = tok.tokenize("red zebra");
  REQUIRE(ids.size() == 2);
  CHECK(ids[1] == Tokenizer::kUnk);

  // rebuild from serialized vocabulary: ids unchanged
  Tokenizer copy(tok.vocab());
  CHECK(copy.tokenize("red zebra") == ids);
}

TEST_CASE("all synthetic-corpus tokens fit the vocabulary") {
  Tokenizer tok;
  Rng rng(51);
  for (int i = 0; i < 50; ++i) {
    SceneSpec spec = random_scene(rng);
    tok.add_corpus_text(describe_scene(spec, CaptionStyle::Dense));
    tok.add_corpus_text(describe_scene(spec, CaptionStyle::Short));
  }
  CHECK(tok.size() < 256);
  Rng rng2(52);
  for (int i = 0; i < 20; ++i) {
    SceneSpec spec = random_scene(rng2);
    for (int id : tok.tokenize(describe_scene(spec, CaptionStyle::Dense))) {
      CHECK(id < tok.size());
      CHECK(id != Tokenizer::kUnk);
    }
  }
}

TEST_CASE("assemble_sequence layout arithmetic") {
  LMConfig cfg = tiny_cfg();
  Rng rng(53);
  LmParams params = init_lm(cfg, rng);
  const int n_patches = 4;
  Tensor h_v = vptest::random_tensor({n_patches, cfg.embed_dim}, rng, false);

  SUBCASE("empty instruction, one-token response") {
    MultimodalSequence seq = assemble_sequence(h_v, {}, {7}, cfg, params);
    CHECK(seq.length() == 1 + n_patches + 0 + 1 + 1);
    int masked = 0;
    for (uint8_t m : seq.loss_mask) masked += m;
    CHECK(masked == 2);  // predicts "7" and EOS
  }

  SUBCASE("loss_mask sum == response length + 1 on random samples") {
    Rng r(54);
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<int> instr(r.uniform_int(5), 6);
      std::vector<int> resp(1 + r.uniform_int(8), 7);
      MultimodalSequence seq = assemble_sequence(h_v, instr, resp, cfg, params);
      int masked = 0;
      for (uint8_t m : seq.loss_mask) masked += m;
      CHECK(masked == int(resp.size()) + 1);

      // layout oracle: [BOS][img x N][instr][resp][EOS]
      CHECK(seq.image_offset == 1);
      CHECK(seq.image_len == n_patches);
      CHECK(seq.instr_offset == 1 + n_patches);
      CHECK(seq.instr_len == int64_t(instr.size()));
      CHECK(seq.resp_offset == 1 + n_patches + int64_t(instr.size()));
      CHECK(seq.resp_len == int64_t(resp.size()));
      CHECK(seq.length() == 2 + n_patches + int64_t(instr.size() + resp.size()));

      // targets are the ids shifted left by one over the response span
      for (std::size_t t = 0; t < resp.size(); ++t)
        CHECK(seq.target_ids[seq.resp_offset - 1 + t] == resp[t]);
      CHECK(seq.target_ids[seq.resp_offset + int64_t(resp.size()) - 1] ==
            Tokenizer::kEos);
      // mask is exactly the positions predicting response tokens and EOS
      for (int64_t t = 0; t < seq.length(); ++t) {
        const bool in_span = t >= seq.resp_offset - 1 &&
                             t < seq.resp_offset + int64_t(resp.size());
        CHECK(bool(seq.loss_mask[t]) == in_span);
      }
    }
  }

  SUBCASE("overflow is a sequence_length_error") {
    std::vector<int> resp(cfg.max_seq_len, 7);
    CHECK_THROWS_AS(assemble_sequence(h_v, {}, resp, cfg, params),
                    sequence_length_error);
  }
}

TEST_CASE("forward_logits shape contract") {
  LMConfig cfg = tiny_cfg();
  Rng rng(55);
  LmParams params = init_lm(cfg, rng);
  Tensor h_v = vptest::random_tensor({4, cfg.embed_dim}, rng, false);
  MultimodalSequence seq = assemble_sequence(h_v, {6, 7}, {8, 9, 10}, cfg, params);
  Tensor logits = forward_logits(seq, cfg, params);
  CHECK(logits.rows() == seq.length());
  CHECK(logits.cols() == cfg.vocab_size);
}

TEST_CASE("causality: perturbing row j leaves logits at rows < j bit-identical") {
  LMConfig cfg = tiny_cfg();
  Rng rng(56);
  LmParams params = init_lm(cfg, rng);
  Tensor h_v = vptest::random_tensor({4, cfg.embed_dim}, rng, false);
  MultimodalSequence seq = assemble_sequence(h_v, {6, 7}, {8, 9, 10, 11}, cfg, params);
  Tensor base = forward_logits(seq, cfg, params);

  Rng trial_rng(57);
  for (int trial = 0; trial < 100; ++trial) {
    const int64_t j = 1 + int64_t(trial_rng.uniform_int(uint64_t(seq.length() - 1)));
    MultimodalSequence perturbed = seq;
    perturbed.embeddings = Tensor::zeros(seq.embeddings.shape);
    *perturbed.embeddings.data = *seq.embeddings.data;
    for (int64_t c = 0; c < cfg.embed_dim; ++c)
      perturbed.embeddings.at(j, c) += real(trial_rng.uniform() * 2 - 1);
    Tensor out = forward_logits(perturbed, cfg, params);
    CHECK(std::memcmp(base.data->data(), out.data->data(),
                      std::size_t(j) * cfg.vocab_size * sizeof(real)) == 0);
  }
}

namespace {

using Mat = std::vector<std::vector<double>>;

Mat to_mat(const Tensor& t) {
  Mat m(t.rows(), std::vector<double>(t.cols()));
  for (int64_t r = 0; r < t.rows(); ++r)
    for (int64_t c = 0; c < t.cols(); ++c) m[r][c] = t.at(r, c);
  return m;
}

Mat mul(const Mat& a, const Mat& b) {
  Mat c(a.size(), std::vector<double>(b[0].size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t k = 0; k < b.size(); ++k)
      for (std::size_t j = 0; j < b[0].size(); ++j) c[i][j] += a[i][k] * b[k][j];
  return c;
}

void add_bias_rows(Mat& m, const Tensor& bias) {
  for (auto& row : m)
    for (std::size_t j = 0; j < row.size(); ++j) row[j] += (*bias.data)[j];
}

std::vector<double> ln_row(const std::vector<double>& x, const Tensor& gain,
                           const Tensor& bias) {
  double mean = 0;
  for (double v : x) mean += v;
  mean /= double(x.size());
  double var = 0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= double(x.size());
  const double istd = 1.0 / std::sqrt(var + 1e-5);
  std::vector<double> out(x.size());
  for (std::size_t c = 0; c < x.size(); ++c)
    out[c] = (x[c] - mean) * istd * double((*gain.data)[c]) + double((*bias.data)[c]);
  return out;
}

double gelu_scalar(double x) {
  return 0.5 * x * (1.0 + std::tanh(0.7978845608028654 * (x + 0.044715 * x * x * x)));
}

}  // namespace

TEST_CASE("forward_logits matches a naive masked-attention oracle") {
  LMConfig cfg = tiny_cfg();
  Rng rng(58);
  LmParams params = init_lm(cfg, rng);
  Tensor h_v = vptest::random_tensor({2, cfg.embed_dim}, rng, false);
  MultimodalSequence seq = assemble_sequence(h_v, {6}, {7, 8}, cfg, params);
  Tensor logits = forward_logits(seq, cfg, params);

  const int64_t L = seq.length(), d = cfg.embed_dim;
  const int heads = cfg.heads;
  const int64_t hd = d / heads;
  const BlockParams& blk = params.blocks[0];

  // x = embeddings + positional rows
  Mat x = to_mat(seq.embeddings);
  for (int64_t t = 0; t < L; ++t)
    for (int64_t c = 0; c < d; ++c) x[t][c] += double(params.pos.at(t, c));

  // pre-norm causal attention sublayer
  Mat normed(L);
  for (int64_t t = 0; t < L; ++t) normed[t] = ln_row(x[t], blk.ln1_gain, blk.ln1_bias);
  Mat q = mul(normed, to_mat(blk.attn.wq));
  Mat k = mul(normed, to_mat(blk.attn.wk));
  Mat v = mul(normed, to_mat(blk.attn.wv));
  add_bias_rows(q, blk.attn.bq);
  add_bias_rows(k, blk.attn.bk);
  add_bias_rows(v, blk.attn.bv);
  Mat attn_out(L, std::vector<double>(d, 0.0));
  for (int h = 0; h < heads; ++h) {
    const int64_t off = h * hd;
    for (int64_t i = 0; i < L; ++i) {
      std::vector<double> scores(i + 1);
      double mx = -1e300;
      for (int64_t j = 0; j <= i; ++j) {
        double s = 0;
        for (int64_t c = 0; c < hd; ++c) s += q[i][off + c] * k[j][off + c];
        scores[j] = s / std::sqrt(double(hd));
        mx = std::max(mx, scores[j]);
      }
      double denom = 0;
      for (int64_t j = 0; j <= i; ++j) denom += std::exp(scores[j] - mx);
      for (int64_t j = 0; j <= i; ++j) {
        const double w = std::exp(scores[j] - mx) / denom;
        for (int64_t c = 0; c < hd; ++c) attn_out[i][off + c] += w * v[j][off + c];
      }
    }
  }
  Mat proj = mul(attn_out, to_mat(blk.attn.wo));
  add_bias_rows(proj, blk.attn.bo);
  for (int64_t t = 0; t < L; ++t)
    for (int64_t c = 0; c < d; ++c) x[t][c] += proj[t][c];

  // pre-norm MLP sublayer
  for (int64_t t = 0; t < L; ++t) normed[t] = ln_row(x[t], blk.ln2_gain, blk.ln2_bias);
  Mat mid = mul(normed, to_mat(blk.fc1_w));
  add_bias_rows(mid, blk.fc1_b);
  for (auto& row : mid)
    for (double& val : row) val = gelu_scalar(val);
  Mat mlp = mul(mid, to_mat(blk.fc2_w));
  add_bias_rows(mlp, blk.fc2_b);
  for (int64_t t = 0; t < L; ++t)
    for (int64_t c = 0; c < d; ++c) x[t][c] += mlp[t][c];

  // final layer norm + output head
  for (int64_t t = 0; t < L; ++t) {
    const std::vector<double> f = ln_row(x[t], params.lnf_gain, params.lnf_bias);
    for (int64_t vcol = 0; vcol < cfg.vocab_size; ++vcol) {
      double acc = double((*params.out_b.data)[vcol]);
      for (int64_t c = 0; c < d; ++c) acc += f[c] * double(params.out_w.at(c, vcol));
      CHECK(std::abs(double(logits.at(t, vcol)) - acc) < 1e-5);
    }
  }
}

TEST_CASE("caption_loss at the uniform point is ln V") {
  LMConfig cfg = tiny_cfg();
  Rng rng(59);
  LmParams params = init_lm(cfg, rng);
  // zero the output head: logits all equal out_b = 0 -> uniform distribution
  for (auto& v : *params.out_w.data) v = 0;
  for (auto& v : *params.out_b.data) v = 0;
  Tensor h_v = vptest::random_tensor({4, cfg.embed_dim}, rng, false);
  MultimodalSequence seq = assemble_sequence(h_v, {6, 7}, {8, 9, 10}, cfg, params);
  const double loss = caption_loss(seq, cfg, params).item();
  CHECK(std::abs(loss - std::log(double(cfg.vocab_size))) < 1e-3);
}

TEST_CASE("caption_loss equals the mask-filtered cross-entropy oracle") {
  LMConfig cfg = tiny_cfg();
  Rng rng(60);
  LmParams params = init_lm(cfg, rng);
  Tensor h_v = vptest::random_tensor({4, cfg.embed_dim}, rng, false);
  MultimodalSequence seq = assemble_sequence(h_v, {6}, {8, 9}, cfg, params);
  const double loss = caption_loss(seq, cfg, params).item();

  Tensor logits = forward_logits(seq, cfg, params);
  double want = 0;
  int used = 0;
  for (int64_t t = 0; t < seq.length(); ++t) {
    if (!seq.loss_mask[t]) continue;
    double mx = -1e300, denom = 0;
    for (int64_t c = 0; c < cfg.vocab_size; ++c)
      mx = std::max(mx, double(logits.at(t, c)));
    for (int64_t c = 0; c < cfg.vocab_size; ++c)
      denom += std::exp(double(logits.at(t, c)) - mx);
    want -= double(logits.at(t, seq.target_ids[t])) - mx - std::log(denom);
    ++used;
  }
  want /= used;
  CHECK(std::abs(loss - want) < 1e-6);
}

TEST_CASE("caption_loss rejects empty responses") {
  LMConfig cfg = tiny_cfg();
  Rng rng(61);
  LmParams params = init_lm(cfg, rng);
  Tensor h_v = vptest::random_tensor({4, cfg.embed_dim}, rng, false);
  MultimodalSequence seq = assemble_sequence(h_v, {6}, {}, cfg, params);
  CHECK_THROWS_AS(caption_loss(seq, cfg, params), degenerate_batch_error);
}

TEST_CASE("gradients reach h_v and LM parameters through caption_loss") {
  LMConfig cfg = tiny_cfg();
  cfg.vocab_size = 16;
  Rng rng(62);
  LmParams params = init_lm(cfg, rng);
  Tensor h_v = vptest::random_tensor({2, cfg.embed_dim}, rng);
  auto make_loss = [&] {
    MultimodalSequence seq = assemble_sequence(h_v, {6}, {8, 9}, cfg, params);
    return caption_loss(seq, cfg, params);
  };
  vptest::fd_check(make_loss,
                   {&h_v, &params.tok_emb, &params.pos, &params.blocks[0].attn.wv,
                    &params.blocks[0].fc2_w, &params.out_w},
                   rng, 16);
}
