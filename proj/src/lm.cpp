#include "vp/lm.hpp"

#include "vp/errors.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>

namespace vp {

namespace {

std::string lowercase(const std::string& s) {
  std::string out = s;
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return out;
}

std::vector<std::string> split_words(const std::string& text) {
  std::istringstream is(lowercase(text));
  std::vector<std::string> words;
  std::string w;
  while (is >> w) words.push_back(w);
  return words;
}

}  // namespace

Tokenizer::Tokenizer() : vocab_{"<pad>", "<bos>", "<eos>", "<img>", "<unk>"} {
  for (std::size_t i = 0; i < vocab_.size(); ++i) to_id_[vocab_[i]] = int(i);
}

Tokenizer::Tokenizer(std::vector<std::string> vocab) : vocab_(std::move(vocab)) {
  if (vocab_.size() < 5 || vocab_[kPad] != "<pad>" || vocab_[kBos] != "<bos>" ||
      vocab_[kEos] != "<eos>" || vocab_[kImg] != "<img>" || vocab_[kUnk] != "<unk>")
    throw parse_error("tokenizer: vocabulary missing stable special tokens");
  for (std::size_t i = 0; i < vocab_.size(); ++i) to_id_[vocab_[i]] = int(i);
}

void Tokenizer::add_corpus_text(const std::string& text) {
  for (const std::string& w : split_words(text))
    if (!to_id_.count(w)) {
      to_id_[w] = int(vocab_.size());
      vocab_.push_back(w);
    }
}

std::vector<int> Tokenizer::tokenize(const std::string& text) const {
  std::vector<int> ids;
  for (const std::string& w : split_words(text)) {
    auto it = to_id_.find(w);
    ids.push_back(it == to_id_.end() ? kUnk : it->second);
  }
  return ids;
}

std::string Tokenizer::detokenize(const std::vector<int>& ids) const {
  std::string out;
  for (int id : ids) {
    if (id < 0 || id >= size())
      throw index_error("detokenize: id " + std::to_string(id) + " out of range");
    if (id == kPad || id == kBos || id == kEos || id == kImg) continue;
    if (!out.empty()) out += ' ';
    out += vocab_[id];
  }
  return out;
}

void LMConfig::validate() const {
  if (vocab_size <= 0 || embed_dim <= 0 || depth <= 0 || max_seq_len <= 0)
    throw config_error("lm: dimensions must be positive");
  if (heads <= 0 || embed_dim % heads != 0)
    throw config_error("lm: embed_dim " + std::to_string(embed_dim) +
                       " not divisible by heads " + std::to_string(heads));
}

LmParams init_lm(const LMConfig& cfg, Rng& rng) {
  cfg.validate();
  const int64_t d = cfg.embed_dim, v = cfg.vocab_size;
  const real stddev = real(0.02);
  auto randn = [&](std::vector<int64_t> shape) {
    Tensor t = Tensor::zeros(std::move(shape), true);
    for (real& x : *t.data) x = real(rng.normal(0.0, stddev));
    return t;
  };
  LmParams p;
  p.tok_emb = randn({v, d});
  p.pos = randn({cfg.max_seq_len, d});
  const int64_t hidden = static_cast<int64_t>(std::lround(cfg.mlp_ratio * d));
  for (int i = 0; i < cfg.depth; ++i)
    p.blocks.push_back(init_block(d, hidden, rng, stddev));
  p.lnf_gain = Tensor::full({d}, real(1), true);
  p.lnf_bias = Tensor::zeros({d}, true);
  p.out_w = randn({d, v});
  p.out_b = Tensor::zeros({v}, true);
  return p;
}

void visit_lm(LmParams& p, const std::string& prefix,
              const std::function<void(const std::string&, Tensor&)>& fn) {
  fn(prefix + ".tok_emb", p.tok_emb);
  fn(prefix + ".pos", p.pos);
  for (std::size_t i = 0; i < p.blocks.size(); ++i)
    visit_block(prefix + ".blocks." + std::to_string(i), p.blocks[i], fn);
  fn(prefix + ".lnf.gain", p.lnf_gain);
  fn(prefix + ".lnf.bias", p.lnf_bias);
  fn(prefix + ".out.w", p.out_w);
  fn(prefix + ".out.b", p.out_b);
}

MultimodalSequence assemble_sequence(const Tensor& h_v,
                                     const std::vector<int>& instruction,
                                     const std::vector<int>& response,
                                     const LMConfig& cfg, const LmParams& params) {
  cfg.validate();
  if (h_v.shape.size() != 2 || h_v.cols() != cfg.embed_dim)
    throw config_error("assemble_sequence: H_v " + shape_str(h_v.shape) +
                       " does not match embed_dim " + std::to_string(cfg.embed_dim));
  const int64_t n = h_v.rows();
  const int64_t ilen = static_cast<int64_t>(instruction.size());
  const int64_t rlen = static_cast<int64_t>(response.size());
  const int64_t len = 1 + n + ilen + rlen + 1;
  if (len > cfg.max_seq_len)
    throw sequence_length_error("assemble_sequence: length " + std::to_string(len) +
                                " exceeds max_seq_len " + std::to_string(cfg.max_seq_len));

  std::vector<Tensor> rows;
  rows.push_back(embedding_lookup(params.tok_emb, {Tokenizer::kBos}));
  rows.push_back(h_v);
  if (ilen > 0) rows.push_back(embedding_lookup(params.tok_emb, instruction));
  if (rlen > 0) rows.push_back(embedding_lookup(params.tok_emb, response));
  rows.push_back(embedding_lookup(params.tok_emb, {Tokenizer::kEos}));

  MultimodalSequence seq;
  seq.embeddings = concat_rows(rows);
  seq.image_offset = 1;
  seq.image_len = n;
  seq.instr_offset = 1 + n;
  seq.instr_len = ilen;
  seq.resp_offset = 1 + n + ilen;
  seq.resp_len = rlen;

  // id view of the sequence, IMG standing in for visual rows
  std::vector<int> ids(len);
  ids[0] = Tokenizer::kBos;
  for (int64_t t = 0; t < n; ++t) ids[1 + t] = Tokenizer::kImg;
  for (int64_t t = 0; t < ilen; ++t) ids[seq.instr_offset + t] = instruction[t];
  for (int64_t t = 0; t < rlen; ++t) ids[seq.resp_offset + t] = response[t];
  ids[len - 1] = Tokenizer::kEos;

  seq.target_ids.assign(len, Tokenizer::kPad);
  seq.loss_mask.assign(len, 0);
  for (int64_t t = 0; t + 1 < len; ++t) seq.target_ids[t] = ids[t + 1];
  // positions predicting response tokens and the closing EOS
  for (int64_t t = seq.resp_offset - 1; t < seq.resp_offset + rlen; ++t)
    seq.loss_mask[t] = 1;
  return seq;
}

Tensor forward_logits(const MultimodalSequence& seq, const LMConfig& cfg,
                      const LmParams& params) {
  cfg.validate();
  const int64_t len = seq.length();
  if (len > cfg.max_seq_len)
    throw sequence_length_error("forward_logits: length " + std::to_string(len) +
                                " exceeds max_seq_len " + std::to_string(cfg.max_seq_len));
  Tensor mask = causal_mask(len);
  Tensor x = add(seq.embeddings, slice_rows(params.pos, 0, len));
  for (const BlockParams& block : params.blocks)
    x = transformer_block(x, block, cfg.heads, &mask);
  x = layer_norm(x, params.lnf_gain, params.lnf_bias);
  return add_bias(matmul(x, params.out_w), params.out_b);
}

Tensor caption_loss(const MultimodalSequence& seq, const LMConfig& cfg,
                    const LmParams& params) {
  if (seq.resp_len == 0)
    throw degenerate_batch_error("caption_loss: empty response span");
  return cross_entropy(forward_logits(seq, cfg, params), seq.target_ids, seq.loss_mask);
}

}  // namespace vp
