#pragma once

// Decoder-only causal language model over [visual tokens || text embeddings],
// plus the word-level tokenizer it shares with the data pipeline.

#include "vp/rng.hpp"
#include "vp/transformer.hpp"

#include <string>
#include <unordered_map>
#include <vector>

namespace vp {

class Tokenizer {
 public:
  static constexpr int kPad = 0;
  static constexpr int kBos = 1;
  static constexpr int kEos = 2;
  static constexpr int kImg = 3;
  static constexpr int kUnk = 4;

  Tokenizer();
  explicit Tokenizer(std::vector<std::string> vocab);  // from checkpoint

  // Adds every whitespace-separated word of `text` to the vocabulary.
  void add_corpus_text(const std::string& text);

  std::vector<int> tokenize(const std::string& text) const;
  std::string detokenize(const std::vector<int>& ids) const;

  int size() const { return static_cast<int>(vocab_.size()); }
  const std::vector<std::string>& vocab() const { return vocab_; }
  const std::string& token(int id) const { return vocab_.at(id); }

 private:
  std::vector<std::string> vocab_;
  std::unordered_map<std::string, int> to_id_;
};

struct LMConfig {
  int vocab_size = 256;  // V
  int embed_dim = 96;    // d_lm
  int depth = 2;
  int heads = 4;
  int max_seq_len = 128;
  double mlp_ratio = 4.0;

  void validate() const;
};

struct LmParams {
  Tensor tok_emb;  // [V x d_lm]
  Tensor pos;      // [max_seq_len x d_lm]
  std::vector<BlockParams> blocks;
  Tensor lnf_gain, lnf_bias;
  Tensor out_w, out_b;  // [d_lm x V], [V]
};

LmParams init_lm(const LMConfig& cfg, Rng& rng);
void visit_lm(LmParams& p, const std::string& prefix,
              const std::function<void(const std::string&, Tensor&)>& fn);

struct MultimodalSequence {
  Tensor embeddings;             // [L x d_lm]
  std::vector<int> target_ids;   // next token per position; PAD at the end
  std::vector<uint8_t> loss_mask;
  // segment layout
  int64_t image_offset = 0, image_len = 0;
  int64_t instr_offset = 0, instr_len = 0;
  int64_t resp_offset = 0, resp_len = 0;

  int64_t length() const { return embeddings.rows(); }
};

// Rows: [BOS, H_v..., instruction..., response..., EOS]. Targets are the
// ids shifted by one; loss_mask is true exactly on positions predicting
// response tokens and EOS.
MultimodalSequence assemble_sequence(const Tensor& h_v,
                                     const std::vector<int>& instruction,
                                     const std::vector<int>& response,
                                     const LMConfig& cfg, const LmParams& params);

Tensor forward_logits(const MultimodalSequence& seq, const LMConfig& cfg,
                      const LmParams& params);

Tensor caption_loss(const MultimodalSequence& seq, const LMConfig& cfg,
                    const LmParams& params);

}  // namespace vp
