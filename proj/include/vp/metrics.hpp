#pragma once

// Corpus captioning metrics: BLEU (pooled, with brevity penalty), METEOR
// (exact unigram matching, fragmentation penalty), ROUGE-L (LCS F1).
//
// Conventions, fixed so external files score reproducibly:
//  - metric tokenization: lowercase; punctuation characters are standalone
//    single-character tokens; words split on whitespace
//  - BLEU: zero pooled precisions floored at 1e-9; an order whose pooled
//    hypothesis n-gram count is zero contributes log 1 (neutral)
//  - METEOR: alpha=9 recall weighting, beta=3, gamma=0.5, no stemming
//  - ROUGE-L: F1 (beta=1)

#include "vp/data.hpp"
#include "vp/model.hpp"

#include <string>
#include <vector>

namespace vp {

struct CaptionPair {
  std::vector<std::string> hypothesis;
  std::vector<std::vector<std::string>> references;  // at least one nonempty
};

struct MetricsReport {
  double bleu = 0;
  double meteor = 0;
  double rouge_l = 0;
  std::size_t corpus_size = 0;
};

std::vector<std::string> metric_tokenize(const std::string& text);

double bleu(const std::vector<CaptionPair>& pairs, int max_n = 4);
// mean of per-sentence BLEU (the alternative aggregation mode)
double bleu_sentence_mean(const std::vector<CaptionPair>& pairs, int max_n = 4);
double meteor(const std::vector<CaptionPair>& pairs);
double rouge_l(const std::vector<CaptionPair>& pairs);

// METEOR internals, exposed for testing: matched unigram count and the
// minimal chunk count among maximum matchings.
struct MeteorAlignment {
  int matches = 0;
  int chunks = 0;
};
MeteorAlignment meteor_align(const std::vector<std::string>& hyp,
                             const std::vector<std::string>& ref);

MetricsReport score_pairs(const std::vector<CaptionPair>& pairs, bool sentence_bleu = false);

// Deterministically subsamples `sample_count` manifest items by seed,
// generates greedy captions and scores them against the manifest responses.
MetricsReport evaluate_corpus(ModelBundle& model, const DatasetManifest& manifest,
                              int sample_count, uint64_t seed,
                              int max_new_tokens = 96, bool sentence_bleu = false);

}  // namespace vp
