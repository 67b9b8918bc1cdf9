#include "vp/metrics.hpp"

#include "vp/errors.hpp"
#include "vp/inference.hpp"
#include "vp/vision.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <iostream>
#include <map>

namespace vp {

namespace {

constexpr double kPrecisionFloor = 1e-9;

void check_pairs(const std::vector<CaptionPair>& pairs) {
  if (pairs.empty()) throw input_error("metrics: empty corpus");
  for (const CaptionPair& p : pairs) {
    bool ok = false;
    for (const auto& r : p.references) ok = ok || !r.empty();
    if (!ok) throw input_error("metrics: pair without a nonempty reference");
  }
}

using NgramCounts = std::map<std::vector<std::string>, int>;

NgramCounts count_ngrams(const std::vector<std::string>& toks, int n) {
  NgramCounts c;
  for (int i = 0; i + n <= int(toks.size()); ++i)
    ++c[std::vector<std::string>(toks.begin() + i, toks.begin() + i + n)];
  return c;
}

struct BleuStats {
  std::vector<long long> matched, total;  // per order
  long long hyp_len = 0, ref_len = 0;
};

BleuStats bleu_stats(const CaptionPair& p, int max_n) {
  BleuStats s;
  s.matched.assign(max_n, 0);
  s.total.assign(max_n, 0);
  s.hyp_len = long(p.hypothesis.size());
  // closest reference length; ties resolved toward the shorter reference
  long long best_ref = long(p.references.front().size());
  for (const auto& r : p.references) {
    const long long len = long(r.size());
    if (std::llabs(len - s.hyp_len) < std::llabs(best_ref - s.hyp_len) ||
        (std::llabs(len - s.hyp_len) == std::llabs(best_ref - s.hyp_len) && len < best_ref))
      best_ref = len;
  }
  s.ref_len = best_ref;
  for (int n = 1; n <= max_n; ++n) {
    NgramCounts hyp_c = count_ngrams(p.hypothesis, n);
    NgramCounts max_ref;  // clip counts: max over references
    for (const auto& r : p.references)
      for (const auto& [gram, cnt] : count_ngrams(r, n)) {
        int& m = max_ref[gram];
        m = std::max(m, cnt);
      }
    for (const auto& [gram, cnt] : hyp_c) {
      s.total[n - 1] += cnt;
      auto it = max_ref.find(gram);
      if (it != max_ref.end()) s.matched[n - 1] += std::min(cnt, it->second);
    }
  }
  return s;
}

double bleu_from_stats(const BleuStats& s, int max_n) {
  double log_sum = 0;
  for (int n = 0; n < max_n; ++n) {
    if (s.total[n] == 0) continue;  // no n-grams of this order: neutral
    const double p = s.matched[n] > 0 ? double(s.matched[n]) / double(s.total[n])
                                      : kPrecisionFloor;
    log_sum += std::log(p) / max_n;
  }
  const double bp = s.hyp_len >= s.ref_len || s.hyp_len == 0
                        ? std::min(1.0, std::exp(1.0 - double(s.ref_len) /
                                                           std::max<long long>(1, s.hyp_len)))
                        : std::exp(1.0 - double(s.ref_len) / double(s.hyp_len));
  return std::min(1.0, bp) * std::exp(log_sum);
}


}  // namespace

std::vector<std::string> metric_tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      if (!cur.empty()) {
        out.push_back(cur);
        cur.clear();
      }
    } else if (std::isalnum(c)) {
      cur += char(std::tolower(c));
    } else {
      if (!cur.empty()) {
        out.push_back(cur);
        cur.clear();
      }
      out.push_back(std::string(1, char(c)));
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

double bleu(const std::vector<CaptionPair>& pairs, int max_n) {
  check_pairs(pairs);
  BleuStats pooled;
  pooled.matched.assign(max_n, 0);
  pooled.total.assign(max_n, 0);
  for (const CaptionPair& p : pairs) {
    BleuStats s = bleu_stats(p, max_n);
    for (int n = 0; n < max_n; ++n) {
      pooled.matched[n] += s.matched[n];
      pooled.total[n] += s.total[n];
    }
    pooled.hyp_len += s.hyp_len;
    pooled.ref_len += s.ref_len;
  }
  return bleu_from_stats(pooled, max_n);
}

double bleu_sentence_mean(const std::vector<CaptionPair>& pairs, int max_n) {
  check_pairs(pairs);
  double sum = 0;
  for (const CaptionPair& p : pairs) sum += bleu_from_stats(bleu_stats(p, max_n), max_n);
  return sum / double(pairs.size());
}

MeteorAlignment meteor_align(const std::vector<std::string>& hyp,
                             const std::vector<std::string>& ref) {
  // maximum matching size is fixed per word: sum of min occurrence counts
  std::map<std::string, int> hc, rc;
  for (const auto& w : hyp) ++hc[w];
  for (const auto& w : ref) ++rc[w];
  int m = 0;
  for (const auto& [w, c] : hc) {
    auto it = rc.find(w);
    if (it != rc.end()) m += std::min(c, it->second);
  }
  if (m == 0) return {0, 0};

  // candidate ref positions per hyp position, plus per-word skip budget
  // (hyp occurrences beyond the ref count may stay unmatched)
  std::vector<std::vector<int>> cand(hyp.size());
  std::map<std::string, int> budget;
  for (const auto& [w, c] : hc) {
    auto it = rc.find(w);
    budget[w] = it == rc.end() ? c : std::max(0, c - it->second);
  }
  for (std::size_t i = 0; i < hyp.size(); ++i)
    for (std::size_t j = 0; j < ref.size(); ++j)
      if (hyp[i] == ref[j]) cand[i].push_back(int(j));

  // branch-and-bound over maximum matchings; chunks = number of times a
  // match fails to extend the previous match by (i+1, j+1). A chunk count
  // of m (every match alone) bounds every matching, so m+1 is a safe
  // initial bound that cannot mask an optimum of exactly m.
  int best = m + 1;
  std::vector<uint8_t> used(ref.size(), 0);
  long long nodes = 0;
  const long long node_cap = 500000;  // exact below this; capped search keeps
                                      // the best maximal matching found so far
  std::function<void(std::size_t, int, int, int)> dfs =
      [&](std::size_t i, int matched, int chunks, int prev_j) {
        if (chunks >= best || ++nodes > node_cap) return;
        if (i == hyp.size()) {
          if (matched == m) best = chunks;
          return;
        }
        // extending the current chunk first gives the tightest bound early
        for (int pass = 0; pass < 2; ++pass)
          for (int j : cand[i]) {
            const bool extends = (j == prev_j + 1);
            if (used[j] || extends != (pass == 0)) continue;
            used[j] = 1;
            dfs(i + 1, matched + 1, chunks + (extends ? 0 : 1), j);
            used[j] = 0;
          }
        if (cand[i].empty()) {
          dfs(i + 1, matched, chunks, -2);
        } else if (budget[hyp[i]] > 0) {
          --budget[hyp[i]];
          dfs(i + 1, matched, chunks, -2);
          ++budget[hyp[i]];
        }
      };
  dfs(0, 0, 0, -2);
  return {m, std::min(best, m)};
}

double meteor(const std::vector<CaptionPair>& pairs) {
  check_pairs(pairs);
  double sum = 0;
  for (const CaptionPair& p : pairs) {
    double best = 0;
    for (const auto& ref : p.references) {
      if (ref.empty() || p.hypothesis.empty()) continue;
      MeteorAlignment a = meteor_align(p.hypothesis, ref);
      if (a.matches == 0) continue;
      const double pr = double(a.matches) / double(p.hypothesis.size());
      const double re = double(a.matches) / double(ref.size());
      const double f = 10.0 * pr * re / (re + 9.0 * pr);
      const double frag = double(a.chunks) / double(a.matches);
      best = std::max(best, f * (1.0 - 0.5 * frag * frag * frag));
    }
    sum += best;
  }
  return sum / double(pairs.size());
}

double rouge_l(const std::vector<CaptionPair>& pairs) {
  check_pairs(pairs);
  double sum = 0;
  for (const CaptionPair& p : pairs) {
    double best = 0;
    for (const auto& ref : p.references) {
      if (ref.empty() || p.hypothesis.empty()) continue;
      const std::size_t n = p.hypothesis.size(), m = ref.size();
      std::vector<std::vector<int>> dp(n + 1, std::vector<int>(m + 1, 0));
      for (std::size_t i = 1; i <= n; ++i)
        for (std::size_t j = 1; j <= m; ++j)
          dp[i][j] = p.hypothesis[i - 1] == ref[j - 1]
                         ? dp[i - 1][j - 1] + 1
                         : std::max(dp[i - 1][j], dp[i][j - 1]);
      const int lcs = dp[n][m];
      if (lcs == 0) continue;
      const double pr = double(lcs) / double(n);
      const double re = double(lcs) / double(m);
      best = std::max(best, 2.0 * pr * re / (pr + re));
    }
    sum += best;
  }
  return sum / double(pairs.size());
}

MetricsReport score_pairs(const std::vector<CaptionPair>& pairs, bool sentence_bleu) {
  MetricsReport r;
  r.bleu = sentence_bleu ? bleu_sentence_mean(pairs) : bleu(pairs);
  r.meteor = meteor(pairs);
  r.rouge_l = rouge_l(pairs);
  r.corpus_size = pairs.size();
  return r;
}

MetricsReport evaluate_corpus(ModelBundle& model, const DatasetManifest& manifest,
                              int sample_count, uint64_t seed, int max_new_tokens,
                              bool sentence_bleu) {
  if (manifest.samples.empty()) throw input_error("evaluate_corpus: empty manifest");
  int count = sample_count;
  if (count > int(manifest.samples.size())) {
    std::cerr << "warning: sample_count " << count << " exceeds manifest size "
              << manifest.samples.size() << "; clamping\n";
    count = int(manifest.samples.size());
  }
  std::vector<std::size_t> indices(manifest.samples.size());
  for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = i;
  Rng rng(seed);
  rng.shuffle(indices);
  indices.resize(count);

  std::vector<CaptionPair> pairs;
  for (std::size_t idx : indices) {
    const InstructionSample& s = manifest.samples[idx];
    const ImageTensor img =
        preprocess_image(load_ppm(s.image_ref), model.vit_cfg.image_size);
    const std::string hyp = generate_caption(model, img, s.instruction, max_new_tokens);
    pairs.push_back({metric_tokenize(hyp), {metric_tokenize(s.response)}});
  }
  return score_pairs(pairs, sentence_bleu);
}

}  // namespace vp
