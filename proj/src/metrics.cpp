#include "abmamba/metrics.hpp"

#include "abmamba/core.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace abmamba {

Words split_words(const std::string& s) {
  std::istringstream in(s);
  Words out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

std::string join_words(const Words& w) {
  std::string s;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (i) s += ' ';
    s += w[i];
  }
  return s;
}

namespace {

using Ngram = std::vector<std::string>;

std::map<Ngram, long> ngram_counts(const Words& w, int n) {
  std::map<Ngram, long> counts;
  for (std::size_t i = 0; i + std::size_t(n) <= w.size(); ++i)
    ++counts[Ngram(w.begin() + long(i), w.begin() + long(i) + n)];
  return counts;
}

void check_n(int n_max) {
  if (n_max < 1 || n_max > 4) throw InputError("bleu: n_max must be in 1..4");
}

void check_references(const std::vector<Words>& refs) {
  if (refs.empty()) throw InputError("metrics: at least one reference is required");
}

double combine(const std::vector<NgramCounts>& counts, long cand_len, long ref_len) {
  if (cand_len == 0) return 0.0;
  double log_sum = 0.0;
  for (const auto& c : counts) {
    if (c.matched == 0 || c.total == 0) return 0.0;
    log_sum += std::log(double(c.matched) / double(c.total));
  }
  const double bp = cand_len < ref_len ? std::exp(1.0 - double(ref_len) / double(cand_len)) : 1.0;
  return bp * std::exp(log_sum / double(counts.size()));
}

}  // namespace

NgramCounts clipped_ngrams(const Words& candidate, const std::vector<Words>& references, int n) {
  std::map<Ngram, long> max_ref;
  for (const auto& r : references)
    for (const auto& [g, c] : ngram_counts(r, n)) max_ref[g] = std::max(max_ref[g], c);
  NgramCounts out;
  for (const auto& [g, c] : ngram_counts(candidate, n)) {
    out.total += c;
    auto it = max_ref.find(g);
    if (it != max_ref.end()) out.matched += std::min(c, it->second);
  }
  return out;
}

long closest_reference_length(long candidate_len, const std::vector<Words>& references) {
  check_references(references);
  long best = long(references[0].size());
  for (const auto& r : references) {
    const long len = long(r.size());
    const long d = std::abs(len - candidate_len), bd = std::abs(best - candidate_len);
    if (d < bd || (d == bd && len < best)) best = len;
  }
  return best;
}

double bleu(const Words& candidate, const std::vector<Words>& references, int n_max) {
  return corpus_bleu({candidate}, {references}, n_max);
}

double corpus_bleu(const std::vector<Words>& candidates,
                   const std::vector<std::vector<Words>>& references, int n_max) {
  check_n(n_max);
  if (candidates.size() != references.size())
    throw InputError("corpus_bleu: candidate and reference counts differ");
  std::vector<NgramCounts> totals(static_cast<std::size_t>(n_max));
  long cand_len = 0, ref_len = 0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    check_references(references[i]);
    cand_len += long(candidates[i].size());
    ref_len += closest_reference_length(long(candidates[i].size()), references[i]);
    for (int n = 1; n <= n_max; ++n) {
      const auto c = clipped_ngrams(candidates[i], references[i], n);
      totals[std::size_t(n - 1)].matched += c.matched;
      totals[std::size_t(n - 1)].total += c.total;
    }
  }
  return combine(totals, cand_len, ref_len);
}

long lcs_length(const Words& a, const Words& b) {
  std::vector<long> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double rouge_l(const Words& candidate, const std::vector<Words>& references, double beta) {
  check_references(references);
  if (candidate.empty()) return 0.0;
  double best = 0.0;
  for (const auto& r : references) {
    if (r.empty()) continue;
    const double lcs = double(lcs_length(candidate, r));
    if (lcs == 0) continue;
    const double p = lcs / double(candidate.size());
    const double rec = lcs / double(r.size());
    const double b2 = beta * beta;
    best = std::max(best, (1 + b2) * p * rec / (rec + b2 * p));
  }
  return best;
}

}  // namespace abmamba
