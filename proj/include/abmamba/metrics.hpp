#pragma once

// Caption metrics over whitespace-tokenized, lowercase word sequences.

#include <string>
#include <vector>

namespace abmamba {

using Words = std::vector<std::string>;

Words split_words(const std::string& s);
std::string join_words(const Words& w);

// Clipped n-gram matches of `candidate` against the per-n-gram maximum count
// over `references`, and the total number of candidate n-grams.
struct NgramCounts {
  long matched = 0;
  long total = 0;
};
NgramCounts clipped_ngrams(const Words& candidate, const std::vector<Words>& references, int n);

// Reference length closest to `candidate_len`; ties go to the shorter one.
long closest_reference_length(long candidate_len, const std::vector<Words>& references);

double bleu(const Words& candidate, const std::vector<Words>& references, int n_max);

// Counts aggregated over all records before taking ratios.
double corpus_bleu(const std::vector<Words>& candidates,
                   const std::vector<std::vector<Words>>& references, int n_max);

long lcs_length(const Words& a, const Words& b);

inline constexpr double kRougeBeta = 1.2;

double rouge_l(const Words& candidate, const std::vector<Words>& references,
               double beta = kRougeBeta);

}  // namespace abmamba
