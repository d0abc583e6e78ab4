#include "abmamba/captioner.hpp"

namespace abmamba {

EvalReport score_captions(std::vector<CaptionRecord> records) {
  EvalReport rep;
  std::vector<Words> cands, event_cands;
  std::vector<std::vector<Words>> refs, event_refs;
  double rouge_sum = 0.0;
  for (auto& r : records) {
    const Words c = split_words(r.candidate);
    const std::vector<Words> ref{split_words(r.reference)};
    r.bleu1 = bleu(c, ref, 1);
    r.bleu4 = bleu(c, ref, 4);
    r.rouge_l = rouge_l(c, ref);
    rouge_sum += r.rouge_l;
    cands.push_back(c);
    refs.push_back(ref);
    if (r.has_event) {
      event_cands.push_back(c);
      event_refs.push_back(ref);
    }
  }
  if (!records.empty()) {
    rep.bleu1 = corpus_bleu(cands, refs, 1);
    rep.bleu4 = corpus_bleu(cands, refs, 4);
    rep.rouge_l = rouge_sum / double(records.size());
  }
  rep.event_count = Index(event_cands.size());
  if (!event_cands.empty()) {
    rep.event_bleu1 = corpus_bleu(event_cands, event_refs, 1);
    rep.event_bleu4 = corpus_bleu(event_cands, event_refs, 4);
  }
  rep.records = std::move(records);
  return rep;
}

}  // namespace abmamba
