#pragma once

// One training run from a resolved config: data, initialisation, training and
// held-out evaluation. Shared by the command-line tool and the acceptance suite.

#include "abmamba/captioner.hpp"
#include "abmamba/config.hpp"

#include <functional>
#include <string>
#include <vector>

namespace abmamba {

struct Datasets {
  Manifest train, eval;
};

Datasets make_datasets(const RunConfig& cfg);

// Ablation grid: full, no-backward, M=1, no-scan.
const std::vector<std::string>& ablation_variants();
RunConfig apply_variant(RunConfig cfg, const std::string& variant);

// ABMAMBA_PRECISION selects 32- or 64-bit compute; unset means 32.
int precision_from_env();

template <typename S>
struct ExperimentResult {
  CaptionerParams<S> params;
  TrainSummary train;
  EvalReport eval;
};

template <typename S>
ExperimentResult<S> run_experiment(const RunConfig& cfg, const Datasets& data,
                                   const std::function<void(const TrainStep&)>& on_step = {}) {
  cfg.validate();
  const auto train = prepare_examples<S>(data.train, cfg);
  const auto eval = prepare_examples<S>(data.eval, cfg);
  Rng rng(cfg.train.seed);
  ExperimentResult<S> r{CaptionerParams<S>::init(cfg, rng), {}, {}};
  r.train = train_captioner(r.params, cfg, train, on_step);
  r.eval = evaluate_captioner(r.params, cfg, eval);
  return r;
}

}  // namespace abmamba
