#include "abmamba/experiment.hpp"

#include <cstdlib>

namespace abmamba {

Datasets make_datasets(const RunConfig& cfg) {
  Datasets d;
  d.train = make_dataset(cfg.data.n_train, cfg.data.seed, cfg.data.geometry);
  d.eval = make_dataset(cfg.data.n_eval, cfg.data.seed, cfg.data.geometry, true, &d.train);
  return d;
}

const std::vector<std::string>& ablation_variants() {
  static const std::vector<std::string> v{"full", "no-backward", "M=1", "no-scan"};
  return v;
}

RunConfig apply_variant(RunConfig cfg, const std::string& variant) {
  if (variant == "full") return cfg;
  if (variant == "no-backward") {
    cfg.ahbs.backward_scan = false;
  } else if (variant == "M=1") {
    cfg.ahbs.pathways = 1;
  } else if (variant == "no-scan") {
    cfg.ahbs.scan = false;
  } else {
    throw ConfigError("unknown ablation variant '" + variant + "' (expected full, no-backward, M=1 or no-scan)");
  }
  return cfg;
}

int precision_from_env() {
  const char* v = std::getenv("ABMAMBA_PRECISION");
  if (!v || std::string(v).empty() || std::string(v) == "32") return 32;
  if (std::string(v) == "64") return 64;
  throw ConfigError("ABMAMBA_PRECISION must be 32 or 64, got '" + std::string(v) + "'");
}

}  // namespace abmamba
