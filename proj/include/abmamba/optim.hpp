#pragma once

// AdamW with linear warmup and cosine decay, over any parameter struct.

#include "abmamba/core.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace abmamba {

struct AdamWOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

// Linear warmup to `peak` over `warmup` steps, then cosine decay to zero.
inline double cosine_schedule(double peak, long step, long total, long warmup) {
  if (total <= 0) return peak;
  if (step < warmup) return peak * double(step + 1) / double(warmup);
  const long span = std::max(1L, total - warmup);
  const double progress = std::min(1.0, double(step - warmup) / double(span));
  return 0.5 * peak * (1.0 + std::cos(M_PI * progress));
}

// Decay applies to matrices only; biases, gains and the state-decay logits
// are exempt.
inline bool decays(const std::string& name, Index rows, Index cols) {
  return rows > 1 && cols > 1 && name.find("a_log") == std::string::npos;
}

template <typename Params>
class AdamW {
 public:
  using S = typename Params::Scalar;

  AdamW(Params& params, AdamWOptions opt) : opt_(opt), m_(zeros_like(params)), v_(zeros_like(params)) {}

  // Returns the gradient norm before clipping. `clip` <= 0 disables clipping.
  double step(Params& params, Params& grads, double lr, double clip = 0.0) {
    auto p = tensor_refs(params);
    auto g = tensor_refs(grads);
    auto m = tensor_refs(m_);
    auto v = tensor_refs(v_);
    double sq = 0.0;
    for (const auto& t : g)
      for (Index i = 0; i < t.size(); ++i) sq += double(t.data[i]) * double(t.data[i]);
    const double norm = std::sqrt(sq);
    if (!std::isfinite(norm)) throw NumericError("AdamW: non-finite gradient norm");
    const double scale = clip > 0 && norm > clip ? clip / norm : 1.0;
    ++t_;
    const double bc1 = 1.0 - std::pow(opt_.beta1, double(t_));
    const double bc2 = 1.0 - std::pow(opt_.beta2, double(t_));
    for (std::size_t k = 0; k < p.size(); ++k) {
      const bool wd = opt_.weight_decay > 0 && decays(p[k].name, p[k].rows, p[k].cols);
      const S decay = S(1.0 - lr * opt_.weight_decay);
      const S b1 = S(opt_.beta1), b2 = S(opt_.beta2);
      const S step_size = S(lr / bc1), inv_bc2 = S(1.0 / bc2), eps = S(opt_.eps);
      for (Index i = 0; i < p[k].size(); ++i) {
        const S gi = g[k].data[i] * S(scale);
        S& mi = m[k].data[i];
        S& vi = v[k].data[i];
        mi = b1 * mi + (S(1) - b1) * gi;
        vi = b2 * vi + (S(1) - b2) * gi * gi;
        if (wd) p[k].data[i] *= decay;
        p[k].data[i] -= step_size * mi / (std::sqrt(vi * inv_bc2) + eps);
      }
    }
    return norm;
  }

  long steps() const { return t_; }

 private:
  AdamWOptions opt_;
  Params m_, v_;
  long t_ = 0;
};

}  // namespace abmamba
