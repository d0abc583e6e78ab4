#include "abmamba/bench.hpp"

#include <algorithm>
#include <cstdio>
#include <ostream>

namespace abmamba {

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw InputError("loglog_slope: need at least two paired points");
  double mx = 0, my = 0;
  const double n = double(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0) || !(y[i] > 0)) throw NumericError("loglog_slope: non-positive value");
    mx += std::log(x[i]) / n;
    my += std::log(y[i]) / n;
  }
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  if (sxx == 0) throw InputError("loglog_slope: all x values are equal");
  return sxy / sxx;
}

TimingStats time_trials(const std::function<void()>& fn, Index trials, Index warmup,
                        std::vector<std::string>* warnings, const std::string& label, double min_seconds) {
  using Clock = std::chrono::steady_clock;
  for (Index i = 0; i < warmup; ++i) fn();
  TimingStats st;
  st.trials = trials;
  const auto probe_start = Clock::now();
  fn();
  const double probe = std::chrono::duration<double>(Clock::now() - probe_start).count();
  if (probe < min_seconds) {
    st.repeats = Index(std::ceil(min_seconds / std::max(probe, 1e-9)));
    if (warnings)
      warnings->push_back(label + ": call shorter than timer floor, repeating " + std::to_string(st.repeats) +
                          "x per trial");
  }
  std::vector<double> t(static_cast<std::size_t>(trials));
  for (auto& v : t) {
    const auto start = Clock::now();
    for (Index r = 0; r < st.repeats; ++r) fn();
    v = std::chrono::duration<double>(Clock::now() - start).count() / double(st.repeats);
  }
  for (double v : t) st.mean += v / double(trials);
  double var = 0;
  for (double v : t) var += (v - st.mean) * (v - st.mean);
  st.stddev = trials > 1 ? std::sqrt(var / double(trials - 1)) : 0.0;
  return st;
}

void validate_bench(const BenchConfig& b) {
  if (b.lengths.size() < 2) throw ConfigError("bench.lengths needs at least two entries");
  for (std::size_t i = 0; i < b.lengths.size(); ++i) {
    if (b.lengths[i] < 1) throw ConfigError("bench.lengths entries must be >= 1");
    if (i > 0 && b.lengths[i] <= b.lengths[i - 1]) throw ConfigError("bench.lengths must be strictly increasing");
  }
  if (b.trials < 3) throw ConfigError("bench.trials must be >= 3");
  if (b.warmup < 0) throw ConfigError("bench.warmup must be >= 0");
  if (b.d < 1) throw ConfigError("bench.d must be >= 1");
  if (b.decode_tokens < 1 || b.decode_context < 0) throw ConfigError("bench decode sizes out of range");
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace

void write_bench_csv(const BenchReport& r, std::ostream& out) {
  out << "sequence_length,mean_seconds_ssm,std_seconds_ssm,mean_seconds_attention,std_seconds_attention,"
         "ssm_state_elements,attention_cache_elements\n";
  for (const auto& row : r.rows)
    out << row.length << ',' << fmt(row.ssm.mean) << ',' << fmt(row.ssm.stddev) << ','
        << fmt(row.attention.mean) << ',' << fmt(row.attention.stddev) << ',' << row.ssm_state_elements << ','
        << row.attention_cache_elements << '\n';
  out << "# slope_ssm=" << fmt(r.ssm_slope) << " slope_attention=" << fmt(r.attention_slope) << '\n';
  out << "# decode_tokens_per_s_ssm=" << fmt(r.decode.ssm_tokens_per_s)
      << " decode_tokens_per_s_attention=" << fmt(r.decode.attention_tokens_per_s)
      << " ratio=" << fmt(r.decode.ratio()) << '\n';
  out << "# full_model_decode_tokens_per_s=" << fmt(r.full_model_tokens_per_s) << '\n';
}

void write_memory_csv(const MemoryReport& r, std::ostream& out) {
  out << "step,ssm_state_elements,attention_cache_elements\n";
  for (const auto& row : r.rows)
    out << row.step << ',' << row.ssm_state_elements << ',' << row.attention_cache_elements << '\n';
  out << "# closed_form=" << r.closed_form << " ssm_constant=" << (r.ssm_constant ? 1 : 0)
      << " attention_linear=" << (r.attention_linear ? 1 : 0) << '\n';
}

}  // namespace abmamba
