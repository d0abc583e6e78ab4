#include "abmamba/config.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

namespace abmamba {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  const char* end = v.data() + v.size();
  auto r = std::from_chars(v.data(), end, out);
  if (r.ec != std::errc() || r.ptr != end)
    throw ConfigError("config key '" + key + "': cannot parse '" + v + "' as a number");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config key '" + key + "': expected true or false, got '" + v + "'");
}

std::vector<Index> parse_list(const std::string& key, const std::string& v) {
  std::vector<Index> out;
  std::stringstream ss(v);
  for (std::string item; std::getline(ss, item, ',');) out.push_back(parse_number<Index>(key, trim(item)));
  if (out.empty()) throw ConfigError("config key '" + key + "': empty list");
  return out;
}

std::string fmt_list(const std::vector<Index>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

template <typename T, typename F>
ConfigKey int_key(const std::string& name, const std::string& help, F field) {
  return {name, help, [field](const RunConfig& c) { return std::to_string(field(const_cast<RunConfig&>(c))); },
          [name, field](RunConfig& c, const std::string& v) { field(c) = parse_number<T>(name, v); }};
}

template <typename F>
ConfigKey real_key(const std::string& name, const std::string& help, F field) {
  return {name, help, [field](const RunConfig& c) { return fmt_double(field(const_cast<RunConfig&>(c))); },
          [name, field](RunConfig& c, const std::string& v) { field(c) = parse_number<double>(name, v); }};
}

template <typename F>
ConfigKey bool_key(const std::string& name, const std::string& help, F field) {
  return {name, help,
          [field](const RunConfig& c) -> std::string {
            return field(const_cast<RunConfig&>(c)) ? "true" : "false";
          },
          [name, field](RunConfig& c, const std::string& v) { field(c) = parse_bool(name, v); }};
}

std::vector<ConfigKey> build_schema() {
  std::vector<ConfigKey> k;
  k.push_back(int_key<Index>("ahbs.pathways", "temporal pathways M", [](RunConfig& c) -> Index& { return c.ahbs.pathways; }));
  k.push_back(int_key<Index>("ahbs.stride", "temporal stride s between pathways", [](RunConfig& c) -> Index& { return c.ahbs.stride; }));
  k.push_back(int_key<Index>("ahbs.spatial_pool", "spatial pooling window", [](RunConfig& c) -> Index& { return c.ahbs.spatial_pool; }));
  k.push_back({"ahbs.aggregate", "pathway aggregation: add or concat",
               [](const RunConfig& c) { return to_string(c.ahbs.aggregate); },
               [](RunConfig& c, const std::string& v) { c.ahbs.aggregate = parse_aggregate_mode(v); }});
  k.push_back(int_key<Index>("ahbs.temporal_compress", "output temporal compression c", [](RunConfig& c) -> Index& { return c.ahbs.temporal_compress; }));
  k.push_back(int_key<Index>("ahbs.d_model", "projector output width", [](RunConfig& c) -> Index& { return c.ahbs.d_model; }));
  k.push_back(int_key<Index>("ahbs.state_dim", "scan state size per channel", [](RunConfig& c) -> Index& { return c.ahbs.state_dim; }));
  k.push_back(bool_key("ahbs.backward_scan", "scan each pathway in both directions", [](RunConfig& c) -> bool& { return c.ahbs.backward_scan; }));
  k.push_back(bool_key("ahbs.scan", "run the temporal pathways at all", [](RunConfig& c) -> bool& { return c.ahbs.scan; }));
  k.push_back(bool_key("ahbs.project_first", "project before scanning", [](RunConfig& c) -> bool& { return c.ahbs.project_first; }));
  k.push_back(int_key<Index>("model.layers", "language model blocks", [](RunConfig& c) -> Index& { return c.model.layers; }));
  k.push_back(int_key<Index>("model.d", "language model width", [](RunConfig& c) -> Index& { return c.model.d; }));
  k.push_back(int_key<Index>("model.expand", "block expansion factor E", [](RunConfig& c) -> Index& { return c.model.expand; }));
  k.push_back(int_key<Index>("model.conv_width", "causal conv width", [](RunConfig& c) -> Index& { return c.model.conv_width; }));
  k.push_back(int_key<Index>("model.state_dim", "scan state size Q", [](RunConfig& c) -> Index& { return c.model.state_dim; }));
  k.push_back(real_key("train.lr", "peak learning rate", [](RunConfig& c) -> double& { return c.train.lr; }));
  k.push_back(int_key<Index>("train.batch", "samples per optimizer step", [](RunConfig& c) -> Index& { return c.train.batch; }));
  k.push_back(int_key<Index>("train.epochs", "passes over the training split", [](RunConfig& c) -> Index& { return c.train.epochs; }));
  k.push_back(real_key("train.warmup_ratio", "fraction of steps spent in linear warmup", [](RunConfig& c) -> double& { return c.train.warmup_ratio; }));
  k.push_back(real_key("train.weight_decay", "decoupled weight decay on matrices", [](RunConfig& c) -> double& { return c.train.weight_decay; }));
  k.push_back(real_key("train.grad_clip", "global gradient norm clip, 0 disables", [](RunConfig& c) -> double& { return c.train.grad_clip; }));
  k.push_back(int_key<std::uint64_t>("train.seed", "initialisation and shuffling seed", [](RunConfig& c) -> std::uint64_t& { return c.train.seed; }));
  k.push_back(int_key<Index>("data.n_train", "training samples", [](RunConfig& c) -> Index& { return c.data.n_train; }));
  k.push_back(int_key<Index>("data.n_eval", "held-out samples", [](RunConfig& c) -> Index& { return c.data.n_eval; }));
  k.push_back(int_key<std::uint64_t>("data.seed", "dataset seed", [](RunConfig& c) -> std::uint64_t& { return c.data.seed; }));
  k.push_back(int_key<Index>("data.frames", "frames per clip T", [](RunConfig& c) -> Index& { return c.data.geometry.frames; }));
  k.push_back(int_key<Index>("data.height", "frame height", [](RunConfig& c) -> Index& { return c.data.geometry.height; }));
  k.push_back(int_key<Index>("data.width", "frame width", [](RunConfig& c) -> Index& { return c.data.geometry.width; }));
  k.push_back(int_key<Index>("data.patch", "encoder patch size", [](RunConfig& c) -> Index& { return c.data.patch; }));
  k.push_back(int_key<Index>("encoder.d_s", "first encoder width", [](RunConfig& c) -> Index& { return c.encoder.d_s; }));
  k.push_back(int_key<Index>("encoder.d_d", "second encoder width", [](RunConfig& c) -> Index& { return c.encoder.d_d; }));
  k.push_back(int_key<Index>("eval.max_len", "greedy decoding length limit", [](RunConfig& c) -> Index& { return c.eval_max_len; }));
  k.push_back({"bench.lengths", "comma-separated sequence lengths",
               [](const RunConfig& c) { return fmt_list(c.bench.lengths); },
               [](RunConfig& c, const std::string& v) { c.bench.lengths = parse_list("bench.lengths", v); }});
  k.push_back(int_key<Index>("bench.trials", "timed repetitions per length", [](RunConfig& c) -> Index& { return c.bench.trials; }));
  k.push_back(int_key<Index>("bench.warmup", "untimed repetitions per length", [](RunConfig& c) -> Index& { return c.bench.warmup; }));
  k.push_back(int_key<Index>("bench.d", "block width", [](RunConfig& c) -> Index& { return c.bench.d; }));
  k.push_back(int_key<Index>("bench.decode_tokens", "generated tokens per decode trial", [](RunConfig& c) -> Index& { return c.bench.decode_tokens; }));
  k.push_back(int_key<Index>("bench.decode_context", "context length before decoding", [](RunConfig& c) -> Index& { return c.bench.decode_context; }));
  k.push_back(int_key<Index>("bench.memory_steps", "decode steps for the memory report", [](RunConfig& c) -> Index& { return c.bench.memory_steps; }));
  k.push_back({"out.dir", "output directory", [](const RunConfig& c) { return c.out_dir; },
               [](RunConfig& c, const std::string& v) {
                 if (v.empty()) throw ConfigError("config key 'out.dir' must not be empty");
                 c.out_dir = v;
               }});
  return k;
}

}  // namespace

const std::vector<ConfigKey>& config_schema() {
  static const std::vector<ConfigKey> schema = build_schema();
  return schema;
}

void RunConfig::validate() const {
  ahbs.validate();
  model.validate();
  data.geometry.validate();
  auto need = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
  };
  need(ahbs.d_model == model.d, "ahbs.d_model (" + std::to_string(ahbs.d_model) +
                                    ") must equal model.d (" + std::to_string(model.d) + ")");
  need(train.lr > 0, "train.lr must be > 0");
  need(train.batch >= 1, "train.batch must be >= 1");
  need(train.epochs >= 0, "train.epochs must be >= 0");
  need(train.warmup_ratio >= 0 && train.warmup_ratio < 1, "train.warmup_ratio must be in [0, 1)");
  need(train.weight_decay >= 0, "train.weight_decay must be >= 0");
  need(train.grad_clip >= 0, "train.grad_clip must be >= 0");
  need(data.n_train >= 1 && data.n_eval >= 1, "data.n_train and data.n_eval must be >= 1");
  need(data.patch >= 1 && data.geometry.height % data.patch == 0 && data.geometry.width % data.patch == 0,
       "data.patch must divide data.height and data.width");
  need(encoder.d_s >= 1 && encoder.d_d >= 1, "encoder widths must be >= 1");
  need(eval_max_len >= 1, "eval.max_len must be >= 1");
  need(bench.trials >= 3, "bench.trials must be >= 3");
  need(bench.warmup >= 0, "bench.warmup must be >= 0");
  need(bench.d >= 1, "bench.d must be >= 1");
  need(bench.decode_tokens >= 1 && bench.decode_context >= 1, "bench decode sizes must be >= 1");
  need(bench.memory_steps >= 1, "bench.memory_steps must be >= 1");
  for (std::size_t i = 0; i < bench.lengths.size(); ++i) {
    need(bench.lengths[i] >= 1, "bench.lengths entries must be >= 1");
    need(i == 0 || bench.lengths[i] > bench.lengths[i - 1], "bench.lengths must be strictly increasing");
  }
  ahbs.validate_for(data.geometry.frames);
  const Index tokens = (data.geometry.height / data.patch) * (data.geometry.width / data.patch);
  spatial_pool_groups(tokens, ahbs.spatial_pool);
}

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& k : config_schema())
    if (k.name == key) {
      k.set(cfg, value);
      return;
    }
  throw ConfigError("unknown config key '" + key + "'");
}

void apply_override(RunConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
  set_config_value(cfg, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

namespace {

void parse_into(RunConfig& cfg, std::istream& in, const std::string& origin) {
  std::string line;
  long lineno = 0;
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    const std::string body = trim(hash == std::string::npos ? line : line.substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    const std::string where = origin + ":" + std::to_string(lineno);
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
    const std::string key = trim(body.substr(0, eq));
    if (!seen.insert(key).second) throw ConfigError(where + ": duplicate key '" + key + "'");
    try {
      set_config_value(cfg, key, trim(body.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(where + ": " + e.what());
    }
  }
}

}  // namespace

RunConfig parse_config(const std::string& text, const std::string& origin) {
  RunConfig cfg;
  std::istringstream in(text);
  parse_into(cfg, in, origin);
  return cfg;
}

void load_config_into(RunConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  parse_into(cfg, in, path);
}

RunConfig load_config(const std::string& path) {
  RunConfig cfg;
  load_config_into(cfg, path);
  return cfg;
}

std::string echo_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& k : config_schema()) out += k.name + " = " + k.get(cfg) + "\n";
  return out;
}

}  // namespace abmamba
