#pragma once

// Run configuration: dotted `key = value` text files validated against a fixed
// schema, with command-line overrides.

#include "abmamba/ahbs.hpp"
#include "abmamba/model.hpp"
#include "abmamba/synthdata.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace abmamba {

struct TrainConfig {
  double lr = 1e-3;
  Index batch = 32;
  Index epochs = 20;
  double warmup_ratio = 0.03;
  double weight_decay = 0.03;
  double grad_clip = 1.0;
  std::uint64_t seed = 0;
};

struct DataConfig {
  Index n_train = 2000;
  Index n_eval = 200;
  std::uint64_t seed = 0;
  FrameGeometry geometry;
  Index patch = 8;
};

struct EncoderConfig {
  Index d_s = 48;
  Index d_d = 32;
};

struct BenchConfig {
  std::vector<Index> lengths{512, 1024, 2048, 4096, 8192};
  Index trials = 5;
  Index warmup = 1;
  Index d = 128;
  Index decode_tokens = 512;
  Index decode_context = 4096;
  Index memory_steps = 100;
};

struct RunConfig {
  AhbsConfig ahbs;
  ModelConfig model;
  TrainConfig train;
  DataConfig data;
  EncoderConfig encoder;
  BenchConfig bench;
  Index eval_max_len = 12;
  std::string out_dir = "runs/default";

  // Checks every key's range and the cross-module constraints.
  void validate() const;
};

struct ConfigKey {
  std::string name;
  std::string help;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

const std::vector<ConfigKey>& config_schema();

// Sets one key; unknown keys and unparsable values are ConfigErrors.
void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value);
// "key=value".
void apply_override(RunConfig& cfg, const std::string& assignment);

RunConfig parse_config(const std::string& text, const std::string& origin = "<string>");
RunConfig load_config(const std::string& path);
void load_config_into(RunConfig& cfg, const std::string& path);

// Every key in schema order, one `key = value` line each.
std::string echo_config(const RunConfig& cfg);

}  // namespace abmamba
