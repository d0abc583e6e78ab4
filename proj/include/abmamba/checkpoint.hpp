#pragma once

// Checkpoint files: "ABMC" magic, u32 version, the resolved config echo, then
// named tensors as (u32 rows, u32 cols, little-endian f32 data).

#include "abmamba/core.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace abmamba {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct StoredTensor {
  std::string name;
  std::uint32_t rows = 0, cols = 0;
  std::vector<float> data;
};

struct CheckpointFile {
  std::string config_echo;
  std::vector<StoredTensor> tensors;
};

void write_checkpoint_file(const CheckpointFile& f, const std::string& path);
CheckpointFile read_checkpoint_file(const std::string& path);

template <typename Params>
void save_checkpoint(Params& params, const std::string& config_echo, const std::string& path) {
  CheckpointFile f;
  f.config_echo = config_echo;
  for (const auto& r : tensor_refs(params)) {
    StoredTensor t{r.name, std::uint32_t(r.rows), std::uint32_t(r.cols), {}};
    t.data.resize(std::size_t(r.size()));
    for (Index i = 0; i < r.size(); ++i) t.data[std::size_t(i)] = float(r.data[i]);
    f.tensors.push_back(std::move(t));
  }
  write_checkpoint_file(f, path);
}

// Fills `params`, which must already have the stored architecture; returns the
// stored config echo.
template <typename Params>
std::string load_checkpoint(Params& params, const std::string& path) {
  using S = typename Params::Scalar;
  const CheckpointFile f = read_checkpoint_file(path);
  auto refs = tensor_refs(params);
  if (refs.size() != f.tensors.size())
    throw DataError(path + ": checkpoint holds " + std::to_string(f.tensors.size()) +
                    " tensors, model expects " + std::to_string(refs.size()));
  for (std::size_t k = 0; k < refs.size(); ++k) {
    const auto& t = f.tensors[k];
    if (t.name != refs[k].name || Index(t.rows) != refs[k].rows || Index(t.cols) != refs[k].cols)
      throw DataError(path + ": tensor " + std::to_string(k) + " is '" + t.name + "' " +
                      std::to_string(t.rows) + "x" + std::to_string(t.cols) + ", model expects '" +
                      refs[k].name + "' " + std::to_string(refs[k].rows) + "x" +
                      std::to_string(refs[k].cols));
    for (Index i = 0; i < refs[k].size(); ++i) refs[k].data[i] = S(t.data[std::size_t(i)]);
  }
  return f.config_echo;
}

}  // namespace abmamba
