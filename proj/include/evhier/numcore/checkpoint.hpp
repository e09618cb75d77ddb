#pragma once

#include "evhier/numcore/adam.hpp"
#include "evhier/numcore/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace evhier::numcore {

// Named-tensor checkpoint, little-endian throughout:
//
//   "EVHCKPT\0"  u32 version  u32 metadata_len  metadata bytes (JSON)
//   u32 tensor_count
//   per tensor: u32 name_len  name  u32 ndim  u64 dims[ndim]  f64 values (row-major)
//   u8 has_optimizer
//   [f64 lr beta1 beta2 eps clip_norm  i64 step_count  u32 count
//    per moment: u32 name_len  name  f64 first[n]  f64 second[n]]
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct TensorRecord {
  std::string name;
  std::vector<std::uint64_t> shape;
  std::vector<double> values;  // row-major
};

struct OptimizerRecord {
  AdamConfig config;
  std::int64_t step_count = 0;
  std::vector<Adam::Moment> moments;
};

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  std::string metadata;
  std::vector<TensorRecord> tensors;
  std::optional<OptimizerRecord> optimizer;
};

TensorRecord to_record(const ParamTensor& p);

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

Checkpoint make_checkpoint(const std::string& metadata, const ParamRefs& params, const Adam* optimizer);

/// Copies values into `params` by name. Every parameter must be present
/// with a matching shape.
void load_parameters(const Checkpoint& ckpt, const ParamRefs& params);
/// Rebuilds optimizer state from the checkpoint; returns false if absent.
bool load_optimizer(const Checkpoint& ckpt, Adam& optimizer);

}  // namespace evhier::numcore
