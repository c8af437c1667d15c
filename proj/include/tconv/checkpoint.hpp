#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "tconv/kvconfig.hpp"
#include "tconv/model.hpp"

namespace tconv {

/// Self-describing model checkpoint. All integers and floats little-endian.
///
///   offset  field
///   0       magic "TCNVCKPT" (8 bytes)
///   8       u32 format version (= 1)
///           u32 n, n bytes   model config, "key = value" lines sorted by key
///           u32 n, n bytes   run metadata (training settings), same text form
///           u64 center count K, f64 bandwidth_m, u64 source_count,
///           K x (f64 lon, f64 lat)
///           u32 tensor count T, then per tensor:
///             u32 n, n bytes name; u32 rank; rank x u64 extents;
///             product(extents) x f64 values, row-major
inline constexpr char kCheckpointMagic[8] = {'T', 'C', 'N', 'V', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct Checkpoint {
  ModelConfig config;
  KeyValues metadata;
  ClusterSet clusters;
  std::vector<NamedTensor> tensors;
};

Checkpoint snapshot(const Model& model, const KeyValues& metadata = {});
void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
/// Throws SchemaError on bad magic, unknown version or a malformed body.
Checkpoint read_checkpoint(std::istream& in);

void save_model(const std::string& path, const Model& model, const KeyValues& metadata = {});
Model load_model(const std::string& path, KeyValues* metadata = nullptr);
Model model_from(const Checkpoint& ckpt);

}  // namespace tconv
