#pragma once

// Single-file model format. All integers and floats are little-endian.
//
//   "WRNN"  u32 version (1)
//   u32 cell kind, u32 state size, u32 input dim, u32 cond dim,
//   u32 head width, u32 flags (bit 0: subscale section present)
//   [subscale] u32 B, u32 F, u32 L,
//              u32 input channels, u32 residual, u32 conv, u32 kernel,
//              u32 layer count, u32 dilation per layer
//   u32 tensor count, then per tensor:
//     u32 name length, name bytes, u32 rows, u32 cols,
//     u8 width (16 or 32), u8 block rows, u8 block cols, u8 has mask,
//     [mask] u32 byte count, packed block bits (block-row-major, LSB first)
//     u64 value count, values
//
// Masked 16-bit tensors store only the retained blocks, in block-row order
// with each block column-major; everything else is stored densely.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wavernn/cell.h"
#include "wavernn/cond_net.h"
#include "wavernn/subscale.h"
#include "wavernn/trainer.h"

namespace wavernn {

inline constexpr std::uint32_t kModelFormatVersion = 1;

struct Model {
  CellParams cell;
  std::optional<SubscaleConfig> subscale;  // requires cond_net
  CondNet cond_net;

  static Model from_subscale(const SubscaleModel& m);
  SubscaleModel to_subscale() const;  // throws InputError without a subscale section

  void validate() const;  // throws InputError
};

std::vector<std::uint8_t> serialize_model(const Model& model);
// Throws FormatError on corrupt, truncated or inconsistent input.
Model parse_model(std::span<const std::uint8_t> bytes);

// Writes to a temporary file next to `path` and renames it into place.
void save_model(const Model& model, const std::string& path);
Model load_model(const std::string& path);

// Tensor summary of a model file without building the model.
struct TensorInfo {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  unsigned width = 32;
  BlockShape block{};
  bool masked = false;
  std::size_t stored_values = 0;
  std::size_t mask_bits = 0;
};
std::vector<TensorInfo> model_tensor_info(const Model& model);

// Masks implied by the storage of a cell: block-sparse matrices contribute
// their block masks, dense ones a fully retained mask. Empty when nothing
// is sparse.
std::optional<CellMasks> storage_masks(const CellParams& params);

// sparsity_report over the stored cell.
SparsityReport model_sparsity_report(const Model& model);

}  // namespace wavernn
