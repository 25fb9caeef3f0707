#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "intentr/model.hpp"
#include "intentr/vocab.hpp"

namespace intentr {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Binary checkpoint layout (all integers and floats little-endian):
///
///   "INTRCKPT"            8-byte magic
///   u32 version
///   u8 cell, i32 layers, i32 hidden, u8 skip, u8 share, u8 tie,
///   u8 embeddings_trainable, u8 use_price_variance, 6 x i32 field widths
///   u32 table count, then per table: u8 field, u64 rows, i32 width,
///   u64 vocabulary digest
///   f32 arrays: embedding tables in field order, then for each cell
///   parameter set w_input, w_hidden, b_input, b_hidden (if any), then
///   head_w, head_b
struct CheckpointHeader {
  ModelConfig config;
  std::vector<std::size_t> rows;
  std::vector<std::uint64_t> vocab_digests;
};

void write_checkpoint(std::ostream& out, const Model& model,
                      const std::vector<std::uint64_t>& vocab_digests);
void save_checkpoint(const std::string& path, const Model& model, const FeatureSpace& space);

/// Reads a checkpoint. When `space` is given, every stored vocabulary digest
/// must match it or IoError is thrown.
Model read_checkpoint(std::istream& in, const FeatureSpace* space = nullptr,
                      CheckpointHeader* header = nullptr);
Model load_checkpoint(const std::string& path, const FeatureSpace* space = nullptr);

/// Digest per active field, in Field order.
std::vector<std::uint64_t> vocab_digests(const FeatureSpace& space);

}  // namespace intentr
