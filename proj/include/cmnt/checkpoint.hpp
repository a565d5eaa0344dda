#pragma once

#include "cmnt/model.hpp"

#include <filesystem>
#include <string>

namespace cmnt {

// Binary layout, little-endian:
//   "CMNT1"
//   int32 x 10: encoder_layers decoder_layers model_dim heads ff_dim
//               source_vocab target_vocab max_length integrator encoder
//   uint64: IEEE-754 bits of dropout
//   uint32: parameter count, then per parameter
//     uint32 name length, name bytes, uint32 rank, uint64 x rank dims, float64 x size values
std::string serialize_checkpoint(const Model& model);
Model deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace cmnt
