#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pathonet/net.hpp"

namespace pathonet {

// MDF1 model file, little-endian:
//   magic "MDF1" | u16 format=1 | u32 json_len + config JSON (UTF-8)
//   | u32 param_count | per parameter:
//       u16 name_len + name | u8 rank | u32 extents[rank] | f32 data[]
std::vector<std::uint8_t> serialize_model(const Model<float>& model);
Model<float> deserialize_model(const std::vector<std::uint8_t>& bytes, const std::string& what);
void save_model(const Model<float>& model, const std::string& path);
Model<float> load_model(const std::string& path);

} // namespace pathonet
