#pragma once

#include <string>

#include "hmdn/data.hpp"
#include "hmdn/model.hpp"

namespace hmdn {

/// Single-file binary checkpoint: magic, version, a JSON header describing
/// config, schema, dictionaries and the block shape table, then raw 64-bit
/// little-endian parameter data in census order. Round-trips bitwise.
void save_checkpoint(const Model& model, const Dictionaries& dicts,
                     const std::string& path);

struct Checkpoint {
  Model model;
  Dictionaries dictionaries;
};

Checkpoint load_checkpoint(const std::string& path);

}  // namespace hmdn
