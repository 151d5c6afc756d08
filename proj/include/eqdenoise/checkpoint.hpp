#pragma once

#include <map>
#include <string>

#include "eqdenoise/tensor.hpp"

namespace eqd {

// Versioned binary container of named tensors, little-endian:
// magic "EQDN", u32 version, u32 count, then per tensor
// u32 name_len, name bytes, u32 rank, u32 dims..., float64 data.
void save_checkpoint(const std::string& path, const std::map<std::string, Tensor>& tensors);
std::map<std::string, Tensor> load_checkpoint(const std::string& path);

}  // namespace eqd
