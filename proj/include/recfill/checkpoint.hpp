#pragma once

#include <string>

#include "recfill/glm.hpp"

namespace recfill {

// Binary container: magic "RSLM", u32 version, u32 tensor count, then per
// tensor u16 name length + name, u8 dtype (0 = float32), u8 rank, rank×u64
// dims, raw little-endian row-major data; a u32-length-prefixed UTF-8 config
// record closes the file. Same parameters in, same bytes out.
void save_checkpoint(const Net<float>& net, const std::string& path);
Net<float> load_checkpoint(const std::string& path);

}  // namespace recfill
