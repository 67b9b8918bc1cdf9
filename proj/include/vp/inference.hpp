#pragma once

// Checkpoint persistence and greedy caption generation.
//
// Checkpoint layout (all integers little-endian):
//   magic "VPCK" | u32 version | u64 header_len | header JSON
//   | u64 tensor_count | per tensor: u32 name_len, name, u32 elem_size,
//     u32 ndim, i64 dims..., raw payload
//   | u64 FNV-1a checksum over everything before it
// The header JSON carries the three configs and the tokenizer vocabulary.

#include "vp/model.hpp"

#include <string>

namespace vp {

struct checkpoint_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void save_checkpoint(ModelBundle& model, const std::string& path);
ModelBundle load_checkpoint(const std::string& path);

// Greedy decoding (argmax, ties broken by lowest token id) from the
// [image || prompt] prefix; stops at EOS or after max_new_tokens. Returns
// the detokenized response span only.
std::string generate_caption(ModelBundle& model, const ImageTensor& image,
                             const std::string& prompt, int max_new_tokens);

}  // namespace vp
