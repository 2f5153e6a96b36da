#pragma once

#include "common.hpp"
#include "trainer.hpp"

#include <string>

namespace lipvae {

// Checkpoint files: a 4-byte little-endian JSON length, the JSON envelope
// (format tag "lipvae-ckpt-1", model and training configuration, optimizer
// step, history, and a tensor table), then all tensors as raw little-endian
// doubles at the offsets the table records.  Round trips are bitwise exact.
inline constexpr const char* kCheckpointFormat = "lipvae-ckpt-1";

void save_checkpoint(const TrainedVae& t, const std::string& path);
TrainedVae load_checkpoint(const std::string& path);

// The serialized byte image, exposed so callers can compare runs without
// touching the filesystem.
std::string checkpoint_bytes(const TrainedVae& t);

}  // namespace lipvae
