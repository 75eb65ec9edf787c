#pragma once

#include <cstdint>
#include <string>

#include "tinyattn/model.hpp"

namespace tinyattn {

inline constexpr uint32_t kCheckpointVersion = 1;

struct LoadedCheckpoint {
  Model model;
  uint64_t seed = 0;
};

// Self-describing binary: magic + version + JSON header (configs and the
// named tensor index) + raw little-endian float64 payload in index order.
// Written atomically (temp file + rename); save -> load -> save is
// byte-identical.
void save_checkpoint(const std::string& path, Model& model, uint64_t seed);
LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace tinyattn
