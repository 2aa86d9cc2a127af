#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "egocast/nn.hpp"

namespace egocast {

// Binary checkpoint: 8-byte magic, little-endian uint32 manifest length,
// JSON manifest, then every tensor's values as little-endian float64 in
// manifest order. Saving a loaded checkpoint reproduces the bytes exactly.
struct Checkpoint {
  int version = 1;
  std::string kind;       // "estimator" | "forecaster"
  nlohmann::json config;  // echo of the producing config
  long step = 0;
  std::vector<std::pair<std::string, Tensor>> tensors;
};

void save_checkpoint(const std::string& path, const std::string& kind,
                     const nlohmann::json& config, long step, std::span<const NamedParam> params);

Checkpoint load_checkpoint(const std::string& path);

// Copies checkpoint values into the live parameters. Count, names, order
// and shapes must match exactly.
void restore_parameters(const Checkpoint& checkpoint, std::span<NamedParam> params);

// Fails unless the checkpoint was produced by `kind` with exactly this
// config echo.
void require_checkpoint_config(const Checkpoint& checkpoint, const std::string& kind,
                               const nlohmann::json& expected_config);

}  // namespace egocast
