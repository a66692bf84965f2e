#pragma once

#include <string>
#include <utility>
#include <vector>

#include "pcgain/net.hpp"

namespace pcgain {

// Self-describing model container: a JSON header (kind, producing config,
// layer shapes and activation tags per named net) followed by the raw
// little-endian 64-bit parameters, row-major, weights before biases, in
// header order. Bit-stable across save/load.
struct Checkpoint {
  std::string kind;         // "gain", "classifier", ...
  std::string config_json;  // opaque snapshot of the producing configuration
  std::vector<std::pair<std::string, nn::Net>> nets;

  const nn::Net& net(const std::string& name) const;
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// FNV-1a hex digest of the serialized bytes.
std::string checkpoint_hash(const Checkpoint& ckpt);

}  // namespace pcgain
