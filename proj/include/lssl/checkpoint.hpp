#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "lssl/models.hpp"
#include "lssl/tensor.hpp"

namespace lssl {

// Binary container: 8-byte magic, a little-endian uint64 header length, a
// JSON header (version, mode, config echo, tensor directory), then the
// concatenated row-major float32 little-endian payloads. Values are stored in
// single precision, so a load returns each double rounded through float;
// save -> load -> save is byte-identical.
struct Checkpoint {
  int format_version = 1;
  std::string mode;
  std::map<std::string, std::string> config;
  std::vector<std::pair<std::string, Tensor>> tensors;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Snapshot of the bundle's named parameters (shared, not copied: the tensors
// still alias the bundle until saved).
Checkpoint checkpoint_from_bundle(const ModelBundle& bundle,
                                  const std::map<std::string, std::string>& config);

// Strict by-name restore: checkpoint tensors and bundle parameters must match
// one to one, with equal shapes.
void load_into_bundle(ModelBundle& bundle, const Checkpoint& ckpt);

}  // namespace lssl
