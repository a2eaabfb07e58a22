#pragma once

#include <string>

#include "cbfn/adam.hpp"
#include "cbfn/network.hpp"

namespace cbfn {

// Binary checkpoint: magic "CBFN", format version, a length-prefixed
// key=value network-config block, one record per array (name, dtype tag,
// rank, dims, raw little-endian data), and a trailing CRC-32 of the
// payload. Round-trips parameters, batch-norm running state, Adam moments
// and step counter losslessly.
void save_checkpoint(const std::string& path, const Network& net,
                     const AdamState<float>& adam);

struct LoadedCheckpoint {
  Network net;
  AdamState<float> adam;
};

// Throws IoError on bad magic, unknown version, truncation, checksum
// mismatch, or arrays that do not match the embedded config.
LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace cbfn
