// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint directory layout:
//   manifest.json    config, step, vocabulary fingerprints, parameter list
//   vocab.txt        word vocabulary, one token per line
//   attributes.txt   attribute labels, one per line
//   <param>.bin      one blob per parameter
// Blob: 16-byte header ("PHRT", rank, dtype tag, reserved; u32 little-endian),
// rank u32 extents, then little-endian float32 values in row-major order.

#ifndef PHRED_CHECKPOINT_HPP
#define PHRED_CHECKPOINT_HPP

#include <filesystem>
#include <memory>

#include <json.hpp>

#include "phred/model.hpp"

namespace phred {

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

void write_tensor_blob(const std::filesystem::path& path, const Tensor& tensor);
// Returns a gradient-free tensor.
Tensor read_tensor_blob(const std::filesystem::path& path);

// Written to a sibling temporary directory first and renamed into place.
void save_checkpoint(const PhredModel& model, const std::filesystem::path& dir, long step,
                     const nlohmann::ordered_json& extra = {});

struct LoadedCheckpoint {
    std::unique_ptr<PhredModel> model;
    long step = 0;
    nlohmann::json manifest;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace phred

#endif  // PHRED_CHECKPOINT_HPP
