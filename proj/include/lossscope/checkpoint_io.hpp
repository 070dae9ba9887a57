#pragma once

#include <string>

#include "lossscope/training.hpp"

namespace lossscope {

// Checkpoint file: one JSON header line (format version, model config, layout
// segments, epoch index, metrics) followed by the parameter array as
// little-endian 64-bit floats in layout order.
void write_checkpoint(const std::string& path, const ModelConfig& model, const Checkpoint& checkpoint);

struct LoadedCheckpoint {
    ModelConfig model;
    Checkpoint checkpoint;
};

LoadedCheckpoint read_checkpoint(const std::string& path);

// Run directory: epoch_0000.ckpt .. epoch_TTTT.ckpt plus run.json with
// provenance, config and the checkpoint list.
void write_run_dir(const std::string& dir, const TrainRun& run);
TrainRun read_run_dir(const std::string& dir);

std::string checkpoint_filename(int epoch_index);

}  // namespace lossscope
