// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <stdexcept>

#include "json.hpp"
#include "upgan/trainer.hpp"

namespace upgan {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Checkpoint directory layout:
///   state.json          config, config hash, seed, progress counters, RNG
///                       state, epoch history, parameter layout
///   g<m>.upg, d<m>.upg  flat float32 weights of phase m in list order
///   g<m>.adam_m.upg …   Adam first/second moments, same layout
///   best.upg            generator weights at the best validation epoch
/// The directory is written next to its final location and swapped in, so
/// an interrupted save leaves the previous checkpoint intact.
void save_checkpoint(const std::filesystem::path& dir, const TrainState& state,
                     const nlohmann::json& extra = nlohmann::json::object());

TrainState load_checkpoint(const std::filesystem::path& dir);

/// The `extra` object stored at save time.
nlohmann::json checkpoint_extra(const std::filesystem::path& dir);

}  // namespace upgan
