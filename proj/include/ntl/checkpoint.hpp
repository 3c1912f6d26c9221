#pragma once

#include <optional>
#include <string>

#include "ntl/model.hpp"

namespace ntl {

/// Optional trailer carried by training checkpoints so a run can resume with
/// a bitwise-identical trajectory: optimizer moments, Adam step counter,
/// training step and batch-sampler RNG state.
struct TrainState {
    AdamState<float> adam;
    std::int64_t step = 0;
    std::string rng_state;  // mt19937_64 stream serialization
};

/// Binary container: magic `NTLF`, format version, ModelConfig, parameter
/// tensors in declaration order as 32-bit little-endian floats, each prefixed
/// by rank and dims. A flag byte then marks an optional TrainState trailer.
void save_checkpoint(const Parameters<float>& params, const ModelConfig& config,
                     const std::string& path, const TrainState* train_state = nullptr);

struct Checkpoint {
    Parameters<float> params;
    ModelConfig config;
    std::optional<TrainState> train_state;
};

Checkpoint load_checkpoint(const std::string& path);

}  // namespace ntl
