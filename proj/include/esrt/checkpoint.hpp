#pragma once

#include <string>

#include "esrt/model.hpp"
#include "esrt/optim.hpp"

namespace esrt {

// Complete training state. save/load round-trips bit-identically: tensors
// are raw little-endian f32, floating-point scalars in the config block are
// serialized as hex floats.
struct Checkpoint {
    static constexpr char kMagic[5] = {'E', 'S', 'R', 'T', '1'};
    static constexpr uint32_t kVersion = 1;

    ModelConfig cfg;
    int64_t epoch = 0;
    ParamStore<float> params;
    AdamState<float> adam;
    std::string rng_state_hex;  // xoshiro256** state, 64 hex chars
    double lr0 = 2e-4;
    int64_t lr_half_epochs = 200;
};

void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace esrt
