#pragma once

#include <cstdint>
#include <vector>

namespace synth {

// One optimizer step as logged by every trainer.
struct TrainLogEntry {
    int64_t step = 0;
    float loss = 0.0f;
    float lr = 0.0f;
    double seconds = 0.0;      // wall-clock duration of the step
    float real_fraction = 1.0f;  // share of real-origin samples in the batch
};

using TrainLog = std::vector<TrainLogEntry>;

}  // namespace synth
