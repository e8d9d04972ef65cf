#pragma once

#include <cstdint>
#include <vector>

#include "pathonet/dataset.hpp"
#include "pathonet/net.hpp"

namespace pathonet {

struct TrainingConfig {
    float lr = 1e-4f;
    int batch_size = 256;
    int epochs = 1;
    std::uint64_t seed = 42;
    bool shuffle = true;
};

struct EpochStats {
    int epoch = 0;
    double loss = 0;
    double accuracy = 0;
};

/// Seeded mini-batch Adam training under softmax + binary cross-entropy.
/// Epoch shuffles are Fisher-Yates on one RNG stream; the last partial
/// batch is kept. Identical seeds reproduce bit-identical models.
std::vector<EpochStats> train(Model<float>& model, const PatchSet& dataset,
                              const TrainingConfig& cfg);

/// Positive-class probabilities for every patch, scored in batches.
std::vector<float> score_patches(const Model<float>& model, const PatchSet& patches,
                                 int batch_size = 256);

} // namespace pathonet
