#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "mwalign/corpus.hpp"
#include "mwalign/encoder.hpp"
#include "mwalign/objective.hpp"

namespace mwalign {

enum class OptimizerKind { sgd, adam };

std::string to_string(OptimizerKind kind);
OptimizerKind optimizer_from_string(const std::string& name);

struct TrainConfig {
    std::size_t epochs = 20;
    std::size_t patience = 10;
    std::size_t batch_size = 32;  // rows, not sentences
    double learning_rate = 1e-2;
    OptimizerKind optimizer = OptimizerKind::adam;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;
    // Global-norm gradient clipping; 0 disables it.
    double clip_norm = 10.0;
    std::uint64_t seed = 0;
    EncoderArch arch = EncoderArch::affine;
    std::size_t hidden = 0;
    AlignmentConfig alignment;

    void validate() const;
};

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double valid_loss = 0.0;
    std::size_t epochs_since_best = 0;
};

struct TrainState {
    EncoderParams params;
    std::vector<double> adam_m;
    std::vector<double> adam_v;
    std::size_t step = 0;
    std::size_t epoch = 0;
    double best_valid_loss = 0.0;
    std::size_t best_epoch = 0;
    std::size_t epochs_since_best = 0;
    // Entry 0 is the identity-initialized encoder before any update.
    std::vector<EpochRecord> history;
    std::size_t skipped_batches = 0;
};

struct TrainResult {
    EncoderParams params;  // restored from the best validation epoch
    TrainState state;
};

class TrainingDiverged : public std::runtime_error {
public:
    TrainingDiverged(std::size_t epoch, std::size_t batch)
        : std::runtime_error("non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch)),
          epoch(epoch),
          batch(batch) {}

    std::size_t epoch;
    std::size_t batch;
};

TrainResult train(const Corpus& train_rows, const Corpus& valid_rows, const TrainConfig& cfg);

// Mean total objective over fixed-order batches; no updates.
double evaluate_loss(const Corpus& rows, const EncoderParams& params, const TrainConfig& cfg);

void write_history_csv(const TrainState& state, const std::filesystem::path& path);

}  // namespace mwalign
