#pragma once

#include <string>

#include "specadapt/corpus.hpp"
#include "specadapt/trainer.hpp"

namespace specadapt {

struct Checkpoint {
  TrainedModel model;
  LexiconResources lexicons;
};

// Binary, little-endian, bitwise-reproducible given identical training:
// both networks, optimizer state, feature statistics, the vocabulary hash
// and the lexicons used at feature time (so predict needs no extra files).
void save_checkpoint(const std::string& path, const TrainedModel& model,
                     const LexiconResources& lexicons);

// Throws InputError when the file cannot be opened and ModelStateError when
// its contents are not a valid checkpoint.
Checkpoint load_checkpoint(const std::string& path);

}  // namespace specadapt
