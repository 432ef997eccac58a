#pragma once

#include <Eigen/Core>
#include <array>
#include <ostream>
#include <span>
#include <string_view>

#include "specadapt/corpus.hpp"

namespace specadapt {

// Slot order of the handcrafted shallow feature vector.
enum FeatureSlot : int {
  kTokens = 0,
  kNumbersNorm,
  kCapitalsNorm,
  kPunctNorm,
  kAvgWordChars,
  kStopwordFrac,
  kConnectives,
  kPolarityFrac,
  kSubjectiveFrac,
  kAvgFamiliarity,
  kAvgImageability,
  kIdfMin,
  kIdfMax,
  kIdfAvg,
  kNumFeatures
};

inline constexpr std::array<std::string_view, kNumFeatures> kFeatureNames = {
    "n_tokens",        "n_numbers_norm",  "n_capitals_norm", "n_punct_norm",
    "avg_word_chars",  "stopword_frac",   "n_connectives",   "polarity_frac",
    "subjective_frac", "avg_familiarity", "avg_imageability", "idf_min",
    "idf_max",         "idf_avg"};

using FeatureVector = Eigen::Matrix<double, kNumFeatures, 1>;

// Deterministic shallow features over the token sequence. Count-style slots
// are normalized by token count; lexicon averages cover only tokens present
// in the lexicon (0 when none are). Throws EmptySentence for empty input.
FeatureVector extract_features(const Sentence& s, const LexiconResources& r);

// Per-slot standardization statistics, fit on the source training set and
// frozen into the checkpoint. Zero-variance slots standardize with stddev 1.
struct FeatureStats {
  FeatureVector mean = FeatureVector::Zero();
  FeatureVector stddev = FeatureVector::Ones();
  bool fitted = false;
};

FeatureStats fit_feature_stats(std::span<const FeatureVector> batch);

// (x - mean) / stddev per slot; ModelStateError if stats were never fitted.
FeatureVector standardize_features(const FeatureVector& x, const FeatureStats& stats);

// Debug/analysis export: header of slot names, one row per vector.
void write_features_csv(std::ostream& out, std::span<const FeatureVector> rows);

}  // namespace specadapt
