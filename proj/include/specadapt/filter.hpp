#pragma once

#include <span>
#include <string>
#include <vector>

#include "specadapt/corpus.hpp"

namespace specadapt {

// A (context, response) training example for dialogue preprocessing.
struct DialoguePair {
  std::string context;
  std::string response;
};

// TSV "context<TAB>response" loader/writer.
std::vector<DialoguePair> load_dialogue_tsv(const std::string& path);
void write_dialogue_tsv(std::ostream& out, std::span<const DialoguePair> pairs);

// Keeps the keep_n highest-scoring examples; ties at the cut are broken by
// original index (earlier wins). Order of kept examples is preserved.
std::vector<DialoguePair> filter_least_specific(std::span<const DialoguePair> examples,
                                                std::span<const double> scores,
                                                std::size_t keep_n);

// Keeps examples whose response has at least min_len tokens.
std::vector<DialoguePair> filter_short(std::span<const DialoguePair> examples,
                                       std::size_t min_len);

// Type-token ratio: distinct n-grams / total n-grams pooled over the corpus.
// order is 1 (unigrams) or 2 (bigrams).
double diversity(std::span<const std::vector<std::string>> token_seqs, int order);

}  // namespace specadapt
