#include "specadapt/filter.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <unordered_set>

namespace specadapt {

std::vector<DialoguePair> load_dialogue_tsv(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw InputError("cannot open dialogue corpus: " + path);
  }
  std::vector<DialoguePair> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw ParseError(path + ":" + std::to_string(line_no) +
                       ": expected context<TAB>response");
    }
    out.push_back({line.substr(0, tab), line.substr(tab + 1)});
  }
  if (out.empty()) {
    throw EmptyCorpus("no dialogue pairs in " + path);
  }
  return out;
}

void write_dialogue_tsv(std::ostream& out, std::span<const DialoguePair> pairs) {
  for (const DialoguePair& p : pairs) {
    out << p.context << "\t" << p.response << "\n";
  }
}

std::vector<DialoguePair> filter_least_specific(std::span<const DialoguePair> examples,
                                                std::span<const double> scores,
                                                std::size_t keep_n) {
  if (examples.size() != scores.size()) {
    throw DimensionMismatch("scores (" + std::to_string(scores.size()) +
                            ") misaligned with examples (" +
                            std::to_string(examples.size()) + ")");
  }
  if (keep_n > examples.size()) {
    throw InputError("keep_n exceeds corpus size");
  }
  std::vector<std::size_t> idx(examples.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return a < b;
  });
  idx.resize(keep_n);
  std::sort(idx.begin(), idx.end());

  std::vector<DialoguePair> kept;
  kept.reserve(keep_n);
  for (const std::size_t i : idx) kept.push_back(examples[i]);
  return kept;
}

std::vector<DialoguePair> filter_short(std::span<const DialoguePair> examples,
                                       std::size_t min_len) {
  std::vector<DialoguePair> kept;
  for (const DialoguePair& p : examples) {
    std::size_t len = 0;
    try {
      len = tokenize(p.response).tokens.size();
    } catch (const EmptySentence&) {
      len = 0;
    }
    if (len >= min_len) kept.push_back(p);
  }
  return kept;
}

double diversity(std::span<const std::vector<std::string>> token_seqs, int order) {
  if (order != 1 && order != 2) {
    throw InputError("diversity order must be 1 or 2");
  }
  std::unordered_set<std::string> types;
  std::size_t total = 0;
  for (const auto& seq : token_seqs) {
    if (seq.size() < static_cast<std::size_t>(order)) continue;
    for (std::size_t i = 0; i + order <= seq.size(); ++i) {
      std::string gram = seq[i];
      for (int k = 1; k < order; ++k) {
        gram.push_back('\x1f');  // unit separator; cannot occur in a token
        gram += seq[i + k];
      }
      types.insert(std::move(gram));
      ++total;
    }
  }
  if (total == 0) {
    throw EmptyCorpus("no n-grams of order " + std::to_string(order));
  }
  return static_cast<double>(types.size()) / static_cast<double>(total);
}

}  // namespace specadapt
