#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "specadapt/errors.hpp"

namespace specadapt {

// A sentence keeps its exact input text plus the token sequence derived from
// it. Tokens drive everything downstream; raw is kept for round-tripping.
struct Sentence {
  std::string raw;
  std::vector<std::string> tokens;
};

inline const std::string& detokenize(const Sentence& s) { return s.raw; }

enum class LabelKind { Binary, Real };
enum class DomainTag { Source, Target };

struct LabeledExample {
  Sentence sentence;
  LabelKind kind = LabelKind::Binary;
  double label = 0.0;  // binary labels stored as 0.0 / 1.0
  DomainTag domain = DomainTag::Source;
};

// General = 0, Specific = 1: the positive class is "specific" and the model
// head outputs its probability.
enum class BinaryLabel { General = 0, Specific = 1 };

// Whitespace split with punctuation characters peeled off as their own
// tokens. '.' and ',' between digits stay inside the token so numbers like
// "3.5" or "1,000" survive. Throws EmptySentence on blank input.
Sentence tokenize(std::string_view raw);

// Crowd rating 1..5 -> {0, 0.25, 0.5, 0.75, 1}.
double rescale_rating(int rating);

// 0-6 scale where higher means more general. > 3.5 -> General, < 2.5 ->
// Specific, the band between is excluded from training (nullopt).
std::optional<BinaryLabel> binarize_source_rating(double avg_rating);

struct IdfTable {
  std::unordered_map<std::string, double> values;
  double fallback = 0.0;  // used for tokens never seen in the corpus

  double lookup(const std::string& lowercased_token) const {
    const auto it = values.find(lowercased_token);
    return it == values.end() ? fallback : it->second;
  }
};

// One sentence = one document; idf(t) = max(0, ln(N / (1 + df))), fallback
// ln(N). Tokens are case-folded. Throws EmptyCorpus on an empty collection.
IdfTable compute_idf(std::span<const Sentence> corpus);

// Fixed-vocabulary word vectors; OOV lookups return the mean of all loaded
// vectors so they stay distinguishable from an explicit zero substitution.
class EmbeddingTable {
 public:
  // word2vec text format: header "V D", then "token v1 ... vD" per line.
  static EmbeddingTable load(const std::string& path);
  static EmbeddingTable from_vectors(
      int dimension, std::vector<std::pair<std::string, Eigen::VectorXd>> entries);

  int dim() const { return dim_; }
  std::size_t size() const { return vectors_.size(); }
  const Eigen::VectorXd& unk() const { return unk_; }

  // Exact match, then lowercased match, then the unk vector.
  const Eigen::VectorXd& lookup(const std::string& token) const;

  // Order-independent hash over (dimension, vocabulary); stored in
  // checkpoints so predict can refuse mismatched embedding files.
  std::uint64_t vocab_hash() const { return vocab_hash_; }

 private:
  EmbeddingTable() = default;
  void finalize();

  int dim_ = 0;
  std::unordered_map<std::string, Eigen::VectorXd> vectors_;
  Eigen::VectorXd unk_;
  std::uint64_t vocab_hash_ = 0;
};

// Lexical resources feeding the shallow features. Any of these may be empty
// (missing files degrade to zero-valued features with a one-time warning).
struct LexiconResources {
  std::unordered_set<std::string> stopwords;
  std::vector<std::vector<std::string>> connectives;  // tokenized phrases
  std::unordered_set<std::string> polarity_words;
  std::unordered_set<std::string> subjective_words;
  std::unordered_map<std::string, double> familiarity;
  std::unordered_map<std::string, double> imageability;
  IdfTable idf;
};

struct LexiconPaths {
  std::string stopwords;
  std::string connectives;
  std::string polarity;
  std::string subjective;
  std::string familiarity;
  std::string imageability;
  std::string idf;  // "token<TAB>idf" lines; empty -> computed from target corpus
};

// Loads whatever paths are non-empty; missing/unreadable files produce an
// empty resource and one warning line on stderr.
LexiconResources load_lexicons(const LexiconPaths& paths);

// File loaders for the corpus formats (TSV "label<TAB>text" and
// one-sentence-per-line). ParseError carries the 1-based line number.
std::vector<LabeledExample> load_labeled_tsv(const std::string& path,
                                             LabelKind expected,
                                             DomainTag domain);
std::vector<Sentence> load_unlabeled_lines(const std::string& path);

// Target mean/stddev of specificity used by the posterior regularizer.
// Defaults are the news reference distribution.
struct ReferenceDistribution {
  double mean = 0.417;
  double stddev = 0.227;

  void validate() const {
    if (!(stddev > 0.0) || !(mean > 0.0) || !(mean < 1.0)) {
      throw InputError("reference distribution requires mean in (0,1) and stddev > 0");
    }
  }
};

}  // namespace specadapt
