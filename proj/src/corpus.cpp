#include "specadapt/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

namespace specadapt {

namespace {

bool is_ascii_space(char c) {
  return std::isspace(static_cast<unsigned char>(c)) != 0;
}

bool is_ascii_punct(char c) {
  return std::ispunct(static_cast<unsigned char>(c)) != 0;
}

bool is_ascii_digit(char c) {
  return std::isdigit(static_cast<unsigned char>(c)) != 0;
}

std::string lowercase(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return out;
}

std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 1469598103934665603ull) {
  for (const char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  return h;
}

[[noreturn]] void parse_fail(const std::string& path, std::size_t line_no,
                             const std::string& what) {
  throw ParseError(path + ":" + std::to_string(line_no) + ": " + what);
}

}  // namespace

Sentence tokenize(std::string_view raw) {
  Sentence s;
  s.raw.assign(raw);

  std::string current;
  const auto flush = [&] {
    if (!current.empty()) {
      s.tokens.push_back(std::move(current));
      current.clear();
    }
  };

  for (std::size_t i = 0; i < raw.size(); ++i) {
    const char c = raw[i];
    if (is_ascii_space(c)) {
      flush();
      continue;
    }
    if (is_ascii_punct(c)) {
      // Decimal point / thousands separator stays inside a number.
      const bool digit_sandwich =
          (c == '.' || c == ',') && !current.empty() &&
          is_ascii_digit(current.back()) && i + 1 < raw.size() &&
          is_ascii_digit(raw[i + 1]);
      if (!digit_sandwich) {
        flush();
        s.tokens.emplace_back(1, c);
        continue;
      }
    }
    current.push_back(c);
  }
  flush();

  if (s.tokens.empty()) {
    throw EmptySentence("sentence is empty after tokenization");
  }
  return s;
}

double rescale_rating(int rating) {
  if (rating < 1 || rating > 5) {
    throw InvalidRating("rating must be in 1..5, got " + std::to_string(rating));
  }
  return (rating - 1) / 4.0;
}

std::optional<BinaryLabel> binarize_source_rating(double avg_rating) {
  if (!(avg_rating >= 0.0) || !(avg_rating <= 6.0)) {
    throw InvalidRating("average rating must be in [0,6], got " +
                        std::to_string(avg_rating));
  }
  if (avg_rating > 3.5) return BinaryLabel::General;
  if (avg_rating < 2.5) return BinaryLabel::Specific;
  return std::nullopt;
}

IdfTable compute_idf(std::span<const Sentence> corpus) {
  if (corpus.empty()) {
    throw EmptyCorpus("idf needs at least one document");
  }
  std::unordered_map<std::string, std::size_t> df;
  std::unordered_set<std::string> seen;
  for (const Sentence& s : corpus) {
    seen.clear();
    for (const std::string& tok : s.tokens) {
      seen.insert(lowercase(tok));
    }
    for (const std::string& tok : seen) {
      ++df[tok];
    }
  }
  const double n = static_cast<double>(corpus.size());
  IdfTable table;
  table.fallback = std::log(n);
  table.values.reserve(df.size());
  for (const auto& [tok, count] : df) {
    table.values.emplace(tok, std::max(0.0, std::log(n / (1.0 + count))));
  }
  return table;
}

EmbeddingTable EmbeddingTable::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw InputError("cannot open embeddings file: " + path);
  }
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) {
    parse_fail(path, line_no, "missing header");
  }
  std::istringstream header(line);
  long long vocab = 0, dim = 0;
  if (!(header >> vocab >> dim) || vocab <= 0 || dim <= 0) {
    parse_fail(path, line_no, "header must be \"V D\" with positive counts");
  }

  EmbeddingTable table;
  table.dim_ = static_cast<int>(dim);
  table.vectors_.reserve(static_cast<std::size_t>(vocab));
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string token;
    if (!(row >> token)) {
      parse_fail(path, line_no, "missing token");
    }
    Eigen::VectorXd vec(dim);
    for (long long d = 0; d < dim; ++d) {
      if (!(row >> vec[d])) {
        parse_fail(path, line_no,
                   "expected " + std::to_string(dim) + " values for \"" + token + "\"");
      }
    }
    double extra;
    if (row >> extra) {
      throw DimensionMismatch(path + ":" + std::to_string(line_no) +
                              ": more than " + std::to_string(dim) + " values");
    }
    table.vectors_[token] = std::move(vec);
  }
  if (table.vectors_.empty()) {
    parse_fail(path, line_no, "no vectors in file");
  }
  table.finalize();
  return table;
}

EmbeddingTable EmbeddingTable::from_vectors(
    int dimension, std::vector<std::pair<std::string, Eigen::VectorXd>> entries) {
  EmbeddingTable table;
  table.dim_ = dimension;
  for (auto& [tok, vec] : entries) {
    if (vec.size() != dimension) {
      throw DimensionMismatch("embedding for \"" + tok + "\" has dimension " +
                              std::to_string(vec.size()));
    }
    table.vectors_[tok] = std::move(vec);
  }
  if (table.vectors_.empty()) {
    throw EmptyCorpus("embedding table needs at least one vector");
  }
  table.finalize();
  return table;
}

void EmbeddingTable::finalize() {
  unk_ = Eigen::VectorXd::Zero(dim_);
  for (const auto& [tok, vec] : vectors_) {
    unk_ += vec;
  }
  unk_ /= static_cast<double>(vectors_.size());

  // XOR of per-token hashes: independent of map iteration order.
  std::uint64_t h = fnv1a(std::to_string(dim_));
  for (const auto& [tok, vec] : vectors_) {
    h ^= fnv1a(tok);
  }
  vocab_hash_ = h;
}

const Eigen::VectorXd& EmbeddingTable::lookup(const std::string& token) const {
  auto it = vectors_.find(token);
  if (it != vectors_.end()) return it->second;
  it = vectors_.find(lowercase(token));
  if (it != vectors_.end()) return it->second;
  return unk_;
}

namespace {

void warn_missing(const std::string& what, const std::string& path) {
  std::cerr << "warning: " << what << " lexicon not loaded (" << path
            << "); feature falls back to 0\n";
}

bool load_token_set(const std::string& path, std::unordered_set<std::string>* out) {
  std::ifstream in(path);
  if (!in) return false;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    out->insert(lowercase(line));
  }
  return true;
}

bool load_scored(const std::string& path,
                 std::unordered_map<std::string, double>* out) {
  std::ifstream in(path);
  if (!in) return false;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      parse_fail(path, line_no, "expected token<TAB>score");
    }
    try {
      const double score = std::stod(line.substr(tab + 1));
      if (!std::isfinite(score)) {
        parse_fail(path, line_no, "score is not finite");
      }
      (*out)[lowercase(line.substr(0, tab))] = score;
    } catch (const std::invalid_argument&) {
      parse_fail(path, line_no, "unparseable score");
    }
  }
  return true;
}

bool load_connectives(const std::string& path,
                      std::vector<std::vector<std::string>>* out) {
  std::ifstream in(path);
  if (!in) return false;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream row(lowercase(line));
    std::vector<std::string> phrase;
    std::string tok;
    while (row >> tok) phrase.push_back(tok);
    if (!phrase.empty()) out->push_back(std::move(phrase));
  }
  // Longest first so matching is greedy.
  std::stable_sort(out->begin(), out->end(),
                   [](const auto& a, const auto& b) { return a.size() > b.size(); });
  return true;
}

}  // namespace

LexiconResources load_lexicons(const LexiconPaths& paths) {
  LexiconResources r;
  if (!paths.stopwords.empty() && !load_token_set(paths.stopwords, &r.stopwords))
    warn_missing("stopword", paths.stopwords);
  if (!paths.connectives.empty() && !load_connectives(paths.connectives, &r.connectives))
    warn_missing("connective", paths.connectives);
  if (!paths.polarity.empty() && !load_token_set(paths.polarity, &r.polarity_words))
    warn_missing("polarity", paths.polarity);
  if (!paths.subjective.empty() && !load_token_set(paths.subjective, &r.subjective_words))
    warn_missing("subjectivity", paths.subjective);
  if (!paths.familiarity.empty() && !load_scored(paths.familiarity, &r.familiarity))
    warn_missing("familiarity", paths.familiarity);
  if (!paths.imageability.empty() && !load_scored(paths.imageability, &r.imageability))
    warn_missing("imageability", paths.imageability);
  if (!paths.idf.empty()) {
    std::unordered_map<std::string, double> idf;
    if (!load_scored(paths.idf, &idf)) {
      warn_missing("idf", paths.idf);
    } else {
      for (const auto& [tok, v] : idf) {
        if (v < 0.0) {
          throw ParseError(paths.idf + ": idf value for \"" + tok + "\" is negative");
        }
      }
      double max_idf = 0.0;
      for (const auto& [tok, v] : idf) max_idf = std::max(max_idf, v);
      r.idf.values = std::move(idf);
      // Unseen tokens are at least as rare as anything in the table.
      r.idf.fallback = max_idf;
    }
  }
  return r;
}

std::vector<LabeledExample> load_labeled_tsv(const std::string& path,
                                             LabelKind expected,
                                             DomainTag domain) {
  std::ifstream in(path);
  if (!in) {
    throw InputError("cannot open labeled corpus: " + path);
  }
  std::vector<LabeledExample> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      parse_fail(path, line_no, "expected label<TAB>text");
    }
    double label;
    try {
      label = std::stod(line.substr(0, tab));
    } catch (const std::exception&) {
      parse_fail(path, line_no, "unparseable label");
    }
    if (expected == LabelKind::Binary) {
      if (label != 0.0 && label != 1.0) {
        parse_fail(path, line_no, "binary corpus requires labels 0 or 1");
      }
    } else if (!(label >= 0.0 && label <= 1.0)) {
      parse_fail(path, line_no, "real-valued label must be in [0,1]");
    }
    const std::string text = line.substr(tab + 1);
    try {
      out.push_back({tokenize(text), expected, label, domain});
    } catch (const EmptySentence&) {
      parse_fail(path, line_no, "empty sentence text");
    }
  }
  if (out.empty()) {
    throw EmptyCorpus("no examples in " + path);
  }
  return out;
}

std::vector<Sentence> load_unlabeled_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw InputError("cannot open corpus: " + path);
  }
  std::vector<Sentence> out;
  std::string line;
  std::size_t skipped = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    try {
      out.push_back(tokenize(line));
    } catch (const EmptySentence&) {
      ++skipped;
    }
  }
  if (skipped > 0) {
    std::cerr << "warning: skipped " << skipped << " empty line(s) in " << path
              << "\n";
  }
  if (out.empty()) {
    throw EmptyCorpus("no sentences in " + path);
  }
  return out;
}

}  // namespace specadapt
