#include "specadapt/features.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>

namespace specadapt {

namespace {

std::string lowercase(const std::string& s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return out;
}

bool is_numeric_token(const std::string& tok) {
  // Integer or decimal with '.' or ',' separator, e.g. "7", "3.5", "1,000".
  bool digit_seen = false;
  bool sep_seen = false;
  for (std::size_t i = 0; i < tok.size(); ++i) {
    const unsigned char c = tok[i];
    if (std::isdigit(c)) {
      digit_seen = true;
    } else if ((c == '.' || c == ',') && !sep_seen && i > 0 && i + 1 < tok.size()) {
      sep_seen = true;
    } else {
      return false;
    }
  }
  return digit_seen;
}

bool is_punct_token(const std::string& tok) {
  return !tok.empty() &&
         std::all_of(tok.begin(), tok.end(), [](unsigned char c) {
           return std::ispunct(c) != 0;
         });
}

// UTF-8 code points: bytes that are not continuation bytes.
double codepoint_count(const std::string& tok) {
  std::size_t n = 0;
  for (const char c : tok) {
    if ((static_cast<unsigned char>(c) & 0xC0) != 0x80) ++n;
  }
  return static_cast<double>(n);
}

// Greedy left-to-right match of connective phrases; longest phrase wins
// because the lexicon is sorted by descending length.
double count_connectives(const std::vector<std::string>& lowered,
                         const std::vector<std::vector<std::string>>& phrases) {
  double count = 0;
  std::size_t i = 0;
  while (i < lowered.size()) {
    std::size_t advance = 1;
    for (const auto& phrase : phrases) {
      if (phrase.size() > lowered.size() - i) continue;
      if (std::equal(phrase.begin(), phrase.end(), lowered.begin() + i)) {
        ++count;
        advance = phrase.size();
        break;
      }
    }
    i += advance;
  }
  return count;
}

}  // namespace

FeatureVector extract_features(const Sentence& s, const LexiconResources& r) {
  if (s.tokens.empty()) {
    throw EmptySentence("cannot extract features from an empty sentence");
  }
  const double n = static_cast<double>(s.tokens.size());

  std::vector<std::string> lowered;
  lowered.reserve(s.tokens.size());
  for (const auto& tok : s.tokens) lowered.push_back(lowercase(tok));

  double numbers = 0, capitals = 0, puncts = 0, chars = 0;
  double stopwords = 0, polarity = 0, subjective = 0;
  double fam_sum = 0, fam_n = 0, img_sum = 0, img_n = 0;
  double idf_min = std::numeric_limits<double>::infinity();
  double idf_max = -std::numeric_limits<double>::infinity();
  double idf_sum = 0;

  for (std::size_t i = 0; i < s.tokens.size(); ++i) {
    const std::string& tok = s.tokens[i];
    const std::string& low = lowered[i];

    if (is_numeric_token(tok)) ++numbers;
    if (is_punct_token(tok)) ++puncts;
    for (const char c : tok) {
      if (std::isupper(static_cast<unsigned char>(c))) ++capitals;
    }
    chars += codepoint_count(tok);

    if (r.stopwords.contains(low)) ++stopwords;
    if (r.polarity_words.contains(low)) ++polarity;
    if (r.subjective_words.contains(low)) ++subjective;

    if (const auto it = r.familiarity.find(low); it != r.familiarity.end()) {
      fam_sum += it->second;
      ++fam_n;
    }
    if (const auto it = r.imageability.find(low); it != r.imageability.end()) {
      img_sum += it->second;
      ++img_n;
    }

    const double idf = r.idf.lookup(low);
    idf_min = std::min(idf_min, idf);
    idf_max = std::max(idf_max, idf);
    idf_sum += idf;
  }

  FeatureVector f;
  f[kTokens] = n;
  f[kNumbersNorm] = numbers / n;
  f[kCapitalsNorm] = capitals / n;
  f[kPunctNorm] = puncts / n;
  f[kAvgWordChars] = chars / n;
  f[kStopwordFrac] = stopwords / n;
  f[kConnectives] = count_connectives(lowered, r.connectives);
  f[kPolarityFrac] = polarity / n;
  f[kSubjectiveFrac] = subjective / n;
  f[kAvgFamiliarity] = fam_n > 0 ? fam_sum / fam_n : 0.0;
  f[kAvgImageability] = img_n > 0 ? img_sum / img_n : 0.0;
  f[kIdfMin] = idf_min;
  f[kIdfMax] = idf_max;
  f[kIdfAvg] = idf_sum / n;
  return f;
}

FeatureStats fit_feature_stats(std::span<const FeatureVector> batch) {
  if (batch.empty()) {
    throw EmptyBatch("feature standardization needs at least one vector");
  }
  FeatureStats stats;
  stats.mean.setZero();
  for (const FeatureVector& f : batch) stats.mean += f;
  stats.mean /= static_cast<double>(batch.size());

  FeatureVector var = FeatureVector::Zero();
  for (const FeatureVector& f : batch) {
    var += (f - stats.mean).cwiseProduct(f - stats.mean);
  }
  var /= static_cast<double>(batch.size());
  for (int i = 0; i < kNumFeatures; ++i) {
    stats.stddev[i] = var[i] > 0.0 ? std::sqrt(var[i]) : 1.0;
  }
  stats.fitted = true;
  return stats;
}

FeatureVector standardize_features(const FeatureVector& x, const FeatureStats& stats) {
  if (!stats.fitted) {
    throw ModelStateError("feature statistics missing; fit on training data first");
  }
  return (x - stats.mean).cwiseQuotient(stats.stddev);
}

void write_features_csv(std::ostream& out, std::span<const FeatureVector> rows) {
  for (int i = 0; i < kNumFeatures; ++i) {
    out << (i > 0 ? "," : "") << kFeatureNames[i];
  }
  out << "\n";
  for (const FeatureVector& f : rows) {
    for (int i = 0; i < kNumFeatures; ++i) {
      if (i > 0) out << ",";
      out << f[i];
    }
    out << "\n";
  }
}

}  // namespace specadapt
