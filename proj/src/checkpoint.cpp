#include "specadapt/checkpoint.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <map>

namespace specadapt {

namespace {

constexpr char kMagic[8] = {'S', 'P', 'A', 'D', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}

  void u8(std::uint8_t v) { raw(&v, sizeof v); }
  void u32(std::uint32_t v) { raw(&v, sizeof v); }
  void u64(std::uint64_t v) { raw(&v, sizeof v); }
  void i64(std::int64_t v) { raw(&v, sizeof v); }
  void f64(double v) { raw(&v, sizeof v); }

  void str(const std::string& s) {
    u64(s.size());
    raw(s.data(), s.size());
  }

  void matrix(const Eigen::MatrixXd& m) {
    i64(m.rows());
    i64(m.cols());
    raw(m.data(), sizeof(double) * static_cast<std::size_t>(m.size()));
  }

 private:
  void raw(const void* p, std::size_t n) {
    out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  }

  std::ostream& out_;
};

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  std::uint8_t u8() { return get<std::uint8_t>(); }
  std::uint32_t u32() { return get<std::uint32_t>(); }
  std::uint64_t u64() { return get<std::uint64_t>(); }
  std::int64_t i64() { return get<std::int64_t>(); }
  double f64() { return get<double>(); }

  std::string str() {
    const std::uint64_t n = u64();
    if (n > (1ull << 32)) {
      throw ModelStateError("checkpoint string length is implausible");
    }
    std::string s(n, '\0');
    raw(s.data(), n);
    return s;
  }

  Eigen::MatrixXd matrix() {
    const std::int64_t rows = i64();
    const std::int64_t cols = i64();
    if (rows < 0 || cols < 0 || rows * cols > (1ll << 31)) {
      throw ModelStateError("checkpoint matrix shape is implausible");
    }
    Eigen::MatrixXd m(rows, cols);
    raw(m.data(), sizeof(double) * static_cast<std::size_t>(m.size()));
    return m;
  }

 private:
  template <class T>
  T get() {
    T v;
    raw(&v, sizeof v);
    return v;
  }

  void raw(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (!in_) {
      throw ModelStateError("truncated or corrupt checkpoint");
    }
  }

  std::istream& in_;
};

template <class Set>
std::vector<std::string> sorted_keys(const Set& s) {
  std::vector<std::string> keys(s.begin(), s.end());
  std::sort(keys.begin(), keys.end());
  return keys;
}

void write_word_set(Writer& w, const std::unordered_set<std::string>& s) {
  const auto keys = sorted_keys(s);
  w.u64(keys.size());
  for (const auto& k : keys) w.str(k);
}

std::unordered_set<std::string> read_word_set(Reader& r) {
  const std::uint64_t n = r.u64();
  std::unordered_set<std::string> s;
  s.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) s.insert(r.str());
  return s;
}

void write_word_map(Writer& w, const std::unordered_map<std::string, double>& m) {
  const std::map<std::string, double> sorted(m.begin(), m.end());
  w.u64(sorted.size());
  for (const auto& [k, v] : sorted) {
    w.str(k);
    w.f64(v);
  }
}

std::unordered_map<std::string, double> read_word_map(Reader& r) {
  const std::uint64_t n = r.u64();
  std::unordered_map<std::string, double> m;
  m.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    std::string k = r.str();
    const double v = r.f64();
    m.emplace(std::move(k), v);
  }
  return m;
}

void write_network(Writer& w, const NetworkConfig& c) {
  w.u32(static_cast<std::uint32_t>(c.embedding_dim));
  w.u32(static_cast<std::uint32_t>(c.feature_dim));
  w.u32(static_cast<std::uint32_t>(c.hidden_size));
  w.u32(static_cast<std::uint32_t>(c.mlp_width));
  w.u32(static_cast<std::uint32_t>(c.mlp_depth));
  w.f64(c.dropout);
  w.f64(c.bn_epsilon);
  w.f64(c.bn_momentum);
}

NetworkConfig read_network(Reader& r) {
  NetworkConfig c;
  c.embedding_dim = static_cast<int>(r.u32());
  c.feature_dim = static_cast<int>(r.u32());
  c.hidden_size = static_cast<int>(r.u32());
  c.mlp_width = static_cast<int>(r.u32());
  c.mlp_depth = static_cast<int>(r.u32());
  c.dropout = r.f64();
  c.bn_epsilon = r.f64();
  c.bn_momentum = r.f64();
  return c;
}

void write_config(Writer& w, const TrainingConfig& c) {
  w.str(to_string(c.variant));
  w.f64(c.alpha);
  w.f64(c.c1);
  w.f64(c.c2);
  w.f64(c.beta);
  w.u32(static_cast<std::uint32_t>(c.batch_size));
  w.u32(static_cast<std::uint32_t>(c.epochs));
  w.f64(c.learning_rate);
  w.f64(c.adam_beta1);
  w.f64(c.adam_beta2);
  w.f64(c.adam_epsilon);
  w.f64(c.noise.emb_gauss_std);
  w.f64(c.noise.feat_gauss_std);
  w.f64(c.noise.word_drop_prob);
  w.f64(c.noise.word_subst_prob);
  w.u8(c.noise.subst_mode == SubstMode::kZeroVector ? 1 : 0);
  w.f64(c.noise.target_perturb_fraction);
  w.f64(c.reference.mean);
  w.f64(c.reference.stddev);
  write_network(w, c.network);
  w.u64(c.seed);
}

TrainingConfig read_config(Reader& r) {
  TrainingConfig c;
  c.variant = variant_from_string(r.str());
  c.alpha = r.f64();
  c.c1 = r.f64();
  c.c2 = r.f64();
  c.beta = r.f64();
  c.batch_size = static_cast<int>(r.u32());
  c.epochs = static_cast<int>(r.u32());
  c.learning_rate = r.f64();
  c.adam_beta1 = r.f64();
  c.adam_beta2 = r.f64();
  c.adam_epsilon = r.f64();
  c.noise.emb_gauss_std = r.f64();
  c.noise.feat_gauss_std = r.f64();
  c.noise.word_drop_prob = r.f64();
  c.noise.word_subst_prob = r.f64();
  c.noise.subst_mode = r.u8() ? SubstMode::kZeroVector : SubstMode::kRandomVector;
  c.noise.target_perturb_fraction = r.f64();
  c.reference.mean = r.f64();
  c.reference.stddev = r.f64();
  c.network = read_network(r);
  c.seed = r.u64();
  return c;
}

void write_params(Writer& w, const ModelParameters& p) {
  w.u64(tensor_count(p));
  for_each_tensor(p, [&](const std::string&, const Eigen::MatrixXd& m, bool) {
    w.matrix(m);
  });
}

ModelParameters read_params(Reader& r, const NetworkConfig& net) {
  ModelParameters p;
  p.config = net;
  p.mlp.resize(static_cast<std::size_t>(net.mlp_depth));
  const std::uint64_t expect = r.u64();
  std::uint64_t seen = 0;
  for_each_tensor(p, [&](const std::string&, Eigen::MatrixXd& m, bool) {
    m = r.matrix();
    ++seen;
  });
  if (seen != expect) {
    throw ModelStateError("checkpoint tensor count does not match its config");
  }
  return p;
}

void write_moment_list(Writer& w, const std::vector<Eigen::MatrixXd>& list) {
  w.u64(list.size());
  for (const auto& m : list) w.matrix(m);
}

std::vector<Eigen::MatrixXd> read_moment_list(Reader& r) {
  const std::uint64_t n = r.u64();
  std::vector<Eigen::MatrixXd> list;
  list.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) list.push_back(r.matrix());
  return list;
}

}  // namespace

void save_checkpoint(const std::string& path, const TrainedModel& model,
                     const LexiconResources& lexicons) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw InputError("cannot write checkpoint: " + path);
  }
  Writer w(out);
  out.write(kMagic, sizeof kMagic);
  w.u32(kVersion);

  write_config(w, model.config);
  w.u64(model.vocab_hash);

  Eigen::MatrixXd stats_mean = model.feature_stats.mean;
  Eigen::MatrixXd stats_std = model.feature_stats.stddev;
  w.matrix(stats_mean);
  w.matrix(stats_std);
  w.u8(model.feature_stats.fitted ? 1 : 0);

  write_params(w, model.student);
  write_params(w, model.teacher);

  w.i64(model.adam_steps);
  write_moment_list(w, model.adam_m);
  write_moment_list(w, model.adam_v);

  write_word_set(w, lexicons.stopwords);
  w.u64(lexicons.connectives.size());
  for (const auto& phrase : lexicons.connectives) {
    w.u64(phrase.size());
    for (const auto& token : phrase) w.str(token);
  }
  write_word_set(w, lexicons.polarity_words);
  write_word_set(w, lexicons.subjective_words);
  write_word_map(w, lexicons.familiarity);
  write_word_map(w, lexicons.imageability);
  write_word_map(w, lexicons.idf.values);
  w.f64(lexicons.idf.fallback);

  out.flush();
  if (!out) {
    throw InputError("failed writing checkpoint: " + path);
  }
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw InputError("cannot open checkpoint: " + path);
  }
  Reader r(in);

  char magic[sizeof kMagic];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) {
    throw ModelStateError("not a checkpoint file: " + path);
  }
  if (r.u32() != kVersion) {
    throw ModelStateError("unsupported checkpoint version in " + path);
  }

  Checkpoint ck;
  TrainedModel& m = ck.model;
  m.config = read_config(r);
  m.vocab_hash = r.u64();

  const Eigen::MatrixXd stats_mean = r.matrix();
  const Eigen::MatrixXd stats_std = r.matrix();
  if (stats_mean.rows() != kNumFeatures || stats_mean.cols() != 1 ||
      stats_std.rows() != kNumFeatures || stats_std.cols() != 1) {
    throw ModelStateError("checkpoint feature statistics have a bad shape");
  }
  m.feature_stats.mean = stats_mean;
  m.feature_stats.stddev = stats_std;
  m.feature_stats.fitted = r.u8() != 0;

  m.student = read_params(r, m.config.network);
  m.teacher = read_params(r, m.config.network);

  m.adam_steps = r.i64();
  m.adam_m = read_moment_list(r);
  m.adam_v = read_moment_list(r);

  LexiconResources& lex = ck.lexicons;
  lex.stopwords = read_word_set(r);
  const std::uint64_t n_conn = r.u64();
  lex.connectives.reserve(n_conn);
  for (std::uint64_t i = 0; i < n_conn; ++i) {
    const std::uint64_t len = r.u64();
    std::vector<std::string> phrase;
    phrase.reserve(len);
    for (std::uint64_t j = 0; j < len; ++j) phrase.push_back(r.str());
    lex.connectives.push_back(std::move(phrase));
  }
  lex.polarity_words = read_word_set(r);
  lex.subjective_words = read_word_set(r);
  lex.familiarity = read_word_map(r);
  lex.imageability = read_word_map(r);
  lex.idf.values = read_word_map(r);
  lex.idf.fallback = r.f64();

  return ck;
}

}  // namespace specadapt
