#include <CLI11.hpp>

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "specadapt/checkpoint.hpp"
#include "specadapt/corpus.hpp"
#include "specadapt/filter.hpp"
#include "specadapt/metrics.hpp"
#include "specadapt/trainer.hpp"

namespace {

using namespace specadapt;

std::string fmt_double(double v) {
  std::array<char, 32> buf;
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

std::string fmt_score(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

// Output helper: writes to the given path, or stdout when the path is empty.
class OutputTarget {
 public:
  explicit OutputTarget(const std::string& path) {
    if (!path.empty()) {
      file_.open(path);
      if (!file_) {
        throw InputError("cannot write output file: " + path);
      }
    }
  }
  std::ostream& stream() { return file_.is_open() ? file_ : std::cout; }
  bool to_file() const { return file_.is_open(); }

 private:
  std::ofstream file_;
};

struct TrainOpts {
  std::string variant = "se_ad_meanstd";
  std::string source, target, dev, embeddings;
  std::string stopwords, connectives, polarity, subjective, familiarity,
      imageability, idf;
  std::string checkpoint = "model.ckpt";
  double alpha = 0.999, c1 = 0.0, c2 = 0.0, beta = 1.0;
  int batch_size = 32, epochs = 0;
  double lr = 1e-4;
  std::uint64_t seed = 2020;
  int hidden_size = 100, mlp_width = 100, mlp_depth = 3;
  double dropout = 0.5;
  double emb_noise_std = 0.1, feat_noise_std = 0.2;
  double word_drop_prob = 0.15, word_subst_prob = 0.15, perturb_fraction = 0.5;
  std::string subst_mode = "random_vector";
  double ref_mean = 0.417, ref_stddev = 0.227;
};

// Parses "sentence<TAB>score" rows (predict output); a line holding a bare
// number is accepted too.
std::vector<double> load_scores(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw InputError("cannot open predictions file: " + path);
  }
  std::vector<double> scores;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.rfind('\t');
    const std::string field =
        tab == std::string::npos ? line : line.substr(tab + 1);
    double v = 0.0;
    const char* begin = field.data();
    const char* end = begin + field.size();
    const auto res = std::from_chars(begin, end, v);
    if (res.ec != std::errc() || res.ptr != end) {
      throw ParseError(path + ":" + std::to_string(line_no) +
                       ": cannot parse score '" + field + "'");
    }
    scores.push_back(v);
  }
  if (scores.empty()) {
    throw EmptyCorpus("no scores in " + path);
  }
  return scores;
}

void write_frozen_config(const std::string& path, const TrainOpts& o,
                         const TrainingConfig& cfg) {
  std::ofstream out(path);
  if (!out) {
    throw InputError("cannot write config file: " + path);
  }
  const auto kv = [&](const char* key, const std::string& value) {
    if (!value.empty()) out << key << " = \"" << value << "\"\n";
  };
  const auto kn = [&](const char* key, double value) {
    out << key << " = " << fmt_double(value) << "\n";
  };
  out << "[train]\n";
  kv("variant", to_string(cfg.variant));
  kv("source", o.source);
  kv("target", o.target);
  kv("dev", o.dev);
  kv("embeddings", o.embeddings);
  kv("stopwords", o.stopwords);
  kv("connectives", o.connectives);
  kv("polarity", o.polarity);
  kv("subjective", o.subjective);
  kv("familiarity", o.familiarity);
  kv("imageability", o.imageability);
  kv("idf", o.idf);
  kn("alpha", cfg.alpha);
  kn("c1", cfg.c1);
  kn("c2", cfg.c2);
  kn("beta", cfg.beta);
  out << "batch-size = " << cfg.batch_size << "\n";
  out << "epochs = " << cfg.epochs << "\n";
  kn("lr", cfg.learning_rate);
  out << "seed = " << cfg.seed << "\n";
  out << "hidden-size = " << cfg.network.hidden_size << "\n";
  out << "mlp-width = " << cfg.network.mlp_width << "\n";
  out << "mlp-depth = " << cfg.network.mlp_depth << "\n";
  kn("dropout", cfg.network.dropout);
  kn("emb-noise-std", cfg.noise.emb_gauss_std);
  kn("feat-noise-std", cfg.noise.feat_gauss_std);
  kn("word-drop-prob", cfg.noise.word_drop_prob);
  kn("word-subst-prob", cfg.noise.word_subst_prob);
  kv("subst-mode", cfg.noise.subst_mode == SubstMode::kZeroVector
                       ? "zero_vector"
                       : "random_vector");
  kn("perturb-fraction", cfg.noise.target_perturb_fraction);
  kn("ref-mean", cfg.reference.mean);
  kn("ref-stddev", cfg.reference.stddev);
}

int run_train(const CLI::App& cmd, const TrainOpts& o) {
  TrainingConfig cfg = TrainingConfig::for_variant(variant_from_string(o.variant));
  const auto set = [&](const char* flag) { return cmd.count(flag) > 0; };
  if (set("--alpha")) cfg.alpha = o.alpha;
  if (set("--c1")) cfg.c1 = o.c1;
  if (set("--c2")) cfg.c2 = o.c2;
  if (set("--beta")) cfg.beta = o.beta;
  if (set("--batch-size")) cfg.batch_size = o.batch_size;
  if (set("--epochs")) cfg.epochs = o.epochs;
  if (set("--lr")) cfg.learning_rate = o.lr;
  cfg.seed = o.seed;
  if (set("--hidden-size")) cfg.network.hidden_size = o.hidden_size;
  if (set("--mlp-width")) cfg.network.mlp_width = o.mlp_width;
  if (set("--mlp-depth")) cfg.network.mlp_depth = o.mlp_depth;
  if (set("--dropout")) cfg.network.dropout = o.dropout;
  if (set("--emb-noise-std")) cfg.noise.emb_gauss_std = o.emb_noise_std;
  if (set("--feat-noise-std")) cfg.noise.feat_gauss_std = o.feat_noise_std;
  if (set("--word-drop-prob")) cfg.noise.word_drop_prob = o.word_drop_prob;
  if (set("--word-subst-prob")) cfg.noise.word_subst_prob = o.word_subst_prob;
  if (set("--subst-mode")) {
    cfg.noise.subst_mode = o.subst_mode == "zero_vector"
                               ? SubstMode::kZeroVector
                               : SubstMode::kRandomVector;
  }
  if (set("--perturb-fraction")) {
    cfg.noise.target_perturb_fraction = o.perturb_fraction;
  }
  if (set("--ref-mean")) cfg.reference.mean = o.ref_mean;
  if (set("--ref-stddev")) cfg.reference.stddev = o.ref_stddev;

  const EmbeddingTable embeddings = EmbeddingTable::load(o.embeddings);
  LexiconResources lexicons = load_lexicons(
      {o.stopwords, o.connectives, o.polarity, o.subjective, o.familiarity,
       o.imageability, o.idf});

  const std::vector<LabeledExample> source =
      load_labeled_tsv(o.source, LabelKind::Binary, DomainTag::Source);
  std::vector<Sentence> target;
  if (!o.target.empty()) {
    target = load_unlabeled_lines(o.target);
  }
  if (lexicons.idf.values.empty()) {
    // No idf lexicon given: fit document frequencies on the corpus itself,
    // preferring the target domain the model will be scoring.
    if (!target.empty()) {
      lexicons.idf = compute_idf(target);
    } else {
      std::vector<Sentence> sentences;
      sentences.reserve(source.size());
      for (const LabeledExample& ex : source) sentences.push_back(ex.sentence);
      lexicons.idf = compute_idf(sentences);
    }
  }

  DevSet dev;
  const bool have_dev = !o.dev.empty();
  if (have_dev) {
    for (LabeledExample& ex :
         load_labeled_tsv(o.dev, LabelKind::Real, DomainTag::Target)) {
      dev.sentences.push_back(std::move(ex.sentence));
      dev.labels.push_back(ex.label);
    }
  }

  Trainer trainer(cfg, embeddings, lexicons, source, target);

  const std::string log_path = o.checkpoint + ".log.csv";
  std::ofstream log(log_path);
  if (!log) {
    throw InputError("cannot write training log: " + log_path);
  }
  const TrainOutcome outcome = trainer.run(have_dev ? &dev : nullptr, &log);

  save_checkpoint(o.checkpoint, outcome.model, lexicons);
  write_frozen_config(o.checkpoint + ".config", o, cfg);

  std::cout << "checkpoint: " << o.checkpoint << "\n";
  std::cout << "log: " << log_path << "\n";
  if (!outcome.epochs.empty()) {
    const EpochLog& last = outcome.epochs.back();
    std::cout << "final epoch " << last.epoch << ": total=" << fmt_double(last.total);
    if (have_dev) {
      std::cout << " dev_spearman=" << fmt_double(last.dev_spearman)
                << " dev_tau=" << fmt_double(last.dev_tau)
                << " dev_mae=" << fmt_double(last.dev_mae);
    }
    std::cout << "\n";
  }
  return 0;
}

int run_predict(const std::string& checkpoint_path,
                const std::string& embeddings_path, const std::string& input,
                const std::string& output) {
  const Checkpoint ck = load_checkpoint(checkpoint_path);
  const EmbeddingTable embeddings = EmbeddingTable::load(embeddings_path);
  const std::vector<Sentence> sentences = load_unlabeled_lines(input);
  const std::vector<double> scores =
      predict(ck.model, sentences, embeddings, ck.lexicons);
  OutputTarget out(output);
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    out.stream() << detokenize(sentences[i]) << "\t" << fmt_score(scores[i])
                 << "\n";
  }
  return 0;
}

int run_eval(const std::string& pred_path, const std::string& gold_path,
             const std::string& output) {
  const std::vector<double> pred = load_scores(pred_path);
  std::vector<double> gold;
  for (const LabeledExample& ex :
       load_labeled_tsv(gold_path, LabelKind::Real, DomainTag::Target)) {
    gold.push_back(ex.label);
  }
  if (pred.size() != gold.size()) {
    throw InputError("cannot join: " + std::to_string(pred.size()) +
                     " predictions vs " + std::to_string(gold.size()) +
                     " gold rows");
  }
  const double rho = spearman(pred, gold);
  const double tau = kendall_tau(pred, gold);
  const double err = mae(pred, gold);

  const auto report = [&](std::ostream& os) {
    os << "spearman\t" << fmt_score(rho) << "\t" << pred.size() << "\n";
    os << "kendall_tau\t" << fmt_score(tau) << "\t" << pred.size() << "\n";
    os << "mae\t" << fmt_score(err) << "\t" << pred.size() << "\n";
  };
  report(std::cout);
  if (!output.empty()) {
    OutputTarget out(output);
    report(out.stream());
  }
  return 0;
}

int run_baseline_length(const std::string& input, const std::string& output) {
  const std::vector<Sentence> sentences = load_unlabeled_lines(input);
  std::vector<std::size_t> lengths;
  lengths.reserve(sentences.size());
  for (const Sentence& s : sentences) lengths.push_back(s.tokens.size());
  const auto [lo_it, hi_it] = std::minmax_element(lengths.begin(), lengths.end());
  const double lo = static_cast<double>(*lo_it);
  const double hi = static_cast<double>(*hi_it);
  OutputTarget out(output);
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    const double score =
        hi > lo ? (static_cast<double>(lengths[i]) - lo) / (hi - lo) : 0.5;
    out.stream() << detokenize(sentences[i]) << "\t" << fmt_score(score) << "\n";
  }
  return 0;
}

double diversity_or_nan(const std::vector<std::vector<std::string>>& seqs,
                        int order) {
  try {
    return diversity(seqs, order);
  } catch (const EmptyCorpus&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

int run_filter(const std::string& corpus_path, const std::string& mode,
               std::size_t min_len, std::size_t keep_n, bool keep_n_set,
               const std::string& checkpoint_path,
               const std::string& embeddings_path, const std::string& output,
               const std::string& report_path) {
  const std::vector<DialoguePair> pairs = load_dialogue_tsv(corpus_path);

  std::vector<DialoguePair> kept;
  if (mode == "short") {
    kept = filter_short(pairs, min_len);
  } else {
    if (!keep_n_set) {
      throw InputError("--keep-n is required with --mode general");
    }
    if (checkpoint_path.empty() || embeddings_path.empty()) {
      throw InputError(
          "--checkpoint and --embeddings are required with --mode general");
    }
    const Checkpoint ck = load_checkpoint(checkpoint_path);
    const EmbeddingTable embeddings = EmbeddingTable::load(embeddings_path);

    // Score every response; blank responses cannot be scored and count as
    // least specific.
    std::vector<double> scores(pairs.size(), 0.0);
    std::vector<Sentence> scorable;
    std::vector<std::size_t> scorable_idx;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      try {
        scorable.push_back(tokenize(pairs[i].response));
        scorable_idx.push_back(i);
      } catch (const EmptySentence&) {
      }
    }
    if (!scorable.empty()) {
      const std::vector<double> s =
          predict(ck.model, scorable, embeddings, ck.lexicons);
      for (std::size_t j = 0; j < s.size(); ++j) scores[scorable_idx[j]] = s[j];
    }
    kept = filter_least_specific(pairs, scores, keep_n);
  }

  OutputTarget out(output);
  write_dialogue_tsv(out.stream(), kept);

  const auto tokens_of = [](const std::vector<DialoguePair>& ps) {
    std::vector<std::vector<std::string>> seqs;
    seqs.reserve(ps.size());
    for (const DialoguePair& p : ps) {
      try {
        seqs.push_back(tokenize(p.response).tokens);
      } catch (const EmptySentence&) {
        seqs.emplace_back();
      }
    }
    return seqs;
  };
  const auto kept_tokens = tokens_of(kept);
  std::ostringstream report;
  report << "kept_n\tremoved_n\tunigram_diversity\tbigram_diversity\n";
  report << kept.size() << "\t" << pairs.size() - kept.size() << "\t"
         << fmt_score(diversity_or_nan(kept_tokens, 1)) << "\t"
         << fmt_score(diversity_or_nan(kept_tokens, 2)) << "\n";
  if (!report_path.empty()) {
    OutputTarget rep(report_path);
    rep.stream() << report.str();
  } else {
    std::cerr << report.str();
  }
  return 0;
}

int run_hist(const std::string& input, int bins, const std::string& output) {
  const std::vector<double> scores = load_scores(input);
  const Histogram h = histogram(scores, bins);
  OutputTarget out(output);
  write_histogram_csv(out.stream(), h);
  std::ostream& info = out.to_file() ? std::cout : std::cerr;
  info << "fitted_mean=" << fmt_double(h.fitted_mean)
       << " fitted_stddev=" << fmt_double(h.fitted_stddev) << " n=" << h.n
       << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Real-valued sentence specificity: self-ensembling domain "
               "adaptation trainer and corpus tools"};
  app.require_subcommand(1);

  app.set_config("--config", "",
                 "Config file: key = value lines under a [train] section, as "
                 "written next to every checkpoint");

  TrainOpts to;
  CLI::App* train = app.add_subcommand("train", "Train a model");
  train->fallthrough();
  train->add_option("--variant", to.variant, "Training variant")
      ->check(CLI::IsMember({"se", "se_d", "se_a", "se_ad_kl", "se_ad_meanstd",
                             "se_ad_noaug"}))
      ->capture_default_str();
  train->add_option("--source", to.source, "Labeled source TSV (label<TAB>text)")
      ->required();
  train->add_option("--target", to.target,
                    "Unlabeled target sentences, one per line");
  train->add_option("--dev", to.dev, "Real-labeled dev TSV (label<TAB>text)");
  train->add_option("--embeddings", to.embeddings,
                    "Word vectors, word2vec text format")
      ->required();
  train->add_option("--stopwords", to.stopwords, "Stopword list, one per line");
  train->add_option("--connectives", to.connectives,
                    "Connective phrases, one per line");
  train->add_option("--polarity", to.polarity, "Polarity word list");
  train->add_option("--subjective", to.subjective, "Subjective word list");
  train->add_option("--familiarity", to.familiarity,
                    "Familiarity norms TSV (word<TAB>value)");
  train->add_option("--imageability", to.imageability,
                    "Imageability norms TSV (word<TAB>value)");
  train->add_option("--idf", to.idf,
                    "Idf table TSV (word<TAB>idf); computed from the target "
                    "corpus when omitted");
  train->add_option("--checkpoint", to.checkpoint, "Checkpoint output path")
      ->capture_default_str();
  train->add_option("--alpha", to.alpha, "Teacher EMA decay");
  train->add_option("--c1", to.c1, "Consistency loss weight");
  train->add_option("--c2", to.c2, "Distribution loss weight");
  train->add_option("--beta", to.beta, "Mean weight inside the mean-std loss");
  train->add_option("--batch-size", to.batch_size, "Sentences per batch and side");
  train->add_option("--epochs", to.epochs, "Training epochs");
  train->add_option("--lr", to.lr, "Adam learning rate");
  train->add_option("--seed", to.seed, "Random seed")
      ->envname("SPECADAPT_SEED");
  train->add_option("--hidden-size", to.hidden_size, "LSTM units per direction");
  train->add_option("--mlp-width", to.mlp_width, "Hidden layer width");
  train->add_option("--mlp-depth", to.mlp_depth, "Hidden layer count");
  train->add_option("--dropout", to.dropout, "Dropout rate");
  train->add_option("--emb-noise-std", to.emb_noise_std,
                    "Embedding jitter stddev");
  train->add_option("--feat-noise-std", to.feat_noise_std,
                    "Feature jitter stddev");
  train->add_option("--word-drop-prob", to.word_drop_prob,
                    "Drop probability per eligible word");
  train->add_option("--word-subst-prob", to.word_subst_prob,
                    "Substitution probability per eligible word");
  train->add_option("--subst-mode", to.subst_mode, "Substitution vector kind")
      ->check(CLI::IsMember({"random_vector", "zero_vector"}));
  train->add_option("--perturb-fraction", to.perturb_fraction,
                    "Expected fraction of perturbation-eligible words");
  train->add_option("--ref-mean", to.ref_mean, "Reference distribution mean");
  train->add_option("--ref-stddev", to.ref_stddev,
                    "Reference distribution stddev");

  std::string p_checkpoint, p_embeddings, p_input, p_output;
  CLI::App* predict_cmd =
      app.add_subcommand("predict", "Score sentences with a trained model");
  predict_cmd->add_option("--checkpoint", p_checkpoint, "Checkpoint path")
      ->required();
  predict_cmd->add_option("--embeddings", p_embeddings, "Word vectors")
      ->required();
  predict_cmd->add_option("--input", p_input, "Sentences, one per line")
      ->required();
  predict_cmd->add_option("--output", p_output,
                          "Output TSV (sentence<TAB>score); stdout if omitted");

  std::string e_pred, e_gold, e_output;
  CLI::App* eval_cmd =
      app.add_subcommand("eval", "Compare predictions against gold scores");
  eval_cmd->add_option("--pred", e_pred, "Predictions TSV from `predict`")
      ->required();
  eval_cmd->add_option("--gold", e_gold, "Gold TSV (score<TAB>text)")
      ->required();
  eval_cmd->add_option("--output", e_output, "Also write the report here");

  std::string b_input, b_output;
  CLI::App* baseline_cmd = app.add_subcommand(
      "baseline-length", "Word-count baseline scores for an input file");
  baseline_cmd->add_option("--input", b_input, "Sentences, one per line")
      ->required();
  baseline_cmd->add_option("--output", b_output, "Output TSV; stdout if omitted");

  std::string f_corpus, f_mode, f_checkpoint, f_embeddings, f_output, f_report;
  std::size_t f_min_len = 5, f_keep_n = 0;
  CLI::App* filter_cmd = app.add_subcommand(
      "filter", "Filter a dialogue corpus (context<TAB>response)");
  filter_cmd->add_option("--corpus", f_corpus, "Dialogue TSV")->required();
  filter_cmd->add_option("--mode", f_mode, "short: drop brief responses; "
                                           "general: drop the least specific")
      ->required()
      ->check(CLI::IsMember({"short", "general"}));
  filter_cmd->add_option("--min-len", f_min_len,
                         "Minimum response token count (mode short)")
      ->capture_default_str();
  filter_cmd->add_option("--keep-n", f_keep_n,
                         "Examples to keep (mode general)");
  filter_cmd->add_option("--checkpoint", f_checkpoint,
                         "Checkpoint for scoring (mode general)");
  filter_cmd->add_option("--embeddings", f_embeddings,
                         "Word vectors (mode general)");
  filter_cmd->add_option("--output", f_output,
                         "Filtered TSV; stdout if omitted");
  filter_cmd->add_option("--report", f_report,
                         "Diversity report TSV; stderr if omitted");

  std::string h_input, h_output;
  int h_bins = 10;
  CLI::App* hist_cmd =
      app.add_subcommand("hist", "Histogram of a predictions file");
  hist_cmd->add_option("--input", h_input, "Predictions TSV")->required();
  hist_cmd->add_option("--bins", h_bins, "Bin count over [0,1]")
      ->capture_default_str();
  hist_cmd->add_option("--output", h_output, "Histogram CSV; stdout if omitted");

  try {
    app.parse(argc, argv);
    if (app.got_subcommand(train)) return run_train(*train, to);
    if (app.got_subcommand(predict_cmd)) {
      return run_predict(p_checkpoint, p_embeddings, p_input, p_output);
    }
    if (app.got_subcommand(eval_cmd)) return run_eval(e_pred, e_gold, e_output);
    if (app.got_subcommand(baseline_cmd)) {
      return run_baseline_length(b_input, b_output);
    }
    if (app.got_subcommand(filter_cmd)) {
      return run_filter(f_corpus, f_mode, f_min_len, f_keep_n,
                        filter_cmd->count("--keep-n") > 0, f_checkpoint,
                        f_embeddings, f_output, f_report);
    }
    if (app.got_subcommand(hist_cmd)) return run_hist(h_input, h_bins, h_output);
    return 0;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const ModelStateError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
