#include "specadapt/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "specadapt/metrics.hpp"

namespace specadapt {

namespace {

// Sigmoid warm-up used by mean-teacher setups: 0 -> 1 over `ramp` updates.
double sigmoid_rampup(double t, double ramp) {
  if (ramp <= 0.0) return 1.0;
  const double u = 1.0 - std::clamp(t / ramp, 0.0, 1.0);
  return std::exp(-5.0 * u * u);
}

std::vector<double> eval_model(ModelParameters& params,
                               const std::vector<PreparedExample>& prepared) {
  std::vector<double> out;
  out.reserve(prepared.size());
  constexpr std::size_t kChunk = 64;
  for (std::size_t at = 0; at < prepared.size(); at += kChunk) {
    const std::size_t n = std::min(kChunk, prepared.size() - at);
    BatchInput in;
    in.sequences.reserve(n);
    in.features.resize(static_cast<Eigen::Index>(n), params.config.feature_dim);
    for (std::size_t i = 0; i < n; ++i) {
      in.sequences.push_back(prepared[at + i].sequence);
      in.features.row(static_cast<Eigen::Index>(i)) =
          prepared[at + i].features.transpose();
    }
    const ForwardCache cache = forward(params, in, ForwardOptions::eval());
    for (std::size_t i = 0; i < n; ++i) {
      out.push_back(cache.preds(static_cast<Eigen::Index>(i)));
    }
  }
  return out;
}

void write_log_value(std::ostream& out, double v) {
  out << ',';
  if (std::isnan(v)) {
    out << "nan";
  } else {
    out << std::setprecision(12) << v;
  }
}

}  // namespace

Variant variant_from_string(const std::string& name) {
  if (name == "se") return Variant::kSe;
  if (name == "se_d") return Variant::kSeD;
  if (name == "se_a") return Variant::kSeA;
  if (name == "se_ad_kl") return Variant::kSeAdKl;
  if (name == "se_ad_meanstd") return Variant::kSeAdMeanstd;
  if (name == "se_ad_noaug") return Variant::kSeAdNoaug;
  throw ParseError("unknown variant: " + name);
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::kSe: return "se";
    case Variant::kSeD: return "se_d";
    case Variant::kSeA: return "se_a";
    case Variant::kSeAdKl: return "se_ad_kl";
    case Variant::kSeAdMeanstd: return "se_ad_meanstd";
    case Variant::kSeAdNoaug: return "se_ad_noaug";
  }
  throw ParseError("unknown variant enum value");
}

Regularizer regularizer_for(Variant v) {
  switch (v) {
    case Variant::kSe:
    case Variant::kSeA:
      return Regularizer::kNone;
    case Variant::kSeAdKl:
      return Regularizer::kKl;
    case Variant::kSeD:
    case Variant::kSeAdMeanstd:
    case Variant::kSeAdNoaug:
      return Regularizer::kMeanStd;
  }
  throw ParseError("unknown variant enum value");
}

bool augmentation_for(Variant v) {
  return v != Variant::kSe && v != Variant::kSeAdNoaug;
}

TrainingConfig TrainingConfig::for_variant(Variant v) {
  TrainingConfig cfg;
  cfg.variant = v;
  switch (v) {
    case Variant::kSe:
      cfg.c1 = 0.0;
      cfg.c2 = 0.0;
      cfg.epochs = 10;
      break;
    case Variant::kSeD:
      cfg.c1 = 0.0;
      cfg.c2 = 100.0;
      cfg.epochs = 15;
      break;
    case Variant::kSeA:
      cfg.c1 = 1000.0;
      cfg.c2 = 0.0;
      cfg.epochs = 30;
      break;
    case Variant::kSeAdKl:
      cfg.c1 = 1000.0;
      cfg.c2 = 10.0;
      cfg.epochs = 30;
      break;
    case Variant::kSeAdMeanstd:
    case Variant::kSeAdNoaug:
      cfg.c1 = 1000.0;
      cfg.c2 = 100.0;
      cfg.epochs = 30;
      break;
  }
  return cfg;
}

void TrainingConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw InputError("ema decay alpha must lie in [0,1]");
  }
  if (c1 < 0.0 || c2 < 0.0 || beta < 0.0) {
    throw InputError("loss weights must be nonnegative");
  }
  if (epochs < 0) {
    throw InputError("epochs must be nonnegative");
  }
  if (batch_size < 1) {
    throw InputError("batch size must be positive");
  }
  if (uses_distribution() && batch_size < 2) {
    throw InputError("distribution loss requires batch size >= 2");
  }
  if (!(learning_rate > 0.0)) {
    throw InputError("learning rate must be positive");
  }
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) ||
      !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw InputError("adam betas must lie in [0,1)");
  }
  if (!(adam_epsilon > 0.0)) {
    throw InputError("adam epsilon must be positive");
  }
  noise.validate();
  reference.validate();
}

void ema_update(ModelParameters& teacher, const ModelParameters& student,
                double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw InputError("ema decay alpha must lie in [0,1]");
  }
  std::vector<Eigen::MatrixXd*> t;
  std::vector<const Eigen::MatrixXd*> s;
  for_each_tensor(teacher,
                  [&](const std::string&, Eigen::MatrixXd& m, bool) { t.push_back(&m); });
  for_each_tensor(student, [&](const std::string&, const Eigen::MatrixXd& m,
                               bool) { s.push_back(&m); });
  if (t.size() != s.size()) {
    throw DimensionMismatch("teacher and student tensor counts differ");
  }
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i]->rows() != s[i]->rows() || t[i]->cols() != s[i]->cols()) {
      throw DimensionMismatch("teacher and student tensor shapes differ");
    }
    *t[i] = alpha * *t[i] + (1.0 - alpha) * *s[i];
  }
}

AdamOptimizer::AdamOptimizer(const ModelParameters& params, double learning_rate,
                             double beta1, double beta2, double epsilon)
    : lr_(learning_rate), beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {
  m_ = Gradients::zeros_like(params).tensors;
  v_ = Gradients::zeros_like(params).tensors;
}

void AdamOptimizer::step(ModelParameters& params, const Gradients& grads) {
  std::vector<Eigen::MatrixXd*> tensors;
  std::vector<char> trainable;
  for_each_tensor(params, [&](const std::string&, Eigen::MatrixXd& m, bool tr) {
    tensors.push_back(&m);
    trainable.push_back(tr ? 1 : 0);
  });
  if (grads.tensors.size() != tensors.size()) {
    throw DimensionMismatch("gradient slot count does not match parameters");
  }
  ++t_;
  const double corr1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double corr2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  const double step_size = lr_ * std::sqrt(corr2) / corr1;
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    if (!trainable[i]) continue;
    const Eigen::MatrixXd& g = grads.tensors[i];
    if (g.rows() != tensors[i]->rows() || g.cols() != tensors[i]->cols()) {
      throw DimensionMismatch("gradient shape does not match parameter");
    }
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g.cwiseProduct(g);
    tensors[i]->array() -=
        step_size * m_[i].array() / (v_[i].array().sqrt() + epsilon_);
  }
}

void AdamOptimizer::restore(std::vector<Eigen::MatrixXd> m,
                            std::vector<Eigen::MatrixXd> v, std::int64_t t) {
  if (m.size() != m_.size() || v.size() != v_.size() || t < 0) {
    throw ModelStateError("optimizer state does not match the model");
  }
  m_ = std::move(m);
  v_ = std::move(v);
  t_ = t;
}

TargetCycler::TargetCycler(std::size_t n, Rng rng)
    : order_(n), pos_(n), rng_(rng) {
  std::iota(order_.begin(), order_.end(), std::size_t{0});
}

std::vector<std::size_t> TargetCycler::take(std::size_t k) {
  if (order_.empty()) {
    throw EmptyCorpus("no target sentences to cycle");
  }
  std::vector<std::size_t> out;
  out.reserve(k);
  while (out.size() < k) {
    if (pos_ == order_.size()) {
      rng_.shuffle(order_);
      pos_ = 0;
    }
    out.push_back(order_[pos_++]);
  }
  return out;
}

std::vector<BatchPlan> make_batches(std::size_t n_source, int batch_size,
                                    bool with_target, Rng& shuffle_rng,
                                    TargetCycler* cycler) {
  if (n_source == 0) {
    throw EmptyCorpus("no source sentences to batch");
  }
  if (batch_size < 1) {
    throw InputError("batch size must be positive");
  }
  if (with_target && cycler == nullptr) {
    throw EmptyCorpus("target sentences required but none were given");
  }

  std::vector<std::size_t> order(n_source);
  std::iota(order.begin(), order.end(), std::size_t{0});
  shuffle_rng.shuffle(order);

  std::vector<BatchPlan> plans;
  const auto bs = static_cast<std::size_t>(batch_size);
  for (std::size_t at = 0; at < n_source; at += bs) {
    const std::size_t take = std::min(bs, n_source - at);
    BatchPlan plan;
    plan.source.assign(order.begin() + static_cast<std::ptrdiff_t>(at),
                       order.begin() + static_cast<std::ptrdiff_t>(at + take));
    plans.push_back(std::move(plan));
  }
  // A lone trailing sentence cannot feed the distribution loss; merge it.
  if (plans.size() >= 2 && plans.back().source.size() < 2) {
    const BatchPlan tail = std::move(plans.back());
    plans.pop_back();
    plans.back().source.insert(plans.back().source.end(), tail.source.begin(),
                               tail.source.end());
  }
  if (with_target) {
    for (BatchPlan& plan : plans) {
      plan.target = cycler->take(plan.source.size());
    }
  }
  return plans;
}

PreparedExample prepare_sentence(const Sentence& sentence,
                                 const EmbeddingTable& embeddings,
                                 const LexiconResources& lexicons,
                                 const FeatureStats& stats) {
  if (sentence.tokens.empty()) {
    throw EmptySentence("sentence without tokens");
  }
  PreparedExample p;
  p.sequence.reserve(sentence.tokens.size());
  for (const std::string& token : sentence.tokens) {
    p.sequence.push_back(embeddings.lookup(token));
  }
  p.features = standardize_features(extract_features(sentence, lexicons), stats);
  return p;
}

Trainer::Trainer(const TrainingConfig& cfg, const EmbeddingTable& embeddings,
                 const LexiconResources& lexicons,
                 const std::vector<LabeledExample>& source,
                 const std::vector<Sentence>& target)
    : cfg_(cfg),
      embeddings_(embeddings),
      lexicons_(lexicons),
      shuffle_rng_(0),
      aug_student_(0),
      aug_teacher_(0),
      drop_student_(0),
      drop_teacher_(0) {
  cfg_.validate();
  if (source.empty()) {
    throw EmptyCorpus("training requires labeled source sentences");
  }
  if (cfg_.uses_target() && target.empty()) {
    throw EmptyCorpus("this variant requires unlabeled target sentences");
  }
  cfg_.network.embedding_dim = embeddings_.dim();
  cfg_.network.validate();

  std::vector<FeatureVector> raw;
  raw.reserve(source.size());
  for (const LabeledExample& ex : source) {
    raw.push_back(extract_features(ex.sentence, lexicons_));
  }
  feature_stats_ = fit_feature_stats(raw);

  source_.reserve(source.size());
  for (std::size_t i = 0; i < source.size(); ++i) {
    PreparedExample p;
    p.sequence.reserve(source[i].sentence.tokens.size());
    for (const std::string& token : source[i].sentence.tokens) {
      p.sequence.push_back(embeddings_.lookup(token));
    }
    p.features = standardize_features(raw[i], feature_stats_);
    p.label = source[i].label;
    source_.push_back(std::move(p));
  }
  target_.reserve(target.size());
  for (const Sentence& s : target) {
    target_.push_back(prepare_sentence(s, embeddings_, lexicons_, feature_stats_));
  }

  // One master stream per run; every consumer gets a named fork so adding a
  // consumer never shifts the others.
  Rng master(cfg_.seed);
  Rng init_rng = master.fork("init");
  shuffle_rng_ = master.fork("shuffle");
  Rng cycle_rng = master.fork("target_cycle");
  aug_student_ = master.fork("augment/student");
  aug_teacher_ = master.fork("augment/teacher");
  drop_student_ = master.fork("dropout/student");
  drop_teacher_ = master.fork("dropout/teacher");

  student_ = ModelParameters::init(cfg_.network, init_rng);
  teacher_ = student_.clone();
  optimizer_.emplace(student_, cfg_.learning_rate, cfg_.adam_beta1,
                     cfg_.adam_beta2, cfg_.adam_epsilon);
  if (!target_.empty()) {
    cycler_.emplace(target_.size(), cycle_rng);
  }
}

std::vector<BatchPlan> Trainer::epoch_batches() {
  return make_batches(source_.size(), cfg_.batch_size, cfg_.uses_target(),
                      shuffle_rng_, cycler_ ? &*cycler_ : nullptr);
}

BatchInput Trainer::assemble(const BatchPlan& plan, Rng* aug_stream) {
  const bool with_target = cfg_.uses_target() && !plan.target.empty();
  const std::size_t n = plan.source.size() + (with_target ? plan.target.size() : 0);
  BatchInput in;
  in.sequences.reserve(n);
  in.features.resize(static_cast<Eigen::Index>(n), cfg_.network.feature_dim);

  Eigen::Index row = 0;
  const auto push = [&](const PreparedExample& ex) {
    if (cfg_.uses_augmentation() && aug_stream != nullptr) {
      AugmentResult r = augment(ex.sequence, ex.features, cfg_.noise, *aug_stream);
      ++counters_.augment_calls;
      in.sequences.push_back(std::move(r.sequence));
      in.features.row(row) = r.features.transpose();
    } else {
      in.sequences.push_back(ex.sequence);
      in.features.row(row) = ex.features.transpose();
    }
    ++row;
  };
  for (const std::size_t i : plan.source) push(source_[i]);
  if (with_target) {
    for (const std::size_t i : plan.target) push(target_[i]);
  }
  return in;
}

LossBreakdown Trainer::step(const BatchPlan& plan) {
  if (plan.source.empty()) {
    throw EmptyBatch("training batch without source sentences");
  }
  const bool with_target = cfg_.uses_target() && !plan.target.empty();
  const auto ns = static_cast<Eigen::Index>(plan.source.size());

  BatchInput stu_in = assemble(plan, &aug_student_);
  ForwardCache cache = forward(student_, stu_in, ForwardOptions::train(drop_student_));
  if (with_target) ++counters_.target_forwards;

  Eigen::VectorXd labels(ns);
  for (Eigen::Index i = 0; i < ns; ++i) {
    labels(i) = source_[plan.source[static_cast<std::size_t>(i)]].label;
  }

  LossBreakdown out;
  out.l_ce = supervised_loss(cache.preds.head(ns), labels);
  Eigen::VectorXd dpred = Eigen::VectorXd::Zero(cache.preds.size());
  dpred.head(ns) = supervised_loss_grad(cache.preds.head(ns), labels);

  // Warm both auxiliary weights up over the first ~30% of planned updates,
  // as mean-teacher training does: at full strength from a random init the
  // consistency term flattens the model before any supervised signal can
  // form, and the posterior term amplifies whatever direction the random
  // init happens to rank by. Supervised loss first, then the rest.
  const std::size_t per_epoch =
      (source_.size() + cfg_.batch_size - 1) / cfg_.batch_size;
  const double ramp = 0.3 * static_cast<double>(cfg_.epochs * per_epoch);
  const double warm =
      sigmoid_rampup(static_cast<double>(optimizer_->steps()), ramp);
  const double c1 = cfg_.c1 * warm;
  const double c2 = cfg_.c2 * warm;

  if (cfg_.uses_consistency()) {
    BatchInput tea_in = assemble(plan, &aug_teacher_);
    ForwardCache tcache =
        forward(teacher_, tea_in, ForwardOptions::teacher_train(drop_teacher_));
    ++counters_.teacher_forwards;
    if (with_target) ++counters_.target_forwards;
    out.l_u = consistency_loss(cache.preds, tcache.preds);
    dpred += c1 * consistency_loss_grad(cache.preds, tcache.preds);
  }

  // The posterior regularizer targets the distribution the model produces at
  // test time, so it gets a clean pass: no augmentation, no dropout, running
  // batch-norm stats. Measured on the noisy pass instead, training noise
  // supplies the required spread and the clean predictions still condense.
  std::optional<ForwardCache> clean_cache;
  Eigen::VectorXd dpred_clean;
  if (cfg_.uses_distribution()) {
    BatchInput clean_in = assemble(plan, nullptr);
    clean_cache.emplace(forward(student_, clean_in, ForwardOptions::eval()));
    if (with_target) ++counters_.target_forwards;
    const BatchPosteriorStats stats = batch_posterior_stats(clean_cache->preds);
    dpred_clean = Eigen::VectorXd::Zero(clean_cache->preds.size());
    switch (regularizer_for(cfg_.variant)) {
      case Regularizer::kKl:
        out.l_d = kl_reg_loss(stats, cfg_.reference);
        dpred_clean =
            c2 * kl_reg_loss_grad(clean_cache->preds, stats, cfg_.reference);
        break;
      case Regularizer::kMeanStd:
        out.l_d = meanstd_reg_loss(stats, cfg_.reference, cfg_.beta);
        dpred_clean = c2 * meanstd_reg_loss_grad(clean_cache->preds, stats,
                                                 cfg_.reference, cfg_.beta);
        break;
      case Regularizer::kNone:
        break;
    }
    out.posterior_mu = stats.mu_p;
    out.posterior_sigma = stats.sigma_p;
  }

  out.total = total_loss(out.l_ce, out.l_u, out.l_d, c1, c2);
  if (!std::isfinite(out.total)) {
    std::ostringstream msg;
    msg << "non-finite loss at update " << optimizer_->steps() + 1
        << ": l_ce=" << out.l_ce << " l_u=" << out.l_u << " l_d=" << out.l_d;
    throw DivergenceError(msg.str());
  }

  // Chain through the sigmoid: d(logit) = d(pred) * f * (1 - f).
  const Eigen::VectorXd dlogits =
      (dpred.array() * cache.preds.array() * (1.0 - cache.preds.array())).matrix();
  Gradients grads = backward(student_, cache, dlogits);
  if (clean_cache) {
    const Eigen::VectorXd dlogits_clean = (dpred_clean.array() *
                                           clean_cache->preds.array() *
                                           (1.0 - clean_cache->preds.array()))
                                              .matrix();
    const Gradients extra = backward(student_, *clean_cache, dlogits_clean);
    for (std::size_t i = 0; i < grads.tensors.size(); ++i) {
      if (extra.tensors[i].size() == 0) continue;
      if (grads.tensors[i].size() == 0) {
        grads.tensors[i] = extra.tensors[i];
      } else {
        grads.tensors[i] += extra.tensors[i];
      }
    }
  }
  optimizer_->step(student_, grads);
  return out;
}

void Trainer::ema() {
  // Ramp the decay up from zero (the usual mean-teacher schedule): a flat
  // 0.999 would keep the teacher pinned to its random init for the first
  // ~1000 updates, which is most of a run at these corpus sizes.
  const auto t = static_cast<double>(optimizer_->steps());
  const double decay = std::min(1.0 - 1.0 / (t + 1.0), cfg_.alpha);
  ema_update(teacher_, student_, decay);
}

LossBreakdown Trainer::train_step(const BatchPlan& plan) {
  LossBreakdown out = step(plan);
  ema();
  return out;
}

std::vector<double> Trainer::evaluate(
    const std::vector<PreparedExample>& prepared) {
  return eval_model(teacher_, prepared);
}

TrainOutcome Trainer::run(const DevSet* dev, std::ostream* log_csv) {
  std::vector<PreparedExample> dev_prepared;
  if (dev != nullptr) {
    if (dev->sentences.size() != dev->labels.size()) {
      throw DimensionMismatch("dev sentences and labels differ in length");
    }
    dev_prepared.reserve(dev->sentences.size());
    for (const Sentence& s : dev->sentences) {
      dev_prepared.push_back(prepare_sentence(s, embeddings_, lexicons_,
                                              feature_stats_));
    }
  }
  if (log_csv != nullptr) {
    *log_csv << "epoch,l_ce,l_u,l_d,total,dev_spearman,dev_tau,dev_mae\n";
  }

  TrainOutcome out;
  for (int epoch = 1; epoch <= cfg_.epochs; ++epoch) {
    const std::vector<BatchPlan> plans = epoch_batches();
    EpochLog log;
    log.epoch = epoch;
    log.l_ce = log.l_u = log.l_d = log.total = 0.0;
    double sum_mu = 0.0, sum_sigma = 0.0;
    std::size_t n_stats = 0;
    for (const BatchPlan& plan : plans) {
      const LossBreakdown b = train_step(plan);
      log.l_ce += b.l_ce;
      log.l_u += b.l_u;
      log.l_d += b.l_d;
      log.total += b.total;
      if (!std::isnan(b.posterior_mu)) {
        sum_mu += b.posterior_mu;
        sum_sigma += b.posterior_sigma;
        ++n_stats;
      }
    }
    const auto nb = static_cast<double>(plans.size());
    log.l_ce /= nb;
    log.l_u /= nb;
    log.l_d /= nb;
    log.total /= nb;
    if (n_stats > 0) {
      log.posterior_mu = sum_mu / static_cast<double>(n_stats);
      log.posterior_sigma = sum_sigma / static_cast<double>(n_stats);
    }

    if (dev != nullptr) {
      const std::vector<double> preds = evaluate(dev_prepared);
      log.dev_mae = mae(preds, dev->labels);
      try {
        log.dev_spearman = spearman(preds, dev->labels);
      } catch (const UndefinedCorrelation&) {
      }
      try {
        log.dev_tau = kendall_tau(preds, dev->labels);
      } catch (const UndefinedCorrelation&) {
      }
    }

    if (log_csv != nullptr) {
      *log_csv << epoch;
      write_log_value(*log_csv, log.l_ce);
      write_log_value(*log_csv, log.l_u);
      write_log_value(*log_csv, log.l_d);
      write_log_value(*log_csv, log.total);
      write_log_value(*log_csv, log.dev_spearman);
      write_log_value(*log_csv, log.dev_tau);
      write_log_value(*log_csv, log.dev_mae);
      *log_csv << '\n';
    }
    out.epochs.push_back(log);
  }
  out.model = export_model();
  out.counters = counters_;
  return out;
}

TrainedModel Trainer::export_model() const {
  TrainedModel m;
  m.config = cfg_;
  m.student = student_;
  m.teacher = teacher_;
  m.feature_stats = feature_stats_;
  m.vocab_hash = embeddings_.vocab_hash();
  m.adam_m = optimizer_->first_moment();
  m.adam_v = optimizer_->second_moment();
  m.adam_steps = optimizer_->steps();
  return m;
}

std::vector<double> predict(const TrainedModel& model,
                            const std::vector<Sentence>& sentences,
                            const EmbeddingTable& embeddings,
                            const LexiconResources& lexicons) {
  if (sentences.empty()) {
    throw EmptyCorpus("no sentences to score");
  }
  if (embeddings.vocab_hash() != model.vocab_hash) {
    throw ModelStateError(
        "embedding table does not match the checkpoint vocabulary");
  }
  std::vector<PreparedExample> prepared;
  prepared.reserve(sentences.size());
  for (const Sentence& s : sentences) {
    prepared.push_back(
        prepare_sentence(s, embeddings, lexicons, model.feature_stats));
  }
  ModelParameters teacher = model.teacher.clone();
  return eval_model(teacher, prepared);
}

}  // namespace specadapt
