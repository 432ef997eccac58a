#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "specadapt/augment.hpp"
#include "specadapt/corpus.hpp"
#include "specadapt/features.hpp"
#include "specadapt/losses.hpp"
#include "specadapt/net.hpp"

namespace specadapt {

// Ablation variants. The suffix names which pieces are active: A = noise
// augmentation + consistency loss, D = posterior distribution regularizer.
enum class Variant {
  kSe,
  kSeD,
  kSeA,
  kSeAdKl,
  kSeAdMeanstd,
  kSeAdNoaug,
};

enum class Regularizer { kNone, kKl, kMeanStd };

Variant variant_from_string(const std::string& name);  // ParseError if unknown
std::string to_string(Variant v);
Regularizer regularizer_for(Variant v);
bool augmentation_for(Variant v);

struct TrainingConfig {
  Variant variant = Variant::kSeAdMeanstd;
  double alpha = 0.999;          // EMA decay of the teacher
  double c1 = 1000.0;            // consistency weight
  double c2 = 100.0;             // distribution-regularizer weight
  double beta = 1.0;             // mean term weight inside the mean-std loss
  int batch_size = 32;
  int epochs = 30;
  double learning_rate = 1e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  NoiseConfig noise;
  ReferenceDistribution reference;
  NetworkConfig network;  // embedding_dim filled in from the table at training
  std::uint64_t seed = 2020;

  // Paper defaults for one variant: loss weights, epoch budget, noise gating.
  static TrainingConfig for_variant(Variant v);

  void validate() const;
  bool uses_consistency() const { return c1 > 0.0; }
  bool uses_distribution() const {
    return c2 > 0.0 && regularizer_for(variant) != Regularizer::kNone;
  }
  bool uses_augmentation() const { return augmentation_for(variant); }
  // Target sentences only ever enter through L_u and L_d.
  bool uses_target() const { return uses_consistency() || uses_distribution(); }
};

// Teacher <- alpha * teacher + (1 - alpha) * student, over every tensor
// including batch-norm running statistics. The student is untouched.
void ema_update(ModelParameters& teacher, const ModelParameters& student,
                double alpha);

class AdamOptimizer {
 public:
  AdamOptimizer(const ModelParameters& params, double learning_rate,
                double beta1, double beta2, double epsilon);

  void step(ModelParameters& params, const Gradients& grads);

  const std::vector<Eigen::MatrixXd>& first_moment() const { return m_; }
  const std::vector<Eigen::MatrixXd>& second_moment() const { return v_; }
  std::int64_t steps() const { return t_; }
  void restore(std::vector<Eigen::MatrixXd> m, std::vector<Eigen::MatrixXd> v,
               std::int64_t t);

 private:
  double lr_, beta1_, beta2_, epsilon_;
  std::int64_t t_ = 0;
  std::vector<Eigen::MatrixXd> m_, v_;  // aligned with the tensor order
};

// Endless shuffled pass over target indices; reshuffles on wrap-around so
// the (usually larger) target corpus is cycled against source epochs.
class TargetCycler {
 public:
  TargetCycler(std::size_t n, Rng rng);
  std::vector<std::size_t> take(std::size_t k);

 private:
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
  Rng rng_;
};

struct BatchPlan {
  std::vector<std::size_t> source;
  std::vector<std::size_t> target;  // empty for variants that ignore target
};

// One epoch worth of batches: a shuffled pass over the source corpus in
// chunks of batch_size, each paired with an equally sized slice of cycled
// target indices. A tail chunk of a single sentence is folded into the
// previous batch so distribution losses always see n >= 2.
std::vector<BatchPlan> make_batches(std::size_t n_source, int batch_size,
                                    bool with_target, Rng& shuffle_rng,
                                    TargetCycler* cycler);

struct PreparedExample {
  std::vector<Eigen::VectorXd> sequence;  // embedded tokens
  Eigen::VectorXd features;               // standardized
  double label = 0.0;                     // 0/1 for source, unused for target
};

PreparedExample prepare_sentence(const Sentence& sentence,
                                 const EmbeddingTable& embeddings,
                                 const LexiconResources& lexicons,
                                 const FeatureStats& stats);

struct LossBreakdown {
  double l_ce = 0.0;
  double l_u = 0.0;
  double l_d = 0.0;
  double total = 0.0;
  // Student posterior stats over the combined batch; NaN when no
  // distribution loss ran.
  double posterior_mu = std::numeric_limits<double>::quiet_NaN();
  double posterior_sigma = std::numeric_limits<double>::quiet_NaN();
};

struct EpochLog {
  int epoch = 0;
  double l_ce = 0.0, l_u = 0.0, l_d = 0.0, total = 0.0;
  double posterior_mu = std::numeric_limits<double>::quiet_NaN();
  double posterior_sigma = std::numeric_limits<double>::quiet_NaN();
  double dev_spearman = std::numeric_limits<double>::quiet_NaN();
  double dev_tau = std::numeric_limits<double>::quiet_NaN();
  double dev_mae = std::numeric_limits<double>::quiet_NaN();
};

// Gating instrumentation: lets tests observe that disabled machinery truly
// never runs (e.g. the plain SE variant).
struct RunCounters {
  long augment_calls = 0;
  long target_forwards = 0;   // training forwards containing target sentences
  long teacher_forwards = 0;  // training-time teacher passes
};

struct DevSet {
  std::vector<Sentence> sentences;
  std::vector<double> labels;  // real-valued, in [0,1]
};

// Everything predict() needs, and what the checkpoint stores.
struct TrainedModel {
  TrainingConfig config;
  ModelParameters student;
  ModelParameters teacher;
  FeatureStats feature_stats;
  std::uint64_t vocab_hash = 0;
  std::vector<Eigen::MatrixXd> adam_m, adam_v;
  std::int64_t adam_steps = 0;
};

struct TrainOutcome {
  TrainedModel model;
  std::vector<EpochLog> epochs;
  RunCounters counters;
};

// Owns the student/teacher pair, the optimizer, and all random streams of
// one training run. step()/ema() are split so tests can observe the teacher
// between the optimizer update and the EMA update.
class Trainer {
 public:
  Trainer(const TrainingConfig& cfg, const EmbeddingTable& embeddings,
          const LexiconResources& lexicons,
          const std::vector<LabeledExample>& source,
          const std::vector<Sentence>& target);

  std::vector<BatchPlan> epoch_batches();
  LossBreakdown step(const BatchPlan& plan);  // optimizer update, no EMA
  void ema();
  LossBreakdown train_step(const BatchPlan& plan);

  // Full loop over cfg.epochs; CSV rows go to log_csv when given.
  TrainOutcome run(const DevSet* dev, std::ostream* log_csv);

  std::vector<double> evaluate(const std::vector<PreparedExample>& prepared);

  const TrainingConfig& config() const { return cfg_; }
  const ModelParameters& student() const { return student_; }
  const ModelParameters& teacher() const { return teacher_; }
  const FeatureStats& feature_stats() const { return feature_stats_; }
  const RunCounters& counters() const { return counters_; }
  TrainedModel export_model() const;

 private:
  // aug_stream == nullptr assembles the batch without augmentation.
  BatchInput assemble(const BatchPlan& plan, Rng* aug_stream);

  TrainingConfig cfg_;
  const EmbeddingTable& embeddings_;
  const LexiconResources& lexicons_;
  FeatureStats feature_stats_;
  std::vector<PreparedExample> source_, target_;
  ModelParameters student_, teacher_;
  std::optional<AdamOptimizer> optimizer_;
  std::optional<TargetCycler> cycler_;
  Rng shuffle_rng_, aug_student_, aug_teacher_, drop_student_, drop_teacher_;
  RunCounters counters_;
};

// Scores sentences with the teacher network in eval mode; deterministic.
// Throws ModelStateError when the embedding table does not match the
// vocabulary hash recorded at training time.
std::vector<double> predict(const TrainedModel& model,
                            const std::vector<Sentence>& sentences,
                            const EmbeddingTable& embeddings,
                            const LexiconResources& lexicons);

}  // namespace specadapt
