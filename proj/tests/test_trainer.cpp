#include <doctest.h>

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "specadapt/trainer.hpp"
#include "support/oracles.hpp"
#include "support/synthetic.hpp"

using namespace specadapt;

namespace {

const testsupport::SyntheticData& shared_data() {
  static testsupport::SyntheticData data =
      testsupport::make_synthetic_data(40, 48, 8);
  return data;
}

TrainingConfig small_config(Variant v) {
  TrainingConfig cfg = TrainingConfig::for_variant(v);
  cfg.network.hidden_size = 8;
  cfg.network.mlp_width = 8;
  cfg.network.mlp_depth = 2;
  cfg.epochs = 1;
  cfg.batch_size = 16;
  return cfg;
}

Trainer make_trainer(Variant v) {
  const auto& data = shared_data();
  return Trainer(small_config(v), data.embeddings, data.lexicons, data.source,
                 data.target);
}

}  // namespace

TEST_CASE("variant table pins loss weights, epochs, gating and names") {
  struct Row {
    Variant v;
    const char* name;
    double c1, c2;
    int epochs;
    bool aug;
    Regularizer reg;
  };
  const Row rows[] = {
      {Variant::kSe, "se", 0.0, 0.0, 10, false, Regularizer::kNone},
      {Variant::kSeD, "se_d", 0.0, 100.0, 15, true, Regularizer::kMeanStd},
      {Variant::kSeA, "se_a", 1000.0, 0.0, 30, true, Regularizer::kNone},
      {Variant::kSeAdKl, "se_ad_kl", 1000.0, 10.0, 30, true, Regularizer::kKl},
      {Variant::kSeAdMeanstd, "se_ad_meanstd", 1000.0, 100.0, 30, true,
       Regularizer::kMeanStd},
      {Variant::kSeAdNoaug, "se_ad_noaug", 1000.0, 100.0, 30, false,
       Regularizer::kMeanStd},
  };
  for (const Row& row : rows) {
    CAPTURE(row.name);
    const TrainingConfig cfg = TrainingConfig::for_variant(row.v);
    CHECK(cfg.c1 == row.c1);
    CHECK(cfg.c2 == row.c2);
    CHECK(cfg.epochs == row.epochs);
    CHECK(to_string(row.v) == row.name);
    CHECK(variant_from_string(row.name) == row.v);
    CHECK(regularizer_for(row.v) == row.reg);
    CHECK(augmentation_for(row.v) == row.aug);
  }
  CHECK_THROWS_AS(variant_from_string("bogus"), ParseError);

  const TrainingConfig cfg = TrainingConfig::for_variant(Variant::kSeAdMeanstd);
  CHECK(cfg.batch_size == 32);
  CHECK(cfg.learning_rate == 1e-4);
  CHECK(cfg.alpha == 0.999);
  CHECK(cfg.beta == 1.0);
  CHECK(cfg.seed == 2020);
}

TEST_CASE("ema update interpolates every tensor") {
  NetworkConfig net;
  net.embedding_dim = 3;
  net.hidden_size = 4;
  net.mlp_width = 4;
  net.mlp_depth = 2;
  Rng r1(1), r2(2);
  const ModelParameters student = ModelParameters::init(net, r1);
  const ModelParameters teacher0 = ModelParameters::init(net, r2);

  ModelParameters frozen = teacher0.clone();
  ema_update(frozen, student, 1.0);
  CHECK(testsupport::params_equal(frozen, teacher0));

  ModelParameters swapped = teacher0.clone();
  ema_update(swapped, student, 0.0);
  CHECK(testsupport::params_equal(swapped, student));

  ModelParameters half = teacher0.clone();
  const double before = testsupport::param_distance(half, student);
  ema_update(half, student, 0.5);
  CHECK(testsupport::param_distance(half, student) ==
        doctest::Approx(0.5 * before).epsilon(1e-12));

  ModelParameters bad = teacher0.clone();
  CHECK_THROWS_AS(ema_update(bad, student, 1.5), InputError);

  NetworkConfig other = net;
  other.hidden_size = 5;
  Rng r3(3);
  ModelParameters mismatched = ModelParameters::init(other, r3);
  CHECK_THROWS_AS(ema_update(mismatched, student, 0.5), DimensionMismatch);
}

TEST_CASE("adam applies the bias-corrected update and skips running stats") {
  NetworkConfig net;
  net.embedding_dim = 3;
  net.hidden_size = 4;
  net.mlp_width = 4;
  net.mlp_depth = 2;
  Rng r1(5);
  ModelParameters params = ModelParameters::init(net, r1);
  const ModelParameters before = params.clone();

  Gradients grads = Gradients::zeros_like(params);
  for (Eigen::MatrixXd& g : grads.tensors) {
    if (g.size() > 0) g.setOnes();
  }

  const double lr = 0.1, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  AdamOptimizer opt(params, lr, b1, b2, eps);
  CHECK(opt.steps() == 0);
  opt.step(params, grads);
  CHECK(opt.steps() == 1);

  // With a gradient of all ones, every trainable entry moves by the same
  // amount; replicate the first-step formula.
  const double m = (1.0 - b1) * 1.0;
  const double v = (1.0 - b2) * 1.0;
  const double step_size = lr * std::sqrt(1.0 - b2) / (1.0 - b1);
  const double delta = step_size * m / (std::sqrt(v) + eps);

  std::size_t slot = 0;
  for_each_tensor(params, [&](const std::string&, const Eigen::MatrixXd& now,
                              bool trainable) {
    const Eigen::MatrixXd* prev = nullptr;
    std::size_t j = 0;
    for_each_tensor(before, [&](const std::string&, const Eigen::MatrixXd& b,
                                bool) {
      if (j++ == slot) prev = &b;
    });
    REQUIRE(prev != nullptr);
    if (trainable) {
      CHECK(((*prev - now).array() - delta).abs().maxCoeff() < 1e-15);
    } else {
      CHECK(now.cwiseEqual(*prev).all());
    }
    ++slot;
  });
}

TEST_CASE("target cycler covers the corpus uniformly across wraps") {
  TargetCycler cycler(5, Rng(9));
  std::vector<int> counts(5, 0);
  const auto first = cycler.take(7);
  const auto second = cycler.take(3);
  for (const std::size_t i : first) counts.at(i)++;
  for (const std::size_t i : second) counts.at(i)++;
  for (const int c : counts) CHECK(c == 2);

  TargetCycler empty(0, Rng(1));
  CHECK_THROWS_AS(empty.take(1), EmptyCorpus);
}

TEST_CASE("batch planning partitions a shuffled source pass") {
  Rng shuffle(3);
  const auto plans = make_batches(64, 32, false, shuffle, nullptr);
  REQUIRE(plans.size() == 2);
  std::vector<int> seen(64, 0);
  for (const BatchPlan& p : plans) {
    CHECK(p.source.size() == 32);
    CHECK(p.target.empty());
    for (const std::size_t i : p.source) seen.at(i)++;
  }
  for (const int c : seen) CHECK(c == 1);
}

TEST_CASE("a trailing singleton batch folds into its predecessor") {
  Rng shuffle(4);
  const auto plans = make_batches(65, 32, false, shuffle, nullptr);
  REQUIRE(plans.size() == 2);
  CHECK(plans[0].source.size() == 32);
  CHECK(plans[1].source.size() == 33);

  Rng shuffle2(5);
  const auto folded = make_batches(33, 32, false, shuffle2, nullptr);
  REQUIRE(folded.size() == 1);
  CHECK(folded[0].source.size() == 33);

  Rng shuffle3(6);
  const auto solo = make_batches(1, 32, false, shuffle3, nullptr);
  REQUIRE(solo.size() == 1);
  CHECK(solo[0].source.size() == 1);
}

TEST_CASE("batch planning pairs each chunk with equally many target indices") {
  Rng shuffle(7);
  TargetCycler cycler(7, Rng(8));
  const auto plans = make_batches(40, 16, true, shuffle, &cycler);
  REQUIRE(plans.size() == 3);
  for (const BatchPlan& p : plans) {
    CHECK(p.target.size() == p.source.size());
    for (const std::size_t i : p.target) CHECK(i < 7);
  }

  Rng shuffle2(9);
  CHECK_THROWS_AS(make_batches(0, 16, false, shuffle2, nullptr), EmptyCorpus);
  CHECK_THROWS_AS(make_batches(10, 0, false, shuffle2, nullptr), InputError);
  CHECK_THROWS_AS(make_batches(10, 16, true, shuffle2, nullptr), EmptyCorpus);
}

TEST_CASE("prepare_sentence embeds tokens and standardizes features") {
  const auto& data = shared_data();
  std::vector<FeatureVector> raw;
  for (int i = 0; i < 10; ++i) {
    raw.push_back(extract_features(data.source[i].sentence, data.lexicons));
  }
  const FeatureStats stats = fit_feature_stats(raw);

  const Sentence& s = data.source[0].sentence;
  const PreparedExample p =
      prepare_sentence(s, data.embeddings, data.lexicons, stats);
  CHECK(p.sequence.size() == s.tokens.size());
  for (std::size_t t = 0; t < s.tokens.size(); ++t) {
    CHECK(p.sequence[t].cwiseEqual(data.embeddings.lookup(s.tokens[t])).all());
  }
  const Eigen::VectorXd expected = standardize_features(raw[0], stats);
  CHECK(p.features.cwiseEqual(expected).all());

  CHECK_THROWS_AS(
      prepare_sentence(Sentence{}, data.embeddings, data.lexicons, stats),
      EmptySentence);
}

TEST_CASE("two identical runs produce bitwise identical models") {
  Trainer a = make_trainer(Variant::kSeAdMeanstd);
  Trainer b = make_trainer(Variant::kSeAdMeanstd);
  const TrainOutcome ra = a.run(nullptr, nullptr);
  const TrainOutcome rb = b.run(nullptr, nullptr);
  CHECK(testsupport::params_equal(ra.model.student, rb.model.student));
  CHECK(testsupport::params_equal(ra.model.teacher, rb.model.teacher));
  REQUIRE(ra.epochs.size() == rb.epochs.size());
  CHECK(ra.epochs[0].total == rb.epochs[0].total);
  CHECK(ra.epochs[0].l_ce == rb.epochs[0].l_ce);
}

TEST_CASE("the plain se variant never augments and never touches the target") {
  Trainer t = make_trainer(Variant::kSe);
  const TrainOutcome out = t.run(nullptr, nullptr);
  CHECK(out.counters.augment_calls == 0);
  CHECK(out.counters.target_forwards == 0);
  CHECK(out.counters.teacher_forwards == 0);
  CHECK(out.epochs[0].l_u == 0.0);
  CHECK(out.epochs[0].l_d == 0.0);
  CHECK(std::isnan(out.epochs[0].posterior_mu));
}

TEST_CASE("se_d augments and feeds the target but runs no teacher pass") {
  Trainer t = make_trainer(Variant::kSeD);
  const TrainOutcome out = t.run(nullptr, nullptr);
  // 40 source in chunks of 16 -> 3 batches; student assembly augments
  // source + target of each batch: (16+16) + (16+16) + (8+8). The clean
  // distribution-loss pass sees the target again but never augments.
  CHECK(out.counters.augment_calls == 80);
  CHECK(out.counters.target_forwards == 6);
  CHECK(out.counters.teacher_forwards == 0);
  CHECK(out.epochs[0].l_u == 0.0);
  CHECK_FALSE(std::isnan(out.epochs[0].posterior_mu));
}

TEST_CASE("se_a runs the teacher but no distribution loss") {
  Trainer t = make_trainer(Variant::kSeA);
  const TrainOutcome out = t.run(nullptr, nullptr);
  CHECK(out.counters.augment_calls == 160);  // student and teacher assemblies
  CHECK(out.counters.target_forwards == 6);
  CHECK(out.counters.teacher_forwards == 3);
  CHECK(out.epochs[0].l_d == 0.0);
  CHECK(std::isnan(out.epochs[0].posterior_mu));
}

TEST_CASE("se_ad_noaug keeps both losses but skips augmentation") {
  Trainer t = make_trainer(Variant::kSeAdNoaug);
  const TrainOutcome out = t.run(nullptr, nullptr);
  CHECK(out.counters.augment_calls == 0);
  CHECK(out.counters.target_forwards == 9);  // student, teacher, clean pass
  CHECK(out.counters.teacher_forwards == 3);
  CHECK_FALSE(std::isnan(out.epochs[0].posterior_mu));
}

TEST_CASE("zero epochs returns the initialized pair untouched") {
  TrainingConfig cfg = small_config(Variant::kSeAdMeanstd);
  cfg.epochs = 0;
  const auto& data = shared_data();
  Trainer t(cfg, data.embeddings, data.lexicons, data.source, data.target);
  const TrainOutcome out = t.run(nullptr, nullptr);
  CHECK(out.epochs.empty());
  CHECK(testsupport::params_equal(out.model.student, out.model.teacher));
  CHECK(out.model.adam_steps == 0);
  CHECK(out.counters.augment_calls == 0);
}

TEST_CASE("run writes the documented csv layout") {
  Trainer t = make_trainer(Variant::kSe);
  std::ostringstream csv;
  t.run(nullptr, &csv);
  std::istringstream lines(csv.str());
  std::string header, row;
  REQUIRE(std::getline(lines, header));
  CHECK(header == "epoch,l_ce,l_u,l_d,total,dev_spearman,dev_tau,dev_mae");
  REQUIRE(std::getline(lines, row));
  CHECK(row.rfind("1,", 0) == 0);
  CHECK(row.find(",nan") != std::string::npos);  // no dev set given
}

TEST_CASE("dev evaluation fills the metric columns") {
  Trainer t = make_trainer(Variant::kSeAdMeanstd);
  const auto& data = shared_data();
  const TrainOutcome out = t.run(&data.dev, nullptr);
  CHECK(std::isfinite(out.epochs[0].dev_mae));
  CHECK(out.epochs[0].dev_mae >= 0.0);
  CHECK(std::abs(out.epochs[0].dev_spearman) <= 1.0);
  CHECK(std::abs(out.epochs[0].dev_tau) <= 1.0);
}

TEST_CASE("the optimizer step leaves the teacher untouched until ema runs") {
  Trainer t = make_trainer(Variant::kSeAdMeanstd);
  const auto plans = t.epoch_batches();
  REQUIRE_FALSE(plans.empty());

  const ModelParameters teacher_before = t.teacher().clone();
  const ModelParameters student_before = t.student().clone();
  t.step(plans[0]);
  CHECK(testsupport::params_equal(t.teacher(), teacher_before));
  CHECK_FALSE(testsupport::params_equal(t.student(), student_before));
  t.ema();
  CHECK_FALSE(testsupport::params_equal(t.teacher(), teacher_before));
}

TEST_CASE("the trainer rejects unusable corpora") {
  const auto& data = shared_data();
  const TrainingConfig cfg = small_config(Variant::kSeAdMeanstd);
  CHECK_THROWS_AS(Trainer(cfg, data.embeddings, data.lexicons, {}, data.target),
                  EmptyCorpus);
  CHECK_THROWS_AS(Trainer(cfg, data.embeddings, data.lexicons, data.source, {}),
                  EmptyCorpus);
  // The plain variant does not need a target corpus at all.
  const TrainingConfig se = small_config(Variant::kSe);
  CHECK_NOTHROW(Trainer(se, data.embeddings, data.lexicons, data.source, {}));
}

TEST_CASE("predict scores with the teacher and guards the vocabulary") {
  Trainer t = make_trainer(Variant::kSeAdMeanstd);
  const TrainOutcome out = t.run(nullptr, nullptr);
  const auto& data = shared_data();

  std::vector<Sentence> subset(data.target.begin(), data.target.begin() + 5);
  const std::vector<double> p1 =
      predict(out.model, subset, data.embeddings, data.lexicons);
  const std::vector<double> p2 =
      predict(out.model, subset, data.embeddings, data.lexicons);
  REQUIRE(p1.size() == 5);
  CHECK(p1 == p2);
  for (const double v : p1) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }

  const EmbeddingTable other = EmbeddingTable::from_vectors(
      3, {{"alpha", Eigen::Vector3d(1, 0, 0)}, {"beta", Eigen::Vector3d(0, 1, 0)}});
  CHECK_THROWS_AS(predict(out.model, subset, other, data.lexicons),
                  ModelStateError);
  CHECK_THROWS_AS(predict(out.model, {}, data.embeddings, data.lexicons),
                  EmptyCorpus);
}
