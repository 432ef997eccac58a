#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "specadapt/errors.hpp"
#include "specadapt/features.hpp"
#include "specadapt/rng.hpp"

namespace specadapt {

struct NetworkConfig {
  int embedding_dim = 0;  // set from the embedding table
  int feature_dim = kNumFeatures;
  int hidden_size = 100;  // per LSTM direction
  int mlp_width = 100;
  int mlp_depth = 3;
  double dropout = 0.5;
  double bn_epsilon = 1e-5;
  double bn_momentum = 0.1;

  void validate() const;
  int rep_dim() const { return 2 * hidden_size + feature_dim; }
};

// One LSTM direction; gate order inside the stacked matrices is
// [input | forget | cell | output], H rows each.
struct LstmDirectionParams {
  Eigen::MatrixXd w_input;  // 4H x D
  Eigen::MatrixXd w_recur;  // 4H x H
  Eigen::MatrixXd bias;     // 4H x 1
};

// Fully connected layer followed by batch normalization. Running statistics
// live here so the teacher copy carries them and EMA covers them.
struct DenseBnLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::MatrixXd bias;    // out x 1
  Eigen::MatrixXd bn_scale, bn_shift;        // out x 1, trainable
  Eigen::MatrixXd bn_mean, bn_var;           // out x 1, running stats
};

// All weights of the base predictor. Copy construction is a deep copy
// (Eigen value semantics); clone() exists for readability at call sites.
struct ModelParameters {
  NetworkConfig config;
  LstmDirectionParams forward_dir, backward_dir;
  std::vector<DenseBnLayer> mlp;
  Eigen::MatrixXd out_weight;  // mlp_width x 1
  Eigen::MatrixXd out_bias;    // 1 x 1

  static ModelParameters init(const NetworkConfig& config, Rng& rng);
  ModelParameters clone() const { return *this; }
};

// Visits every tensor in a fixed canonical order: the order defines gradient
// slot indices, optimizer state alignment and serialization layout.
// fn(name, matrix, trainable); running batch-norm stats are not trainable.
template <class Params, class Fn>
void for_each_tensor(Params& p, Fn&& fn) {
  fn("fwd.w_input", p.forward_dir.w_input, true);
  fn("fwd.w_recur", p.forward_dir.w_recur, true);
  fn("fwd.bias", p.forward_dir.bias, true);
  fn("bwd.w_input", p.backward_dir.w_input, true);
  fn("bwd.w_recur", p.backward_dir.w_recur, true);
  fn("bwd.bias", p.backward_dir.bias, true);
  for (std::size_t l = 0; l < p.mlp.size(); ++l) {
    const std::string prefix = "mlp" + std::to_string(l) + ".";
    fn(prefix + "weight", p.mlp[l].weight, true);
    fn(prefix + "bias", p.mlp[l].bias, true);
    fn(prefix + "bn_scale", p.mlp[l].bn_scale, true);
    fn(prefix + "bn_shift", p.mlp[l].bn_shift, true);
    fn(prefix + "bn_mean", p.mlp[l].bn_mean, false);
    fn(prefix + "bn_var", p.mlp[l].bn_var, false);
  }
  fn("out.weight", p.out_weight, true);
  fn("out.bias", p.out_bias, true);
}

std::size_t tensor_count(const ModelParameters& p);

// Gradient slots aligned with the for_each_tensor visit order; slots of
// non-trainable tensors stay empty.
struct Gradients {
  std::vector<Eigen::MatrixXd> tensors;
  static Gradients zeros_like(const ModelParameters& p);
};

// One network input batch: per-sentence embedded token sequences (already
// augmented where applicable) plus standardized shallow features (B x F).
struct BatchInput {
  std::vector<std::vector<Eigen::VectorXd>> sequences;
  Eigen::MatrixXd features;
};

// Batch-norm/dropout behavior of a forward pass.
//   student training: batch stats, running update, dropout
//   teacher training: batch stats, no update, dropout (EMA owns its stats)
//   eval/frozen:      running stats, no dropout
struct ForwardOptions {
  bool batch_stats = false;
  bool update_running = false;
  bool apply_dropout = false;
  Rng* rng = nullptr;

  static ForwardOptions train(Rng& r) { return {true, true, true, &r}; }
  static ForwardOptions teacher_train(Rng& r) { return {true, false, true, &r}; }
  static ForwardOptions batch_stats_frozen() { return {true, false, false, nullptr}; }
  static ForwardOptions eval() { return {false, false, false, nullptr}; }
};

struct LstmDirCache {
  std::vector<Eigen::MatrixXd> x;  // T entries of B x D (backward dir: reversed rows)
  std::vector<Eigen::MatrixXd> gate_i, gate_f, gate_g, gate_o;
  std::vector<Eigen::MatrixXd> tanh_c, c_post, h_post;
  Eigen::MatrixXd final_h;  // B x H
};

struct BnLayerCache {
  Eigen::MatrixXd xhat;     // B x M
  Eigen::VectorXd inv_std;  // M
};

struct ForwardCache {
  ForwardOptions opts;
  int batch = 0;
  std::vector<Eigen::ArrayXd> mask;  // T entries of B, 1 while t < length
  LstmDirCache fwd, bwd;
  Eigen::MatrixXd lstm_out;       // B x 2H, pre-dropout
  Eigen::MatrixXd lstm_drop;      // dropout multipliers, empty if unused
  std::vector<Eigen::MatrixXd> layer_in;   // input to each linear layer
  std::vector<BnLayerCache> bn;
  std::vector<Eigen::MatrixXd> relu_out;
  std::vector<Eigen::MatrixXd> drop_mask;  // per layer, empty if unused
  Eigen::MatrixXd mlp_out;        // input to the output layer
  Eigen::VectorXd logits;
  Eigen::VectorXd preds;          // sigmoid(logits), in (0,1)
};

// Runs the batch through embedding sequences -> BiLSTM -> concat features ->
// MLP -> sigmoid. Mutates only batch-norm running stats, and only when
// opts.update_running is set. Throws DimensionMismatch on shape errors.
ForwardCache forward(ModelParameters& params, const BatchInput& input,
                     const ForwardOptions& opts);

// Backpropagates d(loss)/d(logit) through the cached forward pass.
Gradients backward(const ModelParameters& params, const ForwardCache& cache,
                   const Eigen::VectorXd& dlogits);

}  // namespace specadapt
