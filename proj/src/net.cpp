#include "specadapt/net.hpp"

#include <algorithm>
#include <cmath>

namespace specadapt {

namespace {

Eigen::MatrixXd sigmoid(const Eigen::MatrixXd& x) {
  return (1.0 / (1.0 + (-x.array()).exp())).matrix();
}

// Rows where m is 1 take `candidate`, rows where m is 0 keep `carry`.
Eigen::MatrixXd mask_mix(const Eigen::MatrixXd& candidate,
                         const Eigen::MatrixXd& carry, const Eigen::ArrayXd& m) {
  return (candidate.array().colwise() * m + carry.array().colwise() * (1.0 - m))
      .matrix();
}

void glorot_fill(Eigen::MatrixXd& m, Rng& rng) {
  const double limit =
      std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      m(i, j) = (2.0 * rng.uniform() - 1.0) * limit;
    }
  }
}

LstmDirectionParams init_direction(int hidden, int input_dim, Rng& rng) {
  LstmDirectionParams d;
  d.w_input.resize(4 * hidden, input_dim);
  d.w_recur.resize(4 * hidden, hidden);
  d.bias = Eigen::MatrixXd::Zero(4 * hidden, 1);
  glorot_fill(d.w_input, rng);
  glorot_fill(d.w_recur, rng);
  // Forget gate starts open.
  d.bias.block(hidden, 0, hidden, 1).setOnes();
  return d;
}

// Dropout multipliers: 0 with probability rate, else 1/(1-rate).
Eigen::MatrixXd dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate,
                             Rng& rng) {
  const double keep = 1.0 - rate;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) {
      m(i, j) = rng.bernoulli(rate) ? 0.0 : 1.0 / keep;
    }
  }
  return m;
}

void run_lstm_direction(const LstmDirectionParams& p,
                        const std::vector<Eigen::ArrayXd>& mask,
                        LstmDirCache& cache) {
  const auto hidden = p.w_recur.cols();
  const std::size_t t_steps = cache.x.size();
  const Eigen::Index batch = cache.x.empty() ? 0 : cache.x[0].rows();

  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(batch, hidden);
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(batch, hidden);
  const Eigen::RowVectorXd bias_row = p.bias.col(0).transpose();

  cache.gate_i.resize(t_steps);
  cache.gate_f.resize(t_steps);
  cache.gate_g.resize(t_steps);
  cache.gate_o.resize(t_steps);
  cache.tanh_c.resize(t_steps);
  cache.c_post.resize(t_steps);
  cache.h_post.resize(t_steps);

  for (std::size_t t = 0; t < t_steps; ++t) {
    Eigen::MatrixXd acts = cache.x[t] * p.w_input.transpose() +
                           h * p.w_recur.transpose();
    acts.rowwise() += bias_row;

    cache.gate_i[t] = sigmoid(acts.middleCols(0, hidden));
    cache.gate_f[t] = sigmoid(acts.middleCols(hidden, hidden));
    cache.gate_g[t] = acts.middleCols(2 * hidden, hidden).array().tanh().matrix();
    cache.gate_o[t] = sigmoid(acts.middleCols(3 * hidden, hidden));

    const Eigen::MatrixXd c_cand = cache.gate_f[t].cwiseProduct(c) +
                                   cache.gate_i[t].cwiseProduct(cache.gate_g[t]);
    cache.tanh_c[t] = c_cand.array().tanh().matrix();
    const Eigen::MatrixXd h_cand = cache.gate_o[t].cwiseProduct(cache.tanh_c[t]);

    c = mask_mix(c_cand, c, mask[t]);
    h = mask_mix(h_cand, h, mask[t]);
    cache.c_post[t] = c;
    cache.h_post[t] = h;
  }
  cache.final_h = h;
}

// Weight gradients only; input gradients are never needed because the
// embeddings are fixed.
void backward_lstm_direction(const LstmDirectionParams& p,
                             const std::vector<Eigen::ArrayXd>& mask,
                             const LstmDirCache& cache,
                             const Eigen::MatrixXd& d_final,
                             Eigen::MatrixXd& g_w_input,
                             Eigen::MatrixXd& g_w_recur,
                             Eigen::MatrixXd& g_bias) {
  const auto hidden = p.w_recur.cols();
  const std::size_t t_steps = cache.x.size();
  const Eigen::Index batch = d_final.rows();

  g_w_input = Eigen::MatrixXd::Zero(p.w_input.rows(), p.w_input.cols());
  g_w_recur = Eigen::MatrixXd::Zero(p.w_recur.rows(), p.w_recur.cols());
  g_bias = Eigen::MatrixXd::Zero(p.bias.rows(), 1);

  Eigen::MatrixXd dh_next = d_final;
  Eigen::MatrixXd dc_next = Eigen::MatrixXd::Zero(batch, hidden);
  Eigen::MatrixXd d_acts(batch, 4 * hidden);

  for (std::size_t ti = t_steps; ti-- > 0;) {
    const Eigen::ArrayXd& m = mask[ti];
    // Split the incoming gradient between rows updated at this step and rows
    // that carried state through padding.
    const Eigen::MatrixXd dh_cand = (dh_next.array().colwise() * m).matrix();
    const Eigen::MatrixXd dh_carry =
        (dh_next.array().colwise() * (1.0 - m)).matrix();
    Eigen::MatrixXd dc_cand = (dc_next.array().colwise() * m).matrix();
    const Eigen::MatrixXd dc_carry =
        (dc_next.array().colwise() * (1.0 - m)).matrix();

    const Eigen::MatrixXd& gi = cache.gate_i[ti];
    const Eigen::MatrixXd& gf = cache.gate_f[ti];
    const Eigen::MatrixXd& gg = cache.gate_g[ti];
    const Eigen::MatrixXd& go = cache.gate_o[ti];
    const Eigen::MatrixXd& tc = cache.tanh_c[ti];

    const Eigen::MatrixXd d_o = dh_cand.cwiseProduct(tc);
    dc_cand.array() += dh_cand.array() * go.array() * (1.0 - tc.array().square());

    Eigen::MatrixXd d_f;
    if (ti > 0) {
      d_f = dc_cand.cwiseProduct(cache.c_post[ti - 1]);
    } else {
      d_f = Eigen::MatrixXd::Zero(batch, hidden);  // initial cell state is zero
    }
    const Eigen::MatrixXd d_i = dc_cand.cwiseProduct(gg);
    const Eigen::MatrixXd d_g = dc_cand.cwiseProduct(gi);
    const Eigen::MatrixXd dc_prev_gate = dc_cand.cwiseProduct(gf);

    d_acts.middleCols(0, hidden) =
        (d_i.array() * gi.array() * (1.0 - gi.array())).matrix();
    d_acts.middleCols(hidden, hidden) =
        (d_f.array() * gf.array() * (1.0 - gf.array())).matrix();
    d_acts.middleCols(2 * hidden, hidden) =
        (d_g.array() * (1.0 - gg.array().square())).matrix();
    d_acts.middleCols(3 * hidden, hidden) =
        (d_o.array() * go.array() * (1.0 - go.array())).matrix();

    g_w_input.noalias() += d_acts.transpose() * cache.x[ti];
    if (ti > 0) {
      g_w_recur.noalias() += d_acts.transpose() * cache.h_post[ti - 1];
    }
    g_bias.col(0) += d_acts.colwise().sum().transpose();

    dh_next = dh_carry;
    dh_next.noalias() += d_acts * p.w_recur;
    dc_next = dc_carry + dc_prev_gate;
  }
}

}  // namespace

void NetworkConfig::validate() const {
  if (embedding_dim <= 0 || feature_dim <= 0 || hidden_size <= 0 ||
      mlp_width <= 0 || mlp_depth <= 0) {
    throw InputError("network dimensions must be positive");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) {
    throw InputError("dropout must lie in [0,1)");
  }
}

ModelParameters ModelParameters::init(const NetworkConfig& config, Rng& rng) {
  config.validate();
  ModelParameters p;
  p.config = config;
  p.forward_dir = init_direction(config.hidden_size, config.embedding_dim, rng);
  p.backward_dir = init_direction(config.hidden_size, config.embedding_dim, rng);

  int in_dim = config.rep_dim();
  p.mlp.resize(static_cast<std::size_t>(config.mlp_depth));
  for (DenseBnLayer& layer : p.mlp) {
    layer.weight.resize(config.mlp_width, in_dim);
    glorot_fill(layer.weight, rng);
    layer.bias = Eigen::MatrixXd::Zero(config.mlp_width, 1);
    layer.bn_scale = Eigen::MatrixXd::Ones(config.mlp_width, 1);
    layer.bn_shift = Eigen::MatrixXd::Zero(config.mlp_width, 1);
    layer.bn_mean = Eigen::MatrixXd::Zero(config.mlp_width, 1);
    layer.bn_var = Eigen::MatrixXd::Ones(config.mlp_width, 1);
    in_dim = config.mlp_width;
  }
  p.out_weight.resize(config.mlp_width, 1);
  glorot_fill(p.out_weight, rng);
  p.out_bias = Eigen::MatrixXd::Zero(1, 1);
  return p;
}

std::size_t tensor_count(const ModelParameters& p) {
  std::size_t n = 0;
  for_each_tensor(p, [&](const std::string&, const Eigen::MatrixXd&, bool) { ++n; });
  return n;
}

Gradients Gradients::zeros_like(const ModelParameters& p) {
  Gradients g;
  g.tensors.reserve(tensor_count(p));
  for_each_tensor(p, [&](const std::string&, const Eigen::MatrixXd& m,
                         bool trainable) {
    g.tensors.push_back(trainable ? Eigen::MatrixXd::Zero(m.rows(), m.cols())
                                  : Eigen::MatrixXd());
  });
  return g;
}

ForwardCache forward(ModelParameters& params, const BatchInput& input,
                     const ForwardOptions& opts) {
  const NetworkConfig& cfg = params.config;
  const auto batch = static_cast<Eigen::Index>(input.sequences.size());
  if (batch == 0) {
    throw DimensionMismatch("forward on empty batch");
  }
  if (input.features.rows() != batch ||
      input.features.cols() != cfg.feature_dim) {
    throw DimensionMismatch("feature matrix must be batch x feature_dim");
  }
  const bool use_dropout = opts.apply_dropout && cfg.dropout > 0.0;
  if (use_dropout && opts.rng == nullptr) {
    throw ModelStateError("dropout requires a random stream");
  }

  std::size_t max_len = 0;
  for (const auto& seq : input.sequences) {
    if (seq.empty()) {
      throw DimensionMismatch("sequence of length zero in batch");
    }
    for (const auto& v : seq) {
      if (v.size() != cfg.embedding_dim) {
        throw DimensionMismatch("token vector dimension mismatch");
      }
    }
    max_len = std::max(max_len, seq.size());
  }

  ForwardCache cache;
  cache.opts = opts;
  cache.batch = static_cast<int>(batch);

  // Right-padded time-major inputs; the backward direction sees each
  // sentence reversed and shares the same validity masks.
  cache.mask.resize(max_len);
  cache.fwd.x.resize(max_len);
  cache.bwd.x.resize(max_len);
  for (std::size_t t = 0; t < max_len; ++t) {
    cache.mask[t] = Eigen::ArrayXd::Zero(batch);
    cache.fwd.x[t] = Eigen::MatrixXd::Zero(batch, cfg.embedding_dim);
    cache.bwd.x[t] = Eigen::MatrixXd::Zero(batch, cfg.embedding_dim);
  }
  for (Eigen::Index b = 0; b < batch; ++b) {
    const auto& seq = input.sequences[static_cast<std::size_t>(b)];
    for (std::size_t t = 0; t < seq.size(); ++t) {
      cache.mask[t](b) = 1.0;
      cache.fwd.x[t].row(b) = seq[t].transpose();
      cache.bwd.x[t].row(b) = seq[seq.size() - 1 - t].transpose();
    }
  }

  run_lstm_direction(params.forward_dir, cache.mask, cache.fwd);
  run_lstm_direction(params.backward_dir, cache.mask, cache.bwd);

  cache.lstm_out.resize(batch, 2 * cfg.hidden_size);
  cache.lstm_out << cache.fwd.final_h, cache.bwd.final_h;

  Eigen::MatrixXd lstm_dropped = cache.lstm_out;
  if (use_dropout) {
    cache.lstm_drop =
        dropout_mask(batch, 2 * cfg.hidden_size, cfg.dropout, *opts.rng);
    lstm_dropped = lstm_dropped.cwiseProduct(cache.lstm_drop);
  }

  Eigen::MatrixXd x(batch, cfg.rep_dim());
  x << lstm_dropped, input.features;

  const int depth = cfg.mlp_depth;
  cache.layer_in.resize(static_cast<std::size_t>(depth));
  cache.bn.resize(static_cast<std::size_t>(depth));
  cache.relu_out.resize(static_cast<std::size_t>(depth));
  cache.drop_mask.resize(static_cast<std::size_t>(depth));

  for (int l = 0; l < depth; ++l) {
    const auto li = static_cast<std::size_t>(l);
    DenseBnLayer& layer = params.mlp[li];
    cache.layer_in[li] = x;

    Eigen::MatrixXd z = x * layer.weight.transpose();
    z.rowwise() += layer.bias.col(0).transpose();

    Eigen::RowVectorXd mu, var;
    if (opts.batch_stats) {
      mu = z.colwise().mean();
      var = (z.rowwise() - mu).array().square().colwise().mean().matrix();
      if (opts.update_running) {
        const double mom = cfg.bn_momentum;
        const double unbias =
            batch > 1
                ? static_cast<double>(batch) / static_cast<double>(batch - 1)
                : 1.0;
        layer.bn_mean.col(0) =
            (1.0 - mom) * layer.bn_mean.col(0) + mom * mu.transpose();
        layer.bn_var.col(0) =
            (1.0 - mom) * layer.bn_var.col(0) + mom * unbias * var.transpose();
      }
    } else {
      mu = layer.bn_mean.col(0).transpose();
      var = layer.bn_var.col(0).transpose();
    }
    cache.bn[li].inv_std =
        (var.transpose().array() + cfg.bn_epsilon).rsqrt().matrix();
    cache.bn[li].xhat = (z.rowwise() - mu) * cache.bn[li].inv_std.asDiagonal();

    Eigen::MatrixXd y = cache.bn[li].xhat * layer.bn_scale.col(0).asDiagonal();
    y.rowwise() += layer.bn_shift.col(0).transpose();

    cache.relu_out[li] = y.cwiseMax(0.0);
    x = cache.relu_out[li];
    if (use_dropout) {
      cache.drop_mask[li] = dropout_mask(batch, x.cols(), cfg.dropout, *opts.rng);
      x = x.cwiseProduct(cache.drop_mask[li]);
    }
  }

  cache.mlp_out = x;
  cache.logits = x * params.out_weight.col(0);
  cache.logits.array() += params.out_bias(0, 0);
  cache.preds = (1.0 / (1.0 + (-cache.logits.array()).exp())).matrix();
  return cache;
}

Gradients backward(const ModelParameters& params, const ForwardCache& cache,
                   const Eigen::VectorXd& dlogits) {
  const NetworkConfig& cfg = params.config;
  const Eigen::Index batch = cache.preds.size();
  if (dlogits.size() != batch) {
    throw DimensionMismatch("dlogits length does not match cached batch");
  }
  const int depth = cfg.mlp_depth;

  Eigen::MatrixXd g_out_weight = cache.mlp_out.transpose() * dlogits;
  Eigen::MatrixXd g_out_bias(1, 1);
  g_out_bias(0, 0) = dlogits.sum();
  Eigen::MatrixXd dx = dlogits * params.out_weight.col(0).transpose();  // B x M

  std::vector<Eigen::MatrixXd> g_weight(static_cast<std::size_t>(depth)),
      g_bias(static_cast<std::size_t>(depth)),
      g_scale(static_cast<std::size_t>(depth)),
      g_shift(static_cast<std::size_t>(depth));
  for (int l = depth - 1; l >= 0; --l) {
    const auto li = static_cast<std::size_t>(l);
    const DenseBnLayer& layer = params.mlp[li];

    if (cache.drop_mask[li].size() > 0) {
      dx = dx.cwiseProduct(cache.drop_mask[li]);
    }
    dx = (dx.array() * (cache.relu_out[li].array() > 0.0).cast<double>()).matrix();

    const Eigen::MatrixXd& xhat = cache.bn[li].xhat;
    const Eigen::VectorXd& inv_std = cache.bn[li].inv_std;

    g_scale[li] = dx.cwiseProduct(xhat).colwise().sum().transpose();
    g_shift[li] = dx.colwise().sum().transpose();

    const Eigen::MatrixXd dxhat = dx * layer.bn_scale.col(0).asDiagonal();

    Eigen::MatrixXd dz;
    if (cache.opts.batch_stats) {
      // The batch statistics themselves depend on z, adding two correction
      // terms to the straight-through gradient.
      const Eigen::RowVectorXd mean_dxhat = dxhat.colwise().mean();
      const Eigen::RowVectorXd mean_dxhat_xhat =
          dxhat.cwiseProduct(xhat).colwise().mean();
      dz = dxhat;
      dz.rowwise() -= mean_dxhat;
      dz.noalias() -= xhat * mean_dxhat_xhat.asDiagonal();
      dz = dz * inv_std.asDiagonal();
    } else {
      dz = dxhat * inv_std.asDiagonal();
    }

    g_weight[li] = dz.transpose() * cache.layer_in[li];
    g_bias[li] = dz.colwise().sum().transpose();
    dx = dz * layer.weight;
  }

  // Split the representation gradient; the feature columns need none.
  Eigen::MatrixXd d_lstm = dx.leftCols(2 * cfg.hidden_size);
  if (cache.lstm_drop.size() > 0) {
    d_lstm = d_lstm.cwiseProduct(cache.lstm_drop);
  }

  Eigen::MatrixXd g_fwd_wi, g_fwd_wr, g_fwd_b, g_bwd_wi, g_bwd_wr, g_bwd_b;
  backward_lstm_direction(params.forward_dir, cache.mask, cache.fwd,
                          d_lstm.leftCols(cfg.hidden_size), g_fwd_wi, g_fwd_wr,
                          g_fwd_b);
  backward_lstm_direction(params.backward_dir, cache.mask, cache.bwd,
                          d_lstm.rightCols(cfg.hidden_size), g_bwd_wi, g_bwd_wr,
                          g_bwd_b);

  Gradients g;
  g.tensors.reserve(tensor_count(params));
  g.tensors.push_back(std::move(g_fwd_wi));
  g.tensors.push_back(std::move(g_fwd_wr));
  g.tensors.push_back(std::move(g_fwd_b));
  g.tensors.push_back(std::move(g_bwd_wi));
  g.tensors.push_back(std::move(g_bwd_wr));
  g.tensors.push_back(std::move(g_bwd_b));
  for (int l = 0; l < depth; ++l) {
    const auto li = static_cast<std::size_t>(l);
    g.tensors.push_back(std::move(g_weight[li]));
    g.tensors.push_back(std::move(g_bias[li]));
    g.tensors.push_back(std::move(g_scale[li]));
    g.tensors.push_back(std::move(g_shift[li]));
    g.tensors.emplace_back();  // bn_mean slot
    g.tensors.emplace_back();  // bn_var slot
  }
  g.tensors.push_back(std::move(g_out_weight));
  g.tensors.push_back(std::move(g_out_bias));
  return g;
}

}  // namespace specadapt
