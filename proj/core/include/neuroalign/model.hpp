#ifndef NEUROALIGN_MODEL_HPP
#define NEUROALIGN_MODEL_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "neuroalign/tokenize.hpp"
#include "neuroalign/util.hpp"

namespace neuroalign {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct ModelConfig {
  int n_layers = 2;
  int n_heads = 4;
  int d_model = 32;
  int d_ff = 64;
  int vocab_size = 0;
  int max_len = 48;
  bool tied_output = true;
  /// Residual-branch dropout, applied only when forward() is given an Rng.
  double dropout = 0.0;
  double init_std = 0.02;

  int head_dim() const { return d_model / n_heads; }
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

struct LayerParams {
  Matrix wq, wk, wv, wo;
  Vector bq, bk, bv, bo;
  Vector ln1_gamma, ln1_beta;
  Matrix w1, w2;
  Vector b1, b2;
  Vector ln2_gamma, ln2_beta;
};

/// All weights of the encoder and its MLM head.
///
/// Activations are row-major in the sense that a sequence is a P x d_model
/// matrix and projections multiply on the right (X * W). The same structure
/// doubles as the gradient container.
struct TransformerParams {
  Matrix token_embedding;     // V x d
  Matrix position_embedding;  // max_len x d
  Vector embedding_ln_gamma, embedding_ln_beta;
  std::vector<LayerParams> layers;
  Matrix head_w;  // d x d MLM transform
  Vector head_b;
  Vector head_ln_gamma, head_ln_beta;
  Matrix output_w;  // d x V; empty when tied to token_embedding
  Vector output_b;  // V

  static TransformerParams zeros(const ModelConfig& config);
  /// Normal(0, init_std) weights, zero biases, unit layer-norm gains.
  static TransformerParams init(const ModelConfig& config, std::uint64_t seed);

  /// Visits every parameter block in the fixed checkpoint order.
  template <typename Fn>
  void visit(Fn&& fn);
  template <typename Fn>
  void visit(Fn&& fn) const;

  std::size_t parameter_count() const;
  void set_zero();
  /// this += scale * other
  void axpy(double scale, const TransformerParams& other);
  bool all_finite() const;
};

/// Guided-attention supervision: the topmost `layers` layers, the listed
/// heads in each, weighted by `alpha` in the total loss.
struct GuidanceSpec {
  int layers = 0;
  std::vector<int> heads;
  double alpha = 0.1;

  void validate(const ModelConfig& config) const;
  bool supervises(int layer, int n_layers) const { return layer >= n_layers - layers; }
};

/// Intermediate values of one layer, kept for the backward pass.
struct LayerCache {
  Matrix input;
  Matrix q, k, v;
  std::vector<Matrix> attention;  // per head, P x P, rows softmax-normalized
  Matrix context;
  Matrix attn_dropout_mask;
  Matrix ln1_xhat;
  Vector ln1_inv_std;
  Matrix hidden1;
  Matrix ff_pre;
  Matrix ff_act;
  Matrix ff_dropout_mask;
  Matrix ln2_xhat;
  Vector ln2_inv_std;
};

struct ForwardTrace {
  std::vector<PieceId> ids;
  std::vector<std::uint8_t> pad_mask;  // 1 = real token, 0 = padding
  /// hidden[0] is the embedding output; hidden[l + 1] the output of layer l.
  std::vector<Matrix> hidden;
  std::vector<LayerCache> layers;
  Matrix embedding_xhat;
  Vector embedding_inv_std;
  Matrix embedding_dropout_mask;
  Matrix head_pre, head_act, head_xhat, head_out;
  Vector head_inv_std;
  Matrix logits;  // P x V

  std::size_t length() const { return ids.size(); }
  const Matrix& final_hidden() const { return hidden.back(); }
  /// Attention probabilities of `head` in `layer`.
  const Matrix& attention(int layer, int head) const {
    return layers.at(static_cast<std::size_t>(layer)).attention.at(static_cast<std::size_t>(head));
  }
};

/// Runs the post-layer-norm encoder. An empty `pad_mask` means no padding.
/// Dropout is active only when `dropout_rng` is non-null.
ForwardTrace forward(const std::vector<PieceId>& ids, const std::vector<std::uint8_t>& pad_mask,
                     const TransformerParams& params, const ModelConfig& config,
                     Rng* dropout_rng = nullptr);

/// Masked-LM targets: sequence position -> original piece id.
using MlmTargets = std::map<std::size_t, PieceId>;

double mlm_loss(const ForwardTrace& trace, const MlmTargets& targets);

/// Sum over supervised heads of the mean binary cross-entropy between the
/// attention probabilities and the adjacency bits, taken over ordered pairs
/// (i, j), i != j, of non-pad, non-special positions.
double guidance_loss(const ForwardTrace& trace, const AdjacencyMatrix& adjacency,
                     const GuidanceSpec& spec, const ModelConfig& config);

struct LossBreakdown {
  double total = 0.0;
  double mlm = 0.0;
  double guidance = 0.0;
};

/// What backward() differentiates: mlm + alpha * guidance. Without an
/// adjacency or spec the objective is pure MLM.
struct Objective {
  const MlmTargets* targets = nullptr;
  const AdjacencyMatrix* adjacency = nullptr;
  const GuidanceSpec* guidance = nullptr;
};

LossBreakdown total_loss(const ForwardTrace& trace, const Objective& objective,
                         const ModelConfig& config);

/// Accumulates scale * d(total_loss)/d(params) into `grads`.
void backward(const ForwardTrace& trace, const TransformerParams& params, const ModelConfig& config,
              const Objective& objective, TransformerParams& grads, double scale = 1.0);

/// Log-softmax of one logits row.
Vector log_softmax(const Eigen::Ref<const Eigen::RowVectorXd>& logits);

struct CheckpointMeta {
  std::string vocab_hash;
  std::int64_t step = 0;
};

/// Binary checkpoint: 8-byte magic "NALCKPT1", little-endian u64 header
/// length, JSON header, then each parameter block as row-major
/// little-endian float32 in TransformerParams::visit order.
void save_checkpoint(const std::filesystem::path& path, const TransformerParams& params,
                     const ModelConfig& config, const CheckpointMeta& meta);

struct Checkpoint {
  ModelConfig config;
  TransformerParams params;
  CheckpointMeta meta;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

// ---------------------------------------------------------------------------

template <typename Fn>
void TransformerParams::visit(Fn&& fn) {
  fn("token_embedding", token_embedding);
  fn("position_embedding", position_embedding);
  fn("embedding_ln_gamma", embedding_ln_gamma);
  fn("embedding_ln_beta", embedding_ln_beta);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    auto& p = layers[l];
    const std::string pre = "layer" + std::to_string(l) + ".";
    fn(pre + "wq", p.wq);
    fn(pre + "bq", p.bq);
    fn(pre + "wk", p.wk);
    fn(pre + "bk", p.bk);
    fn(pre + "wv", p.wv);
    fn(pre + "bv", p.bv);
    fn(pre + "wo", p.wo);
    fn(pre + "bo", p.bo);
    fn(pre + "ln1_gamma", p.ln1_gamma);
    fn(pre + "ln1_beta", p.ln1_beta);
    fn(pre + "w1", p.w1);
    fn(pre + "b1", p.b1);
    fn(pre + "w2", p.w2);
    fn(pre + "b2", p.b2);
    fn(pre + "ln2_gamma", p.ln2_gamma);
    fn(pre + "ln2_beta", p.ln2_beta);
  }
  fn("head_w", head_w);
  fn("head_b", head_b);
  fn("head_ln_gamma", head_ln_gamma);
  fn("head_ln_beta", head_ln_beta);
  if (output_w.size() > 0) fn("output_w", output_w);
  fn("output_b", output_b);
}

template <typename Fn>
void TransformerParams::visit(Fn&& fn) const {
  const_cast<TransformerParams*>(this)->visit(
      [&](const std::string& name, auto& block) { fn(name, std::as_const(block)); });
}

}  // namespace neuroalign

#endif  // NEUROALIGN_MODEL_HPP
