#include "neuroalign/model.hpp"

#include <cmath>
#include <numbers>

namespace neuroalign {

namespace {

constexpr double kLayerNormEps = 1e-12;
constexpr double kProbFloor = 1e-12;

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

Matrix gelu(const Matrix& x) { return x.unaryExpr([](double v) { return gelu(v); }); }

// Row-wise layer norm. Returns the output and fills xhat / inv_std.
Matrix layer_norm(const Matrix& x, const Vector& gamma, const Vector& beta, Matrix& xhat,
                  Vector& inv_std) {
  const Eigen::Index d = x.cols();
  xhat.resize(x.rows(), d);
  inv_std.resize(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mean = x.row(r).mean();
    const double var = (x.row(r).array() - mean).square().sum() / static_cast<double>(d);
    inv_std(r) = 1.0 / std::sqrt(var + kLayerNormEps);
    xhat.row(r) = (x.row(r).array() - mean) * inv_std(r);
  }
  Matrix y = xhat.array().rowwise() * gamma.transpose().array();
  y.rowwise() += beta.transpose();
  return y;
}

// Returns d(input) and accumulates gamma / beta gradients.
Matrix layer_norm_backward(const Matrix& dy, const Matrix& xhat, const Vector& inv_std,
                           const Vector& gamma, Vector& dgamma, Vector& dbeta) {
  dgamma += (dy.array() * xhat.array()).colwise().sum().transpose().matrix();
  dbeta += dy.colwise().sum().transpose();
  const double d = static_cast<double>(dy.cols());
  Matrix dxhat = dy.array().rowwise() * gamma.transpose().array();
  Matrix dx(dy.rows(), dy.cols());
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    const double sum = dxhat.row(r).sum();
    const double dot = dxhat.row(r).dot(xhat.row(r));
    dx.row(r) = (inv_std(r) / d) * (d * dxhat.row(r).array() - sum - xhat.row(r).array() * dot);
  }
  return dx;
}

Matrix dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, Rng* rng) {
  if (!rng || rate <= 0.0) return Matrix();
  Matrix m(rows, cols);
  const double keep = 1.0 - rate;
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = rng->uniform() < keep ? 1.0 / keep : 0.0;
  return m;
}

Matrix apply_mask(const Matrix& x, const Matrix& mask) {
  if (mask.size() == 0) return x;
  return x.cwiseProduct(mask);
}

void add_bias(Matrix& x, const Vector& b) { x.rowwise() += b.transpose(); }

bool eligible(const ForwardTrace& t, const AdjacencyMatrix& a, std::size_t i) {
  return t.pad_mask[i] && !a.is_special(i);
}

void check_guidance_inputs(const ForwardTrace& trace, const AdjacencyMatrix& adjacency,
                           const GuidanceSpec& spec, const ModelConfig& config) {
  if (adjacency.size() != trace.length())
    throw InvalidArgument("adjacency size " + std::to_string(adjacency.size()) +
                          " does not match sequence length " + std::to_string(trace.length()));
  spec.validate(config);
}

// Mean BCE of one head and, optionally, its gradient w.r.t. the attention
// probabilities (scaled by `scale`).
double head_bce(const Matrix& attn, const ForwardTrace& trace, const AdjacencyMatrix& adjacency,
                Matrix* grad, double scale) {
  std::vector<std::size_t> pos;
  for (std::size_t i = 0; i < trace.length(); ++i)
    if (eligible(trace, adjacency, i)) pos.push_back(i);
  if (pos.size() < 2) return 0.0;
  const double pairs = static_cast<double>(pos.size() * (pos.size() - 1));
  double loss = 0.0;
  for (std::size_t i : pos) {
    for (std::size_t j : pos) {
      if (i == j) continue;
      const auto r = static_cast<Eigen::Index>(i);
      const auto c = static_cast<Eigen::Index>(j);
      const double o = std::clamp(attn(r, c), kProbFloor, 1.0 - kProbFloor);
      const bool target = adjacency.at(i, j);
      loss -= target ? std::log(o) : std::log1p(-o);
      if (grad) (*grad)(r, c) += scale * (target ? -1.0 / o : 1.0 / (1.0 - o)) / pairs;
    }
  }
  return loss / pairs;
}

}  // namespace

void ModelConfig::validate() const {
  if (n_layers < 1 || n_heads < 1 || d_model < 1 || d_ff < 1 || vocab_size < 1 || max_len < 1)
    throw InvalidArgument("model dimensions must all be positive");
  if (d_model % n_heads != 0) throw InvalidArgument("d_model must be divisible by n_heads");
  if (dropout < 0.0 || dropout >= 1.0) throw InvalidArgument("dropout must lie in [0, 1)");
}

void GuidanceSpec::validate(const ModelConfig& config) const {
  if (layers < 0 || layers > config.n_layers)
    throw InvalidArgument("supervised layer count must lie in [0, n_layers]");
  for (int h : heads)
    if (h < 0 || h >= config.n_heads) throw InvalidArgument("supervised head index out of range");
  if (!(alpha >= 0.0)) throw InvalidArgument("alpha must be non-negative");
}

TransformerParams TransformerParams::zeros(const ModelConfig& config) {
  config.validate();
  const Eigen::Index d = config.d_model, f = config.d_ff, v = config.vocab_size;
  TransformerParams p;
  p.token_embedding = Matrix::Zero(v, d);
  p.position_embedding = Matrix::Zero(config.max_len, d);
  p.embedding_ln_gamma = Vector::Zero(d);
  p.embedding_ln_beta = Vector::Zero(d);
  p.layers.resize(static_cast<std::size_t>(config.n_layers));
  for (auto& l : p.layers) {
    l.wq = l.wk = l.wv = l.wo = Matrix::Zero(d, d);
    l.bq = l.bk = l.bv = l.bo = Vector::Zero(d);
    l.ln1_gamma = l.ln1_beta = l.ln2_gamma = l.ln2_beta = Vector::Zero(d);
    l.w1 = Matrix::Zero(d, f);
    l.b1 = Vector::Zero(f);
    l.w2 = Matrix::Zero(f, d);
    l.b2 = Vector::Zero(d);
  }
  p.head_w = Matrix::Zero(d, d);
  p.head_b = p.head_ln_gamma = p.head_ln_beta = Vector::Zero(d);
  if (!config.tied_output) p.output_w = Matrix::Zero(d, v);
  p.output_b = Vector::Zero(v);
  return p;
}

TransformerParams TransformerParams::init(const ModelConfig& config, std::uint64_t seed) {
  TransformerParams p = zeros(config);
  Rng rng(seed);
  auto fill = [&](Matrix& m) {
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = config.init_std * rng.normal();
  };
  fill(p.token_embedding);
  fill(p.position_embedding);
  p.embedding_ln_gamma.setOnes();
  for (auto& l : p.layers) {
    fill(l.wq);
    fill(l.wk);
    fill(l.wv);
    fill(l.wo);
    fill(l.w1);
    fill(l.w2);
    l.ln1_gamma.setOnes();
    l.ln2_gamma.setOnes();
  }
  fill(p.head_w);
  p.head_ln_gamma.setOnes();
  if (p.output_w.size() > 0) fill(p.output_w);
  return p;
}

std::size_t TransformerParams::parameter_count() const {
  std::size_t n = 0;
  visit([&](const std::string&, const auto& block) { n += static_cast<std::size_t>(block.size()); });
  return n;
}

void TransformerParams::set_zero() {
  visit([](const std::string&, auto& block) { block.setZero(); });
}

void TransformerParams::axpy(double scale, const TransformerParams& other) {
  std::vector<const double*> src;
  other.visit([&](const std::string&, const auto& block) { src.push_back(block.data()); });
  std::size_t i = 0;
  visit([&](const std::string&, auto& block) {
    const double* s = src.at(i++);
    double* d = block.data();
    for (Eigen::Index k = 0; k < block.size(); ++k) d[k] += scale * s[k];
  });
}

bool TransformerParams::all_finite() const {
  bool ok = true;
  visit([&](const std::string&, const auto& block) { ok = ok && block.allFinite(); });
  return ok;
}

Vector log_softmax(const Eigen::Ref<const Eigen::RowVectorXd>& logits) {
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());
  return (logits.array() - lse).transpose().matrix();
}

ForwardTrace forward(const std::vector<PieceId>& ids, const std::vector<std::uint8_t>& pad_mask,
                     const TransformerParams& params, const ModelConfig& config, Rng* dropout_rng) {
  const auto P = static_cast<Eigen::Index>(ids.size());
  if (P == 0) throw InvalidArgument("empty input sequence");
  if (P > config.max_len)
    throw InvalidArgument("sequence length " + std::to_string(P) + " exceeds max_len " +
                          std::to_string(config.max_len));
  if (!pad_mask.empty() && pad_mask.size() != ids.size())
    throw InvalidArgument("pad mask length differs from the sequence length");
  for (PieceId id : ids)
    if (id < 0 || id >= config.vocab_size)
      throw InvalidArgument("piece id " + std::to_string(id) + " outside vocabulary of size " +
                            std::to_string(config.vocab_size));

  ForwardTrace t;
  t.ids = ids;
  t.pad_mask = pad_mask.empty() ? std::vector<std::uint8_t>(ids.size(), 1) : pad_mask;
  const Eigen::Index d = config.d_model;
  const int H = config.n_heads;
  const Eigen::Index dh = config.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  Matrix emb(P, d);
  for (Eigen::Index p = 0; p < P; ++p)
    emb.row(p) = params.token_embedding.row(ids[static_cast<std::size_t>(p)]) + params.position_embedding.row(p);
  Matrix x = layer_norm(emb, params.embedding_ln_gamma, params.embedding_ln_beta, t.embedding_xhat,
                        t.embedding_inv_std);
  t.embedding_dropout_mask = dropout_mask(P, d, config.dropout, dropout_rng);
  x = apply_mask(x, t.embedding_dropout_mask);
  t.hidden.push_back(x);

  for (const auto& lp : params.layers) {
    LayerCache c;
    c.input = x;
    c.q = x * lp.wq;
    add_bias(c.q, lp.bq);
    c.k = x * lp.wk;
    add_bias(c.k, lp.bk);
    c.v = x * lp.wv;
    add_bias(c.v, lp.bv);
    c.context.resize(P, d);
    c.attention.resize(static_cast<std::size_t>(H));
    for (int h = 0; h < H; ++h) {
      const Eigen::Index off = h * dh;
      Matrix scores = (c.q.middleCols(off, dh) * c.k.middleCols(off, dh).transpose()) * scale;
      Matrix& a = c.attention[static_cast<std::size_t>(h)];
      a.resize(P, P);
      for (Eigen::Index r = 0; r < P; ++r) {
        double m = -std::numeric_limits<double>::infinity();
        for (Eigen::Index j = 0; j < P; ++j)
          if (t.pad_mask[static_cast<std::size_t>(j)]) m = std::max(m, scores(r, j));
        double z = 0.0;
        for (Eigen::Index j = 0; j < P; ++j) {
          a(r, j) = t.pad_mask[static_cast<std::size_t>(j)] ? std::exp(scores(r, j) - m) : 0.0;
          z += a(r, j);
        }
        a.row(r) /= z;
      }
      c.context.middleCols(off, dh) = a * c.v.middleCols(off, dh);
    }
    Matrix attn_out = c.context * lp.wo;
    add_bias(attn_out, lp.bo);
    c.attn_dropout_mask = dropout_mask(P, d, config.dropout, dropout_rng);
    Matrix sum1 = x + apply_mask(attn_out, c.attn_dropout_mask);
    c.hidden1 = layer_norm(sum1, lp.ln1_gamma, lp.ln1_beta, c.ln1_xhat, c.ln1_inv_std);

    c.ff_pre = c.hidden1 * lp.w1;
    add_bias(c.ff_pre, lp.b1);
    c.ff_act = gelu(c.ff_pre);
    Matrix ff_out = c.ff_act * lp.w2;
    add_bias(ff_out, lp.b2);
    c.ff_dropout_mask = dropout_mask(P, d, config.dropout, dropout_rng);
    Matrix sum2 = c.hidden1 + apply_mask(ff_out, c.ff_dropout_mask);
    x = layer_norm(sum2, lp.ln2_gamma, lp.ln2_beta, c.ln2_xhat, c.ln2_inv_std);
    t.hidden.push_back(x);
    t.layers.push_back(std::move(c));
  }

  t.head_pre = x * params.head_w;
  add_bias(t.head_pre, params.head_b);
  t.head_act = gelu(t.head_pre);
  t.head_out = layer_norm(t.head_act, params.head_ln_gamma, params.head_ln_beta, t.head_xhat,
                          t.head_inv_std);
  if (config.tied_output)
    t.logits = t.head_out * params.token_embedding.transpose();
  else
    t.logits = t.head_out * params.output_w;
  add_bias(t.logits, params.output_b);
  return t;
}

double mlm_loss(const ForwardTrace& trace, const MlmTargets& targets) {
  if (targets.empty()) throw InvalidArgument("mlm_loss needs at least one target");
  double loss = 0.0;
  for (const auto& [pos, id] : targets) {
    if (pos >= trace.length() || !trace.pad_mask[pos])
      throw InvalidArgument("MLM target at invalid position " + std::to_string(pos));
    if (id < 0 || id >= trace.logits.cols()) throw InvalidArgument("MLM target id out of range");
    Vector lp = log_softmax(trace.logits.row(static_cast<Eigen::Index>(pos)));
    loss -= lp(id);
  }
  return loss / static_cast<double>(targets.size());
}

double guidance_loss(const ForwardTrace& trace, const AdjacencyMatrix& adjacency,
                     const GuidanceSpec& spec, const ModelConfig& config) {
  check_guidance_inputs(trace, adjacency, spec, config);
  double loss = 0.0;
  for (int l = 0; l < config.n_layers; ++l) {
    if (!spec.supervises(l, config.n_layers)) continue;
    for (int h : spec.heads) loss += head_bce(trace.attention(l, h), trace, adjacency, nullptr, 0.0);
  }
  return loss;
}

LossBreakdown total_loss(const ForwardTrace& trace, const Objective& objective,
                         const ModelConfig& config) {
  LossBreakdown out;
  if (!objective.targets) throw InvalidArgument("objective has no MLM targets");
  out.mlm = mlm_loss(trace, *objective.targets);
  if (objective.adjacency && objective.guidance) {
    out.guidance = guidance_loss(trace, *objective.adjacency, *objective.guidance, config);
    out.total = out.mlm + objective.guidance->alpha * out.guidance;
  } else {
    out.total = out.mlm;
  }
  return out;
}

void backward(const ForwardTrace& trace, const TransformerParams& params, const ModelConfig& config,
              const Objective& objective, TransformerParams& grads, double scale) {
  if (!objective.targets || objective.targets->empty())
    throw InvalidArgument("objective has no MLM targets");
  const auto P = static_cast<Eigen::Index>(trace.length());
  const Eigen::Index d = config.d_model;
  const int H = config.n_heads;
  const Eigen::Index dh = config.head_dim();
  const double attn_scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const int L = config.n_layers;

  // Attention-probability gradients injected by the guidance term.
  std::vector<std::vector<Matrix>> attn_grad(static_cast<std::size_t>(L));
  const bool guided = objective.adjacency && objective.guidance && objective.guidance->alpha != 0.0;
  if (guided) {
    check_guidance_inputs(trace, *objective.adjacency, *objective.guidance, config);
    for (int l = 0; l < L; ++l) {
      if (!objective.guidance->supervises(l, L)) continue;
      auto& per_head = attn_grad[static_cast<std::size_t>(l)];
      per_head.assign(static_cast<std::size_t>(H), Matrix());
      for (int h : objective.guidance->heads) {
        Matrix& g = per_head[static_cast<std::size_t>(h)];
        if (g.size() == 0) g = Matrix::Zero(P, P);
        head_bce(trace.attention(l, h), trace, *objective.adjacency, &g,
                 scale * objective.guidance->alpha);
      }
    }
  }

  // MLM cross-entropy.
  const double inv_n = scale / static_cast<double>(objective.targets->size());
  Matrix dlogits = Matrix::Zero(P, trace.logits.cols());
  for (const auto& [pos, id] : *objective.targets) {
    const auto r = static_cast<Eigen::Index>(pos);
    Vector prob = log_softmax(trace.logits.row(r)).array().exp();
    prob(id) -= 1.0;
    dlogits.row(r) = inv_n * prob.transpose();
  }

  grads.output_b += dlogits.colwise().sum().transpose();
  Matrix dhead_out;
  if (config.tied_output) {
    grads.token_embedding += dlogits.transpose() * trace.head_out;
    dhead_out = dlogits * params.token_embedding;
  } else {
    grads.output_w += trace.head_out.transpose() * dlogits;
    dhead_out = dlogits * params.output_w.transpose();
  }
  Matrix dhead_act = layer_norm_backward(dhead_out, trace.head_xhat, trace.head_inv_std,
                                         params.head_ln_gamma, grads.head_ln_gamma, grads.head_ln_beta);
  Matrix dhead_pre = dhead_act.cwiseProduct(trace.head_pre.unaryExpr([](double v) { return gelu_grad(v); }));
  grads.head_w += trace.final_hidden().transpose() * dhead_pre;
  grads.head_b += dhead_pre.colwise().sum().transpose();
  Matrix dx = dhead_pre * params.head_w.transpose();

  for (int l = L - 1; l >= 0; --l) {
    const auto& lp = params.layers[static_cast<std::size_t>(l)];
    auto& lg = grads.layers[static_cast<std::size_t>(l)];
    const auto& c = trace.layers[static_cast<std::size_t>(l)];

    Matrix dsum2 = layer_norm_backward(dx, c.ln2_xhat, c.ln2_inv_std, lp.ln2_gamma, lg.ln2_gamma, lg.ln2_beta);
    Matrix dff_out = apply_mask(dsum2, c.ff_dropout_mask);
    Matrix dhidden1 = dsum2;
    lg.w2 += c.ff_act.transpose() * dff_out;
    lg.b2 += dff_out.colwise().sum().transpose();
    Matrix dff_pre = (dff_out * lp.w2.transpose())
                         .cwiseProduct(c.ff_pre.unaryExpr([](double v) { return gelu_grad(v); }));
    lg.w1 += c.hidden1.transpose() * dff_pre;
    lg.b1 += dff_pre.colwise().sum().transpose();
    dhidden1 += dff_pre * lp.w1.transpose();

    Matrix dsum1 = layer_norm_backward(dhidden1, c.ln1_xhat, c.ln1_inv_std, lp.ln1_gamma, lg.ln1_gamma, lg.ln1_beta);
    Matrix dattn_out = apply_mask(dsum1, c.attn_dropout_mask);
    Matrix dinput = dsum1;
    lg.wo += c.context.transpose() * dattn_out;
    lg.bo += dattn_out.colwise().sum().transpose();
    Matrix dcontext = dattn_out * lp.wo.transpose();

    Matrix dq(P, d), dk(P, d), dv(P, d);
    const auto& injected = attn_grad[static_cast<std::size_t>(l)];
    for (int h = 0; h < H; ++h) {
      const Eigen::Index off = h * dh;
      const Matrix& a = c.attention[static_cast<std::size_t>(h)];
      auto dctx_h = dcontext.middleCols(off, dh);
      Matrix da = dctx_h * c.v.middleCols(off, dh).transpose();
      if (!injected.empty() && injected[static_cast<std::size_t>(h)].size() > 0)
        da += injected[static_cast<std::size_t>(h)];
      dv.middleCols(off, dh) = a.transpose() * dctx_h;
      Vector row_dot = (da.array() * a.array()).rowwise().sum();
      Matrix ds = a.array() * (da.colwise() - row_dot).array();
      dq.middleCols(off, dh) = (ds * c.k.middleCols(off, dh)) * attn_scale;
      dk.middleCols(off, dh) = (ds.transpose() * c.q.middleCols(off, dh)) * attn_scale;
    }
    lg.wq += c.input.transpose() * dq;
    lg.bq += dq.colwise().sum().transpose();
    lg.wk += c.input.transpose() * dk;
    lg.bk += dk.colwise().sum().transpose();
    lg.wv += c.input.transpose() * dv;
    lg.bv += dv.colwise().sum().transpose();
    dinput += dq * lp.wq.transpose() + dk * lp.wk.transpose() + dv * lp.wv.transpose();
    dx = std::move(dinput);
  }

  Matrix demb_norm = apply_mask(dx, trace.embedding_dropout_mask);
  Matrix demb = layer_norm_backward(demb_norm, trace.embedding_xhat, trace.embedding_inv_std,
                                    params.embedding_ln_gamma, grads.embedding_ln_gamma,
                                    grads.embedding_ln_beta);
  for (Eigen::Index p = 0; p < P; ++p) {
    grads.token_embedding.row(trace.ids[static_cast<std::size_t>(p)]) += demb.row(p);
    grads.position_embedding.row(p) += demb.row(p);
  }
}

}  // namespace neuroalign
