#include "neuroalign/train.hpp"

#include <cmath>
#include <sstream>

#include "json.hpp"

namespace neuroalign {

void MaskingPolicy::validate() const {
  auto in_unit = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!in_unit(mask_prob) || !in_unit(replace_mask_frac) || !in_unit(replace_random_frac) ||
      !in_unit(keep_frac))
    throw InvalidArgument("masking probabilities must lie in [0, 1]");
  if (std::abs(replace_mask_frac + replace_random_frac + keep_frac - 1.0) > 1e-9)
    throw InvalidArgument("masking corruption fractions must sum to 1");
}

MaskedInput mask_tokens(const PieceAlignment& alignment, const MaskingPolicy& policy,
                        std::size_t vocab_size, Rng& rng) {
  policy.validate();
  // Units are words (whole-word masking) or individual pieces.
  std::vector<Span> units;
  if (policy.whole_word) {
    units = alignment.word_spans;
  } else {
    for (const auto& s : alignment.word_spans)
      for (std::size_t p = s.begin; p < s.end; ++p) units.push_back({p, p + 1});
  }
  if (units.empty()) throw InvalidArgument("sequence has no maskable word");

  std::vector<std::size_t> selected;
  for (std::size_t u = 0; u < units.size(); ++u)
    if (rng.uniform() < policy.mask_prob) selected.push_back(u);
  if (selected.empty()) selected.push_back(rng.below(units.size()));

  MaskedInput out{alignment.ids, {}};
  const std::size_t n_random = vocab_size > Vocab::kNumSpecials ? vocab_size - Vocab::kNumSpecials : 0;
  for (std::size_t u : selected) {
    const double draw = rng.uniform();
    for (std::size_t p = units[u].begin; p < units[u].end; ++p) {
      out.targets[p] = alignment.ids[p];
      if (draw < policy.replace_mask_frac) {
        out.ids[p] = Vocab::kMask;
      } else if (draw < policy.replace_mask_frac + policy.replace_random_frac) {
        out.ids[p] = n_random ? static_cast<PieceId>(Vocab::kNumSpecials + rng.below(n_random))
                              : Vocab::kMask;
      }
    }
  }
  return out;
}

void TrainConfig::validate() const {
  if (steps < 1) throw InvalidArgument("steps must be at least 1");
  if (batch_size < 1) throw InvalidArgument("batch size must be at least 1");
  if (!(lr > 0.0)) throw InvalidArgument("learning rate must be positive");
  if (warmup_frac < 0.0 || warmup_frac > 1.0) throw InvalidArgument("warmup fraction must lie in [0, 1]");
  masking.validate();
}

PreparedCorpus prepare_corpus(const std::vector<SentenceGraph>& graphs, const Vocab& vocab,
                              int max_len, AdjacencyOptions options) {
  PreparedCorpus out;
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    if (graphs[i].tokens.empty()) {
      ++out.skipped;
      continue;
    }
    auto alignment = tokenize_sentence(graphs[i].words(), vocab);
    if (alignment.length() > static_cast<std::size_t>(max_len)) {
      ++out.skipped;
      continue;
    }
    auto adjacency = build_adjacency(graphs[i], alignment, options);
    out.examples.push_back({std::move(alignment), std::move(adjacency)});
    out.source_index.push_back(i);
  }
  return out;
}

LossBreakdown TrainResult::final_losses(std::size_t window) const {
  LossBreakdown out;
  if (curve.empty()) return out;
  const std::size_t n = std::min(window, curve.size());
  for (std::size_t i = curve.size() - n; i < curve.size(); ++i) {
    out.total += curve[i].loss.total;
    out.mlm += curve[i].loss.mlm;
    out.guidance += curve[i].loss.guidance;
  }
  out.total /= static_cast<double>(n);
  out.mlm /= static_cast<double>(n);
  out.guidance /= static_cast<double>(n);
  return out;
}

double scheduled_lr(const TrainConfig& config, int step) {
  const int warmup = static_cast<int>(std::ceil(config.warmup_frac * config.steps));
  if (warmup > 0 && step <= warmup) return config.lr * step / warmup;
  const int decay_span = config.steps - warmup;
  if (decay_span <= 0) return config.lr;
  return config.lr * static_cast<double>(config.steps - step + 1) / decay_span;
}

namespace {

struct AdamState {
  TransformerParams m;
  TransformerParams v;
  long t = 0;
};

void adam_update(TransformerParams& params, const TransformerParams& grads, AdamState& state,
                 const TrainConfig& cfg, double lr) {
  ++state.t;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  std::vector<double*> g_ptr, m_ptr, v_ptr;
  grads.visit([&](const std::string&, const auto& b) { g_ptr.push_back(const_cast<double*>(b.data())); });
  state.m.visit([&](const std::string&, auto& b) { m_ptr.push_back(b.data()); });
  state.v.visit([&](const std::string&, auto& b) { v_ptr.push_back(b.data()); });
  std::size_t i = 0;
  params.visit([&](const std::string&, auto& block) {
    // Decoupled weight decay on matrices only; biases and norms are exempt.
    const bool decay = block.rows() > 1 && block.cols() > 1;
    double* p = block.data();
    const double* g = g_ptr[i];
    double* m = m_ptr[i];
    double* v = v_ptr[i];
    for (Eigen::Index k = 0; k < block.size(); ++k) {
      m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
      v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
      const double update = (m[k] / bc1) / (std::sqrt(v[k] / bc2) + cfg.eps);
      p[k] -= lr * (update + (decay ? cfg.weight_decay * p[k] : 0.0));
    }
    ++i;
  });
}

}  // namespace

TrainResult train_mlm(const std::vector<TrainingExample>& examples, const ModelConfig& model_config,
                      const TrainConfig& cfg, const TransformerParams* initial) {
  model_config.validate();
  cfg.validate();
  if (examples.empty()) throw InvalidArgument("training corpus is empty");
  if (cfg.guidance) cfg.guidance->validate(model_config);
  for (const auto& ex : examples)
    if (ex.alignment.length() > static_cast<std::size_t>(model_config.max_len))
      throw InvalidArgument("training example longer than max_len");

  TrainResult result;
  result.params = initial ? *initial : TransformerParams::init(model_config, cfg.seed);
  AdamState adam{TransformerParams::zeros(model_config), TransformerParams::zeros(model_config), 0};

  Rng order_rng(splitmix64(cfg.seed ^ 0x5eed0fdeULL));
  std::vector<std::size_t> order(examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  order_rng.shuffle(order);
  std::size_t cursor = 0;

  const auto B = static_cast<std::size_t>(cfg.batch_size);
  std::vector<TransformerParams> item_grads(B, TransformerParams::zeros(model_config));
  std::vector<LossBreakdown> item_loss(B);
  TransformerParams grads = TransformerParams::zeros(model_config);
  std::uint64_t item_counter = 0;

  for (int step = 1; step <= cfg.steps; ++step) {
    std::vector<std::size_t> batch(B);
    for (auto& b : batch) {
      if (cursor == order.size()) {
        order_rng.shuffle(order);
        cursor = 0;
      }
      b = order[cursor++];
    }
    const std::uint64_t first_item = item_counter;
    item_counter += B;
    parallel_for(B, cfg.jobs, [&](std::size_t i) {
      const auto& ex = examples[batch[i]];
      Rng rng = Rng::stream(cfg.seed, first_item + i);
      MaskedInput masked = mask_tokens(ex.alignment, cfg.masking, static_cast<std::size_t>(model_config.vocab_size), rng);
      ForwardTrace trace = forward(masked.ids, {}, result.params, model_config,
                                   model_config.dropout > 0.0 ? &rng : nullptr);
      Objective obj{&masked.targets, cfg.guidance ? &ex.adjacency : nullptr,
                    cfg.guidance ? &*cfg.guidance : nullptr};
      item_loss[i] = total_loss(trace, obj, model_config);
      item_grads[i].set_zero();
      backward(trace, result.params, model_config, obj, item_grads[i], 1.0 / static_cast<double>(B));
    });

    // Fixed-order reduction keeps runs bitwise reproducible for any job count.
    grads.set_zero();
    LossBreakdown mean;
    for (std::size_t i = 0; i < B; ++i) {
      grads.axpy(1.0, item_grads[i]);
      mean.total += item_loss[i].total / static_cast<double>(B);
      mean.mlm += item_loss[i].mlm / static_cast<double>(B);
      mean.guidance += item_loss[i].guidance / static_cast<double>(B);
    }
    if (!std::isfinite(mean.total) || !grads.all_finite())
      throw NumericError("training diverged at step " + std::to_string(step));
    const double lr = scheduled_lr(cfg, step);
    adam_update(result.params, grads, adam, cfg, lr);
    result.curve.push_back({step, lr, mean});
  }
  return result;
}

double gold_attention_mass(const TransformerParams& params, const ModelConfig& config,
                           const std::vector<TrainingExample>& examples, const GuidanceSpec& heads) {
  heads.validate(config);
  double total = 0.0;
  std::size_t rows = 0;
  for (const auto& ex : examples) {
    ForwardTrace trace = forward(ex.alignment.ids, {}, params, config);
    const std::size_t P = trace.length();
    for (int l = 0; l < config.n_layers; ++l) {
      if (!heads.supervises(l, config.n_layers)) continue;
      for (int h : heads.heads) {
        const Matrix& a = trace.attention(l, h);
        for (std::size_t i = 0; i < P; ++i) {
          if (ex.adjacency.is_special(i)) continue;
          double mass = 0.0;
          bool any = false;
          for (std::size_t j = 0; j < P; ++j) {
            if (ex.adjacency.at(i, j)) {
              mass += a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
              any = true;
            }
          }
          if (!any) continue;
          total += mass;
          ++rows;
        }
      }
    }
  }
  if (rows == 0) throw InvalidArgument("no gold-adjacent rows to measure");
  return total / static_cast<double>(rows);
}

std::string GridSetting::name() const {
  std::ostringstream os;
  os << "L" << layers << "_H";
  for (std::size_t i = 0; i < heads.size(); ++i) os << (i ? "-" : "") << heads[i];
  if (heads.empty()) os << "none";
  return os.str();
}

void GridSpec::validate() const {
  if (layer_counts.empty() || head_sets.empty()) throw InvalidArgument("grid lists must be non-empty");
  if (runs_per_setting < 1) throw InvalidArgument("runs_per_setting must be at least 1");
  for (int l : layer_counts)
    if (l < 1) throw InvalidArgument("layer counts must be positive");
  for (const auto& hs : head_sets)
    if (hs.empty()) throw InvalidArgument("head sets must be non-empty");
}

std::vector<std::vector<int>> prefix_head_sets(const std::vector<int>& counts,
                                               const std::vector<int>& order) {
  std::vector<std::vector<int>> out;
  for (int m : counts) {
    if (m < 1 || static_cast<std::size_t>(m) > order.size())
      throw InvalidArgument("head count " + std::to_string(m) + " exceeds the head order list");
    out.emplace_back(order.begin(), order.begin() + m);
  }
  return out;
}

GridSpec GridSpec::paper_scale() {
  GridSpec g;
  for (int l = 1; l <= 24; ++l) g.layer_counts.push_back(l);
  std::vector<int> order(16);
  for (int h = 0; h < 16; ++h) order[static_cast<std::size_t>(h)] = h;
  g.head_sets = prefix_head_sets({1, 3, 5, 7, 9, 11, 12}, order);
  g.runs_per_setting = 2;
  g.alpha = 0.1;
  return g;
}

std::vector<GridSetting> plan_grid(const GridSpec& grid) {
  grid.validate();
  std::vector<GridSetting> out;
  for (int l : grid.layer_counts)
    for (const auto& hs : grid.head_sets) out.push_back({l, hs, grid.alpha});
  return out;
}

std::uint64_t run_seed(std::uint64_t base_seed, int run) {
  return base_seed + 1000ULL * static_cast<std::uint64_t>(run);
}

std::string RunManifest::to_json() const {
  nlohmann::json j;
  j["setting"] = {{"layers", setting.layers}, {"heads", setting.heads}, {"alpha", setting.alpha}};
  j["run"] = run;
  j["seed"] = seed;
  j["steps"] = steps;
  j["final_losses"] = {{"total", final_losses.total}, {"mlm", final_losses.mlm},
                       {"guidance", final_losses.guidance}};
  j["checkpoint"] = checkpoint;
  j["corpus_hash"] = corpus_hash;
  j["status"] = status;
  if (!error.empty()) j["error"] = error;
  return j.dump(2);
}

RunManifest RunManifest::from_json(std::string_view text) {
  RunManifest m;
  try {
    auto j = nlohmann::json::parse(text);
    m.setting.layers = j.at("setting").at("layers").get<int>();
    m.setting.heads = j.at("setting").at("heads").get<std::vector<int>>();
    m.setting.alpha = j.at("setting").at("alpha").get<double>();
    m.run = j.value("run", 0);
    m.seed = j.at("seed").get<std::uint64_t>();
    m.steps = j.at("steps").get<int>();
    const auto& fl = j.at("final_losses");
    m.final_losses = {fl.at("total").get<double>(), fl.at("mlm").get<double>(),
                      fl.at("guidance").get<double>()};
    m.checkpoint = j.at("checkpoint").get<std::string>();
    m.corpus_hash = j.value("corpus_hash", "");
    m.status = j.value("status", "ok");
    m.error = j.value("error", "");
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed run manifest: ") + e.what());
  }
  return m;
}

std::vector<RunManifest> run_grid(const GridSpec& grid, const GridContext& ctx) {
  if (!ctx.examples) throw InvalidArgument("grid context has no training examples");
  const auto settings = plan_grid(grid);
  const std::size_t runs = static_cast<std::size_t>(grid.runs_per_setting);
  std::vector<RunManifest> manifests(settings.size() * runs);
  std::filesystem::create_directories(ctx.out_dir);

  parallel_for(manifests.size(), ctx.jobs, [&](std::size_t idx) {
    const auto& setting = settings[idx / runs];
    const int run = static_cast<int>(idx % runs);
    RunManifest& m = manifests[idx];
    m.setting = setting;
    m.run = run;
    m.seed = run_seed(ctx.train.seed, run);
    m.steps = ctx.train.steps;
    m.corpus_hash = ctx.corpus_hash;
    const std::string stem = setting.name() + "_run" + std::to_string(run);
    try {
      TrainConfig cfg = ctx.train;
      cfg.seed = m.seed;
      cfg.jobs = 1;
      cfg.guidance = GuidanceSpec{setting.layers, setting.heads, setting.alpha};
      auto result = train_mlm(*ctx.examples, ctx.model, cfg, ctx.initial);
      m.final_losses = result.final_losses();
      const auto ckpt = ctx.out_dir / (stem + ".ckpt");
      save_checkpoint(ckpt, result.params, ctx.model, {ctx.vocab_hash, cfg.steps});
      m.checkpoint = ckpt.filename().string();
    } catch (const std::exception& e) {
      m.status = "failed";
      m.error = e.what();
    }
    write_file_atomic(ctx.out_dir / (stem + ".json"), m.to_json());
  });
  return manifests;
}

}  // namespace neuroalign
