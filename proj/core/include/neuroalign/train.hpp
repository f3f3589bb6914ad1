#ifndef NEUROALIGN_TRAIN_HPP
#define NEUROALIGN_TRAIN_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "neuroalign/corpus.hpp"
#include "neuroalign/model.hpp"
#include "neuroalign/tokenize.hpp"

namespace neuroalign {

struct MaskingPolicy {
  double mask_prob = 0.15;
  double replace_mask_frac = 0.8;
  double replace_random_frac = 0.1;
  double keep_frac = 0.1;
  bool whole_word = true;

  void validate() const;
};

struct MaskedInput {
  std::vector<PieceId> ids;
  MlmTargets targets;
};

/// BERT-style corruption. With whole_word set, words are selected and all
/// pieces of a selected word share one corruption draw. If nothing is
/// selected, one word (or piece) is forced.
MaskedInput mask_tokens(const PieceAlignment& alignment, const MaskingPolicy& policy,
                        std::size_t vocab_size, Rng& rng);

struct TrainConfig {
  int steps = 1000;
  int batch_size = 16;
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  double warmup_frac = 0.1;
  std::uint64_t seed = 0;
  std::optional<GuidanceSpec> guidance;
  MaskingPolicy masking;
  unsigned jobs = 1;

  void validate() const;
};

/// A tokenized sentence with its adjacency target.
struct TrainingExample {
  PieceAlignment alignment;
  AdjacencyMatrix adjacency;
};

struct PreparedCorpus {
  std::vector<TrainingExample> examples;
  std::vector<std::size_t> source_index;  // index into the input graphs
  std::size_t skipped = 0;                // sentences longer than max_len
};

/// Tokenizes graphs and builds adjacency targets. Sentences whose piece
/// sequence exceeds `max_len` are skipped, never truncated.
PreparedCorpus prepare_corpus(const std::vector<SentenceGraph>& graphs, const Vocab& vocab,
                              int max_len, AdjacencyOptions options = {});

struct StepLog {
  int step = 0;
  double lr = 0.0;
  LossBreakdown loss;
};

struct TrainResult {
  TransformerParams params;
  std::vector<StepLog> curve;

  /// Mean of the last `window` logged steps.
  LossBreakdown final_losses(std::size_t window = 50) const;
};

/// Learning rate at 1-based `step`: linear warmup over ceil(warmup_frac *
/// steps) steps, then linear decay reaching lr / (steps - warmup) on the last
/// step.
double scheduled_lr(const TrainConfig& config, int step);

/// Adam-optimized MLM (+ guided attention) training. Starts from `initial`
/// when given, otherwise from TransformerParams::init(config.seed).
/// Throws NumericError naming the step if the loss becomes non-finite.
TrainResult train_mlm(const std::vector<TrainingExample>& examples, const ModelConfig& model_config,
                      const TrainConfig& train_config, const TransformerParams* initial = nullptr);

/// Mean attention probability placed on gold-adjacent pairs: averaged over
/// the given (layer, head) cells and over every eligible query row that has
/// at least one gold neighbour.
double gold_attention_mass(const TransformerParams& params, const ModelConfig& config,
                           const std::vector<TrainingExample>& examples, const GuidanceSpec& heads);

struct GridSetting {
  int layers = 0;
  std::vector<int> heads;
  double alpha = 0.1;

  std::string name() const;
  bool operator==(const GridSetting&) const = default;
};

struct GridSpec {
  std::vector<int> layer_counts;
  std::vector<std::vector<int>> head_sets;
  int runs_per_setting = 2;
  double alpha = 0.1;

  void validate() const;
  /// 24 layer counts x head-count prefixes {1,3,5,7,9,11,12}.
  static GridSpec paper_scale();
};

/// The first m entries of `order` for each m in `counts`.
std::vector<std::vector<int>> prefix_head_sets(const std::vector<int>& counts,
                                               const std::vector<int>& order);

std::vector<GridSetting> plan_grid(const GridSpec& grid);

/// Seed of run `run` for a setting; runs differ by a fixed offset of 1000.
std::uint64_t run_seed(std::uint64_t base_seed, int run);

struct RunManifest {
  GridSetting setting;
  int run = 0;
  std::uint64_t seed = 0;
  int steps = 0;
  LossBreakdown final_losses;
  std::string checkpoint;  // file name, relative to the manifest
  std::string corpus_hash;
  std::string status = "ok";
  std::string error;

  std::string to_json() const;
  static RunManifest from_json(std::string_view text);
};

struct GridContext {
  const std::vector<TrainingExample>* examples = nullptr;
  ModelConfig model;
  TrainConfig train;
  const TransformerParams* initial = nullptr;
  std::filesystem::path out_dir;
  std::string corpus_hash;
  std::string vocab_hash;
  unsigned jobs = 1;
};

/// Trains every (setting, run) pair, writing `<name>.ckpt` and
/// `<name>.json` under out_dir. A failing run is recorded with status
/// "failed" and the grid continues. Manifests are returned in plan order.
std::vector<RunManifest> run_grid(const GridSpec& grid, const GridContext& context);

}  // namespace neuroalign

#endif  // NEUROALIGN_TRAIN_HPP
