#ifndef NEUROALIGN_TOOLS_CLI_HPP
#define NEUROALIGN_TOOLS_CLI_HPP

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "neuroalign/corpus.hpp"
#include "neuroalign/model.hpp"
#include "neuroalign/repr.hpp"
#include "neuroalign/util.hpp"

namespace neuroalign::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitStage = 3;

/// Bad flags, bad config, missing inputs. Exit code 2.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A pipeline stage failed after validation. Exit code 3.
class StageError : public Error {
 public:
  StageError(std::string stage, const std::string& what)
      : Error("stage '" + stage + "' failed: " + what), stage_(std::move(stage)) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

/// Parses and dispatches argv. Never throws.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// NEUROALIGN_SEED when set and numeric.
std::optional<std::uint64_t> seed_from_env();

/// conllu, sdp, hier-json or jsonl, from the file extension.
std::string infer_format(const std::filesystem::path& path);

/// Loads any supported corpus format. hier-json files hold one graph or an
/// array of graphs and are converted with bilexical_approximate.
std::vector<SentenceGraph> load_corpus(const std::filesystem::path& path, const std::string& format,
                                       bool keep_remote = true);

struct IngestSummary {
  std::size_t sentences = 0;
  std::size_t edges = 0;
  std::map<std::string, std::size_t> labels;
  std::string to_json() const;
};

IngestSummary summarize_corpus(const std::vector<SentenceGraph>& graphs);

struct PipelineConfig {
  std::uint64_t seed = 13;
  std::string out_dir = "run";
  unsigned jobs = 1;

  // Corpus: a file, or the synthetic grammar when empty.
  std::string corpus_path;
  std::string corpus_format;
  std::size_t synthetic_sentences = 400;
  /// Held-out tail of the corpus used as decoding stimuli.
  std::size_t stimuli = 96;
  std::string level = "sentence";  // sentence | word
  std::size_t vocab_size = 160;

  ModelConfig model = default_model();
  int pretrain_steps = 1500;
  int finetune_steps = 800;
  int batch_size = 16;
  double lr = 2e-3;

  std::vector<int> layer_counts = {1, 2};
  std::vector<int> head_counts = {1, 2};
  std::vector<int> head_order = {0, 1, 2, 3};
  int runs_per_setting = 1;
  double alpha = 0.1;

  /// Recordings per subject; synthesized when empty.
  std::vector<std::string> brain_paths;
  int subjects = 8;
  int brain_dim = 32;
  double brain_sigma = 0.5;
  bool brain_sigma_relative = true;
  /// Model whose representations generate synthetic recordings:
  /// "selected", "baseline", "pretrained" or a guided model name.
  std::string brain_source = "selected";

  int outer_folds = 12;
  int inner_folds = 5;
  std::vector<double> lambda_grid;  // default grid when empty
  bool run_stats = true;
  int bootstrap_iterations = 5000;
  int hubness_k = 10;
  std::string hubness_metric = "cosine";

  static ModelConfig default_model();
  /// Missing keys keep their defaults; unknown keys are rejected.
  static PipelineConfig from_json(std::string_view text);
  std::string to_json() const;
  /// Throws ValidationError, including for input paths that do not exist.
  void validate() const;
};

/// Runs every stage and returns the run directory. Stage failures throw
/// StageError; artifacts written so far are left in place.
std::filesystem::path cmd_pipeline(const PipelineConfig& config, std::ostream& log);

/// Text tables for a completed run. Throws ValidationError listing missing
/// artifacts for an incomplete run.
std::string cmd_report(const std::filesystem::path& run_dir);

}  // namespace neuroalign::cli

#endif  // NEUROALIGN_TOOLS_CLI_HPP
