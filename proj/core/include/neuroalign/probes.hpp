#ifndef NEUROALIGN_PROBES_HPP
#define NEUROALIGN_PROBES_HPP

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "neuroalign/model.hpp"
#include "neuroalign/tokenize.hpp"

namespace neuroalign {

/// Grammatical / ungrammatical sentences differing only in the target word.
struct MinimalPair {
  std::string category;
  std::vector<std::string> prefix;
  std::string good;
  std::string bad;
  std::vector<std::string> suffix;

  std::vector<std::string> sentence(bool grammatical) const;
};

/// TSV columns: category, prefix, good_target, bad_target, suffix. Context
/// columns are space-separated words and may be empty. A first row starting
/// with "category" is treated as a header.
std::vector<MinimalPair> parse_minimal_pairs(std::string_view tsv);
std::string write_minimal_pairs(const std::vector<MinimalPair>& pairs);

struct PairScore {
  bool scored = false;
  bool correct = false;
  double margin = 0.0;  // log p(good) - log p(bad)
  std::string skip_reason;
};

/// Sum of log-probabilities of `pieces` at the positions of `span`.
double target_logprob(const ForwardTrace& trace, const Span& span, const std::vector<PieceId>& pieces);

/// Strict comparison: ties are incorrect.
PairScore compare_targets(double logp_good, double logp_bad);

/// Masks the target position(s) once and compares the two targets' summed
/// piece log-probabilities. Pairs whose targets tokenize to different piece
/// counts, or to [UNK], are skipped with a reason.
PairScore score_minimal_pair(const TransformerParams& params, const ModelConfig& config,
                             const Vocab& vocab, const MinimalPair& pair);

struct CategoryAccuracy {
  std::size_t total = 0;
  std::size_t scored = 0;
  std::size_t correct = 0;
  std::size_t skipped = 0;
  double accuracy() const { return scored ? static_cast<double>(correct) / static_cast<double>(scored) : 0.0; }
};

std::map<std::string, CategoryAccuracy> summarize_pairs(const std::vector<MinimalPair>& pairs,
                                                        const std::vector<PairScore>& scores);

struct TagInstance {
  std::string sentence_id;
  int word_index = 0;
  std::string tag;
};

/// TSV columns: sentence_id, word_index, tag. Optional header row.
std::vector<TagInstance> parse_tag_dataset(std::string_view tsv);

struct ProbeOptions {
  int max_epochs = 2000;
  double grad_tol = 1e-5;
};

/// Multinomial logistic regression with an L2 penalty on the weights.
struct LinearProbe {
  Eigen::MatrixXd weights;  // d x C
  Eigen::VectorXd bias;     // C
  std::vector<std::string> classes;
  double l2 = 0.0;
  int epochs = 0;
  double grad_norm = 0.0;
  std::vector<double> loss_history;

  Eigen::MatrixXd probabilities(const Eigen::MatrixXd& x) const;
  std::vector<std::string> predict(const Eigen::MatrixXd& x) const;
};

/// Full-batch gradient descent with backtracking line search from zero
/// initialization; stops when the gradient norm drops below grad_tol.
LinearProbe train_linear_probe(const Eigen::MatrixXd& features, const std::vector<std::string>& labels,
                               double l2, const ProbeOptions& options = {});

/// Mean cross-entropy plus (l2 / 2) * ||W||^2.
double probe_objective(const LinearProbe& probe, const Eigen::MatrixXd& features,
                       const std::vector<std::string>& labels);

struct ClassMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t support = 0;
};

struct ProbeEvaluation {
  std::map<std::string, ClassMetrics> per_class;
  /// Mean F1 over classes that occur in the gold labels or the predictions.
  double macro_f1 = 0.0;
  double accuracy = 0.0;
};

/// `classes` lists every class to report; those absent from the test set
/// appear with support 0.
ProbeEvaluation evaluate_predictions(const std::vector<std::string>& predicted,
                                     const std::vector<std::string>& gold,
                                     const std::vector<std::string>& classes);

ProbeEvaluation evaluate_probe(const LinearProbe& probe, const Eigen::MatrixXd& features,
                               const std::vector<std::string>& labels);

}  // namespace neuroalign

#endif  // NEUROALIGN_PROBES_HPP
