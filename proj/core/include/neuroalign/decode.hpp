#ifndef NEUROALIGN_DECODE_HPP
#define NEUROALIGN_DECODE_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "neuroalign/matrix_io.hpp"

namespace neuroalign {

struct PcaResult {
  Eigen::MatrixXd reduced;    // n x k
  Eigen::MatrixXd basis;      // d x k, orthonormal columns
  Eigen::VectorXd mean;       // column means removed before projection
  Eigen::VectorXd explained;  // variance fraction of each kept component
  bool capped = false;        // max_dims bound before the threshold was met
  std::string warning;
};

/// Column-centred SVD keeping the fewest components whose cumulative
/// explained variance reaches `variance_threshold`, at most `max_dims`.
/// Each component is signed so its largest-magnitude loading is positive.
PcaResult pca_fit_transform(const Eigen::MatrixXd& x, double variance_threshold, int max_dims);

/// Linear map from recordings to representations: D_hat = B * weights.
struct RidgeMap {
  Eigen::MatrixXd weights;  // d_B x d_H
  double lambda = 0.0;

  Eigen::MatrixXd predict(const Eigen::MatrixXd& b) const { return b * weights; }
};

/// argmin_G ||B G - D||^2 + lambda ||G||^2, solved as
/// (B^T B + lambda I) G = B^T D by an LDL^T factorization.
RidgeMap ridge_fit(const Eigen::MatrixXd& b, const Eigen::MatrixXd& d, double lambda);

/// Pearson correlation across the dimensions of one stimulus. nullopt when
/// either vector is constant.
std::optional<double> pearson_per_stimulus(const Eigen::Ref<const Eigen::VectorXd>& pred,
                                           const Eigen::Ref<const Eigen::VectorXd>& gold);

struct RankMetrics {
  double mean_rank = 0.0;
  double median_rank = 0.0;
  std::vector<int> ranks;  // 1-based
};

/// For each stimulus, the 1-based rank of its own gold row among all gold
/// rows ordered by increasing cosine distance from its prediction.
RankMetrics rank_metrics(const Eigen::MatrixXd& preds, const Eigen::MatrixXd& golds);

/// 10 points log-spaced over [1e-3, 1e3].
std::vector<double> default_lambda_grid();

struct NestedCvOptions {
  std::vector<double> lambda_grid = default_lambda_grid();
  int outer_folds = 12;
  int inner_folds = 5;
  std::uint64_t seed = 0;
  unsigned jobs = 1;
};

struct DecodeReport {
  std::vector<std::string> labels;
  Eigen::MatrixXd predictions;      // n x d_H, rows follow `labels`
  std::vector<double> pearson;      // NaN where undefined
  std::vector<int> fold;            // outer test fold of each stimulus
  std::vector<double> fold_lambda;  // chosen lambda per outer fold
  /// inner_fold[f][i]: inner fold of stimulus i within outer fold f, -1 for
  /// stimuli in the outer test fold.
  std::vector<std::vector<int>> inner_fold;
  std::vector<double> lambda_grid;
  int outer_folds = 0;
  int inner_folds = 0;
  std::uint64_t seed = 0;

  double mean_pearson = 0.0;
  std::size_t undefined_pearson = 0;
  double mean_rank = 0.0;
  double median_rank = 0.0;
  std::vector<int> ranks;

  /// Summary and per-fold lambdas as JSON.
  std::string to_json() const;
  /// label,fold,pearson,rank per stimulus.
  std::string scores_csv() const;
};

/// Seeded shuffle then contiguous split into `folds` parts (sizes differ by
/// at most one). Returns the fold id of each index.
std::vector<int> assign_folds(std::size_t n, int folds, std::uint64_t seed);

/// Brain-to-representation decoding with nested cross-validation: lambda is
/// chosen per outer fold by mean inner-fold per-stimulus Pearson, the map is
/// refit on the whole outer-training portion, and held-out predictions are
/// scored. `brain` rows are aligned to `reps` by label.
DecodeReport nested_cv_decode(const BrainMatrix& brain, const ReprMatrix& reps,
                              const NestedCvOptions& options = {});

}  // namespace neuroalign

#endif  // NEUROALIGN_DECODE_HPP
