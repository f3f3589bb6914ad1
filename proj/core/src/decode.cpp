#include "neuroalign/decode.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "json.hpp"
#include "neuroalign/util.hpp"

namespace neuroalign {

using Eigen::MatrixXd;
using Eigen::VectorXd;

PcaResult pca_fit_transform(const MatrixXd& x, double variance_threshold, int max_dims) {
  if (x.rows() < 2) throw InvalidArgument("PCA needs at least two rows");
  if (max_dims < 1) throw InvalidArgument("max_dims must be at least 1");
  if (variance_threshold <= 0.0 || variance_threshold > 1.0)
    throw InvalidArgument("variance threshold must lie in (0, 1]");
  PcaResult out;
  out.mean = x.colwise().mean().transpose();
  MatrixXd centered = x.rowwise() - out.mean.transpose();
  Eigen::BDCSVD<MatrixXd> svd(centered, Eigen::ComputeThinV);
  const VectorXd var = svd.singularValues().array().square();
  const double total = var.sum();
  if (!(total > 0.0) || total <= 1e-24 * std::max(1.0, centered.squaredNorm()))
    throw NumericError("PCA input has zero variance");

  const Eigen::Index available = var.size();
  Eigen::Index k = 0;
  double cum = 0.0;
  while (k < available) {
    cum += var(k) / total;
    ++k;
    if (cum >= variance_threshold - 1e-12) break;
  }
  if (k > max_dims) {
    out.capped = true;
    out.warning = "max_dims=" + std::to_string(max_dims) + " reached before " +
                  format_double(variance_threshold) + " of the variance was explained";
    k = max_dims;
  }
  out.basis = svd.matrixV().leftCols(k);
  for (Eigen::Index c = 0; c < k; ++c) {
    Eigen::Index arg = 0;
    out.basis.col(c).cwiseAbs().maxCoeff(&arg);
    if (out.basis(arg, c) < 0) out.basis.col(c) *= -1.0;
  }
  out.explained = var.head(k) / total;
  out.reduced = centered * out.basis;
  return out;
}

RidgeMap ridge_fit(const MatrixXd& b, const MatrixXd& d, double lambda) {
  if (b.rows() != d.rows()) throw InvalidArgument("ridge_fit: B and D row counts differ");
  if (!(lambda >= 0.0)) throw InvalidArgument("ridge_fit: lambda must be non-negative");
  MatrixXd gram = b.transpose() * b;
  gram.diagonal().array() += lambda;
  Eigen::LDLT<MatrixXd> ldlt(gram);
  const auto pivots = ldlt.vectorD().cwiseAbs();
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || ldlt.rcond() < 1e-13 ||
      pivots.minCoeff() <= 1e-13 * pivots.maxCoeff())
    throw NumericError("ridge system is singular at lambda=" + format_double(lambda) +
                       "; use lambda > 0");
  return {ldlt.solve(b.transpose() * d), lambda};
}

std::optional<double> pearson_per_stimulus(const Eigen::Ref<const VectorXd>& pred,
                                           const Eigen::Ref<const VectorXd>& gold) {
  if (pred.size() != gold.size()) throw InvalidArgument("pearson: length mismatch");
  if (pred.size() < 2) throw InvalidArgument("pearson: need at least two dimensions");
  const VectorXd a = pred.array() - pred.mean();
  const VectorXd g = gold.array() - gold.mean();
  const double na = a.norm(), ng = g.norm();
  if (na == 0.0 || ng == 0.0) return std::nullopt;
  return std::clamp(a.dot(g) / (na * ng), -1.0, 1.0);
}

RankMetrics rank_metrics(const MatrixXd& preds, const MatrixXd& golds) {
  const Eigen::Index n = preds.rows();
  if (golds.rows() != n || golds.cols() != preds.cols())
    throw InvalidArgument("rank_metrics: shapes differ");
  if (n < 2) throw InvalidArgument("rank_metrics: need at least two stimuli");
  auto normalize = [](MatrixXd m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      const double norm = m.row(i).norm();
      if (norm == 0.0) throw InvalidArgument("rank_metrics: zero-norm vector");
      m.row(i) /= norm;
    }
    return m;
  };
  const MatrixXd p = normalize(preds);
  const MatrixXd g = normalize(golds);
  const MatrixXd dist = (1.0 - (p * g.transpose()).array()).matrix();  // n x n
  RankMetrics out;
  out.ranks.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    int rank = 1;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      if (dist(i, j) < dist(i, i) || (dist(i, j) == dist(i, i) && j < i)) ++rank;
    }
    out.ranks[static_cast<std::size_t>(i)] = rank;
  }
  out.mean_rank = std::accumulate(out.ranks.begin(), out.ranks.end(), 0.0) / static_cast<double>(n);
  std::vector<int> sorted = out.ranks;
  std::sort(sorted.begin(), sorted.end());
  const auto mid = static_cast<std::size_t>(n / 2);
  out.median_rank = n % 2 ? sorted[mid] : 0.5 * (sorted[mid - 1] + sorted[mid]);
  return out;
}

std::vector<double> default_lambda_grid() {
  std::vector<double> grid;
  for (int i = 0; i < 10; ++i) grid.push_back(std::pow(10.0, -3.0 + 6.0 * i / 9.0));
  return grid;
}

std::vector<int> assign_folds(std::size_t n, int folds, std::uint64_t seed) {
  if (folds < 1) throw InvalidArgument("fold count must be positive");
  if (n < static_cast<std::size_t>(folds))
    throw InvalidArgument("cannot split " + std::to_string(n) + " stimuli into " + std::to_string(folds) +
                          " non-empty folds");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(seed);
  rng.shuffle(perm);
  std::vector<int> out(n);
  const std::size_t base = n / static_cast<std::size_t>(folds);
  const std::size_t extra = n % static_cast<std::size_t>(folds);
  std::size_t pos = 0;
  for (int f = 0; f < folds; ++f) {
    const std::size_t size = base + (static_cast<std::size_t>(f) < extra ? 1 : 0);
    for (std::size_t k = 0; k < size; ++k) out[perm[pos++]] = f;
  }
  return out;
}

namespace {

// Ridge solutions for many lambdas from one eigendecomposition of B^T B.
class RidgePath {
 public:
  RidgePath(const MatrixXd& b, const MatrixXd& d) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(b.transpose() * b);
    q_ = eig.eigenvectors();
    evals_ = eig.eigenvalues().cwiseMax(0.0);
    qtbd_ = q_.transpose() * (b.transpose() * d);
  }
  MatrixXd solve(double lambda) const {
    VectorXd inv = (evals_.array() + lambda).inverse();
    return q_ * (inv.asDiagonal() * qtbd_);
  }

 private:
  MatrixXd q_;
  VectorXd evals_;
  MatrixXd qtbd_;
};

MatrixXd take_rows(const MatrixXd& m, const std::vector<Eigen::Index>& rows) {
  MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
  return out;
}

}  // namespace

DecodeReport nested_cv_decode(const BrainMatrix& brain, const ReprMatrix& reps_in,
                              const NestedCvOptions& opt) {
  brain.validate();
  reps_in.validate();
  if (brain.rows() != reps_in.rows()) throw InvalidArgument("brain and representation row counts differ");
  if (opt.lambda_grid.empty()) throw InvalidArgument("lambda grid is empty");
  for (double l : opt.lambda_grid)
    if (!(l >= 0.0)) throw InvalidArgument("lambda values must be non-negative");
  if (opt.inner_folds < 2) throw InvalidArgument("inner fold count must be at least 2");
  const ReprMatrix reps = reps_in.aligned_to(brain.labels);
  const auto n = static_cast<std::size_t>(brain.rows());

  DecodeReport rep;
  rep.labels = brain.labels;
  rep.lambda_grid = opt.lambda_grid;
  rep.outer_folds = opt.outer_folds;
  rep.inner_folds = opt.inner_folds;
  rep.seed = opt.seed;
  rep.fold = assign_folds(n, opt.outer_folds, opt.seed);
  rep.predictions = MatrixXd::Zero(brain.rows(), reps.cols());
  rep.fold_lambda.assign(static_cast<std::size_t>(opt.outer_folds), 0.0);
  rep.inner_fold.assign(static_cast<std::size_t>(opt.outer_folds), std::vector<int>(n, -1));

  parallel_for(static_cast<std::size_t>(opt.outer_folds), opt.jobs, [&](std::size_t f) {
    std::vector<Eigen::Index> train, test;
    for (std::size_t i = 0; i < n; ++i)
      (rep.fold[i] == static_cast<int>(f) ? test : train).push_back(static_cast<Eigen::Index>(i));
    if (train.size() < static_cast<std::size_t>(opt.inner_folds))
      throw InvalidArgument("outer-training portion smaller than the inner fold count");

    // Inner folds over the outer-training stimuli.
    auto inner = assign_folds(train.size(), opt.inner_folds, splitmix64(opt.seed + 1 + f));
    for (std::size_t t = 0; t < train.size(); ++t)
      rep.inner_fold[f][static_cast<std::size_t>(train[t])] = inner[t];

    std::vector<double> score(opt.lambda_grid.size(), 0.0);
    std::vector<std::size_t> counted(opt.lambda_grid.size(), 0);
    if (opt.lambda_grid.size() > 1) {
      for (int k = 0; k < opt.inner_folds; ++k) {
        std::vector<Eigen::Index> itrain, ival;
        for (std::size_t t = 0; t < train.size(); ++t) (inner[t] == k ? ival : itrain).push_back(train[t]);
        const MatrixXd bt = take_rows(brain.values, itrain), dt = take_rows(reps.values, itrain);
        const MatrixXd bv = take_rows(brain.values, ival), dv = take_rows(reps.values, ival);
        RidgePath path(bt, dt);
        for (std::size_t li = 0; li < opt.lambda_grid.size(); ++li) {
          const MatrixXd pred = bv * path.solve(opt.lambda_grid[li]);
          for (Eigen::Index i = 0; i < pred.rows(); ++i) {
            auto r = pearson_per_stimulus(pred.row(i).transpose(), dv.row(i).transpose());
            if (r && std::isfinite(*r)) {
              score[li] += *r;
              ++counted[li];
            }
          }
        }
      }
    }
    std::size_t best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t li = 0; li < opt.lambda_grid.size(); ++li) {
      const double s = counted[li] ? score[li] / static_cast<double>(counted[li])
                                   : -std::numeric_limits<double>::infinity();
      if (s > best_score) {
        best_score = s;
        best = li;
      }
    }
    rep.fold_lambda[f] = opt.lambda_grid[best];
    const RidgeMap map = ridge_fit(take_rows(brain.values, train), take_rows(reps.values, train),
                                   rep.fold_lambda[f]);
    const MatrixXd pred = map.predict(take_rows(brain.values, test));
    for (std::size_t t = 0; t < test.size(); ++t) rep.predictions.row(test[t]) = pred.row(static_cast<Eigen::Index>(t));
  });

  rep.pearson.resize(n);
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    auto r = pearson_per_stimulus(rep.predictions.row(row).transpose(), reps.values.row(row).transpose());
    rep.pearson[i] = r ? *r : std::numeric_limits<double>::quiet_NaN();
    if (r) {
      sum += *r;
      ++count;
    } else {
      ++rep.undefined_pearson;
    }
  }
  rep.mean_pearson = count ? sum / static_cast<double>(count) : std::numeric_limits<double>::quiet_NaN();
  auto ranks = rank_metrics(rep.predictions, reps.values);
  rep.mean_rank = ranks.mean_rank;
  rep.median_rank = ranks.median_rank;
  rep.ranks = std::move(ranks.ranks);
  return rep;
}

std::string DecodeReport::to_json() const {
  nlohmann::json j;
  j["n"] = labels.size();
  j["outer_folds"] = outer_folds;
  j["inner_folds"] = inner_folds;
  j["seed"] = seed;
  j["lambda_grid"] = lambda_grid;
  j["fold_lambda"] = fold_lambda;
  j["summary"] = {{"mean_pearson", mean_pearson},
                  {"undefined_pearson", undefined_pearson},
                  {"mean_rank", mean_rank},
                  {"median_rank", median_rank}};
  return j.dump(2);
}

std::string DecodeReport::scores_csv() const {
  std::string out = "label,fold,pearson,rank\r\n";
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out += csv_field(labels[i]) + "," + std::to_string(fold[i]) + "," +
           (std::isnan(pearson[i]) ? std::string() : format_double(pearson[i])) + "," +
           std::to_string(ranks.empty() ? 0 : ranks[i]) + "\r\n";
  }
  return out;
}

}  // namespace neuroalign
