#include <algorithm>
#include <cmath>
#include <set>

#include "doctest.h"
#include "neuroalign/decode.hpp"
#include "neuroalign/synth.hpp"

using namespace neuroalign;
using Eigen::MatrixXd;

namespace {

MatrixXd gaussian(Eigen::Index r, Eigen::Index c, Rng& rng) {
  MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

LabeledMatrix labeled(const MatrixXd& v) {
  LabeledMatrix m;
  m.values = v;
  for (Eigen::Index i = 0; i < v.rows(); ++i) m.labels.push_back("s" + std::to_string(i));
  return m;
}

}  // namespace

TEST_CASE("ridge matches the augmented least-squares oracle") {
  Rng rng(1);
  const MatrixXd b = gaussian(40, 6, rng), d = gaussian(40, 3, rng);
  for (double lambda : {1e-3, 0.5, 10.0}) {
    MatrixXd aug_b(46, 6), aug_d(46, 3);
    aug_b << b, std::sqrt(lambda) * MatrixXd::Identity(6, 6);
    aug_d << d, MatrixXd::Zero(6, 3);
    const MatrixXd oracle = aug_b.colPivHouseholderQr().solve(aug_d);
    const auto fit = ridge_fit(b, d, lambda);
    CHECK((fit.weights - oracle).norm() < 1e-10);
    CHECK(fit.lambda == lambda);
  }
  CHECK_THROWS(ridge_fit(b, d, -1.0));
  CHECK_THROWS(ridge_fit(b, gaussian(39, 3, rng), 1.0));
  // Rank-deficient with lambda 0 is singular.
  MatrixXd dup(10, 2);
  dup.col(0) = gaussian(10, 1, rng);
  dup.col(1) = dup.col(0);
  CHECK_THROWS_AS(ridge_fit(dup, gaussian(10, 1, rng), 0.0), NumericError);
}

TEST_CASE("pca matches the covariance eigendecomposition") {
  Rng rng(2);
  MatrixXd x = gaussian(60, 5, rng);
  x.col(0) *= 5.0;
  x.col(1) *= 2.0;
  const auto r = pca_fit_transform(x, 0.999999, 5);
  const MatrixXd centered = x.rowwise() - x.colwise().mean();
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(centered.transpose() * centered / 59.0);
  const Eigen::VectorXd ev = es.eigenvalues().reverse();
  REQUIRE(r.basis.cols() == 5);
  for (int k = 0; k < 5; ++k) {
    Eigen::VectorXd oracle = es.eigenvectors().col(4 - k);
    Eigen::Index arg;
    oracle.cwiseAbs().maxCoeff(&arg);
    if (oracle(arg) < 0) oracle = -oracle;
    CHECK((r.basis.col(k) - oracle).norm() < 1e-8);
    CHECK(r.explained(k) == doctest::Approx(ev(k) / ev.sum()).epsilon(1e-10));
  }
  CHECK((r.reduced - centered * r.basis).norm() < 1e-9);
  const auto small = pca_fit_transform(x, 0.5, 5);
  CHECK(small.basis.cols() == 1);
  const auto capped = pca_fit_transform(x, 0.999999, 2);
  CHECK(capped.capped);
  CHECK_FALSE(capped.warning.empty());
}

TEST_CASE("pearson per stimulus") {
  Eigen::VectorXd a(4), b(4), c = Eigen::VectorXd::Constant(4, 2.0);
  a << 1, 2, 3, 4;
  b << 2, 4, 6, 8;
  CHECK(*pearson_per_stimulus(a, b) == doctest::Approx(1.0));
  CHECK(*pearson_per_stimulus(a, -b) == doctest::Approx(-1.0));
  CHECK_FALSE(pearson_per_stimulus(a, c).has_value());
}

TEST_CASE("rank metrics") {
  Rng rng(3);
  const MatrixXd g = gaussian(20, 5, rng);
  const auto same = rank_metrics(g, g);
  CHECK(same.mean_rank == 1.0);
  CHECK(same.median_rank == 1.0);
  // Gold rows that are identical tie; the lower gold index ranks first.
  MatrixXd tied(3, 2);
  tied << 1, 0, 1, 0, 0, 1;
  const auto t = rank_metrics(tied, tied);
  CHECK(t.ranks == std::vector<int>{1, 2, 1});
  // Prediction pointing at a different gold row.
  MatrixXd swapped = g;
  swapped.row(0).swap(swapped.row(1));
  const auto s = rank_metrics(swapped, g);
  CHECK(s.ranks[0] > 1);
}

TEST_CASE("fold assignment is balanced and deterministic") {
  const auto f = assign_folds(50, 12, 7);
  std::vector<int> sizes(12, 0);
  for (int x : f) ++sizes[static_cast<std::size_t>(x)];
  CHECK(*std::max_element(sizes.begin(), sizes.end()) - *std::min_element(sizes.begin(), sizes.end()) <= 1);
  CHECK(assign_folds(50, 12, 7) == f);
  CHECK(assign_folds(50, 12, 8) != f);
  CHECK_THROWS(assign_folds(5, 12, 0));
}

TEST_CASE("nested cross-validation recovers noiseless linear data without leakage") {
  Rng rng(4);
  const auto d = labeled(gaussian(96, 8, rng));
  const auto b = gen_brain(d, {16, 0.0, false, 5});
  NestedCvOptions opt;
  opt.seed = 3;
  const auto r = nested_cv_decode(b, d, opt);
  CHECK(r.mean_pearson > 0.999);
  CHECK(r.mean_rank == doctest::Approx(1.0));
  REQUIRE(r.inner_fold.size() == 12);
  for (int f = 0; f < 12; ++f) {
    std::set<int> used;
    for (std::size_t i = 0; i < r.fold.size(); ++i) {
      const int inner = r.inner_fold[static_cast<std::size_t>(f)][i];
      CHECK((inner == -1) == (r.fold[i] == f));
      if (inner >= 0) used.insert(inner);
    }
    CHECK(used.size() == 5);
  }
  CHECK(r.fold_lambda.size() == 12);
  for (double l : r.fold_lambda) CHECK(std::find(r.lambda_grid.begin(), r.lambda_grid.end(), l) != r.lambda_grid.end());
  CHECK(r.scores_csv().rfind("label,fold,pearson,rank\r\n", 0) == 0);
}

TEST_CASE("decoding aligns representation rows by brain label") {
  Rng rng(5);
  const auto d = labeled(gaussian(40, 4, rng));
  const auto b = gen_brain(d, {8, 0.5, true, 1});
  const NestedCvOptions opt{default_lambda_grid(), 4, 3, 1, 1};
  const auto r1 = nested_cv_decode(b, d, opt);
  auto shuffled = d;
  std::reverse(shuffled.labels.begin(), shuffled.labels.end());
  shuffled.values = shuffled.values.colwise().reverse().eval();
  const auto r2 = nested_cv_decode(b, shuffled, opt);
  CHECK(r1.pearson == r2.pearson);
  CHECK(r1.ranks == r2.ranks);
  auto missing = b;
  missing.labels[0] = "other";
  CHECK_THROWS(nested_cv_decode(missing, d));
}

TEST_CASE("default lambda grid") {
  const auto g = default_lambda_grid();
  REQUIRE(g.size() == 10);
  CHECK(g.front() == doctest::Approx(1e-3));
  CHECK(g.back() == doctest::Approx(1e3));
  for (std::size_t i = 1; i < g.size(); ++i) CHECK(g[i] / g[i - 1] == doctest::Approx(std::pow(10.0, 6.0 / 9.0)));
}

TEST_CASE("decode results do not depend on the job count") {
  Rng rng(6);
  const auto d = labeled(gaussian(48, 6, rng));
  const auto b = gen_brain(d, {12, 0.5, true, 2});
  NestedCvOptions a;
  a.seed = 9;
  NestedCvOptions c = a;
  c.jobs = 4;
  CHECK(nested_cv_decode(b, d, a).to_json() == nested_cv_decode(b, d, c).to_json());
}
