#ifndef NEUROALIGN_STATS_HPP
#define NEUROALIGN_STATS_HPP

#include <cstdint>
#include <string>
#include <vector>

namespace neuroalign {

/// Per-stimulus scores of two models, aligned by stimulus.
struct PairedScores {
  std::vector<double> a;
  std::vector<double> b;

  void validate() const;
};

struct BootstrapResult {
  /// Fraction of iterations where mean(A) <= mean(B): small values favour A > B.
  double p_value = 1.0;
  int iterations = 0;
  std::vector<double> mean_a;
  std::vector<double> mean_b;
};

/// Paired bootstrap over stimuli. Iteration i resamples n indices with
/// replacement from its own stream Rng::stream(seed, i), so the result does
/// not depend on `jobs`.
BootstrapResult paired_bootstrap(const PairedScores& scores, int iterations = 5000,
                                 std::uint64_t seed = 0, unsigned jobs = 1);

/// Exact two-sided Wilcoxon signed-rank p-value. Zero differences are
/// dropped; tied magnitudes get mid-ranks. Supports up to 20 non-zero
/// differences.
double wilcoxon_signed_rank(const std::vector<double>& differences);

double bonferroni(double p, int comparisons = 3);

struct StatsReport {
  std::string comparison;
  std::size_t n = 0;
  int iterations = 0;
  double p_raw = 1.0;
  double p_bonferroni = 1.0;
  std::string direction;

  std::string to_json() const;
};

/// "A>B" when mean(a) > mean(b), otherwise "A<=B".
std::string direction_of(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace neuroalign

#endif  // NEUROALIGN_STATS_HPP
