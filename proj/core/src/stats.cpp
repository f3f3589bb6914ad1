#include "neuroalign/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "json.hpp"
#include "neuroalign/util.hpp"

namespace neuroalign {

void PairedScores::validate() const {
  if (a.size() != b.size()) throw InvalidArgument("paired score arrays differ in length");
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!std::isfinite(a[i]) || !std::isfinite(b[i])) throw InvalidArgument("paired scores must be finite");
}

BootstrapResult paired_bootstrap(const PairedScores& scores, int iterations, std::uint64_t seed,
                                 unsigned jobs) {
  scores.validate();
  const std::size_t n = scores.a.size();
  if (n < 2) throw InvalidArgument("paired bootstrap needs at least two stimuli");
  if (iterations < 1) throw InvalidArgument("bootstrap needs at least one iteration");
  BootstrapResult out;
  out.iterations = iterations;
  out.mean_a.resize(static_cast<std::size_t>(iterations));
  out.mean_b.resize(static_cast<std::size_t>(iterations));
  parallel_for(static_cast<std::size_t>(iterations), jobs, [&](std::size_t it) {
    Rng rng = Rng::stream(seed, it);
    double sa = 0.0, sb = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t idx = rng.below(n);
      sa += scores.a[idx];
      sb += scores.b[idx];
    }
    out.mean_a[it] = sa / static_cast<double>(n);
    out.mean_b[it] = sb / static_cast<double>(n);
  });
  std::size_t not_favouring = 0;
  for (std::size_t it = 0; it < out.mean_a.size(); ++it)
    if (out.mean_a[it] <= out.mean_b[it]) ++not_favouring;
  out.p_value = static_cast<double>(not_favouring) / static_cast<double>(iterations);
  return out;
}

double wilcoxon_signed_rank(const std::vector<double>& differences) {
  std::vector<double> d;
  for (double x : differences) {
    if (!std::isfinite(x)) throw InvalidArgument("Wilcoxon differences must be finite");
    if (x != 0.0) d.push_back(x);
  }
  const std::size_t m = d.size();
  if (m == 0) throw InvalidArgument("all differences are zero; the test carries no information");
  if (m > 20) throw InvalidArgument("exact Wilcoxon supports at most 20 non-zero differences");

  // Doubled mid-ranks keep every rank sum integral.
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return std::abs(d[x]) < std::abs(d[y]);
  });
  std::vector<int> rank2(m);
  for (std::size_t i = 0; i < m;) {
    std::size_t j = i;
    while (j + 1 < m && std::abs(d[order[j + 1]]) == std::abs(d[order[i]])) ++j;
    const int doubled = static_cast<int>(i + 1 + j + 1);
    for (std::size_t k = i; k <= j; ++k) rank2[order[k]] = doubled;
    i = j + 1;
  }
  int total = 0, observed = 0;
  for (std::size_t i = 0; i < m; ++i) {
    total += rank2[i];
    if (d[i] > 0) observed += rank2[i];
  }

  // counts[s]: number of sign assignments whose positive doubled-rank sum is s.
  std::vector<std::uint64_t> counts(static_cast<std::size_t>(total) + 1, 0);
  counts[0] = 1;
  for (int r : rank2)
    for (int s = total; s >= r; --s) counts[static_cast<std::size_t>(s)] += counts[static_cast<std::size_t>(s - r)];

  const int obs_dev = std::abs(2 * observed - total);
  std::uint64_t extreme = 0;
  for (int s = 0; s <= total; ++s)
    if (std::abs(2 * s - total) >= obs_dev) extreme += counts[static_cast<std::size_t>(s)];
  return static_cast<double>(extreme) / std::ldexp(1.0, static_cast<int>(m));
}

double bonferroni(double p, int comparisons) {
  if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("p-value must lie in [0, 1]");
  if (comparisons < 1) throw InvalidArgument("comparison count must be at least 1");
  return std::min(1.0, p * comparisons);
}

std::string direction_of(const std::vector<double>& a, const std::vector<double>& b) {
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / static_cast<double>(std::max<std::size_t>(1, a.size()));
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / static_cast<double>(std::max<std::size_t>(1, b.size()));
  return ma > mb ? "A>B" : "A<=B";
}

std::string StatsReport::to_json() const {
  nlohmann::json j = {{"comparison", comparison}, {"n", n},
                      {"iters", iterations},      {"p_raw", p_raw},
                      {"p_bonferroni", p_bonferroni}, {"direction", direction}};
  return j.dump(2);
}

}  // namespace neuroalign
