// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails. Optional arguments select criteria by
// number.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>

#include "cli.hpp"
#include "neuroalign/decode.hpp"
#include "neuroalign/probes.hpp"
#include "neuroalign/repr.hpp"
#include "neuroalign/stats.hpp"
#include "neuroalign/synth.hpp"
#include "neuroalign/train.hpp"
#include "test_support.hpp"

using namespace neuroalign;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

// ---------------------------------------------------------------- 1

Outcome gradient_check() {
  const auto t0 = Clock::now();
  ModelConfig c;
  c.n_layers = 2;
  c.n_heads = 2;
  c.d_model = 16;
  c.d_ff = 32;
  c.vocab_size = 32;
  c.max_len = 16;
  auto p = TransformerParams::init(c, 21);
  Rng rng(22);
  const std::size_t len = 12;
  std::vector<PieceId> ids = {Vocab::kCls};
  for (std::size_t i = 1; i + 1 < len; ++i) ids.push_back(static_cast<PieceId>(5 + rng.below(27)));
  ids.push_back(Vocab::kSep);
  AdjacencyMatrix adj(len);
  adj.mark_special(0);
  adj.mark_special(len - 1);
  for (std::size_t i = 1; i + 1 < len; ++i)
    for (std::size_t j = i + 1; j + 1 < len; ++j)
      if (rng.uniform() < 0.3) adj.connect(i, j);
  const MlmTargets targets = {{2, 7}, {5, 19}, {9, 30}};
  const GuidanceSpec g{2, {0, 1}, 0.1};
  const Objective obj{&targets, &adj, &g};

  auto grads = TransformerParams::zeros(c);
  backward(forward(ids, {}, p, c), p, c, obj, grads);
  std::vector<double*> xs;
  std::vector<double> gs;
  p.visit([&](const std::string&, auto& b) {
    for (Eigen::Index i = 0; i < b.size(); ++i) xs.push_back(b.data() + i);
  });
  grads.visit([&](const std::string&, auto& b) {
    for (Eigen::Index i = 0; i < b.size(); ++i) gs.push_back(b.data()[i]);
  });

  // Sample among parameters the loss depends on.
  std::vector<std::size_t> live;
  for (std::size_t k = 0; k < gs.size(); ++k)
    if (gs[k] != 0.0) live.push_back(k);
  const double eps = 1e-4;
  double worst = 0.0;
  for (int s = 0; s < 100; ++s) {
    const std::size_t k = live[rng.below(live.size())];
    double* x = xs[k];
    const double orig = *x;
    *x = orig + eps;
    const double up = total_loss(forward(ids, {}, p, c), obj, c).total;
    *x = orig - eps;
    const double down = total_loss(forward(ids, {}, p, c), obj, c).total;
    *x = orig;
    const double num = (up - down) / (2 * eps);
    // Floor keeps roundoff-level gradients of shift-invariant parameters from reading as 0/0.
    worst = std::max(worst, std::abs(num - gs[k]) / std::max({std::abs(num), std::abs(gs[k]), 1e-10}));
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-4 && secs < 60, "max rel err " + fmt("%.3g", worst) + ", " + fmt("%.1f", secs) + "s"};
}

// ---------------------------------------------------------------- 2

LabeledMatrix gaussian_labeled(Eigen::Index n, Eigen::Index d, std::uint64_t seed) {
  Rng rng(seed);
  LabeledMatrix m;
  m.values.resize(n, d);
  for (Eigen::Index i = 0; i < m.values.size(); ++i) m.values.data()[i] = rng.normal();
  for (Eigen::Index i = 0; i < n; ++i) m.labels.push_back("s" + std::to_string(i));
  return m;
}

Outcome noiseless_recovery() {
  const auto t0 = Clock::now();
  const auto d = gaussian_labeled(200, 16, 31);
  const auto b = gen_brain(d, {32, 0.0, false, 32});
  NestedCvOptions opt;
  opt.outer_folds = 12;
  opt.inner_folds = 5;
  opt.seed = 33;
  const auto r = nested_cv_decode(b, d, opt);
  const double secs = seconds_since(t0);
  return {r.mean_pearson >= 0.999 && r.mean_rank <= 1.01 && secs < 60,
          "pearson " + fmt("%.6f", r.mean_pearson) + ", mean rank " + fmt("%.4f", r.mean_rank) + ", " +
              fmt("%.1f", secs) + "s"};
}

// ---------------------------------------------------------------- shared training setup

struct Setup {
  Vocab vocab;
  ModelConfig model;
  std::vector<TrainingExample> train;
  std::vector<TrainingExample> held_out;
  std::vector<Stimulus> stimuli;
};

/// 500 training and 100 held-out sentences from one grammar seed.
Setup make_setup(std::uint64_t seed) {
  Setup s;
  const auto graphs = graphs_of(gen_corpus(default_grammar(seed), 600));
  const std::vector<SentenceGraph> tr(graphs.begin(), graphs.begin() + 500), ho(graphs.begin() + 500, graphs.end());
  std::vector<std::vector<std::string>> sents;
  for (const auto& g : tr) sents.push_back(g.words());
  s.vocab = build_vocab(sents, 150);
  s.model.n_layers = 2;
  s.model.n_heads = 2;
  s.model.d_model = 16;
  s.model.d_ff = 32;
  s.model.max_len = 24;
  s.model.vocab_size = static_cast<int>(s.vocab.size());
  s.train = prepare_corpus(tr, s.vocab, s.model.max_len).examples;
  s.held_out = prepare_corpus(ho, s.vocab, s.model.max_len).examples;
  for (std::size_t i = 0; i < ho.size(); ++i) s.stimuli.push_back({"stim-" + std::to_string(i + 1), ho[i].words()});
  return s;
}

const GuidanceSpec kGuidance{1, {0, 1}, 0.1};

// ---------------------------------------------------------------- 3

Outcome guided_mass() {
  const auto t0 = Clock::now();
  const auto s = make_setup(41);
  TrainConfig c;
  c.steps = 2000;
  c.lr = 1e-3;
  c.seed = 42;
  const auto unguided = train_mlm(s.train, s.model, c);
  c.guidance = kGuidance;
  const auto guided = train_mlm(s.train, s.model, c);
  const double mg = gold_attention_mass(guided.params, s.model, s.held_out, kGuidance);
  const double mu = gold_attention_mass(unguided.params, s.model, s.held_out, kGuidance);
  const double secs = seconds_since(t0);
  return {mg >= 2 * mu && secs < 600, "guided " + fmt("%.4f", mg) + ", unguided " + fmt("%.4f", mu) + ", ratio " +
                                          fmt("%.2f", mg / mu) + ", " + fmt("%.1f", secs) + "s"};
}

// ---------------------------------------------------------------- 4 and 11

struct SeedModels {
  Setup setup;
  TransformerParams guided, unguided;
};

const std::vector<SeedModels>& seeded_models() {
  static const std::vector<SeedModels> models = [] {
    std::vector<SeedModels> out;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      SeedModels m{make_setup(100 + seed), {}, {}};
      // Both arms fine-tune from one pretrained model.
      TrainConfig c;
      c.steps = 2000;
      c.lr = 3e-3;
      c.seed = 200 + seed;
      const auto pretrained = train_mlm(m.setup.train, m.setup.model, c).params;
      c.seed = 600 + seed;
      m.unguided = train_mlm(m.setup.train, m.setup.model, c, &pretrained).params;
      c.guidance = kGuidance;
      m.guided = train_mlm(m.setup.train, m.setup.model, c, &pretrained).params;
      out.push_back(std::move(m));
    }
    return out;
  }();
  return models;
}

std::vector<double> defined(const std::vector<double>& v) {
  std::vector<double> o;
  for (double x : v)
    if (!std::isnan(x)) o.push_back(x);
  return o;
}

Outcome matched_decoding() {
  const auto t0 = Clock::now();
  int wins = 0;
  std::string detail;
  for (std::size_t i = 0; i < seeded_models().size(); ++i) {
    const auto& m = seeded_models()[i];
    const auto rg = extract_sentence_reprs(m.guided, m.setup.model, m.setup.vocab, m.setup.stimuli);
    const auto ru = extract_sentence_reprs(m.unguided, m.setup.model, m.setup.vocab, m.setup.stimuli);
    const auto brain = gen_brain(rg, {32, 0.5, true, 300 + i});
    NestedCvOptions opt;
    opt.seed = 400 + i;
    const auto dg = nested_cv_decode(brain, rg, opt);
    const auto du = nested_cv_decode(brain, ru, opt);
    PairedScores ps;
    for (std::size_t k = 0; k < dg.pearson.size(); ++k)
      if (!std::isnan(dg.pearson[k]) && !std::isnan(du.pearson[k])) {
        ps.a.push_back(dg.pearson[k]);
        ps.b.push_back(du.pearson[k]);
      }
    const double p = bonferroni(paired_bootstrap(ps, 5000, 500 + i).p_value, 3);
    const bool ok = dg.mean_pearson > du.mean_pearson && p < 0.01;
    wins += ok;
    detail += (i ? "; " : "") + fmt("%.3f", dg.mean_pearson) + " vs " + fmt("%.3f", du.mean_pearson) + " p=" + fmt("%.4g", p);
  }
  return {wins == 5, std::to_string(wins) + "/5 seeds (" + detail + "), " + fmt("%.1f", seconds_since(t0)) + "s"};
}

double attractor_accuracy(const TransformerParams& params, const Setup& s, const std::vector<MinimalPair>& pairs) {
  std::vector<PairScore> scores;
  for (const auto& p : pairs) scores.push_back(score_minimal_pair(params, s.model, s.vocab, p));
  return summarize_pairs(pairs, scores).at("sva_attractor").accuracy();
}

Outcome minimal_pair_gain() {
  const auto t0 = Clock::now();
  int wins = 0;
  std::string detail;
  for (std::size_t i = 0; i < seeded_models().size(); ++i) {
    const auto& m = seeded_models()[i];
    std::vector<MinimalPair> pairs;
    for (const auto& p : pairs_of(gen_corpus(default_grammar(900 + i), 300)))
      if (p.category == "sva_attractor") pairs.push_back(p);
    const double ag = attractor_accuracy(m.guided, m.setup, pairs);
    const double au = attractor_accuracy(m.unguided, m.setup, pairs);
    wins += ag >= au;
    detail += (i ? "; " : "") + fmt("%.3f", ag) + " vs " + fmt("%.3f", au);
  }
  return {wins >= 4, std::to_string(wins) + "/5 seeds (" + detail + "), " + fmt("%.1f", seconds_since(t0)) + "s"};
}

// ---------------------------------------------------------------- 5

Outcome statistical_constants() {
  const double p = wilcoxon_signed_rank(std::vector<double>(8, 0.01));
  const double pb = bonferroni(p, 3);
  return {p == 0.0078125 && pb == 0.0234375, "p " + fmt("%.10g", p) + ", bonferroni " + fmt("%.10g", pb)};
}

// ---------------------------------------------------------------- 6

Outcome bootstrap_calibration() {
  int rejections = 0;
  for (int e = 0; e < 200; ++e) {
    Rng rng = Rng::stream(61, static_cast<std::uint64_t>(e));
    PairedScores ps;
    for (int i = 0; i < 100; ++i) {
      ps.a.push_back(rng.normal());
      ps.b.push_back(rng.normal());
    }
    rejections += paired_bootstrap(ps, 2000, 62 + static_cast<std::uint64_t>(e)).p_value < 0.05;
  }
  const double rate = rejections / 200.0;
  return {rate >= 0.02 && rate <= 0.09, "rejection rate " + fmt("%.3f", rate)};
}

// ---------------------------------------------------------------- 7

std::vector<int> brute_k_occurrence(const Eigen::MatrixXd& x, int k) {
  const auto n = static_cast<std::size_t>(x.rows());
  std::vector<int> occ(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::pair<double, std::size_t>> d;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const Eigen::VectorXd a = x.row(static_cast<Eigen::Index>(i)), b = x.row(static_cast<Eigen::Index>(j));
      d.emplace_back(1.0 - a.dot(b) / (a.norm() * b.norm()), j);
    }
    std::sort(d.begin(), d.end());
    for (int r = 0; r < k; ++r) ++occ[d[static_cast<std::size_t>(r)].second];
  }
  return occ;
}

Outcome hubness_oracle() {
  Rng rng(71);
  int exact = 0;
  const int ks[] = {1, 5, 10};
  for (int t = 0; t < 50; ++t) {
    const int k = ks[t % 3];
    const auto n = static_cast<Eigen::Index>(k + 2 + rng.below(static_cast<std::uint64_t>(50 - k - 1)));
    ReprMatrix m;
    m.values.resize(n, 6);
    for (Eigen::Index i = 0; i < m.values.size(); ++i) m.values.data()[i] = rng.normal();
    for (Eigen::Index i = 0; i < n; ++i) m.labels.push_back(std::to_string(i));
    const auto occ = brute_k_occurrence(m.values, k);
    long num = 0, den = 0;
    for (int o : occ) {
      num += std::max(0, o - k);
      den += o;
    }
    exact += robin_hood_index(m, k) == static_cast<double>(num) / static_cast<double>(den);
  }
  ReprMatrix ring;
  ring.values.resize(12, 2);
  for (int i = 0; i < 12; ++i) {
    ring.values(i, 0) = std::cos(2 * M_PI * i / 12);
    ring.values(i, 1) = std::sin(2 * M_PI * i / 12);
    ring.labels.push_back(std::to_string(i));
  }
  const double sym = robin_hood_index(ring, 2);
  return {exact == 50 && sym == 0.0, std::to_string(exact) + "/50 exact, symmetric ring " + fmt("%g", sym)};
}

// ---------------------------------------------------------------- 8

Outcome rank_sanity() {
  const auto g = gaussian_labeled(100, 16, 81).values;
  const double same = rank_metrics(g, g).mean_rank;
  double lo = 1e9, hi = 0, sum = 0;
  for (std::uint64_t s = 1; s <= 10; ++s) {
    Eigen::MatrixXd pred = gaussian_labeled(100, 16, 1000 + s).values, gold = gaussian_labeled(100, 16, 2000 + s).values;
    pred.rowwise().normalize();
    gold.rowwise().normalize();
    const double r = rank_metrics(pred, gold).mean_rank;
    lo = std::min(lo, r);
    hi = std::max(hi, r);
    sum += r;
  }
  const double mean = sum / 10;
  return {same == 1.0 && std::abs(mean - 50.5) <= 5.0, "identical " + fmt("%g", same) + ", random mean rank over seeds " +
                                                           fmt("%.2f", mean) + " (per seed " + fmt("%.2f", lo) + " to " +
                                                           fmt("%.2f", hi) + ")"};
}

// ---------------------------------------------------------------- 9

Outcome format_fidelity() {
  int mismatches = 0, sentences = 0;
  auto compare = [&](const std::vector<SentenceGraph>& graphs, const std::string& expected_name) {
    const auto lines = split(read_file(test::fixture(expected_name)), '\n');
    std::size_t i = 0;
    for (const auto& line : lines) {
      if (line.empty()) continue;
      const auto cols = split(line, '\t');
      if (i >= graphs.size()) {
        ++mismatches;
        continue;
      }
      const auto& g = graphs[i++];
      ++sentences;
      bool ok = g.id == cols[0] && g.words() == split_whitespace(cols[1]) && g.edges == test::edges_from(cols[2]);
      if (cols.size() > 3) {
        std::vector<int> tops;
        for (const auto& t : split_whitespace(cols[3])) tops.push_back(std::stoi(t));
        ok &= g.tops == tops;
      }
      mismatches += !ok;
    }
    mismatches += static_cast<int>(graphs.size() - i);
  };
  compare(parse_conllu(read_file(test::fixture("ud.conllu"))), "ud.expected.tsv");
  compare(parse_sdp(read_file(test::fixture("dm.sdp"))), "dm.expected.tsv");
  int hier = 0;
  for (const auto& line : split(read_file(test::fixture("hier/expected.tsv")), '\n')) {
    if (line.empty()) continue;
    const auto cols = split(line, '\t');
    const auto g = bilexical_approximate(parse_hier_json(read_file(test::fixture("hier/" + cols[0]))), default_ucca_priority());
    ++hier;
    mismatches += g.edges != test::edges_from(cols[1]);
  }
  return {mismatches == 0 && sentences >= 20 && hier == 5,
          std::to_string(sentences) + " bilexical sentences, " + std::to_string(hier) + " hierarchical graphs, " +
              std::to_string(mismatches) + " mismatches"};
}

// ---------------------------------------------------------------- 10

Outcome probe_engine() {
  Rng rng(91);
  const std::vector<std::string> names = {"NOUN", "VERB", "DET", "ADJ"};
  const double cumulative[] = {0.4, 0.7, 0.9, 1.0};
  const int n = 2400, half = 1200, d = 12;
  Eigen::MatrixXd x(n, d);
  std::vector<std::string> y;
  Eigen::MatrixXd centers(4, d);
  for (Eigen::Index i = 0; i < centers.size(); ++i) centers.data()[i] = 3.0 * rng.normal();
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    const int c = static_cast<int>(std::find_if(std::begin(cumulative), std::end(cumulative), [&](double t) { return u < t; }) -
                                   std::begin(cumulative));
    for (int j = 0; j < d; ++j) x(i, j) = centers(c, j) + 0.2 * rng.normal();
    y.push_back(names[static_cast<std::size_t>(c)]);
  }
  const Eigen::MatrixXd x_train = x.topRows(half), x_test = x.bottomRows(n - half);
  const auto train_of = [&](const std::vector<std::string>& v) { return std::vector<std::string>(v.begin(), v.begin() + half); };
  const auto test_of = [&](const std::vector<std::string>& v) { return std::vector<std::string>(v.begin() + half, v.end()); };
  const double l2 = 1e-2;
  const double f1 = evaluate_probe(train_linear_probe(x_train, train_of(y), l2), x_test, test_of(y)).macro_f1;

  std::vector<std::string> perm = y;
  for (std::size_t i = perm.size() - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);
  const double acc = evaluate_probe(train_linear_probe(x_train, train_of(perm), l2), x_test, test_of(perm)).accuracy;
  std::map<std::string, int> counts;
  for (const auto& t : train_of(perm)) ++counts[t];
  const auto majority =
      std::max_element(counts.begin(), counts.end(), [](const auto& a, const auto& b) { return a.second < b.second; })->first;
  const auto gold = test_of(perm);
  const double majority_acc =
      static_cast<double>(std::count(gold.begin(), gold.end(), majority)) / static_cast<double>(gold.size());
  return {f1 == 1.0 && std::abs(acc - majority_acc) <= 0.05,
          "separable macro-F1 " + fmt("%.4f", f1) + ", permuted accuracy " + fmt("%.4f", acc) + " vs majority " +
              fmt("%.4f", majority_acc)};
}

// ---------------------------------------------------------------- 12

Outcome pipeline_determinism() {
  const auto root = test::scratch_dir("acceptance_pipeline");
  double worst = 0;
  std::vector<std::string> summaries;
  for (const char* name : {"a", "b"}) {
    cli::PipelineConfig cfg;
    cfg.out_dir = (root / name).string();
    std::ostringstream log;
    const auto t0 = Clock::now();
    const auto dir = cli::cmd_pipeline(cfg, log);
    worst = std::max(worst, seconds_since(t0));
    summaries.push_back(read_file(dir / "summary.json"));
  }
  const bool same = summaries[0] == summaries[1];
  return {same && worst < 900, std::string(same ? "identical" : "different") + " summaries (" +
                                   std::to_string(summaries[0].size()) + " bytes), slowest run " + fmt("%.1f", worst) + "s"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient correctness", gradient_check},
      {"noiseless decoding recovery", noiseless_recovery},
      {"guided attention efficacy", guided_mass},
      {"matched-model decoding advantage", matched_decoding},
      {"statistical constants", statistical_constants},
      {"bootstrap calibration", bootstrap_calibration},
      {"hubness oracle", hubness_oracle},
      {"rank metric sanity", rank_sanity},
      {"format fidelity", format_fidelity},
      {"probe engine", probe_engine},
      {"minimal pair gain", minimal_pair_gain},
      {"end-to-end determinism", pipeline_determinism},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i + 1);
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " " << id << " " << criteria[i].first << ": " << o.detail << std::endl;
  }
  return failed ? 1 : 0;
}
