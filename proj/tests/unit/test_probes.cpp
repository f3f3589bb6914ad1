#include <algorithm>
#include <map>

#include "doctest.h"
#include "neuroalign/probes.hpp"
#include "neuroalign/train.hpp"

using namespace neuroalign;

TEST_CASE("F1 against a confusion matrix oracle") {
  Rng rng(5);
  const std::vector<std::string> classes = {"A", "B", "C", "D"};
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::string> gold, pred;
    const std::size_t n = 5 + rng.below(30);
    for (std::size_t i = 0; i < n; ++i) {
      gold.push_back(classes[rng.below(3)]);  // D never in gold
      pred.push_back(classes[rng.below(4)]);
    }
    std::map<std::pair<std::string, std::string>, int> cm;
    for (std::size_t i = 0; i < n; ++i) ++cm[{gold[i], pred[i]}];
    const auto e = evaluate_predictions(pred, gold, classes);
    double sum = 0;
    int used = 0;
    int correct = 0;
    for (const auto& c : classes) {
      int tp = cm[{c, c}], fp = 0, fn = 0;
      for (const auto& o : classes) {
        if (o == c) continue;
        fp += cm[{o, c}];
        fn += cm[{c, o}];
      }
      correct += tp;
      const double p = tp + fp ? double(tp) / (tp + fp) : 0.0;
      const double r = tp + fn ? double(tp) / (tp + fn) : 0.0;
      const double f = p + r > 0 ? 2 * p * r / (p + r) : 0.0;
      CHECK(e.per_class.at(c).f1 == doctest::Approx(f));
      CHECK(e.per_class.at(c).support == static_cast<std::size_t>(tp + fn));
      if (tp + fp + fn > 0) {
        sum += f;
        ++used;
      }
    }
    CHECK(e.macro_f1 == doctest::Approx(sum / used));
    CHECK(e.accuracy == doctest::Approx(double(correct) / double(n)));
  }
  CHECK_THROWS(evaluate_predictions({}, {}, classes));
  CHECK_THROWS(evaluate_predictions({"A"}, {"A", "B"}, classes));
}

TEST_CASE("linear probe separates separable data with a monotone objective") {
  Rng rng(9);
  Eigen::MatrixXd x(90, 3);
  std::vector<std::string> y;
  const char* names[] = {"NOUN", "VERB", "DET"};
  for (int i = 0; i < 90; ++i) {
    const int c = i % 3;
    for (int j = 0; j < 3; ++j) x(i, j) = (j == c ? 4.0 : 0.0) + 0.3 * rng.normal();
    y.push_back(names[c]);
  }
  const auto probe = train_linear_probe(x, y, 1e-3);
  CHECK(probe.classes == std::vector<std::string>{"DET", "NOUN", "VERB"});
  CHECK(evaluate_probe(probe, x, y).macro_f1 == 1.0);
  for (std::size_t i = 1; i < probe.loss_history.size(); ++i) CHECK(probe.loss_history[i] <= probe.loss_history[i - 1]);
  CHECK(probe.loss_history.back() == doctest::Approx(probe_objective(probe, x, y)).epsilon(1e-9));
  CHECK(probe.grad_norm < 1e-5);
  const Eigen::MatrixXd pr = probe.probabilities(x);
  CHECK((pr.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
  CHECK_THROWS(train_linear_probe(x, std::vector<std::string>(90, "NOUN"), 1e-3));
  CHECK_THROWS(train_linear_probe(x, {"a"}, 1e-3));
}

TEST_CASE("stronger regularization shrinks the weights") {
  Rng rng(1);
  Eigen::MatrixXd x(40, 2);
  std::vector<std::string> y;
  for (int i = 0; i < 40; ++i) {
    x(i, 0) = rng.normal();
    x(i, 1) = rng.normal();
    y.push_back(x(i, 0) + 0.5 * rng.normal() > 0 ? "p" : "n");
  }
  const auto weak = train_linear_probe(x, y, 1e-3);
  const auto strong = train_linear_probe(x, y, 1.0);
  CHECK(strong.weights.norm() < weak.weights.norm());
}

TEST_CASE("minimal pair TSV round-trip and errors") {
  const std::string tsv =
      "category\tprefix\tgood\tbad\tsuffix\n"
      "sva\tthe dog\truns\trun\t\n"
      "sva_attr\tthe dog near the cats\tsees\tsee\tthe boy\n";
  const auto pairs = parse_minimal_pairs(tsv);
  REQUIRE(pairs.size() == 2);
  CHECK(pairs[1].prefix.size() == 5);
  CHECK(pairs[1].suffix == std::vector<std::string>{"the", "boy"});
  CHECK(pairs[0].sentence(false) == std::vector<std::string>{"the", "dog", "run"});
  CHECK(parse_minimal_pairs(write_minimal_pairs(pairs))[1].suffix == pairs[1].suffix);
  CHECK_THROWS_AS(parse_minimal_pairs("sva\tthe dog\truns\n"), ParseError);
  CHECK_THROWS_AS(parse_minimal_pairs("sva\tthe dog\truns\truns\t\n"), ParseError);
}

TEST_CASE("tag dataset parsing") {
  const auto tags = parse_tag_dataset("sentence_id\tword_index\ttag\ns1\t1\tDET\ns1\t2\tNOUN\n");
  REQUIRE(tags.size() == 2);
  CHECK(tags[1].word_index == 2);
  CHECK(tags[1].tag == "NOUN");
  CHECK_THROWS_AS(parse_tag_dataset("s1\t0\tDET\n"), ParseError);
  CHECK_THROWS_AS(parse_tag_dataset("s1\tx\tDET\n"), ParseError);
}

TEST_CASE("pair comparison is strict") {
  CHECK(compare_targets(-1.0, -2.0).correct);
  CHECK_FALSE(compare_targets(-2.0, -2.0).correct);
  CHECK(compare_targets(-2.0, -2.0).scored);
  CHECK(compare_targets(-3.0, -1.0).margin == -2.0);
}

TEST_CASE("minimal pair scoring") {
  const Vocab v = build_vocab(std::vector<std::string>{"the dog runs", "the dogs run", "the cat sleeps"}, 40);
  ModelConfig c;
  c.n_heads = 2;
  c.d_model = 8;
  c.d_ff = 8;
  c.vocab_size = static_cast<int>(v.size());
  c.max_len = 10;
  const auto zero = TransformerParams::zeros(c);
  // A uniform model ties, which counts as incorrect.
  const auto tie = score_minimal_pair(zero, c, v, {"sva", {"the", "dog"}, "runs", "run", {}});
  CHECK(tie.scored);
  CHECK_FALSE(tie.correct);
  CHECK(tie.margin == 0.0);
  CHECK(score_minimal_pair(zero, c, v, {"sva", {"the"}, "zyzzyva", "run", {}}).skip_reason == "untokenizable target");
  CHECK(score_minimal_pair(zero, c, v, {"sva", {"the", "dog", "dog", "dog", "dog", "dog", "dog", "dog", "dog"}, "runs", "run", {}})
            .skip_reason == "sentence longer than max_len");

  // The score is the masked log-probability, reproduced from a forward pass.
  const auto p = TransformerParams::init(c, 3);
  const MinimalPair pair{"sva", {"the", "dog"}, "runs", "run", {}};
  const auto s = score_minimal_pair(p, c, v, pair);
  REQUIRE(s.scored);
  auto a = tokenize_sentence(pair.sentence(true), v);
  const Span span = a.span(3);
  for (std::size_t i = span.begin; i < span.end; ++i) a.ids[i] = Vocab::kMask;
  const auto t = forward(a.ids, {}, p, c);
  const auto good = tokenize_word("runs", v), bad = tokenize_word("run", v);
  if (good.size() == bad.size())
    CHECK(s.margin == doctest::Approx(target_logprob(t, span, good) - target_logprob(t, span, bad)).epsilon(1e-12));

  const std::vector<MinimalPair> ps = {pair, {"other", {"the"}, "zyzzyva", "run", {}}};
  const auto sum = summarize_pairs(ps, {s, score_minimal_pair(p, c, v, ps[1])});
  CHECK(sum.at("sva").scored == 1);
  CHECK(sum.at("other").skipped == 1);
  CHECK(sum.at("other").accuracy() == 0.0);
}
