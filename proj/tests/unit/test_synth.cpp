#include <algorithm>

#include "doctest.h"
#include "neuroalign/synth.hpp"
#include "neuroalign/decode.hpp"

using namespace neuroalign;

namespace {

GrammarSpec tiny() {
  GrammarSpec g;
  g.nouns = {{"dog", "dogs"}};
  g.intransitive = {{"runs", "run"}};
  g.p_plural = 0.0;
  g.p_adjective = 0.0;
  g.p_attractor = 0.0;
  g.p_transitive = 0.0;
  return g;
}

}  // namespace

TEST_CASE("degenerate grammar yields a single sentence shape") {
  const auto c = gen_corpus(tiny(), 3);
  REQUIRE(c.size() == 3);
  for (const auto& s : c) {
    CHECK(s.graph.words() == std::vector<std::string>{"the", "dog", "runs"});
    CHECK(s.graph.edges == std::set<Edge>{{3, 2, "nsubj"}, {2, 1, "det"}});
    REQUIRE(s.pairs.size() == 1);
    CHECK(s.pairs[0].good == "runs");
    CHECK(s.pairs[0].bad == "run");
  }
  CHECK(c[2].graph.id == "synth-3");
  auto plural = tiny();
  plural.p_plural = 1.0;
  CHECK(gen_corpus(plural, 1)[0].graph.words() == std::vector<std::string>{"the", "dogs", "run"});
}

TEST_CASE("generation is deterministic and validated") {
  const auto a = gen_corpus(default_grammar(4), 50);
  const auto b = gen_corpus(default_grammar(4), 50);
  const auto c = gen_corpus(default_grammar(5), 50);
  for (std::size_t i = 0; i < 50; ++i) CHECK(a[i].graph.words() == b[i].graph.words());
  bool differs = false;
  for (std::size_t i = 0; i < 50; ++i) differs |= a[i].graph.words() != c[i].graph.words();
  CHECK(differs);
  CHECK_THROWS_AS(gen_corpus(tiny(), 0), InvalidArgument);
  auto bad = tiny();
  bad.p_attractor = 0.5;
  CHECK_THROWS_AS(gen_corpus(bad, 1), InvalidArgument);
  bad = tiny();
  bad.p_plural = 1.5;
  CHECK_THROWS_AS(gen_corpus(bad, 1), InvalidArgument);
}

TEST_CASE("sentences are trees and pairs differ only in verb number") {
  const auto g = default_grammar(8);
  const auto corpus = gen_corpus(g, 200);
  std::size_t attractors = 0;
  for (const auto& s : corpus) {
    const auto words = s.graph.words();
    // Every token but the verb has exactly one head.
    std::vector<int> heads(words.size() + 1, 0);
    for (const auto& e : s.graph.edges) ++heads[static_cast<std::size_t>(e.dependent)];
    CHECK(std::count(heads.begin() + 1, heads.end(), 0) == 1);
    for (const auto& p : s.pairs) {
      CHECK(p.good != p.bad);
      const auto good = p.sentence(true), bad = p.sentence(false);
      REQUIRE(good.size() == bad.size());
      std::size_t diff = 0;
      for (std::size_t i = 0; i < good.size(); ++i) diff += good[i] != bad[i];
      CHECK(diff == 1);
      bool is_verb_pair = false;
      for (const auto& v : g.intransitive) is_verb_pair |= (v.singular == p.good && v.plural == p.bad) || (v.plural == p.good && v.singular == p.bad);
      for (const auto& v : g.transitive) is_verb_pair |= (v.singular == p.good && v.plural == p.bad) || (v.plural == p.good && v.singular == p.bad);
      CHECK(is_verb_pair);
      if (p.category == "sva_attractor") {
        ++attractors;
        // The noun right before the target has the opposite number of the verb.
        const std::string& attr = p.prefix.back();
        bool attr_plural = false;
        for (const auto& n : g.nouns) attr_plural |= n.plural == attr;
        bool good_plural = false;
        for (const auto& v : g.intransitive) good_plural |= v.plural == p.good;
        for (const auto& v : g.transitive) good_plural |= v.plural == p.good;
        CHECK(good_plural != attr_plural);
      }
    }
  }
  CHECK(attractors == 200);
}

TEST_CASE("synthetic corpus round-trips through CoNLL-U") {
  const auto graphs = graphs_of(gen_corpus(default_grammar(1), 20));
  const auto back = parse_conllu(write_conllu(graphs));
  REQUIRE(back.size() == graphs.size());
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    CHECK(back[i].words() == graphs[i].words());
    CHECK(back[i].edges == graphs[i].edges);
  }
}

TEST_CASE("noiseless brain data is an exact linear image") {
  Rng rng(2);
  ReprMatrix d;
  d.values.resize(200, 16);
  for (Eigen::Index i = 0; i < d.values.size(); ++i) d.values.data()[i] = rng.normal();
  for (int i = 0; i < 200; ++i) d.labels.push_back("s" + std::to_string(i));
  const auto b = gen_brain(d, {32, 0.0, false, 7});
  CHECK(b.labels == d.labels);
  CHECK(b.values.cols() == 32);
  const Eigen::MatrixXd w = b.values.colPivHouseholderQr().solve(d.values);
  CHECK((b.values * w - d.values).norm() / d.values.norm() < 1e-8);
  const Eigen::MatrixXd m = brain_mixing(16, 32, 7);
  CHECK((b.values - d.values * m).norm() < 1e-10);

  const double scale = signal_scale(d, {32, 0.0, false, 7});
  const Eigen::MatrixXd clean = d.values * m;
  CHECK(scale == doctest::Approx(std::sqrt((clean.array() - clean.mean()).square().mean())));

  // Overwhelming noise leaves no correlation with the clean signal.
  const auto noisy = gen_brain(d, {32, 1e3, true, 7});
  Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(clean.data(), clean.size());
  Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(noisy.values.data(), noisy.values.size());
  x.array() -= x.mean();
  y.array() -= y.mean();
  CHECK(std::abs(x.dot(y) / (x.norm() * y.norm())) < 0.1);
  CHECK_THROWS(gen_brain(d, {0, 0.0, false, 1}));
  CHECK_THROWS(gen_brain(d, {4, -1.0, false, 1}));
}
