#include "neuroalign/synth.hpp"

#include <cmath>

#include "neuroalign/util.hpp"

namespace neuroalign {

void GrammarSpec::validate() const {
  if (nouns.empty()) throw InvalidArgument("grammar needs at least one noun");
  if (intransitive.empty() && transitive.empty()) throw InvalidArgument("grammar needs at least one verb");
  for (double p : {p_plural, p_adjective, p_attractor, p_transitive})
    if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("grammar probabilities must lie in [0, 1]");
  if (p_adjective > 0.0 && adjectives.empty()) throw InvalidArgument("p_adjective > 0 needs adjectives");
  if (p_attractor > 0.0 && prepositions.empty()) throw InvalidArgument("p_attractor > 0 needs prepositions");
  if (p_transitive > 0.0 && transitive.empty()) throw InvalidArgument("p_transitive > 0 needs transitive verbs");
  if (p_transitive < 1.0 && intransitive.empty()) throw InvalidArgument("p_transitive < 1 needs intransitive verbs");
}

GrammarSpec default_grammar(std::uint64_t seed) {
  GrammarSpec g;
  g.nouns = {{"dog", "dogs"},       {"cat", "cats"},     {"boy", "boys"},       {"girl", "girls"},
             {"farmer", "farmers"}, {"author", "authors"}, {"pilot", "pilots"}, {"doctor", "doctors"},
             {"teacher", "teachers"}, {"horse", "horses"}, {"king", "kings"},   {"student", "students"}};
  g.intransitive = {{"runs", "run"},     {"sleeps", "sleep"}, {"laughs", "laugh"}, {"smiles", "smile"},
                    {"swims", "swim"},   {"waits", "wait"},   {"sings", "sing"},   {"falls", "fall"}};
  g.transitive = {{"sees", "see"},   {"likes", "like"},     {"finds", "find"},   {"helps", "help"},
                  {"knows", "know"}, {"admires", "admire"}, {"calls", "call"},   {"meets", "meet"}};
  g.prepositions = {"near", "behind", "with", "beside"};
  g.adjectives = {"old", "young", "tall", "happy", "small", "brave"};
  g.seed = seed;
  return g;
}

namespace {

struct Builder {
  SentenceGraph g;
  int add(const std::string& form, const char* upos) {
    Token t;
    t.index = static_cast<int>(g.tokens.size()) + 1;
    t.form = form;
    t.upos = upos;
    g.tokens.push_back(std::move(t));
    return static_cast<int>(g.tokens.size());
  }
  void edge(int head, int dep, const char* label) { g.edges.insert({head, dep, label}); }
};

template <typename T>
const T& pick(const std::vector<T>& v, Rng& rng) {
  return v[rng.below(v.size())];
}

/// Emits `the (adj) noun` and returns the noun's index.
int noun_phrase(Builder& b, const std::string& noun, const GrammarSpec& spec, Rng& rng) {
  const int det = b.add("the", "DET");
  int adj = 0;
  if (spec.p_adjective > 0.0 && rng.uniform() < spec.p_adjective) adj = b.add(pick(spec.adjectives, rng), "ADJ");
  const int n = b.add(noun, "NOUN");
  b.edge(n, det, "det");
  if (adj) b.edge(n, adj, "amod");
  return n;
}

std::vector<std::string> words_until(const SentenceGraph& g, int end_exclusive) {
  std::vector<std::string> out;
  for (int i = 1; i < end_exclusive; ++i) out.push_back(g.tokens[static_cast<std::size_t>(i - 1)].form);
  return out;
}

}  // namespace

std::vector<SynthSentence> gen_corpus(const GrammarSpec& spec, std::size_t n) {
  if (n == 0) throw InvalidArgument("sentence count must be at least 1");
  spec.validate();
  Rng rng(spec.seed);
  std::vector<SynthSentence> out;
  out.reserve(n);
  for (std::size_t s = 0; s < n; ++s) {
    const bool plural = rng.uniform() < spec.p_plural;
    const Inflected& subject = pick(spec.nouns, rng);
    const bool transitive = spec.p_transitive > 0.0 && rng.uniform() < spec.p_transitive;
    const Inflected& verb = transitive ? pick(spec.transitive, rng) : pick(spec.intransitive, rng);
    const bool attractor = spec.p_attractor > 0.0 && rng.uniform() < spec.p_attractor;
    // The attractor always carries the opposite number, inside or outside the sentence.
    const std::string& prep = spec.prepositions.empty() ? std::string() : pick(spec.prepositions, rng);
    const Inflected& attr_noun = pick(spec.nouns, rng);

    Builder b;
    const int subj = noun_phrase(b, subject.form(plural), spec, rng);
    std::vector<std::string> subject_phrase = words_until(b.g, subj + 1);
    if (attractor) {
      const int p = b.add(prep, "ADP");
      const int a = noun_phrase(b, attr_noun.form(!plural), spec, rng);
      b.edge(a, p, "case");
      b.edge(subj, a, "nmod");
    }
    const int v = b.add(verb.form(plural), "VERB");
    b.edge(v, subj, "nsubj");
    std::vector<std::string> suffix;
    if (transitive) {
      const Inflected& object = pick(spec.nouns, rng);
      const int o = noun_phrase(b, object.form(rng.uniform() < spec.p_plural), spec, rng);
      b.edge(v, o, "obj");
      for (int i = v + 1; i <= o; ++i) suffix.push_back(b.g.tokens[static_cast<std::size_t>(i - 1)].form);
    }
    b.g.formalism = Formalism::UD;
    b.g.id = "synth-" + std::to_string(s + 1);

    SynthSentence item;
    MinimalPair simple{"sva_simple", subject_phrase, verb.form(plural), verb.form(!plural), suffix};
    std::vector<std::string> attr_prefix = subject_phrase;
    if (!prep.empty()) {
      attr_prefix.push_back(prep);
      attr_prefix.push_back("the");
      attr_prefix.push_back(attr_noun.form(!plural));
      item.pairs.push_back(std::move(simple));
      item.pairs.push_back({"sva_attractor", attr_prefix, verb.form(plural), verb.form(!plural), suffix});
    } else {
      item.pairs.push_back(std::move(simple));
    }
    item.graph = std::move(b.g);
    out.push_back(std::move(item));
  }
  return out;
}

void SynthBrainSpec::validate() const {
  if (d_b < 1) throw InvalidArgument("d_B must be at least 1");
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw InvalidArgument("sigma must be finite and non-negative");
}

Eigen::MatrixXd brain_mixing(int d_h, int d_b, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd m(d_h, d_b);
  const double scale = 1.0 / std::sqrt(static_cast<double>(d_h));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rng.normal() * scale;
  return m;
}

namespace {

Eigen::MatrixXd clean_signal(const ReprMatrix& source, const SynthBrainSpec& spec) {
  spec.validate();
  source.validate();
  if (source.rows() == 0 || source.cols() == 0) throw InvalidArgument("source matrix is empty");
  return source.values * brain_mixing(static_cast<int>(source.cols()), spec.d_b, spec.seed);
}

double entry_std(const Eigen::MatrixXd& x) {
  const double mean = x.mean();
  return std::sqrt((x.array() - mean).square().mean());
}

}  // namespace

double signal_scale(const ReprMatrix& source, const SynthBrainSpec& spec) {
  return entry_std(clean_signal(source, spec));
}

BrainMatrix gen_brain(const ReprMatrix& source, const SynthBrainSpec& spec) {
  BrainMatrix out;
  out.values = clean_signal(source, spec);
  out.labels = source.labels;
  const double sd = spec.sigma_relative ? spec.sigma * entry_std(out.values) : spec.sigma;
  if (sd > 0.0) {
    // Noise stream is separate from the mixing matrix stream.
    Rng rng = Rng::stream(spec.seed, 1);
    for (Eigen::Index i = 0; i < out.values.rows(); ++i)
      for (Eigen::Index j = 0; j < out.values.cols(); ++j) out.values(i, j) += sd * rng.normal();
  }
  return out;
}

std::vector<SentenceGraph> graphs_of(const std::vector<SynthSentence>& corpus) {
  std::vector<SentenceGraph> out;
  for (const auto& s : corpus) out.push_back(s.graph);
  return out;
}

std::vector<MinimalPair> pairs_of(const std::vector<SynthSentence>& corpus) {
  std::vector<MinimalPair> out;
  for (const auto& s : corpus) out.insert(out.end(), s.pairs.begin(), s.pairs.end());
  return out;
}

}  // namespace neuroalign
