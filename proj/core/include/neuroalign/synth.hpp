#ifndef NEUROALIGN_SYNTH_HPP
#define NEUROALIGN_SYNTH_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "neuroalign/corpus.hpp"
#include "neuroalign/matrix_io.hpp"
#include "neuroalign/probes.hpp"

namespace neuroalign {

struct Inflected {
  std::string singular;
  std::string plural;
  const std::string& form(bool is_plural) const { return is_plural ? plural : singular; }
};

/// Lexicon and template probabilities for the agreement grammar.
///
/// Templates: `the (adj) N (prep the (adj) N') V` and the same with a
/// transitive verb followed by `the (adj) N''`. Verbs agree in number with
/// the head noun N, never with the attractor N'.
struct GrammarSpec {
  std::vector<Inflected> nouns;
  std::vector<Inflected> intransitive;  // verb forms agreeing with a singular / plural subject
  std::vector<Inflected> transitive;
  std::vector<std::string> prepositions;
  std::vector<std::string> adjectives;
  double p_plural = 0.5;
  double p_adjective = 0.2;
  double p_attractor = 0.5;
  double p_transitive = 0.5;
  std::uint64_t seed = 0;

  void validate() const;
};

GrammarSpec default_grammar(std::uint64_t seed = 0);

struct SynthSentence {
  SentenceGraph graph;
  /// sva_simple and sva_attractor, in that order.
  std::vector<MinimalPair> pairs;
};

std::vector<SynthSentence> gen_corpus(const GrammarSpec& spec, std::size_t n);

struct SynthBrainSpec {
  int d_b = 32;
  double sigma = 0.0;
  /// When set, the noise standard deviation is sigma * signal scale.
  bool sigma_relative = false;
  std::uint64_t seed = 0;

  void validate() const;
};

/// The d_H x d_B mixing matrix M: unit normals scaled by 1/sqrt(d_H).
Eigen::MatrixXd brain_mixing(int d_h, int d_b, std::uint64_t seed);

/// Standard deviation of the entries of D * M.
double signal_scale(const ReprMatrix& source, const SynthBrainSpec& spec);

/// B = D * M + noise, labels copied from D.
BrainMatrix gen_brain(const ReprMatrix& source, const SynthBrainSpec& spec);

std::vector<SentenceGraph> graphs_of(const std::vector<SynthSentence>& corpus);
std::vector<MinimalPair> pairs_of(const std::vector<SynthSentence>& corpus);

}  // namespace neuroalign

#endif  // NEUROALIGN_SYNTH_HPP
