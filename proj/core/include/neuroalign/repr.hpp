#ifndef NEUROALIGN_REPR_HPP
#define NEUROALIGN_REPR_HPP

#include <string>
#include <vector>

#include "neuroalign/matrix_io.hpp"
#include "neuroalign/model.hpp"
#include "neuroalign/tokenize.hpp"
#include "neuroalign/train.hpp"

namespace neuroalign {

/// Mean of final-layer hidden states over the sentence's wordpieces. The
/// leading [CLS], the trailing [SEP] and padding are excluded.
Vector sentence_repr(const ForwardTrace& trace);

/// Mean of final-layer hidden states over one word's piece span.
Vector word_repr(const ForwardTrace& trace, const PieceAlignment& alignment, int word_index);

struct Stimulus {
  std::string label;
  std::vector<std::string> words;
};

/// One row per stimulus sentence.
ReprMatrix extract_sentence_reprs(const TransformerParams& params, const ModelConfig& config,
                                  const Vocab& vocab, const std::vector<Stimulus>& stimuli,
                                  unsigned jobs = 1);

/// One row per word, labelled "<stimulus label>:<word index>".
ReprMatrix extract_word_reprs(const TransformerParams& params, const ModelConfig& config,
                              const Vocab& vocab, const std::vector<Stimulus>& stimuli,
                              unsigned jobs = 1);

enum class DistanceMetric { Cosine, Euclidean };

DistanceMetric metric_from_string(std::string_view s);
std::string_view to_string(DistanceMetric m);

/// k-occurrence counts: how often each row appears in the other rows'
/// k-nearest-neighbour lists (self excluded, distance ties to lower index).
std::vector<int> k_occurrence(const ReprMatrix& reps, int k, DistanceMetric metric);

/// Robin Hood index of the k-occurrence distribution, in [0, 1):
/// sum_i max(0, o_i - k) / sum_i o_i.
double robin_hood_index(const ReprMatrix& reps, int k, DistanceMetric metric = DistanceMetric::Cosine);

struct SelectionResult {
  std::size_t index = 0;
  std::vector<double> scores;
};

/// Candidate with the lowest Robin Hood index; ties go to the earlier one.
SelectionResult select_model(const std::vector<ReprMatrix>& candidates, int k,
                             DistanceMetric metric = DistanceMetric::Cosine);

/// Per-word pseudo-perplexity: all pieces of the word are masked jointly and
/// the score is exp(-(1/P_w) * sum log p(true piece)).
std::vector<double> word_pseudo_perplexities(const TransformerParams& params, const ModelConfig& config,
                                             const Vocab& vocab,
                                             const std::vector<std::vector<std::string>>& sentences,
                                             unsigned jobs = 1);

/// Mean word pseudo-perplexity over every word of every sentence.
double pseudo_perplexity(const TransformerParams& params, const ModelConfig& config, const Vocab& vocab,
                         const std::vector<std::vector<std::string>>& sentences, unsigned jobs = 1);

}  // namespace neuroalign

#endif  // NEUROALIGN_REPR_HPP
