#ifndef NEUROALIGN_TOKENIZE_HPP
#define NEUROALIGN_TOKENIZE_HPP

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "neuroalign/corpus.hpp"

namespace neuroalign {

using PieceId = std::int32_t;

/// Wordpiece vocabulary. Ids are dense; the five specials occupy 0..4.
class Vocab {
 public:
  static constexpr PieceId kPad = 0;
  static constexpr PieceId kUnk = 1;
  static constexpr PieceId kCls = 2;
  static constexpr PieceId kSep = 3;
  static constexpr PieceId kMask = 4;
  static constexpr std::size_t kNumSpecials = 5;
  static constexpr std::string_view kContinuation = "##";

  Vocab();

  /// Builds from an ordered piece list; the first five must be the specials.
  static Vocab from_pieces(std::vector<std::string> pieces);

  /// One piece per line, line number = id, LF endings.
  static Vocab load(std::string_view text);
  std::string save() const;

  std::size_t size() const { return pieces_.size(); }
  const std::string& piece(PieceId id) const { return pieces_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& pieces() const { return pieces_; }

  /// -1 when absent.
  PieceId find(std::string_view piece) const;
  bool contains(std::string_view piece) const { return find(piece) >= 0; }
  static bool is_special(PieceId id) { return id >= 0 && id < static_cast<PieceId>(kNumSpecials); }

  std::uint64_t hash() const;

 private:
  std::vector<std::string> pieces_;
  std::unordered_map<std::string, PieceId> index_;
};

/// Greedy frequency-based vocabulary.
///
/// Specials, then every observed character both bare and with the "##"
/// prefix, then whole words by descending frequency, then "##" suffix
/// fragments by descending frequency, until `target_size` pieces. Ties go to
/// first occurrence in corpus order. Words are ASCII-lowercased.
Vocab build_vocab(const std::vector<std::vector<std::string>>& sentences, std::size_t target_size);
Vocab build_vocab(const std::vector<std::string>& sentences, std::size_t target_size);

/// Splits a UTF-8 string into code points.
std::vector<std::string> utf8_chars(std::string_view s);

/// Half-open range [begin, end) of piece positions.
struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
  bool operator==(const Span&) const = default;
};

/// Piece sequence framed by [CLS] ... [SEP] with per-word spans.
struct PieceAlignment {
  std::vector<PieceId> ids;
  std::vector<Span> word_spans;  // word_spans[w] is the span of word w+1

  std::size_t length() const { return ids.size(); }
  std::size_t num_words() const { return word_spans.size(); }
  const Span& span(int word_index) const;
};

/// Greedy longest-match-first segmentation. A word with an unmatchable
/// residue becomes a single [UNK].
std::vector<PieceId> tokenize_word(std::string_view word, const Vocab& v);
PieceAlignment tokenize_sentence(const std::vector<std::string>& words, const Vocab& v);

/// P x P symmetric binary connectivity target.
class AdjacencyMatrix {
 public:
  AdjacencyMatrix() = default;
  explicit AdjacencyMatrix(std::size_t size);

  std::size_t size() const { return size_; }
  bool at(std::size_t i, std::size_t j) const { return bits_[i * size_ + j] != 0; }
  void connect(std::size_t i, std::size_t j);

  /// Positions excluded from guidance: [CLS], [SEP] and padding.
  bool is_special(std::size_t i) const { return special_[i] != 0; }
  void mark_special(std::size_t i);

  std::size_t count() const;
  std::vector<std::pair<std::size_t, std::size_t>> set_bits() const;

  /// {"size": P, "special": [...], "bits": [[i, j], ...]}
  std::string to_json() const;

  bool operator==(const AdjacencyMatrix&) const = default;

 private:
  std::size_t size_ = 0;
  std::vector<std::uint8_t> bits_;
  std::vector<std::uint8_t> special_;
};

struct AdjacencyOptions {
  bool intra_word = false;
};

/// Every word-level edge (u, v) connects all piece pairs of span(u) x span(v)
/// in both orientations. Special positions stay all-zero.
AdjacencyMatrix build_adjacency(const SentenceGraph& g, const PieceAlignment& a,
                                AdjacencyOptions options = {});

}  // namespace neuroalign

#endif  // NEUROALIGN_TOKENIZE_HPP
