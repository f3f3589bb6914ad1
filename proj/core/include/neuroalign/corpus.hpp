#ifndef NEUROALIGN_CORPUS_HPP
#define NEUROALIGN_CORPUS_HPP

#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace neuroalign {

/// One word of a sentence. `index` is 1-based.
struct Token {
  int index = 0;
  std::string form;
  std::optional<std::string> upos;
  std::optional<std::string> xpos;

  bool operator==(const Token&) const = default;
};

struct Edge {
  int head = 0;
  int dependent = 0;
  std::string label;

  auto operator<=>(const Edge&) const = default;
};

enum class Formalism { UD, DM, UCCA_BILEXICAL, OTHER };

std::string_view to_string(Formalism f);
Formalism formalism_from_string(std::string_view s);

/// Tokens plus bilexical head->dependent edges for one sentence.
///
/// Edges are held in a sorted set, so equality does not depend on the order
/// edges were read in. `tops` records SDP TOP markers; they are metadata, not
/// edges.
struct SentenceGraph {
  std::vector<Token> tokens;
  std::set<Edge> edges;
  Formalism formalism = Formalism::OTHER;
  std::vector<int> tops;
  std::string id;

  std::vector<std::string> words() const;

  /// Throws InvalidArgument if an edge leaves the token range, is a
  /// self-loop, or tokens are not numbered 1..n.
  void validate() const;

  bool operator==(const SentenceGraph&) const = default;
};

std::vector<SentenceGraph> parse_conllu(std::string_view text);
std::string write_conllu(const std::vector<SentenceGraph>& graphs);

/// SDP 2015 columns: id form lemma pos top pred frame arg1..argK.
std::vector<SentenceGraph> parse_sdp(std::string_view text);

/// Hierarchical (constituency-like) semantic graph with anchored terminals.
struct HierGraph {
  struct Edge {
    std::string parent;
    std::string child;
    std::string category;
    bool remote = false;
  };
  std::vector<std::string> units;
  std::vector<Edge> edges;
  std::map<std::string, int> anchors;  // unit id -> 1-based word index
  std::vector<std::string> tokens;
};

HierGraph parse_hier_json(std::string_view json_text);

/// Default head-percolation priority, predicates and centers first.
const std::vector<std::string>& default_ucca_priority();

struct BilexicalOptions {
  bool keep_remote = true;
};

/// Converts a hierarchical graph to word-to-word edges by head percolation.
///
/// A leaf's head is its anchored word. An internal unit's head is the head of
/// the primary child whose category ranks earliest in `priority`, ties going
/// to the child whose yield starts leftmost. Every other primary child c of a
/// unit u contributes (head(u), head(c), category(c)); remote edges
/// contribute the same way with a "*remote" label suffix.
SentenceGraph bilexical_approximate(const HierGraph& g, const std::vector<std::string>& priority,
                                    BilexicalOptions options = {});

/// The seven open-class universal POS tags.
const std::set<std::string>& content_upos_tags();

struct ContentFunctionSplit {
  std::set<int> content;
  std::set<int> function;
};

ContentFunctionSplit split_content_function(const std::vector<Token>& tokens);

/// Normalized JSON Lines form, one object per sentence.
std::string to_jsonl(const SentenceGraph& g);
SentenceGraph from_jsonl(std::string_view line);
std::string write_jsonl(const std::vector<SentenceGraph>& graphs);
std::vector<SentenceGraph> read_jsonl(std::string_view text);

}  // namespace neuroalign

#endif  // NEUROALIGN_CORPUS_HPP
