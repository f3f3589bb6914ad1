#include "doctest.h"
#include "neuroalign/tokenize.hpp"
#include "neuroalign/util.hpp"

using namespace neuroalign;

namespace {

Vocab toy_vocab() {
  return Vocab::from_pieces({"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "a", "b", "e", "f", "l", "n", "u",
                             "##a", "##b", "##e", "##f", "##l", "##n", "##u", "un", "##aff", "##able", "dog"});
}

std::string strip(const std::string& piece) { return piece.rfind("##", 0) == 0 ? piece.substr(2) : piece; }

}  // namespace

TEST_CASE("vocabulary order: specials, chars, continuation chars, words, fragments") {
  const Vocab v = build_vocab(std::vector<std::string>{"ab ab ba", "abc"}, 100);
  const std::vector<std::string> expected = {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "a",  "b",   "c",
                                             "##a",   "##b",   "##c",   "ab",    "ba",     "abc", "##bc"};
  CHECK(v.pieces() == expected);
  CHECK(v.find("[MASK]") == Vocab::kMask);
  CHECK(v.find("zzz") == -1);
}

TEST_CASE("frequency ties keep first occurrence") {
  const Vocab v = build_vocab(std::vector<std::string>{"zz yy yy zz xx"}, 13 + 1);
  // chars x,y,z bare and continued = 6, specials 5 -> 11; then zz (2, first), yy (2), xx
  CHECK(v.pieces()[11] == "zz");
  CHECK(v.pieces()[12] == "yy");
  CHECK(v.pieces()[13] == "xx");
  CHECK(v.size() == 14);
}

TEST_CASE("vocabulary size below the character inventory is rejected") {
  CHECK_THROWS_AS(build_vocab(std::vector<std::string>{"abc"}, 10), InvalidArgument);
  CHECK_NOTHROW(build_vocab(std::vector<std::string>{"abc"}, 11));
}

TEST_CASE("text is lowercased") {
  const Vocab v = build_vocab(std::vector<std::string>{"Dog DOG"}, 50);
  CHECK(v.contains("dog"));
  CHECK_FALSE(v.contains("Dog"));
}

TEST_CASE("greedy longest-match segmentation") {
  const Vocab v = toy_vocab();
  auto ids = tokenize_word("unaffable", v);
  std::vector<std::string> pieces;
  for (auto id : ids) pieces.push_back(v.piece(id));
  CHECK(pieces == std::vector<std::string>{"un", "##aff", "##able"});
  CHECK(tokenize_word("DOG", v) == std::vector<PieceId>{v.find("dog")});
  CHECK(tokenize_word("unx", v) == std::vector<PieceId>{Vocab::kUnk});
}

TEST_CASE("sentence alignment frames pieces with CLS and SEP") {
  const Vocab v = toy_vocab();
  const auto a = tokenize_sentence({"dog", "unaffable", "zz"}, v);
  CHECK(a.ids.front() == Vocab::kCls);
  CHECK(a.ids.back() == Vocab::kSep);
  CHECK(a.length() == 7);
  CHECK(a.span(1) == Span{1, 2});
  CHECK(a.span(2) == Span{2, 5});
  CHECK(a.span(3) == Span{5, 6});
  CHECK(a.ids[5] == Vocab::kUnk);
  CHECK_THROWS_AS(a.span(4), InvalidArgument);
}

TEST_CASE("property: pieces reassemble the word and spans partition the sequence") {
  Rng rng(99);
  const std::string letters = "abcdefgh";
  std::vector<std::string> corpus;
  for (int s = 0; s < 50; ++s) {
    std::string line;
    for (int w = 0; w < 6; ++w) {
      std::string word;
      const std::size_t len = 1 + rng.below(6);
      for (std::size_t i = 0; i < len; ++i) word += letters[rng.below(letters.size())];
      line += word + " ";
    }
    corpus.push_back(line);
  }
  const Vocab v = build_vocab(corpus, 80);
  for (const auto& line : corpus) {
    const auto words = split_whitespace(line);
    const auto a = tokenize_sentence(words, v);
    std::size_t expect_begin = 1;
    for (std::size_t w = 0; w < words.size(); ++w) {
      const Span s = a.span(static_cast<int>(w) + 1);
      CHECK(s.begin == expect_begin);
      CHECK(s.size() >= 1);
      std::string rebuilt;
      for (std::size_t p = s.begin; p < s.end; ++p) {
        CHECK((p == s.begin) == (v.piece(a.ids[p]).rfind("##", 0) != 0));
        rebuilt += strip(v.piece(a.ids[p]));
      }
      CHECK(rebuilt == words[w]);
      expect_begin = s.end;
    }
    CHECK(expect_begin + 1 == a.length());
  }
}

TEST_CASE("vocab save and load round-trip") {
  const Vocab v = toy_vocab();
  const Vocab w = Vocab::load(v.save());
  CHECK(w.pieces() == v.pieces());
  CHECK(w.hash() == v.hash());
  CHECK_THROWS(Vocab::from_pieces({"a", "b"}));
}

TEST_CASE("utf8 code points") {
  CHECK(utf8_chars("aé€😀") == std::vector<std::string>{"a", "é", "€", "😀"});
}

TEST_CASE("adjacency expands word edges over piece spans") {
  const Vocab v = toy_vocab();
  SentenceGraph g;
  for (int i = 1; i <= 3; ++i) g.tokens.push_back({i, i == 2 ? "unaffable" : "dog", {}, {}});
  g.edges = {{2, 1, "nsubj"}, {2, 3, "obj"}};
  const auto a = tokenize_sentence(g.words(), v);
  const auto adj = build_adjacency(g, a);
  // Brute-force oracle from the spans.
  std::set<std::pair<std::size_t, std::size_t>> expected;
  for (const auto& e : g.edges)
    for (auto i = a.span(e.head).begin; i < a.span(e.head).end; ++i)
      for (auto j = a.span(e.dependent).begin; j < a.span(e.dependent).end; ++j) {
        expected.insert({i, j});
        expected.insert({j, i});
      }
  const auto bits = adj.set_bits();
  CHECK(std::set<std::pair<std::size_t, std::size_t>>(bits.begin(), bits.end()) == expected);
  CHECK(adj.count() == 12);
  for (std::size_t i = 0; i < adj.size(); ++i)
    for (std::size_t j = 0; j < adj.size(); ++j) CHECK(adj.at(i, j) == adj.at(j, i));
  CHECK(adj.is_special(0));
  CHECK(adj.is_special(a.length() - 1));
  for (std::size_t j = 0; j < adj.size(); ++j) {
    CHECK_FALSE(adj.at(0, j));
    CHECK_FALSE(adj.at(a.length() - 1, j));
  }
}

TEST_CASE("intra-word connections are optional") {
  const Vocab v = toy_vocab();
  SentenceGraph g;
  g.tokens = {{1, "unaffable", {}, {}}};
  const auto a = tokenize_sentence(g.words(), v);
  CHECK(build_adjacency(g, a).count() == 0);
  const auto adj = build_adjacency(g, a, {true});
  CHECK(adj.count() == 6);  // 3 pieces, ordered pairs without the diagonal
  CHECK_FALSE(adj.at(1, 1));
}
