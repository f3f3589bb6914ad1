#include "neuroalign/tokenize.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "json.hpp"
#include "neuroalign/util.hpp"

namespace neuroalign {

namespace {

const std::vector<std::string>& special_pieces() {
  static const std::vector<std::string> s = {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"};
  return s;
}

// Counts keys while remembering first-occurrence order for tie-breaking.
class OrderedCounter {
 public:
  void add(const std::string& key) {
    auto [it, inserted] = index_.emplace(key, entries_.size());
    if (inserted) entries_.push_back({key, 0});
    ++entries_[it->second].second;
  }
  std::vector<std::string> by_frequency() const {
    std::vector<std::size_t> order(entries_.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return entries_[a].second > entries_[b].second;
    });
    std::vector<std::string> out;
    out.reserve(order.size());
    for (std::size_t i : order) out.push_back(entries_[i].first);
    return out;
  }

 private:
  std::unordered_map<std::string, std::size_t> index_;
  std::vector<std::pair<std::string, std::size_t>> entries_;
};

}  // namespace

Vocab::Vocab() {
  for (const auto& p : special_pieces()) {
    index_.emplace(p, static_cast<PieceId>(pieces_.size()));
    pieces_.push_back(p);
  }
}

Vocab Vocab::from_pieces(std::vector<std::string> pieces) {
  const auto& specials = special_pieces();
  if (pieces.size() < specials.size() || !std::equal(specials.begin(), specials.end(), pieces.begin()))
    throw InvalidArgument("vocabulary must start with [PAD] [UNK] [CLS] [SEP] [MASK]");
  Vocab v;
  v.pieces_.clear();
  v.index_.clear();
  for (auto& p : pieces) {
    if (p.empty() || p.find('\n') != std::string::npos)
      throw InvalidArgument("vocabulary pieces must be non-empty single-line strings");
    if (!v.index_.emplace(p, static_cast<PieceId>(v.pieces_.size())).second)
      throw InvalidArgument("duplicate vocabulary piece '" + p + "'");
    v.pieces_.push_back(std::move(p));
  }
  return v;
}

Vocab Vocab::load(std::string_view text) {
  auto lines = split(text, '\n');
  if (!lines.empty() && lines.back().empty()) lines.pop_back();
  return from_pieces(std::move(lines));
}

std::string Vocab::save() const {
  std::string out;
  for (const auto& p : pieces_) {
    out += p;
    out += '\n';
  }
  return out;
}

PieceId Vocab::find(std::string_view piece) const {
  auto it = index_.find(std::string(piece));
  return it == index_.end() ? -1 : it->second;
}

std::uint64_t Vocab::hash() const { return fnv1a(save()); }

std::vector<std::string> utf8_chars(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    auto lead = static_cast<unsigned char>(s[i]);
    std::size_t len = 1;
    if (lead >= 0xF0) len = 4;
    else if (lead >= 0xE0) len = 3;
    else if (lead >= 0xC0) len = 2;
    len = std::min(len, s.size() - i);
    out.emplace_back(s.substr(i, len));
    i += len;
  }
  return out;
}

Vocab build_vocab(const std::vector<std::vector<std::string>>& sentences, std::size_t target_size) {
  std::set<std::string> chars;
  OrderedCounter words;
  OrderedCounter fragments;
  for (const auto& sentence : sentences) {
    for (const auto& raw : sentence) {
      std::string word = to_lower_ascii(raw);
      if (word.empty()) continue;
      auto cs = utf8_chars(word);
      chars.insert(cs.begin(), cs.end());
      words.add(word);
      std::string suffix;
      for (std::size_t i = cs.size(); i-- > 1;) {
        suffix.insert(0, cs[i]);
        if (cs.size() - i >= 2) fragments.add(std::string(Vocab::kContinuation) + suffix);
      }
    }
  }

  std::vector<std::string> pieces = special_pieces();
  for (const auto& c : chars) pieces.push_back(c);
  for (const auto& c : chars) pieces.push_back(std::string(Vocab::kContinuation) + c);
  if (target_size < pieces.size())
    throw InvalidArgument("target vocabulary size " + std::to_string(target_size) +
                          " is below the " + std::to_string(pieces.size()) +
                          " specials and single-character pieces");

  std::set<std::string> present(pieces.begin(), pieces.end());
  auto take = [&](const std::vector<std::string>& ranked) {
    for (const auto& p : ranked) {
      if (pieces.size() >= target_size) return;
      if (present.insert(p).second) pieces.push_back(p);
    }
  };
  take(words.by_frequency());
  take(fragments.by_frequency());
  return Vocab::from_pieces(std::move(pieces));
}

Vocab build_vocab(const std::vector<std::string>& sentences, std::size_t target_size) {
  std::vector<std::vector<std::string>> split_sentences;
  split_sentences.reserve(sentences.size());
  for (const auto& s : sentences) split_sentences.push_back(split_whitespace(s));
  return build_vocab(split_sentences, target_size);
}

const Span& PieceAlignment::span(int word_index) const {
  if (word_index < 1 || static_cast<std::size_t>(word_index) > word_spans.size())
    throw InvalidArgument("word index " + std::to_string(word_index) + " outside the alignment");
  return word_spans[static_cast<std::size_t>(word_index - 1)];
}

std::vector<PieceId> tokenize_word(std::string_view raw, const Vocab& v) {
  const std::string word = to_lower_ascii(raw);
  const auto cs = utf8_chars(word);
  std::vector<PieceId> out;
  std::size_t start = 0;
  while (start < cs.size()) {
    PieceId found = -1;
    std::size_t found_end = start;
    std::string candidate = start > 0 ? std::string(Vocab::kContinuation) : std::string();
    std::vector<std::size_t> lengths;
    for (std::size_t end = start; end < cs.size(); ++end) {
      candidate += cs[end];
      lengths.push_back(candidate.size());
    }
    // Longest match first.
    for (std::size_t end = cs.size(); end > start; --end) {
      PieceId id = v.find(std::string_view(candidate).substr(0, lengths[end - start - 1]));
      if (id >= 0) {
        found = id;
        found_end = end;
        break;
      }
    }
    if (found < 0) return {Vocab::kUnk};
    out.push_back(found);
    start = found_end;
  }
  if (out.empty()) return {Vocab::kUnk};
  return out;
}

PieceAlignment tokenize_sentence(const std::vector<std::string>& words, const Vocab& v) {
  PieceAlignment a;
  a.ids.push_back(Vocab::kCls);
  for (const auto& w : words) {
    auto pieces = tokenize_word(w, v);
    Span s{a.ids.size(), a.ids.size() + pieces.size()};
    a.ids.insert(a.ids.end(), pieces.begin(), pieces.end());
    a.word_spans.push_back(s);
  }
  a.ids.push_back(Vocab::kSep);
  return a;
}

AdjacencyMatrix::AdjacencyMatrix(std::size_t size)
    : size_(size), bits_(size * size, 0), special_(size, 0) {}

void AdjacencyMatrix::connect(std::size_t i, std::size_t j) {
  if (i >= size_ || j >= size_) throw InvalidArgument("adjacency position out of range");
  if (i == j || special_[i] || special_[j]) return;
  bits_[i * size_ + j] = 1;
  bits_[j * size_ + i] = 1;
}

void AdjacencyMatrix::mark_special(std::size_t i) {
  if (i >= size_) throw InvalidArgument("adjacency position out of range");
  special_[i] = 1;
  for (std::size_t j = 0; j < size_; ++j) {
    bits_[i * size_ + j] = 0;
    bits_[j * size_ + i] = 0;
  }
}

std::size_t AdjacencyMatrix::count() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

std::vector<std::pair<std::size_t, std::size_t>> AdjacencyMatrix::set_bits() const {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < size_; ++i)
    for (std::size_t j = 0; j < size_; ++j)
      if (bits_[i * size_ + j]) out.emplace_back(i, j);
  return out;
}

std::string AdjacencyMatrix::to_json() const {
  nlohmann::json j;
  j["size"] = size_;
  std::vector<std::size_t> special;
  for (std::size_t i = 0; i < size_; ++i)
    if (special_[i]) special.push_back(i);
  j["special"] = special;
  nlohmann::json bits = nlohmann::json::array();
  for (auto [r, c] : set_bits()) bits.push_back({r, c});
  j["bits"] = std::move(bits);
  return j.dump();
}

AdjacencyMatrix build_adjacency(const SentenceGraph& g, const PieceAlignment& a,
                                AdjacencyOptions options) {
  if (g.tokens.size() != a.num_words())
    throw InvalidArgument("graph has " + std::to_string(g.tokens.size()) + " words but alignment has " +
                          std::to_string(a.num_words()));
  AdjacencyMatrix m(a.length());
  if (a.length() > 0) {
    m.mark_special(0);
    m.mark_special(a.length() - 1);
  }
  for (const auto& e : g.edges) {
    const Span& hs = a.span(e.head);
    const Span& ds = a.span(e.dependent);
    for (std::size_t p = hs.begin; p < hs.end; ++p)
      for (std::size_t q = ds.begin; q < ds.end; ++q) m.connect(p, q);
  }
  if (options.intra_word) {
    for (const auto& s : a.word_spans)
      for (std::size_t p = s.begin; p < s.end; ++p)
        for (std::size_t q = p + 1; q < s.end; ++q) m.connect(p, q);
  }
  return m;
}

}  // namespace neuroalign
