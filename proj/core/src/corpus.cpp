#include "neuroalign/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <functional>
#include <sstream>

#include "json.hpp"
#include "neuroalign/util.hpp"

namespace neuroalign {

using nlohmann::json;

namespace {

bool parse_int(std::string_view s, int& out) {
  if (s.empty()) return false;
  auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

std::optional<std::string> optional_field(const std::string& s) {
  if (s == "_" || s.empty()) return std::nullopt;
  return s;
}

struct Line {
  std::size_t number;
  std::string text;
};

// Splits text into blank-line separated blocks, keeping line numbers.
std::vector<std::vector<Line>> blocks(std::string_view text) {
  std::vector<std::vector<Line>> out;
  std::vector<Line> current;
  std::size_t number = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string line(text.substr(start, end - start));
    if (!line.empty() && line.back() == '\r') line.pop_back();
    ++number;
    bool blank = line.find_first_not_of(" \t") == std::string::npos;
    if (blank) {
      if (!current.empty()) out.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back({number, std::move(line)});
    }
    if (end == text.size()) break;
    start = end + 1;
  }
  if (!current.empty()) out.push_back(std::move(current));
  return out;
}

void check_edges(const SentenceGraph& g, std::size_t line) {
  try {
    g.validate();
  } catch (const InvalidArgument& e) {
    throw ParseError(e.what(), line);
  }
}

}  // namespace

std::string_view to_string(Formalism f) {
  switch (f) {
    case Formalism::UD: return "UD";
    case Formalism::DM: return "DM";
    case Formalism::UCCA_BILEXICAL: return "UCCA-bilexical";
    case Formalism::OTHER: return "OTHER";
  }
  return "OTHER";
}

Formalism formalism_from_string(std::string_view s) {
  std::string lower = to_lower_ascii(s);
  if (lower == "ud") return Formalism::UD;
  if (lower == "dm") return Formalism::DM;
  if (lower == "ucca-bilexical" || lower == "ucca") return Formalism::UCCA_BILEXICAL;
  if (lower == "other") return Formalism::OTHER;
  throw InvalidArgument("unknown formalism '" + std::string(s) + "'");
}

std::vector<std::string> SentenceGraph::words() const {
  std::vector<std::string> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(t.form);
  return out;
}

void SentenceGraph::validate() const {
  const int n = static_cast<int>(tokens.size());
  for (int i = 0; i < n; ++i) {
    if (tokens[static_cast<std::size_t>(i)].index != i + 1)
      throw InvalidArgument("token indices must run 1..n");
    if (tokens[static_cast<std::size_t>(i)].form.empty())
      throw InvalidArgument("token " + std::to_string(i + 1) + " has an empty form");
  }
  for (const auto& e : edges) {
    if (e.head < 1 || e.head > n || e.dependent < 1 || e.dependent > n)
      throw InvalidArgument("edge " + std::to_string(e.head) + "->" + std::to_string(e.dependent) +
                            " outside token range 1.." + std::to_string(n));
    if (e.head == e.dependent)
      throw InvalidArgument("self-loop edge at token " + std::to_string(e.head));
  }
}

std::vector<SentenceGraph> parse_conllu(std::string_view text) {
  std::vector<SentenceGraph> out;
  for (const auto& block : blocks(text)) {
    SentenceGraph g;
    g.formalism = Formalism::UD;
    std::size_t first_line = block.front().number;
    for (const auto& [number, line] : block) {
      if (line[0] == '#') {
        constexpr std::string_view key = "# sent_id = ";
        if (line.rfind(key, 0) == 0) g.id = line.substr(key.size());
        continue;
      }
      auto cols = split(line, '\t');
      if (cols.size() != 10)
        throw ParseError("expected 10 tab-separated columns, found " + std::to_string(cols.size()),
                         number);
      const std::string& id = cols[0];
      if (id.find('-') != std::string::npos || id.find('.') != std::string::npos) continue;
      int index = 0;
      if (!parse_int(id, index)) throw ParseError("non-integer token ID '" + id + "'", number);
      int head = 0;
      if (!parse_int(cols[6], head)) throw ParseError("non-integer HEAD '" + cols[6] + "'", number);
      if (index != static_cast<int>(g.tokens.size()) + 1)
        throw ParseError("token ID " + id + " out of sequence", number);
      if (cols[1].empty()) throw ParseError("empty FORM", number);
      g.tokens.push_back({index, cols[1], optional_field(cols[3]), optional_field(cols[4])});
      if (head != 0) g.edges.insert({head, index, cols[7]});
    }
    if (g.tokens.empty()) continue;
    check_edges(g, first_line);
    out.push_back(std::move(g));
  }
  return out;
}

std::string write_conllu(const std::vector<SentenceGraph>& graphs) {
  std::ostringstream os;
  for (const auto& g : graphs) {
    std::vector<const Edge*> incoming(g.tokens.size() + 1, nullptr);
    for (const auto& e : g.edges) {
      if (incoming[static_cast<std::size_t>(e.dependent)])
        throw InvalidArgument("token " + std::to_string(e.dependent) +
                              " has several heads; not representable as basic CoNLL-U");
      incoming[static_cast<std::size_t>(e.dependent)] = &e;
    }
    if (!g.id.empty()) os << "# sent_id = " << g.id << '\n';
    for (const auto& t : g.tokens) {
      const Edge* e = incoming[static_cast<std::size_t>(t.index)];
      os << t.index << '\t' << t.form << "\t_\t" << t.upos.value_or("_") << '\t'
         << t.xpos.value_or("_") << "\t_\t" << (e ? e->head : 0) << '\t'
         << (e ? e->label : std::string("root")) << "\t_\t_\n";
    }
    os << '\n';
  }
  return os.str();
}

std::vector<SentenceGraph> parse_sdp(std::string_view text) {
  std::vector<SentenceGraph> out;
  for (const auto& block : blocks(text)) {
    SentenceGraph g;
    g.formalism = Formalism::DM;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> numbers;
    for (const auto& [number, line] : block) {
      if (line[0] == '#') {
        if (line.size() > 1 && std::isdigit(static_cast<unsigned char>(line[1])))
          g.id = line.substr(1);
        continue;
      }
      auto cols = split(line, '\t');
      if (cols.size() < 7)
        throw ParseError("expected at least 7 tab-separated columns, found " +
                             std::to_string(cols.size()),
                         number);
      rows.push_back(std::move(cols));
      numbers.push_back(number);
    }
    if (rows.empty()) continue;

    std::vector<int> predicates;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      int index = 0;
      if (!parse_int(rows[i][0], index))
        throw ParseError("non-integer token ID '" + rows[i][0] + "'", numbers[i]);
      if (index != static_cast<int>(i) + 1)
        throw ParseError("token ID " + rows[i][0] + " out of sequence", numbers[i]);
      if (rows[i][5] == "+") predicates.push_back(index);
      else if (rows[i][5] != "-") throw ParseError("PRED column must be '+' or '-'", numbers[i]);
      if (rows[i][4] == "+") g.tops.push_back(index);
      else if (rows[i][4] != "-") throw ParseError("TOP column must be '+' or '-'", numbers[i]);
      g.tokens.push_back({index, rows[i][1], std::nullopt, optional_field(rows[i][3])});
    }
    for (std::size_t i = 0; i < rows.size(); ++i) {
      std::size_t args = rows[i].size() - 7;
      if (args != predicates.size())
        throw ParseError("found " + std::to_string(args) + " argument columns but " +
                             std::to_string(predicates.size()) + " predicates",
                         numbers[i]);
      for (std::size_t k = 0; k < args; ++k) {
        const std::string& cell = rows[i][7 + k];
        if (cell == "_") continue;
        g.edges.insert({predicates[k], static_cast<int>(i) + 1, cell});
      }
    }
    check_edges(g, numbers.front());
    out.push_back(std::move(g));
  }
  return out;
}

namespace {

std::string unit_id(const json& j) {
  if (j.is_string()) return j.get<std::string>();
  if (j.is_number_integer()) return std::to_string(j.get<long long>());
  throw ParseError("unit ids must be strings or integers");
}

}  // namespace

HierGraph parse_hier_json(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("invalid JSON: ") + e.what());
  }
  HierGraph g;
  try {
    for (const auto& u : doc.at("units")) g.units.push_back(unit_id(u));
    for (const auto& e : doc.at("edges")) {
      g.edges.push_back({unit_id(e.at("parent")), unit_id(e.at("child")),
                         e.at("category").get<std::string>(), e.value("remote", false)});
    }
    for (const auto& [unit, word] : doc.at("anchors").items()) g.anchors[unit] = word.get<int>();
    for (const auto& t : doc.at("tokens")) g.tokens.push_back(t.get<std::string>());
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed hierarchical graph: ") + e.what());
  }
  return g;
}

const std::vector<std::string>& default_ucca_priority() {
  static const std::vector<std::string> priority = {"P", "S", "C", "H", "A", "D", "E", "R",
                                                    "F", "L", "N", "G", "Q", "T", "U"};
  return priority;
}

SentenceGraph bilexical_approximate(const HierGraph& g, const std::vector<std::string>& priority,
                                    BilexicalOptions options) {
  std::map<std::string, std::size_t> unit_pos;
  for (std::size_t i = 0; i < g.units.size(); ++i) {
    if (!unit_pos.emplace(g.units[i], i).second)
      throw InvalidArgument("duplicate unit id '" + g.units[i] + "'");
  }
  std::map<std::string, std::size_t> rank;
  for (std::size_t i = 0; i < priority.size(); ++i) rank.emplace(priority[i], i);

  const std::size_t n_units = g.units.size();
  const int n_words = static_cast<int>(g.tokens.size());
  std::vector<std::vector<const HierGraph::Edge*>> children(n_units);
  std::vector<int> parents(n_units, 0);
  auto lookup = [&](const std::string& id) {
    auto it = unit_pos.find(id);
    if (it == unit_pos.end()) throw InvalidArgument("edge refers to unknown unit '" + id + "'");
    return it->second;
  };
  for (const auto& e : g.edges) {
    std::size_t p = lookup(e.parent);
    std::size_t c = lookup(e.child);
    if (e.remote) continue;
    if (!rank.count(e.category))
      throw InvalidArgument("category '" + e.category + "' missing from priority list");
    children[p].push_back(&e);
    ++parents[c];
  }

  std::vector<int> anchor(n_units, 0);
  std::vector<int> anchored_count(static_cast<std::size_t>(n_words) + 1, 0);
  for (const auto& [id, word] : g.anchors) {
    std::size_t u = lookup(id);
    if (word < 1 || word > n_words)
      throw InvalidArgument("unit '" + id + "' anchored outside the token range");
    anchor[u] = word;
    ++anchored_count[static_cast<std::size_t>(word)];
  }
  for (int w = 1; w <= n_words; ++w) {
    if (anchored_count[static_cast<std::size_t>(w)] != 1)
      throw InvalidArgument("word " + std::to_string(w) + " must be anchored by exactly one unit");
  }

  std::size_t root = n_units;
  for (std::size_t u = 0; u < n_units; ++u) {
    if (parents[u] > 1) throw InvalidArgument("unit '" + g.units[u] + "' has several primary parents");
    if (parents[u] == 0) {
      if (root != n_units) throw InvalidArgument("graph has more than one root");
      root = u;
    }
    if (anchor[u] && !children[u].empty())
      throw InvalidArgument("anchored unit '" + g.units[u] + "' has children");
    if (!anchor[u] && children[u].empty())
      throw InvalidArgument("unit '" + g.units[u] + "' has no children and no anchoring");
  }
  if (root == n_units) throw InvalidArgument("graph has no root");

  // Post-order percolation; `state` guards against cycles.
  std::vector<int> head(n_units, 0), leftmost(n_units, 0), state(n_units, 0);
  std::vector<std::size_t> head_child(n_units, n_units);
  std::function<void(std::size_t)> visit = [&](std::size_t u) {
    if (state[u] == 1) throw InvalidArgument("primary edges contain a cycle");
    if (state[u] == 2) return;
    state[u] = 1;
    if (anchor[u]) {
      head[u] = leftmost[u] = anchor[u];
    } else {
      const HierGraph::Edge* best = nullptr;
      leftmost[u] = n_words + 1;
      for (const auto* e : children[u]) {
        std::size_t c = unit_pos.at(e->child);
        visit(c);
        leftmost[u] = std::min(leftmost[u], leftmost[c]);
        if (!best) {
          best = e;
          continue;
        }
        std::size_t b = unit_pos.at(best->child);
        auto key_c = std::make_pair(rank.at(e->category), leftmost[c]);
        auto key_b = std::make_pair(rank.at(best->category), leftmost[b]);
        if (key_c < key_b) best = e;
      }
      head_child[u] = unit_pos.at(best->child);
      head[u] = head[head_child[u]];
    }
    state[u] = 2;
  };
  visit(root);
  for (std::size_t u = 0; u < n_units; ++u) {
    if (state[u] != 2) throw InvalidArgument("unit '" + g.units[u] + "' unreachable from the root");
  }

  SentenceGraph out;
  out.formalism = Formalism::UCCA_BILEXICAL;
  for (int w = 1; w <= n_words; ++w) out.tokens.push_back({w, g.tokens[static_cast<std::size_t>(w - 1)], {}, {}});
  for (std::size_t u = 0; u < n_units; ++u) {
    for (const auto* e : children[u]) {
      std::size_t c = unit_pos.at(e->child);
      if (c == head_child[u]) continue;
      out.edges.insert({head[u], head[c], e->category});
    }
  }
  if (options.keep_remote) {
    for (const auto& e : g.edges) {
      if (!e.remote) continue;
      int h = head[unit_pos.at(e.parent)];
      int d = head[unit_pos.at(e.child)];
      if (h == d) continue;
      out.edges.insert({h, d, e.category + "*remote"});
    }
  }
  return out;
}

const std::set<std::string>& content_upos_tags() {
  static const std::set<std::string> tags = {"ADJ", "ADV", "NOUN", "PROPN", "VERB", "X", "NUM"};
  return tags;
}

ContentFunctionSplit split_content_function(const std::vector<Token>& tokens) {
  ContentFunctionSplit out;
  for (const auto& t : tokens) {
    if (!t.upos) throw InvalidArgument("token " + std::to_string(t.index) + " ('" + t.form + "') has no UPOS tag");
    (content_upos_tags().count(*t.upos) ? out.content : out.function).insert(t.index);
  }
  return out;
}

std::string to_jsonl(const SentenceGraph& g) {
  json j;
  j["id"] = g.id;
  j["formalism"] = std::string(to_string(g.formalism));
  json tokens = json::array();
  for (const auto& t : g.tokens) {
    json tj = {{"index", t.index}, {"form", t.form}};
    if (t.upos) tj["upos"] = *t.upos;
    if (t.xpos) tj["xpos"] = *t.xpos;
    tokens.push_back(std::move(tj));
  }
  j["tokens"] = std::move(tokens);
  json edges = json::array();
  for (const auto& e : g.edges)
    edges.push_back({{"head", e.head}, {"dependent", e.dependent}, {"label", e.label}});
  j["edges"] = std::move(edges);
  j["tops"] = g.tops;
  return j.dump();
}

SentenceGraph from_jsonl(std::string_view line) {
  SentenceGraph g;
  try {
    json j = json::parse(line);
    g.id = j.value("id", "");
    g.formalism = formalism_from_string(j.value("formalism", "OTHER"));
    for (const auto& tj : j.at("tokens")) {
      Token t{tj.at("index").get<int>(), tj.at("form").get<std::string>(), {}, {}};
      if (tj.contains("upos")) t.upos = tj["upos"].get<std::string>();
      if (tj.contains("xpos")) t.xpos = tj["xpos"].get<std::string>();
      g.tokens.push_back(std::move(t));
    }
    for (const auto& ej : j.at("edges"))
      g.edges.insert({ej.at("head").get<int>(), ej.at("dependent").get<int>(), ej.at("label").get<std::string>()});
    if (j.contains("tops")) g.tops = j["tops"].get<std::vector<int>>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed sentence JSON: ") + e.what());
  }
  g.validate();
  return g;
}

std::string write_jsonl(const std::vector<SentenceGraph>& graphs) {
  std::string out;
  for (const auto& g : graphs) {
    out += to_jsonl(g);
    out += '\n';
  }
  return out;
}

std::vector<SentenceGraph> read_jsonl(std::string_view text) {
  std::vector<SentenceGraph> out;
  std::size_t number = 0;
  for (const auto& line : split(text, '\n')) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(from_jsonl(line));
    } catch (const Error& e) {
      throw ParseError(e.what(), number);
    }
  }
  return out;
}

}  // namespace neuroalign
