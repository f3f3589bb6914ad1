#include "neuroalign/repr.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"

namespace neuroalign {

// ---------------------------------------------------------------------------
// LabeledMatrix I/O

namespace {

constexpr std::string_view kReprMagic = "NALREPR1";

static_assert(std::endian::native == std::endian::little,
              "matrix I/O assumes a little-endian host");

}  // namespace

void LabeledMatrix::validate() const {
  if (static_cast<Eigen::Index>(labels.size()) != values.rows())
    throw InvalidArgument("matrix has " + std::to_string(values.rows()) + " rows but " +
                          std::to_string(labels.size()) + " labels");
  std::set<std::string> seen;
  for (const auto& l : labels)
    if (!seen.insert(l).second) throw InvalidArgument("duplicate row label '" + l + "'");
  if (!values.allFinite()) throw InvalidArgument("matrix contains non-finite entries");
}

LabeledMatrix LabeledMatrix::aligned_to(const std::vector<std::string>& order) const {
  std::unordered_map<std::string, Eigen::Index> index;
  for (std::size_t i = 0; i < labels.size(); ++i) index.emplace(labels[i], static_cast<Eigen::Index>(i));
  LabeledMatrix out;
  out.values.resize(static_cast<Eigen::Index>(order.size()), values.cols());
  out.labels = order;
  for (std::size_t i = 0; i < order.size(); ++i) {
    auto it = index.find(order[i]);
    if (it == index.end()) throw InvalidArgument("label '" + order[i] + "' missing from matrix");
    out.values.row(static_cast<Eigen::Index>(i)) = values.row(it->second);
  }
  return out;
}

std::string encode_matrix(const LabeledMatrix& m) {
  m.validate();
  nlohmann::json header = {{"n", m.rows()}, {"d", m.cols()}, {"labels", m.labels}};
  const std::string text = header.dump();
  std::string out(kReprMagic);
  const std::uint64_t len = text.size();
  out.append(reinterpret_cast<const char*>(&len), 8);
  out += text;
  out.reserve(out.size() + static_cast<std::size_t>(m.values.size()) * 4);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const float f = static_cast<float>(m.values(r, c));
      out.append(reinterpret_cast<const char*>(&f), 4);
    }
  }
  return out;
}

LabeledMatrix decode_matrix(std::string_view bytes) {
  if (bytes.size() < kReprMagic.size() + 8 || bytes.substr(0, kReprMagic.size()) != kReprMagic)
    throw ParseError("not a representation matrix file");
  std::uint64_t len = 0;
  std::memcpy(&len, bytes.data() + kReprMagic.size(), 8);
  std::size_t offset = kReprMagic.size() + 8;
  if (len > bytes.size() - offset) throw ParseError("truncated matrix header");
  LabeledMatrix m;
  Eigen::Index n = 0, d = 0;
  try {
    auto header = nlohmann::json::parse(bytes.substr(offset, len));
    n = header.at("n").get<Eigen::Index>();
    d = header.at("d").get<Eigen::Index>();
    m.labels = header.at("labels").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("bad matrix header: ") + e.what());
  }
  offset += len;
  if (bytes.size() - offset != static_cast<std::size_t>(n * d) * 4)
    throw ParseError("matrix payload size does not match its header");
  m.values.resize(n, d);
  for (Eigen::Index r = 0; r < n; ++r) {
    for (Eigen::Index c = 0; c < d; ++c) {
      float f;
      std::memcpy(&f, bytes.data() + offset, 4);
      m.values(r, c) = f;
      offset += 4;
    }
  }
  m.validate();
  return m;
}

std::string matrix_to_csv(const LabeledMatrix& m) {
  m.validate();
  std::string out = "label";
  for (Eigen::Index c = 0; c < m.cols(); ++c) out += ",d" + std::to_string(c);
  out += "\r\n";
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    out += csv_field(m.labels[static_cast<std::size_t>(r)]);
    for (Eigen::Index c = 0; c < m.cols(); ++c) out += "," + format_double(m.values(r, c));
    out += "\r\n";
  }
  return out;
}

namespace {

// Minimal RFC-4180 record reader (quoted fields, doubled quotes).
std::vector<std::vector<std::string>> read_csv(std::string_view text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false, any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    char ch = text[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += ch;
      }
      continue;
    }
    if (ch == '"') {
      quoted = true;
      any = true;
    } else if (ch == ',') {
      row.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (ch == '\n' || ch == '\r') {
      if (ch == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      if (any || !field.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
      }
      row.clear();
      field.clear();
      any = false;
    } else {
      field += ch;
      any = true;
    }
  }
  if (quoted) throw ParseError("unterminated quoted CSV field");
  if (any || !field.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

LabeledMatrix matrix_from_csv(std::string_view text) {
  auto rows = read_csv(text);
  if (rows.empty()) throw ParseError("empty CSV matrix");
  const std::size_t width = rows[0].size();
  if (width < 2) throw ParseError("CSV matrix needs a label column and at least one value column", 1);
  LabeledMatrix m;
  m.values.resize(static_cast<Eigen::Index>(rows.size() - 1), static_cast<Eigen::Index>(width - 1));
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() != width)
      throw ParseError("expected " + std::to_string(width) + " fields", r + 1);
    m.labels.push_back(rows[r][0]);
    for (std::size_t c = 1; c < width; ++c) {
      try {
        std::size_t used = 0;
        double v = std::stod(rows[r][c], &used);
        if (used != rows[r][c].size()) throw std::invalid_argument("trailing");
        m.values(static_cast<Eigen::Index>(r - 1), static_cast<Eigen::Index>(c - 1)) = v;
      } catch (const std::logic_error&) {
        throw ParseError("non-numeric value '" + rows[r][c] + "'", r + 1);
      }
    }
  }
  m.validate();
  return m;
}

void save_matrix(const std::filesystem::path& path, const LabeledMatrix& m) {
  write_file_atomic(path, path.extension() == ".csv" ? matrix_to_csv(m) : encode_matrix(m));
}

LabeledMatrix load_matrix(const std::filesystem::path& path) {
  const std::string data = read_file(path);
  return path.extension() == ".csv" ? matrix_from_csv(data) : decode_matrix(data);
}

// ---------------------------------------------------------------------------
// Pooling

Vector sentence_repr(const ForwardTrace& trace) {
  std::vector<std::size_t> real;
  for (std::size_t p = 0; p < trace.length(); ++p)
    if (trace.pad_mask[p]) real.push_back(p);
  if (real.size() < 3) throw InvalidArgument("sentence has no wordpieces between [CLS] and [SEP]");
  const Matrix& h = trace.final_hidden();
  Vector sum = Vector::Zero(h.cols());
  for (std::size_t i = 1; i + 1 < real.size(); ++i) sum += h.row(static_cast<Eigen::Index>(real[i])).transpose();
  return sum / static_cast<double>(real.size() - 2);
}

Vector word_repr(const ForwardTrace& trace, const PieceAlignment& alignment, int word_index) {
  const Span& s = alignment.span(word_index);
  if (s.end > trace.length()) throw InvalidArgument("alignment does not match the trace");
  const Matrix& h = trace.final_hidden();
  Vector sum = Vector::Zero(h.cols());
  for (std::size_t p = s.begin; p < s.end; ++p) sum += h.row(static_cast<Eigen::Index>(p)).transpose();
  return sum / static_cast<double>(s.size());
}

ReprMatrix extract_sentence_reprs(const TransformerParams& params, const ModelConfig& config,
                                  const Vocab& vocab, const std::vector<Stimulus>& stimuli, unsigned jobs) {
  ReprMatrix out;
  out.values.resize(static_cast<Eigen::Index>(stimuli.size()), config.d_model);
  for (const auto& s : stimuli) out.labels.push_back(s.label);
  parallel_for(stimuli.size(), jobs, [&](std::size_t i) {
    auto a = tokenize_sentence(stimuli[i].words, vocab);
    auto trace = forward(a.ids, {}, params, config);
    out.values.row(static_cast<Eigen::Index>(i)) = sentence_repr(trace).transpose();
  });
  out.validate();
  return out;
}

ReprMatrix extract_word_reprs(const TransformerParams& params, const ModelConfig& config,
                              const Vocab& vocab, const std::vector<Stimulus>& stimuli, unsigned jobs) {
  std::vector<std::size_t> offsets(stimuli.size() + 1, 0);
  for (std::size_t i = 0; i < stimuli.size(); ++i) offsets[i + 1] = offsets[i] + stimuli[i].words.size();
  ReprMatrix out;
  out.values.resize(static_cast<Eigen::Index>(offsets.back()), config.d_model);
  out.labels.resize(offsets.back());
  parallel_for(stimuli.size(), jobs, [&](std::size_t i) {
    auto a = tokenize_sentence(stimuli[i].words, vocab);
    auto trace = forward(a.ids, {}, params, config);
    for (std::size_t w = 0; w < stimuli[i].words.size(); ++w) {
      const std::size_t row = offsets[i] + w;
      out.values.row(static_cast<Eigen::Index>(row)) = word_repr(trace, a, static_cast<int>(w + 1)).transpose();
      out.labels[row] = stimuli[i].label + ":" + std::to_string(w + 1);
    }
  });
  out.validate();
  return out;
}

// ---------------------------------------------------------------------------
// Hubness

DistanceMetric metric_from_string(std::string_view s) {
  if (s == "cosine") return DistanceMetric::Cosine;
  if (s == "euclidean") return DistanceMetric::Euclidean;
  throw InvalidArgument("unknown distance metric '" + std::string(s) + "'");
}

std::string_view to_string(DistanceMetric m) {
  return m == DistanceMetric::Cosine ? "cosine" : "euclidean";
}

std::vector<int> k_occurrence(const ReprMatrix& reps, int k, DistanceMetric metric) {
  const Eigen::Index n = reps.rows();
  if (k < 1 || n <= k) throw InvalidArgument("k-occurrence needs n > k >= 1");
  Matrix x = reps.values;
  if (metric == DistanceMetric::Cosine) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double norm = x.row(i).norm();
      if (norm == 0.0) throw InvalidArgument("cosine distance undefined for a zero vector");
      x.row(i) /= norm;
    }
  }
  std::vector<int> occ(static_cast<std::size_t>(n), 0);
  std::vector<std::pair<double, Eigen::Index>> dist;
  for (Eigen::Index i = 0; i < n; ++i) {
    dist.clear();
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      const double dv = metric == DistanceMetric::Cosine ? 1.0 - x.row(i).dot(x.row(j))
                                                         : (x.row(i) - x.row(j)).squaredNorm();
      dist.emplace_back(dv, j);
    }
    std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
    for (int r = 0; r < k; ++r) ++occ[static_cast<std::size_t>(dist[static_cast<std::size_t>(r)].second)];
  }
  return occ;
}

double robin_hood_index(const ReprMatrix& reps, int k, DistanceMetric metric) {
  const auto occ = k_occurrence(reps, k, metric);
  long excess = 0, total = 0;
  for (int o : occ) {
    excess += std::max(0, o - k);
    total += o;
  }
  return static_cast<double>(excess) / static_cast<double>(total);
}

SelectionResult select_model(const std::vector<ReprMatrix>& candidates, int k, DistanceMetric metric) {
  if (candidates.empty()) throw InvalidArgument("no candidate models to select from");
  SelectionResult out;
  for (const auto& c : candidates) out.scores.push_back(robin_hood_index(c, k, metric));
  out.index = static_cast<std::size_t>(std::min_element(out.scores.begin(), out.scores.end()) - out.scores.begin());
  return out;
}

// ---------------------------------------------------------------------------
// Pseudo-perplexity

std::vector<double> word_pseudo_perplexities(const TransformerParams& params, const ModelConfig& config,
                                             const Vocab& vocab,
                                             const std::vector<std::vector<std::string>>& sentences,
                                             unsigned jobs) {
  std::vector<std::vector<double>> per_sentence(sentences.size());
  parallel_for(sentences.size(), jobs, [&](std::size_t i) {
    auto a = tokenize_sentence(sentences[i], vocab);
    for (const auto& span : a.word_spans) {
      std::vector<PieceId> ids = a.ids;
      for (std::size_t p = span.begin; p < span.end; ++p) ids[p] = Vocab::kMask;
      auto trace = forward(ids, {}, params, config);
      double logp = 0.0;
      for (std::size_t p = span.begin; p < span.end; ++p)
        logp += log_softmax(trace.logits.row(static_cast<Eigen::Index>(p)))(a.ids[p]);
      per_sentence[i].push_back(std::exp(-logp / static_cast<double>(span.size())));
    }
  });
  std::vector<double> out;
  for (auto& s : per_sentence) out.insert(out.end(), s.begin(), s.end());
  return out;
}

double pseudo_perplexity(const TransformerParams& params, const ModelConfig& config, const Vocab& vocab,
                         const std::vector<std::vector<std::string>>& sentences, unsigned jobs) {
  auto scores = word_pseudo_perplexities(params, config, vocab, sentences, jobs);
  if (scores.empty()) throw InvalidArgument("pseudo-perplexity needs at least one word");
  return std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(scores.size());
}

}  // namespace neuroalign
