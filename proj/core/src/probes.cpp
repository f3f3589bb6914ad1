#include "neuroalign/probes.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <set>

#include "neuroalign/util.hpp"

namespace neuroalign {

using Eigen::MatrixXd;
using Eigen::VectorXd;

std::vector<std::string> MinimalPair::sentence(bool grammatical) const {
  std::vector<std::string> out = prefix;
  out.push_back(grammatical ? good : bad);
  out.insert(out.end(), suffix.begin(), suffix.end());
  return out;
}

namespace {

std::vector<std::string> tsv_lines(std::string_view tsv) {
  std::vector<std::string> out;
  for (auto& line : split(tsv, '\n')) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    out.push_back(std::move(line));
  }
  return out;
}

std::string join_words(const std::vector<std::string>& words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) out += (i ? " " : "") + words[i];
  return out;
}

}  // namespace

std::vector<MinimalPair> parse_minimal_pairs(std::string_view tsv) {
  std::vector<MinimalPair> out;
  const auto lines = tsv_lines(tsv);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto& line = lines[i];
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    auto cols = split(line, '\t');
    if (i == 0 && cols[0] == "category") continue;
    if (cols.size() != 5) throw ParseError("expected 5 tab-separated columns", i + 1);
    MinimalPair p{cols[0], split_whitespace(cols[1]), cols[2], cols[3], split_whitespace(cols[4])};
    if (p.good.empty() || p.bad.empty()) throw ParseError("empty target word", i + 1);
    if (p.good == p.bad) throw ParseError("grammatical and ungrammatical targets are identical", i + 1);
    out.push_back(std::move(p));
  }
  return out;
}

std::string write_minimal_pairs(const std::vector<MinimalPair>& pairs) {
  std::string out = "category\tprefix\tgood_target\tbad_target\tsuffix\n";
  for (const auto& p : pairs)
    out += p.category + "\t" + join_words(p.prefix) + "\t" + p.good + "\t" + p.bad + "\t" + join_words(p.suffix) + "\n";
  return out;
}

double target_logprob(const ForwardTrace& trace, const Span& span, const std::vector<PieceId>& pieces) {
  if (span.size() != pieces.size()) throw InvalidArgument("span and piece count differ");
  double sum = 0.0;
  for (std::size_t k = 0; k < pieces.size(); ++k)
    sum += log_softmax(trace.logits.row(static_cast<Eigen::Index>(span.begin + k)))(pieces[k]);
  return sum;
}

PairScore compare_targets(double logp_good, double logp_bad) {
  PairScore s;
  s.scored = true;
  s.margin = logp_good - logp_bad;
  s.correct = logp_good > logp_bad;
  return s;
}

PairScore score_minimal_pair(const TransformerParams& params, const ModelConfig& config,
                             const Vocab& vocab, const MinimalPair& pair) {
  PairScore skip;
  const auto good = tokenize_word(pair.good, vocab);
  const auto bad = tokenize_word(pair.bad, vocab);
  if (good == std::vector<PieceId>{Vocab::kUnk} || bad == std::vector<PieceId>{Vocab::kUnk}) {
    skip.skip_reason = "untokenizable target";
    return skip;
  }
  if (good.size() != bad.size()) {
    skip.skip_reason = "target piece counts differ";
    return skip;
  }
  auto alignment = tokenize_sentence(pair.sentence(true), vocab);
  if (alignment.length() > static_cast<std::size_t>(config.max_len)) {
    skip.skip_reason = "sentence longer than max_len";
    return skip;
  }
  const Span span = alignment.span(static_cast<int>(pair.prefix.size()) + 1);
  std::vector<PieceId> ids = alignment.ids;
  for (std::size_t p = span.begin; p < span.end; ++p) ids[p] = Vocab::kMask;
  const auto trace = forward(ids, {}, params, config);
  return compare_targets(target_logprob(trace, span, good), target_logprob(trace, span, bad));
}

std::map<std::string, CategoryAccuracy> summarize_pairs(const std::vector<MinimalPair>& pairs,
                                                        const std::vector<PairScore>& scores) {
  if (pairs.size() != scores.size()) throw InvalidArgument("pair and score counts differ");
  std::map<std::string, CategoryAccuracy> out;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    auto& c = out[pairs[i].category];
    ++c.total;
    if (!scores[i].scored) {
      ++c.skipped;
      continue;
    }
    ++c.scored;
    if (scores[i].correct) ++c.correct;
  }
  return out;
}

std::vector<TagInstance> parse_tag_dataset(std::string_view tsv) {
  std::vector<TagInstance> out;
  const auto lines = tsv_lines(tsv);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto& line = lines[i];
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    auto cols = split(line, '\t');
    if (i == 0 && cols[0] == "sentence_id") continue;
    if (cols.size() != 3) throw ParseError("expected 3 tab-separated columns", i + 1);
    TagInstance t{cols[0], 0, cols[2]};
    auto res = std::from_chars(cols[1].data(), cols[1].data() + cols[1].size(), t.word_index);
    if (res.ec != std::errc() || res.ptr != cols[1].data() + cols[1].size() || t.word_index < 1)
      throw ParseError("word_index must be a positive integer", i + 1);
    if (t.tag.empty()) throw ParseError("empty tag", i + 1);
    out.push_back(std::move(t));
  }
  return out;
}

MatrixXd LinearProbe::probabilities(const MatrixXd& x) const {
  MatrixXd z = x * weights;
  z.rowwise() += bias.transpose();
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    const double m = z.row(r).maxCoeff();
    z.row(r) = (z.row(r).array() - m).exp();
    z.row(r) /= z.row(r).sum();
  }
  return z;
}

std::vector<std::string> LinearProbe::predict(const MatrixXd& x) const {
  const MatrixXd p = probabilities(x);
  std::vector<std::string> out;
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    Eigen::Index arg = 0;
    p.row(r).maxCoeff(&arg);
    out.push_back(classes[static_cast<std::size_t>(arg)]);
  }
  return out;
}

namespace {

MatrixXd one_hot(const std::vector<std::string>& labels, const std::vector<std::string>& classes) {
  MatrixXd y = MatrixXd::Zero(static_cast<Eigen::Index>(labels.size()), static_cast<Eigen::Index>(classes.size()));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto it = std::lower_bound(classes.begin(), classes.end(), labels[i]);
    if (it == classes.end() || *it != labels[i]) throw InvalidArgument("label '" + labels[i] + "' unknown to the probe");
    y(static_cast<Eigen::Index>(i), it - classes.begin()) = 1.0;
  }
  return y;
}

double objective(const MatrixXd& x, const MatrixXd& y, const MatrixXd& w, const VectorXd& b, double l2) {
  MatrixXd z = x * w;
  z.rowwise() += b.transpose();
  double loss = 0.0;
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    const double m = z.row(r).maxCoeff();
    const double lse = m + std::log((z.row(r).array() - m).exp().sum());
    loss += lse - z.row(r).dot(y.row(r));
  }
  return loss / static_cast<double>(x.rows()) + 0.5 * l2 * w.squaredNorm();
}

}  // namespace

double probe_objective(const LinearProbe& probe, const MatrixXd& features, const std::vector<std::string>& labels) {
  return objective(features, one_hot(labels, probe.classes), probe.weights, probe.bias, probe.l2);
}

LinearProbe train_linear_probe(const MatrixXd& x, const std::vector<std::string>& labels, double l2,
                               const ProbeOptions& options) {
  if (static_cast<Eigen::Index>(labels.size()) != x.rows()) throw InvalidArgument("feature and label counts differ");
  if (!(l2 >= 0.0)) throw InvalidArgument("l2 strength must be non-negative");
  std::set<std::string> distinct(labels.begin(), labels.end());
  if (distinct.size() < 2) throw InvalidArgument("probe training needs at least two classes");

  LinearProbe probe;
  probe.classes.assign(distinct.begin(), distinct.end());
  probe.l2 = l2;
  const auto C = static_cast<Eigen::Index>(probe.classes.size());
  probe.weights = MatrixXd::Zero(x.cols(), C);
  probe.bias = VectorXd::Zero(C);
  const MatrixXd y = one_hot(labels, probe.classes);
  const double n = static_cast<double>(x.rows());

  double f = objective(x, y, probe.weights, probe.bias, l2);
  probe.loss_history.push_back(f);
  double step = 1.0;
  for (int epoch = 0; epoch < options.max_epochs; ++epoch) {
    const MatrixXd resid = probe.probabilities(x) - y;
    const MatrixXd gw = x.transpose() * resid / n + l2 * probe.weights;
    const VectorXd gb = resid.colwise().sum().transpose() / n;
    const double g2 = gw.squaredNorm() + gb.squaredNorm();
    probe.grad_norm = std::sqrt(g2);
    if (probe.grad_norm < options.grad_tol) break;

    // Armijo backtracking; the accepted step never raises the objective.
    step = std::min(step * 2.0, 1e6);
    MatrixXd w_new;
    VectorXd b_new;
    double f_new = f;
    bool accepted = false;
    for (int tries = 0; tries < 60; ++tries) {
      w_new = probe.weights - step * gw;
      b_new = probe.bias - step * gb;
      f_new = objective(x, y, w_new, b_new, l2);
      if (f_new <= f - 1e-4 * step * g2) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    probe.weights = std::move(w_new);
    probe.bias = std::move(b_new);
    f = f_new;
    probe.loss_history.push_back(f);
    probe.epochs = epoch + 1;
  }
  return probe;
}

ProbeEvaluation evaluate_predictions(const std::vector<std::string>& predicted, const std::vector<std::string>& gold,
                                     const std::vector<std::string>& classes) {
  if (predicted.size() != gold.size()) throw InvalidArgument("prediction and gold counts differ");
  if (gold.empty()) throw InvalidArgument("empty test set");
  std::set<std::string> all(classes.begin(), classes.end());
  all.insert(gold.begin(), gold.end());
  all.insert(predicted.begin(), predicted.end());

  ProbeEvaluation out;
  std::map<std::string, std::size_t> tp, fp, fn;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (predicted[i] == gold[i]) {
      ++tp[gold[i]];
      ++correct;
    } else {
      ++fp[predicted[i]];
      ++fn[gold[i]];
    }
  }
  double f1_sum = 0.0;
  std::size_t f1_count = 0;
  for (const auto& c : all) {
    ClassMetrics m;
    const double t = static_cast<double>(tp[c]);
    const double p_den = t + static_cast<double>(fp[c]);
    const double r_den = t + static_cast<double>(fn[c]);
    m.support = tp[c] + fn[c];
    m.precision = p_den > 0 ? t / p_den : 0.0;
    m.recall = r_den > 0 ? t / r_den : 0.0;
    m.f1 = (m.precision + m.recall) > 0 ? 2 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
    if (p_den > 0 || r_den > 0) {
      f1_sum += m.f1;
      ++f1_count;
    }
    out.per_class[c] = m;
  }
  out.macro_f1 = f1_count ? f1_sum / static_cast<double>(f1_count) : 0.0;
  out.accuracy = static_cast<double>(correct) / static_cast<double>(gold.size());
  return out;
}

ProbeEvaluation evaluate_probe(const LinearProbe& probe, const MatrixXd& features, const std::vector<std::string>& labels) {
  return evaluate_predictions(probe.predict(features), labels, probe.classes);
}

}  // namespace neuroalign
