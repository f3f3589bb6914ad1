#include "cli.hpp"

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <ostream>
#include <set>

#include "CLI11.hpp"
#include "json.hpp"
#include "neuroalign/decode.hpp"
#include "neuroalign/probes.hpp"
#include "neuroalign/stats.hpp"
#include "neuroalign/synth.hpp"
#include "neuroalign/train.hpp"

namespace neuroalign::cli {

namespace fs = std::filesystem;
using nlohmann::json;

std::optional<std::uint64_t> seed_from_env() {
  const char* v = std::getenv("NEUROALIGN_SEED");
  if (!v || !*v) return std::nullopt;
  std::uint64_t seed = 0;
  const std::string_view s(v);
  auto res = std::from_chars(s.data(), s.data() + s.size(), seed);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw ValidationError("NEUROALIGN_SEED is not a non-negative integer: " + std::string(s));
  return seed;
}

std::string infer_format(const fs::path& path) {
  const std::string ext = to_lower_ascii(path.extension().string());
  if (ext == ".conllu" || ext == ".conll") return "conllu";
  if (ext == ".sdp") return "sdp";
  if (ext == ".json") return "hier-json";
  if (ext == ".jsonl") return "jsonl";
  throw ValidationError("unsupported corpus extension '" + ext + "' (expected .conllu, .sdp, .json or .jsonl)");
}

std::vector<SentenceGraph> load_corpus(const fs::path& path, const std::string& format, bool keep_remote) {
  const std::string text = read_file(path);
  try {
    if (format == "conllu") return parse_conllu(text);
    if (format == "sdp") return parse_sdp(text);
    if (format == "jsonl") return read_jsonl(text);
    if (format == "hier-json") {
      std::vector<SentenceGraph> out;
      if (text.find_first_not_of(" \t\r\n") == std::string::npos) return out;
      const json j = json::parse(text);
      std::vector<std::string> docs;
      if (j.is_array())
        for (const auto& e : j) docs.push_back(e.dump());
      else
        docs.push_back(j.dump());
      for (std::size_t i = 0; i < docs.size(); ++i) {
        auto g = bilexical_approximate(parse_hier_json(docs[i]), default_ucca_priority(), {keep_remote});
        if (g.id.empty()) g.id = std::to_string(i + 1);
        out.push_back(std::move(g));
      }
      return out;
    }
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ":" + std::to_string(e.line()) + ": " + e.what(), e.line());
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  throw ValidationError("unsupported format '" + format + "'");
}

IngestSummary summarize_corpus(const std::vector<SentenceGraph>& graphs) {
  IngestSummary s;
  s.sentences = graphs.size();
  for (const auto& g : graphs)
    for (const auto& e : g.edges) {
      ++s.edges;
      ++s.labels[e.label];
    }
  return s;
}

std::string IngestSummary::to_json() const {
  return json{{"sentences", sentences}, {"edges", edges}, {"labels", labels}}.dump(2);
}

namespace {

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  for (const auto& part : split(s, ',')) {
    if (part.empty()) continue;
    int v = 0;
    auto res = std::from_chars(part.data(), part.data() + part.size(), v);
    if (res.ec != std::errc() || res.ptr != part.data() + part.size())
      throw ValidationError("not an integer list: " + s);
    out.push_back(v);
  }
  return out;
}

std::vector<double> parse_double_list(const std::string& s) {
  std::vector<double> out;
  for (const auto& part : split(s, ',')) {
    if (part.empty()) continue;
    try {
      std::size_t used = 0;
      out.push_back(std::stod(part, &used));
      if (used != part.size()) throw std::invalid_argument(part);
    } catch (const std::exception&) {
      throw ValidationError("not a number list: " + s);
    }
  }
  return out;
}

void require_file(const std::string& p, const char* what) {
  if (!fs::exists(p)) throw ValidationError(std::string(what) + " does not exist: " + p);
}

/// Stimulus file: "label<TAB>sentence" per line.
std::vector<Stimulus> load_stimuli(const fs::path& path) {
  std::vector<Stimulus> out;
  std::size_t line_no = 0;
  for (auto& line : split(read_file(path), '\n')) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw ParseError(path.string() + ": expected label<TAB>sentence", line_no);
    out.push_back({line.substr(0, tab), split_whitespace(line.substr(tab + 1))});
  }
  return out;
}

Checkpoint load_model(const std::string& ckpt, const Vocab& vocab) {
  require_file(ckpt, "checkpoint");
  auto c = load_checkpoint(ckpt);
  if (!c.meta.vocab_hash.empty() && c.meta.vocab_hash != hex64(vocab.hash()))
    throw ValidationError("checkpoint was trained with a different vocabulary");
  return c;
}

Vocab load_vocab(const std::string& p) {
  require_file(p, "vocabulary");
  return Vocab::load(read_file(p));
}

/// Pearson column of a decode scores CSV, keyed by label.
std::map<std::string, double> load_scores(const std::string& p) {
  require_file(p, "scores file");
  const auto m = read_file(p);
  std::map<std::string, double> out;
  std::size_t line_no = 0;
  for (auto& line : split(m, '\n')) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line_no == 1) continue;
    // Labels may be quoted; the last three fields are numeric.
    const auto c3 = line.rfind(',');
    const auto c2 = line.rfind(',', c3 - 1);
    const auto c1 = line.rfind(',', c2 - 1);
    if (c1 == std::string::npos || c2 == std::string::npos || c3 == std::string::npos)
      throw ParseError(p + ": expected label,fold,pearson,rank", line_no);
    std::string label = line.substr(0, c1);
    if (label.size() >= 2 && label.front() == '"') {
      label = label.substr(1, label.size() - 2);
      std::string unq;
      for (std::size_t i = 0; i < label.size(); ++i) {
        unq += label[i];
        if (label[i] == '"' && i + 1 < label.size() && label[i + 1] == '"') ++i;
      }
      label = unq;
    }
    const std::string r = line.substr(c2 + 1, c3 - c2 - 1);
    out[label] = r.empty() ? std::nan("") : std::stod(r);
  }
  return out;
}

struct Context {
  std::ostream& out;
  std::ostream& err;
};

std::uint64_t effective_seed(const CLI::Option* flag, std::uint64_t value) {
  if (flag && flag->count() > 0) return value;
  if (auto env = seed_from_env()) return *env;
  return value;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Guided-attention transformer training and brain-decoding evaluation", "neuroalign"};
  app.require_subcommand(1);
  unsigned jobs = 1;
  app.add_option("--jobs", jobs, "Worker thread cap")->check(CLI::PositiveNumber);

  std::function<void()> action;

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Normalize a corpus to SentenceGraph JSONL");
  std::string in_path, in_format, in_out;
  bool drop_remote = false;
  ingest->add_option("input", in_path, "conllu, sdp, hier-json or jsonl file")->required();
  ingest->add_option("--format", in_format, "Override the format inferred from the extension");
  ingest->add_option("--out", in_out, "Output JSONL");
  ingest->add_flag("--drop-remote", drop_remote, "Drop remote edges of hierarchical graphs");
  ingest->callback([&] {
    action = [&] {
      const std::string fmt = in_format.empty() ? infer_format(in_path) : in_format;
      if (fmt != "conllu" && fmt != "sdp" && fmt != "hier-json" && fmt != "jsonl")
        throw ValidationError("unsupported format '" + fmt + "'");
      require_file(in_path, "input");
      const auto graphs = load_corpus(in_path, fmt, !drop_remote);
      if (!in_out.empty()) write_file_atomic(in_out, write_jsonl(graphs));
      out << summarize_corpus(graphs).to_json() << "\n";
    };
  });

  // vocab
  auto* vocab_cmd = app.add_subcommand("vocab", "Build a wordpiece vocabulary");
  std::string v_corpus, v_out;
  std::size_t v_size = 160;
  vocab_cmd->add_option("--corpus", v_corpus)->required();
  vocab_cmd->add_option("--size", v_size, "Target vocabulary size");
  vocab_cmd->add_option("--out", v_out)->required();
  vocab_cmd->callback([&] {
    action = [&] {
      require_file(v_corpus, "corpus");
      std::vector<std::vector<std::string>> sents;
      for (const auto& g : load_corpus(v_corpus, infer_format(v_corpus))) sents.push_back(g.words());
      const Vocab v = build_vocab(sents, v_size);
      write_file_atomic(v_out, v.save());
      out << json{{"size", v.size()}, {"hash", hex64(v.hash())}}.dump() << "\n";
    };
  });

  // shared model / train flags
  ModelConfig mc = PipelineConfig::default_model();
  TrainConfig tc;
  std::string t_corpus, t_vocab, t_init, t_out, t_formalism = "ud";
  std::uint64_t t_seed = 0;
  auto add_train_flags = [&](CLI::App* c) {
    c->add_option("--corpus", t_corpus)->required();
    c->add_option("--vocab", t_vocab)->required();
    c->add_option("--formalism", t_formalism, "ud, dm or ucca (recorded in the manifest)");
    c->add_option("--init", t_init, "Start from this checkpoint");
    c->add_option("--steps", tc.steps)->check(CLI::PositiveNumber);
    c->add_option("--batch-size", tc.batch_size)->check(CLI::PositiveNumber);
    c->add_option("--lr", tc.lr);
    c->add_option("--n-layers", mc.n_layers);
    c->add_option("--n-heads", mc.n_heads);
    c->add_option("--d-model", mc.d_model);
    c->add_option("--d-ff", mc.d_ff);
    c->add_option("--max-len", mc.max_len);
    c->add_option("--dropout", mc.dropout);
    return c->add_option("--seed", t_seed);
  };
  auto prepare = [&](Vocab& vocab, PreparedCorpus& prepared, std::optional<TransformerParams>& init) {
    require_file(t_corpus, "corpus");
    vocab = load_vocab(t_vocab);
    mc.vocab_size = static_cast<int>(vocab.size());
    if (!t_init.empty()) {
      auto c = load_model(t_init, vocab);
      mc = c.config;
      init = std::move(c.params);
    }
    mc.validate();
    prepared = prepare_corpus(load_corpus(t_corpus, infer_format(t_corpus)), vocab, mc.max_len);
    if (prepared.examples.empty()) throw ValidationError("no sentence of the corpus fits max_len");
  };

  // train
  auto* train = app.add_subcommand("train", "Train one model (MLM, optionally guided)");
  int g_layers = 0;
  std::string g_heads;
  double g_alpha = 0.1;
  auto* train_seed = add_train_flags(train);
  train->add_option("--layers", g_layers, "Number of top layers to supervise (0 = unguided)");
  train->add_option("--heads", g_heads, "Comma-separated head indices");
  train->add_option("--alpha", g_alpha);
  train->add_option("--out", t_out, "Checkpoint path")->required();
  train->callback([&] {
    action = [&] {
      Vocab vocab;
      PreparedCorpus prepared;
      std::optional<TransformerParams> init;
      prepare(vocab, prepared, init);
      tc.seed = effective_seed(train_seed, t_seed);
      tc.jobs = jobs;
      if (g_layers > 0) {
        GuidanceSpec g;
        g.layers = g_layers;
        g.heads = parse_int_list(g_heads);
        g.alpha = g_alpha;
        g.validate(mc);
        tc.guidance = g;
      }
      tc.validate();
      auto result = train_mlm(prepared.examples, mc, tc, init ? &*init : nullptr);
      save_checkpoint(t_out, result.params, mc, {hex64(vocab.hash()), tc.steps});
      RunManifest m;
      m.setting = {g_layers, tc.guidance ? tc.guidance->heads : std::vector<int>{}, g_alpha};
      m.seed = tc.seed;
      m.steps = tc.steps;
      m.final_losses = result.final_losses();
      m.checkpoint = fs::path(t_out).filename().string();
      m.corpus_hash = hex64(fnv1a(read_file(t_corpus)));
      json j = json::parse(m.to_json());
      j["formalism"] = t_formalism;
      write_file_atomic(fs::path(t_out).replace_extension(".json"), j.dump(2) + "\n");
      out << j.dump(2) << "\n";
    };
  });

  // grid
  auto* grid = app.add_subcommand("grid", "Train a grid of guided settings");
  std::string gr_layers = "1,2", gr_counts = "1,2", gr_order = "0,1,2,3", gr_out;
  int gr_runs = 2;
  bool gr_plan_only = false;
  auto* grid_seed = add_train_flags(grid);
  grid->add_option("--layer-counts", gr_layers);
  grid->add_option("--head-counts", gr_counts);
  grid->add_option("--head-order", gr_order);
  grid->add_option("--runs", gr_runs)->check(CLI::PositiveNumber);
  grid->add_option("--alpha", g_alpha);
  grid->add_flag("--plan-only", gr_plan_only, "Print the plan summary and exit");
  grid->add_option("--out-dir", gr_out)->required();
  grid->callback([&] {
    action = [&] {
      GridSpec spec;
      spec.layer_counts = parse_int_list(gr_layers);
      spec.head_sets = prefix_head_sets(parse_int_list(gr_counts), parse_int_list(gr_order));
      spec.runs_per_setting = gr_runs;
      spec.alpha = g_alpha;
      spec.validate();
      const auto plan = plan_grid(spec);
      out << json{{"settings", plan.size()}, {"runs_per_setting", gr_runs}, {"runs", plan.size() * gr_runs}}.dump()
          << "\n";
      if (gr_plan_only) return;
      Vocab vocab;
      PreparedCorpus prepared;
      std::optional<TransformerParams> init;
      prepare(vocab, prepared, init);
      GridContext ctx;
      ctx.examples = &prepared.examples;
      ctx.model = mc;
      ctx.train = tc;
      ctx.train.seed = effective_seed(grid_seed, t_seed);
      ctx.initial = init ? &*init : nullptr;
      ctx.out_dir = gr_out;
      ctx.corpus_hash = hex64(fnv1a(read_file(t_corpus)));
      ctx.vocab_hash = hex64(vocab.hash());
      ctx.jobs = jobs;
      std::size_t failed = 0;
      for (const auto& m : run_grid(spec, ctx)) {
        if (m.status != "ok") ++failed;
        out << m.setting.name() << "_run" << m.run << " " << m.status << "\n";
      }
      if (failed) throw StageError("grid", std::to_string(failed) + " run(s) failed");
    };
  });

  // extract
  auto* extract = app.add_subcommand("extract", "Extract stimulus representations");
  std::string x_ckpt, x_vocab, x_stim, x_level = "sentence", x_out;
  extract->add_option("--checkpoint", x_ckpt)->required();
  extract->add_option("--vocab", x_vocab)->required();
  extract->add_option("--stimuli", x_stim, "TSV: label<TAB>sentence")->required();
  extract->add_option("--level", x_level)->check(CLI::IsMember({"sentence", "word"}));
  extract->add_option("--out", x_out, ".bin or .csv")->required();
  extract->callback([&] {
    action = [&] {
      const Vocab vocab = load_vocab(x_vocab);
      const auto ck = load_model(x_ckpt, vocab);
      require_file(x_stim, "stimuli");
      const auto stimuli = load_stimuli(x_stim);
      const auto reps = x_level == "word" ? extract_word_reprs(ck.params, ck.config, vocab, stimuli, jobs)
                                          : extract_sentence_reprs(ck.params, ck.config, vocab, stimuli, jobs);
      save_matrix(x_out, reps);
      out << json{{"rows", reps.rows()}, {"dim", reps.cols()}}.dump() << "\n";
    };
  });

  // synth-corpus
  auto* synth_corpus = app.add_subcommand("synth-corpus", "Generate the synthetic agreement corpus");
  std::size_t sc_n = 100;
  std::uint64_t sc_seed = 0;
  std::string sc_conllu, sc_pairs;
  synth_corpus->add_option("-n,--sentences", sc_n);
  auto* sc_seed_opt = synth_corpus->add_option("--seed", sc_seed);
  synth_corpus->add_option("--out", sc_conllu, "CoNLL-U output")->required();
  synth_corpus->add_option("--pairs", sc_pairs, "Minimal-pair TSV output");
  synth_corpus->callback([&] {
    action = [&] {
      const auto corpus = gen_corpus(default_grammar(effective_seed(sc_seed_opt, sc_seed)), sc_n);
      write_file_atomic(sc_conllu, write_conllu(graphs_of(corpus)));
      if (!sc_pairs.empty()) write_file_atomic(sc_pairs, write_minimal_pairs(pairs_of(corpus)));
      out << json{{"sentences", corpus.size()}, {"pairs", pairs_of(corpus).size()}}.dump() << "\n";
    };
  });

  // synth-brain
  auto* synth_brain = app.add_subcommand("synth-brain", "Synthesize recordings B = D M + noise");
  std::string sb_reps, sb_out;
  SynthBrainSpec sb;
  auto* sb_seed_opt = synth_brain->add_option("--seed", sb.seed);
  synth_brain->add_option("--reps", sb_reps)->required();
  synth_brain->add_option("--dim", sb.d_b, "d_B");
  synth_brain->add_option("--sigma", sb.sigma);
  synth_brain->add_flag("--relative", sb.sigma_relative, "Scale sigma by the signal standard deviation");
  synth_brain->add_option("--out", sb_out)->required();
  synth_brain->callback([&] {
    action = [&] {
      require_file(sb_reps, "representation matrix");
      sb.seed = effective_seed(sb_seed_opt, sb.seed);
      const auto reps = load_matrix(sb_reps);
      const auto b = gen_brain(reps, sb);
      save_matrix(sb_out, b);
      out << json{{"rows", b.rows()}, {"dim", b.cols()}, {"signal_scale", signal_scale(reps, sb)}}.dump() << "\n";
    };
  });

  // decode
  auto* decode = app.add_subcommand("decode", "Nested cross-validated ridge decoding");
  std::string d_brain, d_reps, d_out, d_grid;
  NestedCvOptions d_opt;
  std::uint64_t d_seed = 0;
  decode->add_option("--brain", d_brain)->required();
  decode->add_option("--reps", d_reps)->required();
  decode->add_option("--outer-folds", d_opt.outer_folds);
  decode->add_option("--inner-folds", d_opt.inner_folds);
  decode->add_option("--lambdas", d_grid, "Comma-separated lambda grid");
  auto* d_seed_opt = decode->add_option("--seed", d_seed);
  decode->add_option("--out-dir", d_out)->required();
  decode->callback([&] {
    action = [&] {
      require_file(d_brain, "brain matrix");
      require_file(d_reps, "representation matrix");
      if (!d_grid.empty()) d_opt.lambda_grid = parse_double_list(d_grid);
      d_opt.seed = effective_seed(d_seed_opt, d_seed);
      d_opt.jobs = jobs;
      const auto report = nested_cv_decode(load_matrix(d_brain), load_matrix(d_reps), d_opt);
      fs::create_directories(d_out);
      write_file_atomic(fs::path(d_out) / "decode.json", report.to_json() + "\n");
      write_file_atomic(fs::path(d_out) / "scores.csv", report.scores_csv());
      out << report.to_json() << "\n";
    };
  });

  // stats
  auto* stats = app.add_subcommand("stats", "Paired bootstrap or exact Wilcoxon");
  std::string st_a, st_b, st_diffs, st_out;
  int st_iters = 5000, st_c = 3;
  std::uint64_t st_seed = 0;
  stats->add_option("--a", st_a, "Scores CSV of model A");
  stats->add_option("--b", st_b, "Scores CSV of model B");
  stats->add_option("--diffs", st_diffs, "Per-subject differences for Wilcoxon");
  stats->add_option("--iterations", st_iters)->check(CLI::PositiveNumber);
  stats->add_option("--comparisons", st_c, "Bonferroni factor")->check(CLI::PositiveNumber);
  auto* st_seed_opt = stats->add_option("--seed", st_seed);
  stats->add_option("--out", st_out);
  stats->callback([&] {
    action = [&] {
      StatsReport r;
      r.iterations = 0;
      if (!st_diffs.empty()) {
        const auto d = parse_double_list(st_diffs);
        r.comparison = "wilcoxon";
        r.n = d.size();
        r.p_raw = wilcoxon_signed_rank(d);
        double mean = 0;
        for (double x : d) mean += x;
        r.direction = mean > 0 ? "A>B" : "A<=B";
      } else {
        if (st_a.empty() || st_b.empty()) throw ValidationError("stats needs --a and --b, or --diffs");
        const auto a = load_scores(st_a), b = load_scores(st_b);
        PairedScores ps;
        for (const auto& [label, va] : a) {
          auto it = b.find(label);
          if (it == b.end()) throw ValidationError("label '" + label + "' missing from " + st_b);
          if (std::isnan(va) || std::isnan(it->second)) continue;
          ps.a.push_back(va);
          ps.b.push_back(it->second);
        }
        if (a.size() != b.size()) throw ValidationError("score files cover different stimuli");
        const auto boot = paired_bootstrap(ps, st_iters, effective_seed(st_seed_opt, st_seed), jobs);
        r.comparison = fs::path(st_a).stem().string() + " vs " + fs::path(st_b).stem().string();
        r.n = ps.a.size();
        r.iterations = st_iters;
        r.p_raw = boot.p_value;
        r.direction = direction_of(ps.a, ps.b);
      }
      r.p_bonferroni = bonferroni(r.p_raw, st_c);
      if (!st_out.empty()) write_file_atomic(st_out, r.to_json() + "\n");
      out << r.to_json() << "\n";
    };
  });

  // select
  auto* select = app.add_subcommand("select", "Pick the least hub-prone representation set");
  std::vector<std::string> se_reps;
  int se_k = 10;
  std::string se_metric = "cosine";
  select->add_option("reps", se_reps, "Representation matrices")->required();
  select->add_option("-k", se_k)->check(CLI::PositiveNumber);
  select->add_option("--metric", se_metric)->check(CLI::IsMember({"cosine", "euclidean"}));
  select->callback([&] {
    action = [&] {
      std::vector<ReprMatrix> cands;
      for (const auto& p : se_reps) {
        require_file(p, "representation matrix");
        cands.push_back(load_matrix(p));
      }
      const auto r = select_model(cands, se_k, metric_from_string(se_metric));
      json scores = json::array();
      for (std::size_t i = 0; i < se_reps.size(); ++i) scores.push_back({{"reps", se_reps[i]}, {"robin_hood", r.scores[i]}});
      out << json{{"selected", se_reps[r.index]}, {"k", se_k}, {"metric", se_metric}, {"candidates", scores}}.dump(2)
          << "\n";
    };
  });

  // probe
  auto* probe = app.add_subcommand("probe", "Minimal-pair accuracy or linear tag probing");
  std::string p_ckpt, p_vocab, p_pairs, p_reps, p_tags;
  double p_l2 = 1e-3;
  std::uint64_t p_seed = 0;
  probe->add_option("--checkpoint", p_ckpt);
  probe->add_option("--vocab", p_vocab);
  probe->add_option("--pairs", p_pairs, "Minimal-pair TSV");
  probe->add_option("--reps", p_reps, "Word representations labelled sentence_id:word_index");
  probe->add_option("--tags", p_tags, "TSV: sentence_id, word_index, tag");
  probe->add_option("--l2", p_l2);
  auto* p_seed_opt = probe->add_option("--seed", p_seed, "Train/test split seed");
  probe->callback([&] {
    action = [&] {
      if (!p_pairs.empty()) {
        if (p_ckpt.empty() || p_vocab.empty()) throw ValidationError("--pairs needs --checkpoint and --vocab");
        const Vocab vocab = load_vocab(p_vocab);
        const auto ck = load_model(p_ckpt, vocab);
        require_file(p_pairs, "pairs file");
        const auto pairs = parse_minimal_pairs(read_file(p_pairs));
        std::vector<PairScore> scores;
        for (const auto& p : pairs) scores.push_back(score_minimal_pair(ck.params, ck.config, vocab, p));
        json j = json::object();
        for (const auto& [cat, a] : summarize_pairs(pairs, scores))
          j[cat] = {{"accuracy", a.accuracy()}, {"scored", a.scored}, {"correct", a.correct}, {"skipped", a.skipped}};
        out << j.dump(2) << "\n";
        return;
      }
      if (p_reps.empty() || p_tags.empty()) throw ValidationError("probe needs --pairs, or --reps and --tags");
      require_file(p_reps, "representation matrix");
      require_file(p_tags, "tag dataset");
      const auto reps = load_matrix(p_reps);
      const auto tags = parse_tag_dataset(read_file(p_tags));
      std::vector<std::string> labels;
      for (const auto& t : tags) labels.push_back(t.sentence_id + ":" + std::to_string(t.word_index));
      const auto x = reps.aligned_to(labels);
      const auto folds = assign_folds(tags.size(), 5, effective_seed(p_seed_opt, p_seed));
      std::vector<Eigen::Index> tr, te;
      for (std::size_t i = 0; i < folds.size(); ++i) (folds[i] == 0 ? te : tr).push_back(static_cast<Eigen::Index>(i));
      auto rows = [&](const std::vector<Eigen::Index>& idx) {
        Eigen::MatrixXd m(static_cast<Eigen::Index>(idx.size()), x.cols());
        for (std::size_t i = 0; i < idx.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = x.values.row(idx[i]);
        return m;
      };
      auto tags_of = [&](const std::vector<Eigen::Index>& idx) {
        std::vector<std::string> o;
        for (auto i : idx) o.push_back(tags[static_cast<std::size_t>(i)].tag);
        return o;
      };
      const auto model = train_linear_probe(rows(tr), tags_of(tr), p_l2);
      const auto ev = evaluate_probe(model, rows(te), tags_of(te));
      json pc = json::object();
      for (const auto& [c, m] : ev.per_class)
        pc[c] = {{"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}, {"support", m.support}};
      out << json{{"macro_f1", ev.macro_f1}, {"accuracy", ev.accuracy}, {"train", tr.size()}, {"test", te.size()},
                  {"epochs", model.epochs}, {"per_class", pc}}
                 .dump(2)
          << "\n";
    };
  });

  // report
  auto* report = app.add_subcommand("report", "Tables for a completed pipeline run");
  std::string r_dir;
  report->add_option("run_dir", r_dir)->required();
  report->callback([&] { action = [&] { out << cmd_report(r_dir); }; });

  // pipeline
  auto* pipeline = app.add_subcommand("pipeline", "Run every stage from a JSON config");
  std::string pl_config, pl_out;
  std::uint64_t pl_seed = 0;
  pipeline->add_option("--config", pl_config, "JSON config (defaults when omitted)");
  pipeline->add_option("--out-dir", pl_out);
  auto* pl_seed_opt = pipeline->add_option("--seed", pl_seed);
  pipeline->callback([&] {
    action = [&] {
      PipelineConfig cfg;
      if (!pl_config.empty()) {
        require_file(pl_config, "config");
        cfg = PipelineConfig::from_json(read_file(pl_config));
      }
      if (auto env = seed_from_env()) cfg.seed = *env;
      if (pl_seed_opt->count() > 0) cfg.seed = pl_seed;
      if (!pl_out.empty()) cfg.out_dir = pl_out;
      if (app.get_option("--jobs")->count() > 0) cfg.jobs = jobs;
      const auto dir = cmd_pipeline(cfg, err);
      out << (dir / "summary.json").string() << "\n";
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  }

  try {
    if (action) action();
    return kExitOk;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const StageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitStage;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitStage;
  }
}

}  // namespace neuroalign::cli
