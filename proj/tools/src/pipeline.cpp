#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>

#include "cli.hpp"
#include "json.hpp"
#include "neuroalign/decode.hpp"
#include "neuroalign/probes.hpp"
#include "neuroalign/stats.hpp"
#include "neuroalign/synth.hpp"
#include "neuroalign/train.hpp"

namespace neuroalign::cli {

namespace fs = std::filesystem;
using nlohmann::json;

ModelConfig PipelineConfig::default_model() {
  ModelConfig m;
  m.n_layers = 2;
  m.n_heads = 4;
  m.d_model = 32;
  m.d_ff = 64;
  m.max_len = 32;
  return m;
}

namespace {

template <typename T>
void take(json& j, const char* key, T& dst) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    dst = it->get<T>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config key '") + key + "': " + e.what());
  }
  j.erase(it);
}

void reject_unknown(const json& j, const std::string& where) {
  if (!j.empty()) throw ValidationError("unknown config key '" + j.begin().key() + "' in " + where);
}

json model_json(const ModelConfig& m) {
  return {{"n_layers", m.n_layers}, {"n_heads", m.n_heads}, {"d_model", m.d_model}, {"d_ff", m.d_ff},
          {"max_len", m.max_len},   {"dropout", m.dropout}, {"init_std", m.init_std}};
}

}  // namespace

PipelineConfig PipelineConfig::from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ValidationError("config must be a JSON object");
  PipelineConfig c;
  take(j, "seed", c.seed);
  take(j, "out_dir", c.out_dir);
  take(j, "jobs", c.jobs);
  take(j, "corpus_path", c.corpus_path);
  take(j, "corpus_format", c.corpus_format);
  take(j, "synthetic_sentences", c.synthetic_sentences);
  take(j, "stimuli", c.stimuli);
  take(j, "level", c.level);
  take(j, "vocab_size", c.vocab_size);
  if (auto it = j.find("model"); it != j.end()) {
    json m = *it;
    take(m, "n_layers", c.model.n_layers);
    take(m, "n_heads", c.model.n_heads);
    take(m, "d_model", c.model.d_model);
    take(m, "d_ff", c.model.d_ff);
    take(m, "max_len", c.model.max_len);
    take(m, "dropout", c.model.dropout);
    take(m, "init_std", c.model.init_std);
    reject_unknown(m, "model");
    j.erase(it);
  }
  take(j, "pretrain_steps", c.pretrain_steps);
  take(j, "finetune_steps", c.finetune_steps);
  take(j, "batch_size", c.batch_size);
  take(j, "lr", c.lr);
  take(j, "layer_counts", c.layer_counts);
  take(j, "head_counts", c.head_counts);
  take(j, "head_order", c.head_order);
  take(j, "runs_per_setting", c.runs_per_setting);
  take(j, "alpha", c.alpha);
  take(j, "brain_paths", c.brain_paths);
  take(j, "subjects", c.subjects);
  take(j, "brain_dim", c.brain_dim);
  take(j, "brain_sigma", c.brain_sigma);
  take(j, "brain_sigma_relative", c.brain_sigma_relative);
  take(j, "brain_source", c.brain_source);
  take(j, "outer_folds", c.outer_folds);
  take(j, "inner_folds", c.inner_folds);
  take(j, "lambda_grid", c.lambda_grid);
  take(j, "run_stats", c.run_stats);
  take(j, "bootstrap_iterations", c.bootstrap_iterations);
  take(j, "hubness_k", c.hubness_k);
  take(j, "hubness_metric", c.hubness_metric);
  reject_unknown(j, "config");
  return c;
}

std::string PipelineConfig::to_json() const {
  json j;
  j["seed"] = seed;
  j["out_dir"] = out_dir;
  j["jobs"] = jobs;
  j["corpus_path"] = corpus_path;
  j["corpus_format"] = corpus_format;
  j["synthetic_sentences"] = synthetic_sentences;
  j["stimuli"] = stimuli;
  j["level"] = level;
  j["vocab_size"] = vocab_size;
  j["model"] = model_json(model);
  j["pretrain_steps"] = pretrain_steps;
  j["finetune_steps"] = finetune_steps;
  j["batch_size"] = batch_size;
  j["lr"] = lr;
  j["layer_counts"] = layer_counts;
  j["head_counts"] = head_counts;
  j["head_order"] = head_order;
  j["runs_per_setting"] = runs_per_setting;
  j["alpha"] = alpha;
  j["brain_paths"] = brain_paths;
  j["subjects"] = subjects;
  j["brain_dim"] = brain_dim;
  j["brain_sigma"] = brain_sigma;
  j["brain_sigma_relative"] = brain_sigma_relative;
  j["brain_source"] = brain_source;
  j["outer_folds"] = outer_folds;
  j["inner_folds"] = inner_folds;
  j["lambda_grid"] = lambda_grid.empty() ? default_lambda_grid() : lambda_grid;
  j["run_stats"] = run_stats;
  j["bootstrap_iterations"] = bootstrap_iterations;
  j["hubness_k"] = hubness_k;
  j["hubness_metric"] = hubness_metric;
  return j.dump(2) + "\n";
}

void PipelineConfig::validate() const {
  auto check = [](bool ok, const std::string& msg) {
    if (!ok) throw ValidationError(msg);
  };
  check(!out_dir.empty(), "out_dir must be set");
  if (!corpus_path.empty()) {
    check(fs::exists(corpus_path), "corpus path does not exist: " + corpus_path);
    infer_format(corpus_format.empty() ? fs::path(corpus_path) : fs::path("x." + corpus_format));
  } else {
    check(synthetic_sentences >= 1, "synthetic_sentences must be at least 1");
  }
  check(stimuli >= 3, "at least 3 stimuli are needed");
  check(level == "sentence" || level == "word", "level must be 'sentence' or 'word'");
  check(pretrain_steps >= 1 && finetune_steps >= 1, "step counts must be positive");
  check(batch_size >= 1, "batch_size must be positive");
  check(lr > 0.0, "lr must be positive");
  check(!layer_counts.empty() && !head_counts.empty(), "grid needs layer_counts and head_counts");
  for (int c : head_counts)
    check(c >= 1 && static_cast<std::size_t>(c) <= head_order.size(), "head count exceeds head_order");
  check(runs_per_setting >= 1, "runs_per_setting must be positive");
  for (const auto& p : brain_paths) check(fs::exists(p), "brain path does not exist: " + p);
  check(!brain_paths.empty() || subjects >= 1, "subjects must be positive");
  check(brain_dim >= 1, "brain_dim must be positive");
  check(brain_sigma >= 0.0, "brain_sigma must be non-negative");
  check(outer_folds >= 2 && inner_folds >= 2, "fold counts must be at least 2");
  check(bootstrap_iterations >= 1, "bootstrap_iterations must be positive");
  check(hubness_k >= 1, "hubness_k must be positive");
  try {
    ModelConfig m = model;
    m.vocab_size = static_cast<int>(std::max<std::size_t>(vocab_size, 1));
    m.validate();
    metric_from_string(hubness_metric);
    GuidanceSpec g;
    g.alpha = alpha;
    g.heads.assign(head_order.begin(), head_order.begin() + std::min<std::ptrdiff_t>(
                                                               static_cast<std::ptrdiff_t>(head_order.size()),
                                                               *std::max_element(head_counts.begin(), head_counts.end())));
    for (int l : layer_counts) {
      g.layers = l;
      g.validate(m);
    }
  } catch (const ValidationError&) {
    throw;
  } catch (const Error& e) {
    throw ValidationError(e.what());
  }
}

namespace {

struct ModelEntry {
  std::string name;
  std::string kind;  // pretrained | baseline | guided
  json setting;
  LossBreakdown final_losses;
  fs::path checkpoint;
  ReprMatrix reps;
  double robin_hood = 0.0;
  double pseudo_perplexity = 0.0;
  std::map<std::string, double> agreement;
  std::vector<DecodeReport> decoding;  // per subject
};

template <typename Fn>
auto stage(const std::string& name, std::ostream& log, Fn&& fn) {
  log << "[" << name << "]\n" << std::flush;
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  std::size_t n = 0;
  for (double x : v)
    if (!std::isnan(x)) {
      s += x;
      ++n;
    }
  return n ? s / static_cast<double>(n) : std::nan("");
}

json losses_json(const LossBreakdown& l) { return {{"total", l.total}, {"mlm", l.mlm}, {"guidance", l.guidance}}; }

/// NaN is not representable in JSON; undefined values become null.
json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

std::string stimulus_label(std::size_t k) { return "stim-" + std::to_string(k + 1); }

}  // namespace

fs::path cmd_pipeline(const PipelineConfig& cfg, std::ostream& log) {
  cfg.validate();
  const fs::path run_dir = cfg.out_dir;
  fs::create_directories(run_dir);
  write_file_atomic(run_dir / "config.json", cfg.to_json());

  // ingest
  std::vector<SentenceGraph> graphs;
  std::vector<MinimalPair> stimulus_pairs;
  stage("ingest", log, [&] {
    if (cfg.corpus_path.empty()) {
      auto synth = gen_corpus(default_grammar(cfg.seed), cfg.synthetic_sentences + cfg.stimuli);
      graphs = graphs_of(synth);
      std::vector<SynthSentence> held(synth.end() - static_cast<std::ptrdiff_t>(cfg.stimuli), synth.end());
      stimulus_pairs = pairs_of(held);
      write_file_atomic(run_dir / "pairs.tsv", write_minimal_pairs(stimulus_pairs));
    } else {
      const std::string fmt = cfg.corpus_format.empty() ? infer_format(cfg.corpus_path) : cfg.corpus_format;
      graphs = load_corpus(cfg.corpus_path, fmt);
    }
    if (graphs.size() <= cfg.stimuli) throw InvalidArgument("corpus is not larger than the stimulus count");
    write_file_atomic(run_dir / "corpus.jsonl", write_jsonl(graphs));
    return 0;
  });
  const std::size_t n_train = graphs.size() - cfg.stimuli;
  std::vector<SentenceGraph> train_graphs(graphs.begin(), graphs.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<SentenceGraph> stim_graphs(graphs.begin() + static_cast<std::ptrdiff_t>(n_train), graphs.end());
  const std::string corpus_hash = hex64(fnv1a(write_jsonl(train_graphs)));

  // vocab
  Vocab vocab;
  stage("vocab", log, [&] {
    std::vector<std::vector<std::string>> sents;
    for (const auto& g : train_graphs) sents.push_back(g.words());
    vocab = build_vocab(sents, cfg.vocab_size);
    write_file_atomic(run_dir / "vocab.txt", vocab.save());
    return 0;
  });
  const std::string vocab_hash = hex64(vocab.hash());

  ModelConfig mc = cfg.model;
  mc.vocab_size = static_cast<int>(vocab.size());
  PreparedCorpus prepared;
  TrainConfig tc;
  tc.batch_size = cfg.batch_size;
  tc.lr = cfg.lr;
  tc.seed = cfg.seed;
  tc.jobs = cfg.jobs;

  std::vector<ModelEntry> models;
  const fs::path model_dir = run_dir / "models";
  stage("train", log, [&] {
    prepared = prepare_corpus(train_graphs, vocab, mc.max_len);
    if (prepared.examples.empty()) throw InvalidArgument("no training sentence fits max_len");
    fs::create_directories(model_dir);

    TrainConfig pre = tc;
    pre.steps = cfg.pretrain_steps;
    auto base = train_mlm(prepared.examples, mc, pre);
    save_checkpoint(model_dir / "pretrained.ckpt", base.params, mc, {vocab_hash, pre.steps});
    models.push_back({"pretrained", "pretrained", json::object(), base.final_losses(), model_dir / "pretrained.ckpt", {}, 0, 0, {}, {}});
    const TransformerParams initial = load_checkpoint(model_dir / "pretrained.ckpt").params;

    TrainConfig fine = tc;
    fine.steps = cfg.finetune_steps;
    auto baseline = train_mlm(prepared.examples, mc, fine, &initial);
    save_checkpoint(model_dir / "baseline.ckpt", baseline.params, mc, {vocab_hash, fine.steps});
    models.push_back({"baseline", "baseline", json::object(), baseline.final_losses(), model_dir / "baseline.ckpt", {}, 0, 0, {}, {}});

    GridSpec grid;
    grid.layer_counts = cfg.layer_counts;
    grid.head_sets = prefix_head_sets(cfg.head_counts, cfg.head_order);
    grid.runs_per_setting = cfg.runs_per_setting;
    grid.alpha = cfg.alpha;
    GridContext ctx;
    ctx.examples = &prepared.examples;
    ctx.model = mc;
    ctx.train = fine;
    ctx.initial = &initial;
    ctx.out_dir = model_dir / "grid";
    ctx.corpus_hash = corpus_hash;
    ctx.vocab_hash = vocab_hash;
    ctx.jobs = cfg.jobs;
    for (const auto& m : run_grid(grid, ctx)) {
      if (m.status != "ok") throw NumericError("grid run " + m.setting.name() + " failed: " + m.error);
      ModelEntry e;
      e.name = m.setting.name() + "_run" + std::to_string(m.run);
      e.kind = "guided";
      e.setting = {{"layers", m.setting.layers}, {"heads", m.setting.heads}, {"alpha", m.setting.alpha},
                   {"run", m.run}, {"seed", m.seed}};
      e.final_losses = m.final_losses;
      e.checkpoint = ctx.out_dir / m.checkpoint;
      models.push_back(std::move(e));
    }
    return 0;
  });

  std::vector<Stimulus> stimuli;
  for (std::size_t k = 0; k < stim_graphs.size(); ++k) stimuli.push_back({stimulus_label(k), stim_graphs[k].words()});
  std::vector<std::vector<std::string>> stim_sentences;
  for (const auto& s : stimuli) stim_sentences.push_back(s.words);

  const fs::path repr_dir = run_dir / "reprs";
  stage("extract", log, [&] {
    fs::create_directories(repr_dir);
    for (auto& m : models) {
      const auto ck = load_checkpoint(m.checkpoint);
      m.reps = cfg.level == "word" ? extract_word_reprs(ck.params, ck.config, vocab, stimuli, cfg.jobs)
                                   : extract_sentence_reprs(ck.params, ck.config, vocab, stimuli, cfg.jobs);
      save_matrix(repr_dir / (m.name + ".bin"), m.reps);
      m.robin_hood = robin_hood_index(m.reps, cfg.hubness_k, metric_from_string(cfg.hubness_metric));
      m.pseudo_perplexity = pseudo_perplexity(ck.params, ck.config, vocab, stim_sentences, cfg.jobs);
      if (!stimulus_pairs.empty()) {
        std::vector<PairScore> scores;
        for (const auto& p : stimulus_pairs) scores.push_back(score_minimal_pair(ck.params, ck.config, vocab, p));
        for (const auto& [cat, acc] : summarize_pairs(stimulus_pairs, scores)) m.agreement[cat] = acc.accuracy();
      }
    }
    return 0;
  });

  std::vector<std::size_t> guided;
  for (std::size_t i = 0; i < models.size(); ++i)
    if (models[i].kind == "guided") guided.push_back(i);

  SelectionResult selection;
  stage("select", log, [&] {
    std::vector<ReprMatrix> candidates;
    for (auto i : guided) candidates.push_back(models[i].reps);
    selection = select_model(candidates, cfg.hubness_k, metric_from_string(cfg.hubness_metric));
    return 0;
  });
  const std::string selected = models[guided[selection.index]].name;

  std::vector<BrainMatrix> brains;
  const fs::path brain_dir = run_dir / "brain";
  stage("brain", log, [&] {
    fs::create_directories(brain_dir);
    if (!cfg.brain_paths.empty()) {
      for (const auto& p : cfg.brain_paths) brains.push_back(load_matrix(p));
      return 0;
    }
    const std::string source = cfg.brain_source == "selected" ? selected : cfg.brain_source;
    auto it = std::find_if(models.begin(), models.end(), [&](const ModelEntry& m) { return m.name == source; });
    if (it == models.end()) throw InvalidArgument("brain_source names no trained model: " + cfg.brain_source);
    for (int s = 0; s < cfg.subjects; ++s) {
      SynthBrainSpec spec;
      spec.d_b = cfg.brain_dim;
      spec.sigma = cfg.brain_sigma;
      spec.sigma_relative = cfg.brain_sigma_relative;
      spec.seed = splitmix64(cfg.seed + 0x5EED0000ULL + static_cast<std::uint64_t>(s));
      brains.push_back(gen_brain(it->reps, spec));
      save_matrix(brain_dir / ("subject" + std::to_string(s + 1) + ".bin"), brains.back());
    }
    return 0;
  });

  const fs::path decode_dir = run_dir / "decode";
  stage("decode", log, [&] {
    NestedCvOptions opt;
    if (!cfg.lambda_grid.empty()) opt.lambda_grid = cfg.lambda_grid;
    opt.outer_folds = cfg.outer_folds;
    opt.inner_folds = cfg.inner_folds;
    opt.seed = cfg.seed;
    opt.jobs = cfg.jobs;
    for (auto& m : models) {
      fs::create_directories(decode_dir / m.name);
      for (std::size_t s = 0; s < brains.size(); ++s) {
        m.decoding.push_back(nested_cv_decode(brains[s], m.reps, opt));
        const std::string stem = "subject" + std::to_string(s + 1);
        write_file_atomic(decode_dir / m.name / (stem + ".json"), m.decoding.back().to_json());
        write_file_atomic(decode_dir / m.name / (stem + ".csv"), m.decoding.back().scores_csv());
      }
    }
    return 0;
  });

  json comparisons = json::array();
  if (cfg.run_stats) {
    stage("stats", log, [&] {
      const ModelEntry& base = models[1];
      const int c = static_cast<int>(guided.size());
      fs::create_directories(run_dir / "stats");
      for (auto gi : guided) {
        const ModelEntry& g = models[gi];
        json per_subject = json::array();
        std::vector<double> diffs;
        for (std::size_t s = 0; s < brains.size(); ++s) {
          PairedScores ps;
          const auto& a = g.decoding[s].pearson;
          const auto& b = base.decoding[s].pearson;
          for (std::size_t i = 0; i < a.size(); ++i)
            if (!std::isnan(a[i]) && !std::isnan(b[i])) {
              ps.a.push_back(a[i]);
              ps.b.push_back(b[i]);
            }
          auto boot = paired_bootstrap(ps, cfg.bootstrap_iterations, splitmix64(cfg.seed + s), cfg.jobs);
          per_subject.push_back({{"subject", s + 1},
                                 {"n", ps.a.size()},
                                 {"p_raw", boot.p_value},
                                 {"p_bonferroni", bonferroni(boot.p_value, c)},
                                 {"direction", direction_of(ps.a, ps.b)}});
          diffs.push_back(g.decoding[s].mean_pearson - base.decoding[s].mean_pearson);
        }
        json entry = {{"model", g.name}, {"baseline", base.name}, {"comparisons", c},
                      {"bootstrap", per_subject}};
        bool all_zero = std::all_of(diffs.begin(), diffs.end(), [](double d) { return d == 0.0; });
        if (!all_zero && std::count_if(diffs.begin(), diffs.end(), [](double d) { return d != 0.0; }) <= 20) {
          const double p = wilcoxon_signed_rank(diffs);
          entry["wilcoxon"] = {{"subjects", diffs.size()}, {"p_raw", p}, {"p_bonferroni", bonferroni(p, c)},
                               {"direction", mean_of(diffs) > 0 ? "A>B" : "A<=B"}};
        } else {
          entry["wilcoxon"] = nullptr;
        }
        write_file_atomic(run_dir / "stats" / (g.name + "_vs_" + base.name + ".json"), entry.dump(2) + "\n");
        comparisons.push_back(std::move(entry));
      }
      return 0;
    });
  }

  stage("summary", log, [&] {
    json summary;
    summary["seed"] = cfg.seed;
    summary["level"] = cfg.level;
    json hashed = json::parse(cfg.to_json());
    hashed.erase("out_dir");
    hashed.erase("jobs");
    summary["config_hash"] = hex64(fnv1a(hashed.dump()));
    summary["corpus"] = {{"sentences", graphs.size()}, {"train", n_train},
                         {"train_used", prepared.examples.size()}, {"skipped", prepared.skipped},
                         {"stimuli", cfg.stimuli}, {"hash", corpus_hash}};
    summary["vocab"] = {{"size", vocab.size()}, {"hash", vocab_hash}};
    summary["brain"] = {{"subjects", brains.size()},
                        {"source", cfg.brain_paths.empty()
                                       ? json(cfg.brain_source == "selected" ? selected : cfg.brain_source)
                                       : json("files")},
                        {"dim", brains.empty() ? 0 : brains.front().cols()}};
    summary["selection"] = {{"k", cfg.hubness_k}, {"metric", cfg.hubness_metric}, {"selected", selected},
                            {"scores", selection.scores}};

    // Word-level breakdown by the stimulus word's UPOS.
    std::map<std::string, bool> is_content;
    if (cfg.level == "word") {
      for (std::size_t k = 0; k < stim_graphs.size(); ++k) {
        const auto split = split_content_function(stim_graphs[k].tokens);
        for (int w : split.content) is_content[stimulus_label(k) + ":" + std::to_string(w)] = true;
        for (int w : split.function) is_content[stimulus_label(k) + ":" + std::to_string(w)] = false;
      }
    }

    json jm = json::array();
    for (const auto& m : models) {
      json d;
      std::vector<double> pearsons, mean_ranks, median_ranks;
      for (const auto& r : m.decoding) {
        pearsons.push_back(r.mean_pearson);
        mean_ranks.push_back(r.mean_rank);
        median_ranks.push_back(r.median_rank);
      }
      d["mean_pearson"] = number_or_null(mean_of(pearsons));
      d["mean_rank"] = number_or_null(mean_of(mean_ranks));
      d["median_rank"] = number_or_null(mean_of(median_ranks));
      json subj = json::array();
      for (std::size_t s = 0; s < m.decoding.size(); ++s)
        subj.push_back({{"subject", s + 1}, {"mean_pearson", number_or_null(pearsons[s])},
                        {"mean_rank", mean_ranks[s]}, {"median_rank", median_ranks[s]}});
      d["per_subject"] = subj;
      json entry = {{"name", m.name},
                    {"kind", m.kind},
                    {"setting", m.setting},
                    {"final_losses", losses_json(m.final_losses)},
                    {"robin_hood", m.robin_hood},
                    {"pseudo_perplexity", m.pseudo_perplexity},
                    {"decoding", d}};
      if (!m.agreement.empty()) entry["agreement"] = m.agreement;
      if (cfg.level == "word") {
        std::vector<double> content, function;
        for (const auto& r : m.decoding)
          for (std::size_t i = 0; i < r.labels.size(); ++i) {
            auto it = is_content.find(r.labels[i]);
            if (it != is_content.end()) (it->second ? content : function).push_back(r.pearson[i]);
          }
        entry["breakdown"] = {{"content", number_or_null(mean_of(content))},
                              {"function", number_or_null(mean_of(function))}};
      }
      jm.push_back(std::move(entry));
    }
    summary["models"] = jm;
    if (cfg.run_stats) summary["comparisons"] = comparisons;
    write_file_atomic(run_dir / "summary.json", summary.dump(2) + "\n");

    json manifest;
    manifest["config"] = json::parse(cfg.to_json());
    manifest["seeds"] = {{"global", cfg.seed}, {"env_override", seed_from_env().has_value()}};
    manifest["inputs"] = {{"corpus_hash", corpus_hash}, {"vocab_hash", vocab_hash}};
    if (!cfg.corpus_path.empty()) manifest["inputs"]["corpus_file_hash"] = hex64(fnv1a(read_file(cfg.corpus_path)));
    json bh = json::array();
    for (const auto& p : cfg.brain_paths) bh.push_back({{"path", p}, {"hash", hex64(fnv1a(read_file(p)))}});
    manifest["inputs"]["brain_files"] = bh;
    manifest["stages"] = {"ingest", "vocab", "train", "extract", "select", "brain", "decode"};
    if (cfg.run_stats) manifest["stages"].push_back("stats");
    manifest["stages"].push_back("summary");
    write_file_atomic(run_dir / "manifest.json", manifest.dump(2) + "\n");
    return 0;
  });
  return run_dir;
}

namespace {

std::string cell(const json& v, int precision = 4) {
  if (v.is_null()) return "n/a";
  if (v.is_number_float()) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(precision) << v.get<double>();
    return os.str();
  }
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

std::string render(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) width[c] = header[c].size();
  for (const auto& r : rows)
    for (std::size_t c = 0; c < r.size(); ++c) width[c] = std::max(width[c], r[c].size());
  std::ostringstream os;
  auto line = [&](const std::vector<std::string>& r) {
    for (std::size_t c = 0; c < r.size(); ++c) {
      os << (c ? "  " : "") << r[c];
      if (c + 1 < r.size()) os << std::string(width[c] - r[c].size(), ' ');
    }
    os << "\n";
  };
  line(header);
  std::vector<std::string> rule;
  for (auto w : width) rule.push_back(std::string(w, '-'));
  line(rule);
  for (const auto& r : rows) line(r);
  return os.str();
}

}  // namespace

std::string cmd_report(const fs::path& run_dir) {
  if (!fs::is_directory(run_dir)) throw ValidationError("run directory does not exist: " + run_dir.string());
  std::vector<std::string> missing;
  for (const char* f : {"config.json", "summary.json", "manifest.json"})
    if (!fs::exists(run_dir / f)) missing.push_back(f);
  if (!missing.empty()) {
    std::string msg = "incomplete run, missing:";
    for (const auto& m : missing) msg += " " + m;
    throw ValidationError(msg);
  }
  const json s = json::parse(read_file(run_dir / "summary.json"));
  const bool has_stats = s.contains("comparisons");
  std::map<std::string, json> by_model;
  if (has_stats)
    for (const auto& c : s["comparisons"]) by_model[c["model"].get<std::string>()] = c;

  std::vector<std::string> header = {"model", "kind", "Pearson r", "Mean rank", "Median rank",
                                     "p Wilcoxon", "p Bonferroni", "Robin Hood", "Pseudo-PPL"};
  std::vector<std::vector<std::string>> rows;
  for (const auto& m : s["models"]) {
    const auto& d = m["decoding"];
    std::string p_raw = has_stats ? "-" : "absent";
    std::string p_bonf = p_raw;
    auto it = by_model.find(m["name"].get<std::string>());
    if (it != by_model.end() && !it->second["wilcoxon"].is_null()) {
      p_raw = cell(it->second["wilcoxon"]["p_raw"]);
      p_bonf = cell(it->second["wilcoxon"]["p_bonferroni"]);
    }
    rows.push_back({m["name"], m["kind"], cell(d["mean_pearson"]), cell(d["mean_rank"], 2),
                    cell(d["median_rank"], 2), p_raw, p_bonf, cell(m["robin_hood"]),
                    cell(m["pseudo_perplexity"], 2)});
  }
  std::ostringstream os;
  os << "level: " << s["level"].get<std::string>() << "   subjects: " << s["brain"]["subjects"]
     << "   selected by hubness: " << s["selection"]["selected"].get<std::string>() << "\n\n";
  os << render(header, rows);
  if (!has_stats) os << "\np-value columns absent: the run has no stats stage\n";

  if (s["level"] == "word") {
    std::vector<std::vector<std::string>> br;
    for (const auto& m : s["models"])
      br.push_back({m["name"], cell(m["breakdown"]["content"]), cell(m["breakdown"]["function"])});
    os << "\n" << render({"model", "content words r", "function words r"}, br);
  }

  bool any_agreement = false;
  std::vector<std::vector<std::string>> ag;
  for (const auto& m : s["models"])
    if (m.contains("agreement")) {
      any_agreement = true;
      std::vector<std::string> row = {m["name"]};
      for (const auto& [cat, v] : m["agreement"].items()) row.push_back(cell(v, 3));
      ag.push_back(row);
    }
  if (any_agreement) {
    std::vector<std::string> h = {"model"};
    for (const auto& [cat, v] : s["models"][0]["agreement"].items()) h.push_back(cat);
    os << "\n" << render(h, ag);
  }
  return os.str();
}

}  // namespace neuroalign::cli
