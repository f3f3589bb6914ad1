#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace neuroalign;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "neuroalign");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

void write(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  f << text;
}

std::string tiny_config(const fs::path& out, bool stats) {
  return R"({"seed": 3, "out_dir": ")" + out.string() + R"(",
    "synthetic_sentences": 60, "stimuli": 24, "vocab_size": 90,
    "model": {"n_layers": 2, "n_heads": 2, "d_model": 16, "d_ff": 16, "max_len": 24},
    "pretrain_steps": 20, "finetune_steps": 10, "batch_size": 4,
    "layer_counts": [1], "head_counts": [1], "head_order": [0, 1],
    "subjects": 3, "brain_dim": 8, "outer_folds": 4, "inner_folds": 3,
    "bootstrap_iterations": 50, "hubness_k": 3, "run_stats": )" +
         std::string(stats ? "true" : "false") + "}";
}

}  // namespace

TEST_CASE("ingest reports corpus counts") {
  const auto dir = test::scratch_dir("cli_ingest");
  const auto r = run_cli({"ingest", test::fixture("ud.conllu").string(), "--out", (dir / "c.jsonl").string()});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("\"sentences\": 10") != std::string::npos);
  CHECK(fs::exists(dir / "c.jsonl"));
  CHECK(cli::load_corpus(dir / "c.jsonl", "jsonl").size() == 10);

  write(dir / "corpus.txt", "hello\n");
  CHECK(run_cli({"ingest", (dir / "corpus.txt").string()}).code == cli::kExitValidation);
  write(dir / "empty.conllu", "");
  const auto empty = run_cli({"ingest", (dir / "empty.conllu").string()});
  CHECK(empty.code == 0);
  CHECK(empty.out.find("\"sentences\": 0") != std::string::npos);
  CHECK(run_cli({"ingest", (dir / "missing.conllu").string()}).code == cli::kExitValidation);
  CHECK(run_cli({"no-such-command"}).code == cli::kExitValidation);
}

TEST_CASE("format inference") {
  CHECK(cli::infer_format("a.conllu") == "conllu");
  CHECK(cli::infer_format("a.sdp") == "sdp");
  CHECK(cli::infer_format("a.json") == "hier-json");
  CHECK(cli::infer_format("a.jsonl") == "jsonl");
  CHECK_THROWS_AS(cli::infer_format("a.txt"), cli::ValidationError);
}

TEST_CASE("config validation happens before any work") {
  const auto dir = test::scratch_dir("cli_config");
  write(dir / "missing.json", R"({"corpus_path": ")" + (dir / "nope.conllu").string() + R"(", "out_dir": ")" +
                                  (dir / "run").string() + "\"}");
  const auto r = run_cli({"pipeline", "--config", (dir / "missing.json").string()});
  CHECK(r.code == cli::kExitValidation);
  CHECK(r.err.find("nope.conllu") != std::string::npos);
  CHECK_FALSE(fs::exists(dir / "run"));

  write(dir / "unknown.json", R"({"sed": 3})");
  const auto u = run_cli({"pipeline", "--config", (dir / "unknown.json").string()});
  CHECK(u.code == cli::kExitValidation);
  CHECK(u.err.find("sed") != std::string::npos);
  CHECK_THROWS_AS(cli::PipelineConfig::from_json(R"({"model": {"layers": 2}})"), cli::ValidationError);
  CHECK_THROWS_AS(cli::PipelineConfig::from_json("[1]"), cli::ValidationError);

  const auto cfg = cli::PipelineConfig::from_json(R"({"alpha": 0.5, "model": {"d_model": 16}})");
  CHECK(cfg.alpha == 0.5);
  CHECK(cfg.model.d_model == 16);
  CHECK(cfg.model.n_heads == 4);
  CHECK(cli::PipelineConfig::from_json(cfg.to_json()).to_json() == cfg.to_json());
}

TEST_CASE("report on missing or incomplete runs") {
  const auto dir = test::scratch_dir("cli_report");
  CHECK(run_cli({"report", (dir / "nothing").string()}).code == cli::kExitValidation);
  write(dir / "config.json", "{}");
  const auto r = run_cli({"report", dir.string()});
  CHECK(r.code == cli::kExitValidation);
  CHECK(r.err.find("summary.json") != std::string::npos);
}

TEST_CASE("a small pipeline runs end to end") {
  const auto dir = test::scratch_dir("cli_pipeline");
  for (bool stats : {false, true}) {
    const auto run = dir / (stats ? "with_stats" : "no_stats");
    write(dir / "cfg.json", tiny_config(run, stats));
    const auto r = run_cli({"pipeline", "--config", (dir / "cfg.json").string()});
    REQUIRE_MESSAGE(r.code == 0, r.err);
    CHECK(fs::exists(run / "summary.json"));
    CHECK(fs::exists(run / "manifest.json"));
    const auto rep = run_cli({"report", run.string()});
    REQUIRE(rep.code == 0);
    for (const char* col : {"Pearson r", "Mean rank", "Median rank", "p Wilcoxon", "p Bonferroni", "Robin Hood", "Pseudo-PPL"})
      CHECK(rep.out.find(col) != std::string::npos);
    CHECK((rep.out.find("absent") != std::string::npos) == !stats);
    const std::string summary = read_file(run / "summary.json");
    CHECK(summary.find(run.string()) == std::string::npos);
  }
}

TEST_CASE("seed precedence: flag over environment over config") {
  ::setenv("NEUROALIGN_SEED", "42", 1);
  CHECK(cli::seed_from_env() == std::uint64_t{42});
  ::setenv("NEUROALIGN_SEED", "abc", 1);
  CHECK_THROWS(cli::seed_from_env());
  ::unsetenv("NEUROALIGN_SEED");
  CHECK_FALSE(cli::seed_from_env().has_value());

  const auto dir = test::scratch_dir("cli_seed");
  const auto a = run_cli({"synth-corpus", "-n", "5", "--out", (dir / "a.conllu").string(), "--seed", "1"});
  ::setenv("NEUROALIGN_SEED", "1", 1);
  const auto b = run_cli({"synth-corpus", "-n", "5", "--out", (dir / "b.conllu").string()});
  const auto c = run_cli({"synth-corpus", "-n", "5", "--out", (dir / "c.conllu").string(), "--seed", "2"});
  ::unsetenv("NEUROALIGN_SEED");
  REQUIRE(a.code == 0);
  REQUIRE(b.code == 0);
  REQUIRE(c.code == 0);
  CHECK(read_file(dir / "a.conllu") == read_file(dir / "b.conllu"));
  CHECK(read_file(dir / "a.conllu") != read_file(dir / "c.conllu"));
}
