#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"
#include "support.hpp"
#include "vpp/errors.hpp"
#include "vpp/serialization.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::string kBin = VOWELPP_BIN;
const std::string kCorpus = VOWELPP_SAMPLE_CORPUS;

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("vowelpp_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str(const std::string& sub = "") const {
    return (sub.empty() ? path : path / sub).string();
  }
  static int& counter() {
    static int c = 0;
    return c;
  }
};

int run(const std::string& args, std::string* output = nullptr) {
  const std::string redirect = output ? " > " + *output + " 2>&1" : " > /dev/null 2>&1";
  const int status = std::system((kBin + " " + args + redirect).c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::string& path) { return vpp::read_text_file(path); }

}  // namespace

TEST_CASE("checkpoints: bit-exact round trip including the stored proposal") {
  vpp::Rng rng(71);
  vpp::TrainedModel model = vpp::test::random_tabular(vpp::Family::MPP, 6, 2, rng, 1.0, 0.8);
  model.proposal_params = model.params.head(model.params.size() - 1);

  TempDir dir;
  vpp::save_checkpoint(model, dir.str("ckpt.json"));
  const vpp::TrainedModel loaded = vpp::load_checkpoint(dir.str("ckpt.json"));
  CHECK(loaded.params == model.params);
  CHECK(loaded.proposal_params == model.proposal_params);
  CHECK(loaded.table.symbols == model.table.symbols);
  CHECK((loaded.table.features - model.table.features).cwiseAbs().maxCoeff() == 0.0);
  CHECK(loaded.config.family == model.config.family);

  // saving the loaded model reproduces the file byte for byte
  vpp::save_checkpoint(loaded, dir.str("ckpt2.json"));
  CHECK(slurp(dir.str("ckpt.json")) == slurp(dir.str("ckpt2.json")));

  // a checkpoint whose layout disagrees with its tags is rejected
  json j = json::parse(slurp(dir.str("ckpt.json")));
  j["layout"][0]["rows"] = 57;
  vpp::write_text_file(dir.str("bad.json"), j.dump());
  CHECK_THROWS_AS(vpp::load_checkpoint(dir.str("bad.json")), vpp::ParseError);
}

TEST_CASE("cli: ingest writes the table, statistics and manifest") {
  TempDir dir;
  REQUIRE(run("ingest --corpus " + kCorpus + " --out " + dir.str()) == 0);

  CHECK(fs::exists(dir.path / "vowel_table.tsv"));
  CHECK(fs::exists(dir.path / "vowel_frequency.tsv"));
  CHECK(fs::exists(dir.path / "size_histogram.tsv"));
  CHECK(fs::exists(dir.path / "manifest.json"));

  const json stats = json::parse(slurp(dir.str("stats.json")));
  CHECK(stats["languages"] == 16);  // 17 listings, one duplicated language
  CHECK(stats["symbols"] == 20);
  CHECK(stats["size_min"] == 3);
  CHECK(stats["size_mode"] == 5);

  // frequency percentages are languages-containing / total, within [0, 100]
  std::istringstream freq(slurp(dir.str("vowel_frequency.tsv")));
  std::string line;
  std::getline(freq, line);  // header
  int rows = 0;
  while (std::getline(freq, line)) {
    const auto tab = line.find('\t');
    const double pct = std::stod(line.substr(tab + 1));
    CHECK(pct >= 0.0);
    CHECK(pct <= 100.0);
    ++rows;
  }
  CHECK(rows == 20);
  // /i/ is in every language of the sample
  CHECK(slurp(dir.str("vowel_frequency.tsv")).find("i\t100") != std::string::npos);
}

TEST_CASE("cli: ingest of a single-language corpus has a one-bar histogram") {
  TempDir dir;
  const std::string mini = dir.str("mini.jsonl");
  vpp::write_text_file(
      mini,
      R"({"language":"Solo","vowels":[{"ipa":"i","formants":[280,2250]},{"ipa":"a","formants":[700,1300]}]})"
      "\n");
  REQUIRE(run("ingest --corpus " + mini + " --out " + dir.str("out")) == 0);
  const std::string hist = slurp(dir.str("out") + "/size_histogram.tsv");
  CHECK(hist == "size\tcount\n2\t1\n");
}

TEST_CASE("cli: train is deterministic and the checkpoint loads back") {
  TempDir dir;
  const std::string flags = " --family bpp --embedding tabular --r 1 --seed 9 ";
  REQUIRE(run("train --corpus " + kCorpus + " --out " + dir.str("a") + flags) == 0);
  REQUIRE(run("train --corpus " + kCorpus + " --out " + dir.str("b") + flags) == 0);
  CHECK(slurp(dir.str("a") + "/checkpoint.json") == slurp(dir.str("b") + "/checkpoint.json"));

  const vpp::TrainedModel model = vpp::load_checkpoint(dir.str("a") + "/checkpoint.json");
  CHECK(model.config.family == vpp::Family::BPP);
  CHECK(model.universe_size() == 20);

  // training log: header plus one line per accepted iterate
  const std::string log = slurp(dir.str("a") + "/training_log.tsv");
  CHECK(log.rfind("iteration\tobjective\n", 0) == 0);
  CHECK(std::count(log.begin(), log.end(), '\n') >= 3);
}

TEST_CASE("cli: invalid family is a usage error") {
  TempDir dir;
  CHECK(run("train --corpus " + kCorpus + " --out " + dir.str() + " --family zpp") == 1);
  CHECK(run("definitely-not-a-subcommand") == 1);
}

TEST_CASE("cli: missing corpus file is a data error") {
  TempDir dir;
  CHECK(run("ingest --corpus /nonexistent/corpus.jsonl --out " + dir.str()) == 2);
}

TEST_CASE("cli: eval reports xent, cloze rows and map decodes") {
  TempDir dir;
  REQUIRE(run("train --corpus " + kCorpus + " --out " + dir.str("model") +
              " --family dpp --embedding neural --r 12 --d 1 --lambda 0.001 --seed 3") == 0);

  std::string out = dir.str("eval.log");
  REQUIRE(run("eval --checkpoint " + dir.str("model") + "/checkpoint.json --corpus " +
                  kCorpus + " --out " + dir.str("metrics") +
                  " --xent --cloze 1 --cloze 01 --map-n 3 --seed 5",
              &out) == 0);

  const json metrics = json::parse(slurp(dir.str("metrics") + "/metrics.json"));
  CHECK(metrics["languages"] == 16);
  CHECK(metrics["xent"]["finite"] == true);
  CHECK(metrics["xent"]["per_language"].size() == 16);
  CHECK(metrics["cloze"]["1"]["instances"].size() == 16);  // no skips under cloze-1
  CHECK(metrics["map"]["3"].size() == 3);

  // evaluation is deterministic given model, corpus and seed
  REQUIRE(run("eval --checkpoint " + dir.str("model") + "/checkpoint.json --corpus " +
              kCorpus + " --out " + dir.str("metrics2") +
              " --xent --cloze 1 --cloze 01 --map-n 3 --seed 5") == 0);
  CHECK(slurp(dir.str("metrics") + "/metrics.json") ==
        slurp(dir.str("metrics2") + "/metrics.json"));
}

TEST_CASE("cli: uniform-potential checkpoint reproduces the closed-form xent") {
  TempDir dir;
  // hand-build a uniform-phi BPP checkpoint over the sample corpus's table
  const auto listings = vpp::dedupe_languages(vpp::parse_corpus_file(kCorpus), 1);
  vpp::VowelTable table = vpp::build_vowel_table(listings);
  vpp::preprocess_features(table);

  vpp::ModelConfig config;
  config.family = vpp::Family::BPP;
  config.embedding.kind = vpp::EmbeddingKind::Tabular;
  config.embedding.r = 1;
  config.embedding.n_vowels = table.size();
  const vpp::TrainedModel uniform =
      make_model(config, Eigen::VectorXd::Ones(table.size()), table);
  vpp::save_checkpoint(uniform, dir.str("uniform.json"));

  REQUIRE(run("eval --checkpoint " + dir.str("uniform.json") + " --corpus " + kCorpus +
              " --out " + dir.str("m") + " --xent") == 0);
  const json metrics = json::parse(slurp(dir.str("m") + "/metrics.json"));
  const double expected = table.size() * std::log(2.0);
  CHECK(metrics["xent"]["mean_nats"].get<double>() == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("cli: eval rejects a corpus that does not match the checkpoint") {
  TempDir dir;
  REQUIRE(run("train --corpus " + kCorpus + " --out " + dir.str("model") +
              " --family bpp --embedding tabular --r 1") == 0);
  const std::string alien = dir.str("alien.jsonl");
  vpp::write_text_file(
      alien,
      R"({"language":"X","vowels":[{"ipa":"ɶ","formants":[560,1550]}]})" "\n");
  CHECK(run("eval --checkpoint " + dir.str("model") + "/checkpoint.json --corpus " + alien +
            " --out " + dir.str("m") + " --xent") == 2);
}

TEST_CASE("cli: cv on a toy grid is reproducible") {
  TempDir dir;
  const std::string grid = dir.str("grid.json");
  vpp::write_text_file(grid, R"([{"family":"bpp","embedding":"tabular","r":1,
                                  "lambda":[0.0,0.01]}])");

  const std::string flags = " --corpus " + kCorpus + " --grid " + grid +
                            " --k 4 --seed 11 --metric xent --jobs 2 --out ";
  REQUIRE(run("cv" + flags + dir.str("a")) == 0);
  REQUIRE(run("cv" + flags + dir.str("b")) == 0);
  CHECK(slurp(dir.str("a") + "/cv_report.json") == slurp(dir.str("b") + "/cv_report.json"));

  const json report = json::parse(slurp(dir.str("a") + "/cv_report.json"));
  CHECK(report["folds"].size() == 4);
  CHECK(report["metric"] == "xent");
  double total = 0.0;
  for (const auto& row : report["folds"]) total += row["test_metric"].get<double>();
  CHECK(report["mean_test_metric"].get<double>() == doctest::Approx(total / 4.0));
}

TEST_CASE("grid files: the shipped example expands to the documented product") {
  const fs::path grid_path = fs::path(kCorpus).parent_path() / "example_grid.json";
  const auto grid = vpp::load_grid_file(grid_path.string());
  // 5 tabular + 120 per neural family block + 80 prototype
  CHECK(grid.size() == 5 + 3 * (6 * 4 * 5) + 4 * 4 * 5);
  for (const auto& config : grid) {
    if (config.model.embedding.kind != vpp::EmbeddingKind::Tabular) {
      CHECK_NOTHROW(config.model.embedding.validate());
    }
  }
}

TEST_CASE("cli: viz exports the grid and vowels for an interpretable model") {
  TempDir dir;
  REQUIRE(run("train --corpus " + kCorpus + " --out " + dir.str("model") +
              " --family bpp --embedding interpretable --d 1 --lambda 0.01 --seed 2") == 0);
  REQUIRE(run("viz --checkpoint " + dir.str("model") + "/checkpoint.json --out " +
              dir.str("space.tsv") + " --nx 12 --ny 10") == 0);
  const std::string tsv = slurp(dir.str("space.tsv"));
  CHECK(std::count(tsv.begin(), tsv.end(), '\n') == 1 + 12 * 10 + 20);

  // a tabular model has no metric space: usage error
  REQUIRE(run("train --corpus " + kCorpus + " --out " + dir.str("flat") +
              " --family bpp --embedding tabular --r 1") == 0);
  CHECK(run("viz --checkpoint " + dir.str("flat") + "/checkpoint.json --out " +
            dir.str("nope.tsv")) == 1);
}

TEST_CASE("cli: baseline writes sorted restart results") {
  TempDir dir;
  REQUIRE(run("baseline --m 4 --restarts 5 --seed 7 --out " + dir.str()) == 0);
  const json results = json::parse(slurp(dir.str("baseline.json")));
  REQUIRE(results.size() == 5);
  double previous = 0.0;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const double e = results[i]["energy"].get<double>();
    if (i > 0) CHECK(e >= previous);
    previous = e;
    CHECK(results[i]["points"].size() == 4);
  }
}

TEST_CASE("cli: mpp training round-trips with its stored proposal") {
  TempDir dir;
  REQUIRE(run("train --corpus " + kCorpus + " --out " + dir.str("model") +
              " --family mpp --embedding neural --r 6 --d 0 --lambda 0.01" +
              " --mpp-samples 2000 --max-iters 120 --seed 13") == 0);
  const vpp::TrainedModel model = vpp::load_checkpoint(dir.str("model") + "/checkpoint.json");
  CHECK(model.has_proposal());

  std::string out = dir.str("eval.log");
  REQUIRE(run("eval --checkpoint " + dir.str("model") + "/checkpoint.json --corpus " +
                  kCorpus + " --out " + dir.str("m") + " --xent --mpp-samples 20000",
              &out) == 0);
  const json metrics = json::parse(slurp(dir.str("m") + "/metrics.json"));
  CHECK(metrics["xent"]["finite"] == true);
  CHECK(metrics["xent"]["mpp_samples"] == 20000);
}
