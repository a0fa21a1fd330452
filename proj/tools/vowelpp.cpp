#include <CLI11.hpp>
#include <Eigen/Core>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "vpp/baseline_energy.hpp"
#include "vpp/corpus.hpp"
#include "vpp/errors.hpp"
#include "vpp/evaluation.hpp"
#include "vpp/inference.hpp"
#include "vpp/rng.hpp"
#include "vpp/serialization.hpp"
#include "vpp/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumerical = 3;

std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

void write_manifest(const std::string& out_dir, const std::string& command,
                    const json& config) {
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx",
                static_cast<unsigned long long>(fnv1a64(config.dump())));
  const json manifest{{"command", command}, {"config", config}, {"config_hash", hex}};
  vpp::write_text_file(out_dir + "/manifest.json", manifest.dump(2) + "\n");
}

struct LoadedCorpus {
  std::vector<vpp::InventoryListing> listings;  // deduplicated
  vpp::VowelTable table;
  std::vector<vpp::Inventory> inventories;
};

// One listing per language, table built from the deduplicated corpus with
// features preprocessed.
LoadedCorpus load_corpus(const std::string& path, std::uint64_t seed) {
  LoadedCorpus corpus;
  corpus.listings = vpp::dedupe_languages(vpp::parse_corpus_file(path),
                                          vpp::split_seed(seed, 900));
  corpus.table = vpp::build_vowel_table(corpus.listings);
  vpp::preprocess_features(corpus.table);
  corpus.inventories = vpp::to_inventories(corpus.listings, corpus.table);
  return corpus;
}

std::vector<vpp::Inventory> select_fold(const std::vector<vpp::Inventory>& inventories,
                                        int num_folds, int test_fold, std::uint64_t seed) {
  if (test_fold < 0 || test_fold >= num_folds) {
    throw vpp::ConfigError("--test-fold must lie in [0, --folds)");
  }
  const vpp::FoldAssignment folds =
      vpp::make_folds(inventories, num_folds, vpp::split_seed(seed, 0));
  std::vector<vpp::Inventory> out;
  for (const auto& inv : inventories) {
    if (folds.fold_of_language.at(inv.language_id) == test_fold) out.push_back(inv);
  }
  return out;
}

std::vector<std::string> symbols_of(const vpp::VowelTable& table,
                                    const std::vector<int>& subset) {
  std::vector<std::string> out;
  for (int i : subset) out.push_back(table.symbols[i]);
  return out;
}

int cmd_ingest(const std::string& corpus_path, const std::string& out_dir,
               std::uint64_t seed) {
  fs::create_directories(out_dir);
  const LoadedCorpus corpus = load_corpus(corpus_path, seed);
  const int n_lang = static_cast<int>(corpus.inventories.size());

  vpp::write_text_file(out_dir + "/vowel_table.tsv", vpp::vowel_table_tsv(corpus.table));

  // per-vowel frequency: percentage of inventories containing each symbol
  std::string freq = "symbol\tpercent\n";
  for (int i = 0; i < corpus.table.size(); ++i) {
    int count = 0;
    for (const auto& inv : corpus.inventories) {
      if (std::binary_search(inv.vowels.begin(), inv.vowels.end(), i)) ++count;
    }
    freq += corpus.table.symbols[i] + '\t' +
            std::to_string(100.0 * count / std::max(1, n_lang)) + '\n';
  }
  vpp::write_text_file(out_dir + "/vowel_frequency.tsv", freq);

  std::map<int, int> histogram;
  double size_sum = 0.0;
  int size_min = 0, size_max = 0;
  for (const auto& inv : corpus.inventories) {
    const int s = static_cast<int>(inv.vowels.size());
    histogram[s] += 1;
    size_sum += s;
    size_min = size_min == 0 ? s : std::min(size_min, s);
    size_max = std::max(size_max, s);
  }
  int mode = 0, mode_count = -1;
  std::string hist_tsv = "size\tcount\n";
  for (const auto& [size, count] : histogram) {
    hist_tsv += std::to_string(size) + '\t' + std::to_string(count) + '\n';
    if (count > mode_count) {
      mode = size;
      mode_count = count;
    }
  }
  vpp::write_text_file(out_dir + "/size_histogram.tsv", hist_tsv);

  const json stats{{"languages", n_lang},
                   {"symbols", corpus.table.size()},
                   {"size_min", size_min},
                   {"size_max", size_max},
                   {"size_mean", n_lang > 0 ? size_sum / n_lang : 0.0},
                   {"size_mode", mode}};
  vpp::write_text_file(out_dir + "/stats.json", stats.dump(2) + "\n");
  write_manifest(out_dir, "ingest",
                 json{{"corpus", corpus_path}, {"seed", seed}});

  std::cout << "ingested " << n_lang << " languages over " << corpus.table.size()
            << " vowel symbols (sizes " << size_min << ".." << size_max << ", mean "
            << (n_lang > 0 ? size_sum / n_lang : 0.0) << ", mode " << mode << ")\n";
  return 0;
}

int cmd_train(const std::string& corpus_path, const std::string& out_dir,
              vpp::TrainConfig config, const std::string& potential) {
  fs::create_directories(out_dir);
  const LoadedCorpus corpus = load_corpus(corpus_path, config.seed);

  if (config.model.embedding.kind == vpp::EmbeddingKind::Tabular) {
    config.model.embedding.n_vowels = corpus.table.size();
  }
  if (potential == "auto") {
    config.model.potential =
        (config.model.embedding.kind == vpp::EmbeddingKind::Prototype &&
         config.model.family != vpp::Family::DPP)
            ? vpp::PotentialKind::Mixture
            : vpp::PotentialKind::Norm;
  } else {
    config.model.potential = vpp::potential_kind_from_name(potential);
  }
  if (config.model.embedding.kind == vpp::EmbeddingKind::Interpretable) {
    config.model.embedding.r = config.model.embedding.k;
  }
  config.validate();

  std::vector<double> trace;
  const vpp::TrainedModel model = vpp::fit(config, corpus.inventories, corpus.table, &trace);

  vpp::save_checkpoint(model, out_dir + "/checkpoint.json");
  std::string log = "iteration\tobjective\n";
  for (std::size_t i = 0; i < trace.size(); ++i) {
    char line[64];
    std::snprintf(line, sizeof(line), "%zu\t%.17g\n", i, trace[i]);
    log += line;
  }
  vpp::write_text_file(out_dir + "/training_log.tsv", log);
  write_manifest(out_dir, "train",
                 json{{"corpus", corpus_path},
                      {"config", vpp::train_config_to_json(config)},
                      {"seed", config.seed}});

  std::cout << "trained " << vpp::family_name(config.model.family) << "/"
            << vpp::embedding_kind_name(config.model.embedding.kind) << " on "
            << corpus.inventories.size() << " languages; objective "
            << (trace.empty() ? 0.0 : trace.back()) << " after " << trace.size() - 1
            << " accepted steps\n";
  return 0;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& corpus_path,
             const std::string& out_dir, bool want_xent,
             const std::vector<std::string>& cloze_variants, const std::vector<int>& map_sizes,
             long long mpp_samples, std::uint64_t seed, int num_folds, int test_fold,
             int cloze_reps) {
  fs::create_directories(out_dir);
  const vpp::TrainedModel model = vpp::load_checkpoint(checkpoint_path);

  // inventories mapped onto the checkpoint's table snapshot; an unknown
  // symbol means the corpus does not match the model
  const auto listings = vpp::dedupe_languages(vpp::parse_corpus_file(corpus_path),
                                              vpp::split_seed(seed, 900));
  std::vector<vpp::Inventory> inventories;
  try {
    inventories = vpp::to_inventories(listings, model.table);
  } catch (const vpp::DataError& e) {
    throw vpp::DataError(std::string("corpus does not match the checkpoint's table: ") +
                         e.what());
  }
  if (num_folds > 0) {
    inventories = select_fold(inventories, num_folds, test_fold, seed);
  }

  json metrics;
  metrics["languages"] = inventories.size();

  if (want_xent) {
    std::optional<vpp::MppEvalConfig> mpp;
    if (model.config.family == vpp::Family::MPP) {
      mpp = vpp::MppEvalConfig{mpp_samples, vpp::split_seed(seed, 10)};
    }
    const vpp::CrossEntropyReport report = vpp::cross_entropy(model, inventories, mpp);
    json per_language = json::array();
    for (const auto& [lang, nats] : report.per_language) {
      per_language.push_back({{"language", lang},
                              {"nats", std::isfinite(nats) ? json(nats) : json()}});
    }
    metrics["xent"] = {{"mean_nats", report.finite() ? json(report.mean_nats) : json()},
                       {"finite", report.finite()},
                       {"infinite_languages", report.infinite_languages},
                       {"per_language", std::move(per_language)},
                       {"mpp_samples", report.mpp_samples_used}};
    if (report.finite()) {
      std::cout << "cross-entropy: " << report.mean_nats << " nats over "
                << inventories.size() << " languages\n";
    } else {
      std::cout << "cross-entropy: infinite (" << report.infinite_languages.size()
                << " zero-probability languages)\n";
    }
  }

  int variant_index = 0;
  for (const std::string& name : cloze_variants) {
    const vpp::ClozeVariant variant = vpp::cloze_variant_from_name(name);
    std::vector<std::string> warnings;
    const auto instances = vpp::make_cloze_instances(
        inventories, variant, vpp::split_seed(seed, 20 + variant_index++), cloze_reps,
        &warnings);
    for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";

    json rows = json::array();
    long long correct = 0;
    for (const auto& inst : instances) {
      const std::vector<int> predicted =
          vpp::cloze_predict(model, inst.observed, inst.variant);
      const bool hit = predicted == inst.hidden;
      correct += hit;
      rows.push_back({{"language", inst.language_id},
                      {"observed", symbols_of(model.table, inst.observed)},
                      {"hidden", symbols_of(model.table, inst.hidden)},
                      {"predicted", symbols_of(model.table, predicted)},
                      {"correct", hit}});
    }
    const double accuracy =
        instances.empty() ? 0.0 : 100.0 * correct / static_cast<double>(instances.size());
    metrics["cloze"][name] = {{"accuracy", accuracy},
                              {"instances", std::move(rows)},
                              {"skipped", warnings.size()}};
    std::cout << "cloze-" << name << ": " << accuracy << "% over " << instances.size()
              << " instances\n";
  }

  for (int n : map_sizes) {
    const std::vector<int> best = vpp::map_inventory(model, n);
    const auto symbols = symbols_of(model.table, best);
    metrics["map"][std::to_string(n)] = symbols;
    std::cout << "map-" << n << ": {";
    for (std::size_t i = 0; i < symbols.size(); ++i) {
      std::cout << (i ? ", " : "") << symbols[i];
    }
    std::cout << "}\n";
  }

  vpp::write_text_file(out_dir + "/metrics.json", metrics.dump(2) + "\n");
  write_manifest(out_dir, "eval",
                 json{{"checkpoint", checkpoint_path},
                      {"corpus", corpus_path},
                      {"xent", want_xent},
                      {"cloze", cloze_variants},
                      {"map_n", map_sizes},
                      {"mpp_samples", mpp_samples},
                      {"folds", num_folds},
                      {"test_fold", test_fold},
                      {"cloze_reps", cloze_reps},
                      {"seed", seed}});
  return 0;
}

int cmd_cv(const std::string& corpus_path, const std::string& grid_path,
           const std::string& out_dir, int num_folds, std::uint64_t seed,
           const std::string& metric_str, int jobs) {
  fs::create_directories(out_dir);
  const vpp::Metric metric = vpp::metric_from_name(metric_str);
  const LoadedCorpus corpus = load_corpus(corpus_path, seed);

  std::vector<vpp::TrainConfig> grid = vpp::load_grid_file(grid_path);
  for (auto& config : grid) {
    if (config.model.embedding.kind == vpp::EmbeddingKind::Tabular) {
      config.model.embedding.n_vowels = corpus.table.size();
    }
    if (config.model.embedding.kind == vpp::EmbeddingKind::Interpretable) {
      config.model.embedding.r = config.model.embedding.k;
    }
  }

  const vpp::CvReport report = vpp::cross_validate(corpus.inventories, corpus.table, grid,
                                                   num_folds, seed, metric, jobs);
  vpp::write_text_file(out_dir + "/cv_report.json",
                       vpp::cv_report_to_json(report).dump(2) + "\n");
  write_manifest(out_dir, "cv",
                 json{{"corpus", corpus_path},
                      {"grid", grid_path},
                      {"k", num_folds},
                      {"metric", metric_str},
                      {"jobs", jobs},
                      {"seed", seed}});

  std::cout << "cross-validation (" << metric_str << ", " << num_folds << " folds): mean "
            << report.mean_test_metric << "\n";
  for (const auto& row : report.folds) {
    std::cout << "  fold " << row.fold << ": dev " << row.dev_metric << ", test "
              << row.test_metric << " ("
              << vpp::family_name(row.selected.model.family) << "/"
              << vpp::embedding_kind_name(row.selected.model.embedding.kind) << " r="
              << row.selected.model.embedding.r << " d=" << row.selected.model.embedding.d
              << " lambda=" << row.selected.lambda << ")\n";
  }
  return 0;
}

int cmd_viz(const std::string& checkpoint_path, const std::string& out_path, int nx, int ny,
            bool allow_reflection) {
  const vpp::TrainedModel model = vpp::load_checkpoint(checkpoint_path);
  vpp::write_text_file(out_path, vpp::export_metric_space(model, nx, ny, allow_reflection));
  std::cout << "wrote " << out_path << " (" << nx << "x" << ny << " grid + "
            << model.universe_size() << " vowels)\n";
  return 0;
}

int cmd_baseline(int m, int restarts, std::uint64_t seed, int dim, double lower, double upper,
                 const std::string& out_dir) {
  fs::create_directories(out_dir);
  vpp::EnergyConfig config;
  config.num_points = m;
  config.restarts = restarts;
  config.seed = seed;
  config.lower = Eigen::VectorXd::Constant(dim, lower);
  config.upper = Eigen::VectorXd::Constant(dim, upper);

  const std::vector<vpp::EnergyRun> runs = vpp::minimize_energy(config);
  json results = json::array();
  for (const auto& run : runs) {
    json points = json::array();
    for (int i = 0; i < run.points.cols(); ++i) {
      json point = json::array();
      for (int c = 0; c < run.points.rows(); ++c) point.push_back(run.points(c, i));
      points.push_back(std::move(point));
    }
    results.push_back(
        {{"energy", run.energy}, {"sweeps", run.sweeps}, {"points", std::move(points)}});
  }
  vpp::write_text_file(out_dir + "/baseline.json", results.dump(2) + "\n");
  write_manifest(out_dir, "baseline",
                 json{{"m", m},
                      {"restarts", restarts},
                      {"dim", dim},
                      {"lower", lower},
                      {"upper", upper},
                      {"seed", seed}});
  std::cout << "best energy for m=" << m << ": " << runs.front().energy << " over "
            << restarts << " restarts\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"point-process models of vowel inventories"};
  app.require_subcommand(1);

  // ingest
  auto* ingest = app.add_subcommand("ingest", "parse a corpus and export table + statistics");
  std::string in_corpus, in_out;
  std::uint64_t in_seed = 1;
  ingest->add_option("--corpus", in_corpus, "JSON-lines corpus")->required();
  ingest->add_option("--out", in_out, "output directory")->required();
  ingest->add_option("--seed", in_seed, "seed (duplicate-listing choice)");

  // train
  auto* train = app.add_subcommand("train", "fit one model and write a checkpoint");
  std::string tr_corpus, tr_out, tr_family = "bpp", tr_embedding = "tabular";
  std::string tr_potential = "auto";
  vpp::TrainConfig tr_config;
  train->add_option("--corpus", tr_corpus, "JSON-lines corpus")->required();
  train->add_option("--out", tr_out, "output directory")->required();
  train->add_option("--family", tr_family, "bpp | mpp | dpp");
  train->add_option("--embedding", tr_embedding,
                    "tabular | neural | interpretable | prototype");
  train->add_option("--potential", tr_potential, "norm | mixture | auto");
  train->add_option("--r", tr_config.model.embedding.r, "embedding dimension / prototypes");
  train->add_option("--d", tr_config.model.embedding.d, "network depth");
  train->add_option("--lambda", tr_config.lambda, "L2 coefficient");
  train->add_option("--seed", tr_config.seed, "seed");
  train->add_option("--mpp-samples", tr_config.mpp_surrogate_samples,
                    "surrogate sample count (MPP)");
  train->add_option("--max-iters", tr_config.optimizer.max_iterations, "optimizer cap");
  train->add_option("--grad-tol", tr_config.optimizer.grad_tol, "gradient tolerance");

  // eval
  auto* eval = app.add_subcommand("eval", "score a checkpoint on a corpus");
  std::string ev_checkpoint, ev_corpus, ev_out;
  bool ev_xent = false;
  std::vector<std::string> ev_cloze;
  std::vector<int> ev_map;
  long long ev_mpp_samples = 100000;
  std::uint64_t ev_seed = 1;
  int ev_folds = 0, ev_test_fold = 0, ev_cloze_reps = 1;
  eval->add_option("--checkpoint", ev_checkpoint, "model checkpoint")->required();
  eval->add_option("--corpus", ev_corpus, "JSON-lines corpus")->required();
  eval->add_option("--out", ev_out, "output directory")->required();
  eval->add_flag("--xent", ev_xent, "report cross-entropy in nats");
  eval->add_option("--cloze", ev_cloze, "cloze variants: 1, 01, 012");
  eval->add_option("--map-n", ev_map, "decode the best inventory of this size");
  eval->add_option("--mpp-samples", ev_mpp_samples, "importance samples (MPP)");
  eval->add_option("--seed", ev_seed, "seed");
  eval->add_option("--folds", ev_folds, "restrict to one fold of a K-fold split");
  eval->add_option("--test-fold", ev_test_fold, "which fold to evaluate");
  eval->add_option("--cloze-reps", ev_cloze_reps, "cloze repetitions per language");

  // cv
  auto* cv = app.add_subcommand("cv", "K-fold cross-validation with grid search");
  std::string cv_corpus, cv_grid, cv_out, cv_metric = "xent";
  int cv_k = 10, cv_jobs = 1;
  std::uint64_t cv_seed = 1;
  cv->add_option("--corpus", cv_corpus, "JSON-lines corpus")->required();
  cv->add_option("--grid", cv_grid, "grid file (JSON)")->required();
  cv->add_option("--out", cv_out, "output directory")->required();
  cv->add_option("--k", cv_k, "fold count");
  cv->add_option("--seed", cv_seed, "seed");
  cv->add_option("--metric", cv_metric, "xent | cloze1 | cloze01 | cloze012");
  cv->add_option("--jobs", cv_jobs, "parallel grid workers");

  // viz
  auto* viz = app.add_subcommand("viz", "export the metric-space alignment as TSV");
  std::string vz_checkpoint, vz_out;
  int vz_nx = 20, vz_ny = 20;
  bool vz_reflect = false;
  viz->add_option("--checkpoint", vz_checkpoint, "model checkpoint")->required();
  viz->add_option("--out", vz_out, "output TSV path")->required();
  viz->add_option("--nx", vz_nx, "grid nodes along x");
  viz->add_option("--ny", vz_ny, "grid nodes along y");
  viz->add_flag("--allow-reflection", vz_reflect, "permit reflections in the alignment");

  // baseline
  auto* baseline = app.add_subcommand("baseline", "dispersion-only energy minimization");
  int bl_m = 3, bl_restarts = 10, bl_dim = 2;
  double bl_lower = 0.0, bl_upper = 1.0;
  std::uint64_t bl_seed = 1;
  std::string bl_out;
  baseline->add_option("--m", bl_m, "number of points")->required();
  baseline->add_option("--out", bl_out, "output directory")->required();
  baseline->add_option("--restarts", bl_restarts, "random restarts");
  baseline->add_option("--dim", bl_dim, "space dimension");
  baseline->add_option("--lower", bl_lower, "box lower bound (all coordinates)");
  baseline->add_option("--upper", bl_upper, "box upper bound (all coordinates)");
  baseline->add_option("--seed", bl_seed, "seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (app.got_subcommand(ingest)) return cmd_ingest(in_corpus, in_out, in_seed);
    if (app.got_subcommand(train)) {
      tr_config.model.family = vpp::family_from_name(tr_family);
      tr_config.model.embedding.kind = vpp::embedding_kind_from_name(tr_embedding);
      return cmd_train(tr_corpus, tr_out, tr_config, tr_potential);
    }
    if (app.got_subcommand(eval)) {
      return cmd_eval(ev_checkpoint, ev_corpus, ev_out, ev_xent, ev_cloze, ev_map,
                      ev_mpp_samples, ev_seed, ev_folds, ev_test_fold, ev_cloze_reps);
    }
    if (app.got_subcommand(cv)) {
      return cmd_cv(cv_corpus, cv_grid, cv_out, cv_k, cv_seed, cv_metric, cv_jobs);
    }
    if (app.got_subcommand(viz)) {
      return cmd_viz(vz_checkpoint, vz_out, vz_nx, vz_ny, vz_reflect);
    }
    if (app.got_subcommand(baseline)) {
      return cmd_baseline(bl_m, bl_restarts, bl_seed, bl_dim, bl_lower, bl_upper, bl_out);
    }
  } catch (const vpp::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const vpp::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const vpp::DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const vpp::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
  return kExitUsage;
}
