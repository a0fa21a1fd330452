#include "vpp/serialization.hpp"

#include <fstream>
#include <sstream>

#include "vpp/errors.hpp"

namespace vpp {

using nlohmann::json;

namespace {

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (int r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (int c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  if (!j.is_array()) throw ParseError("expected a matrix (array of arrays)");
  const int rows = static_cast<int>(j.size());
  if (rows == 0) return {};
  const int cols = static_cast<int>(j[0].size());
  Eigen::MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    if (static_cast<int>(j[r].size()) != cols) throw ParseError("ragged matrix rows");
    for (int c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

json vector_to_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (int i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

Eigen::VectorXd vector_from_json(const json& j) {
  Eigen::VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<int>(i)) = j[i].get<double>();
  return v;
}

}  // namespace

json table_to_json(const VowelTable& table) {
  return json{{"symbols", table.symbols},
              {"mean_formants", matrix_to_json(table.mean_formants)},
              {"features", matrix_to_json(table.features)}};
}

VowelTable table_from_json(const json& j) {
  VowelTable table;
  table.symbols = j.at("symbols").get<std::vector<std::string>>();
  table.mean_formants = matrix_from_json(j.at("mean_formants"));
  table.features = matrix_from_json(j.at("features"));
  return table;
}

json model_to_json(const TrainedModel& model) {
  json layout = json::array();
  for (const ParamSegment& s : model_layout(model.config).segments) {
    layout.push_back({{"name", s.name}, {"rows", s.rows}, {"cols", s.cols}});
  }
  json j{{"family", family_name(model.config.family)},
         {"embedding", embedding_kind_name(model.config.embedding.kind)},
         {"potential", potential_kind_name(model.config.potential)},
         {"k", model.config.embedding.k},
         {"r", model.config.embedding.r},
         {"d", model.config.embedding.d},
         {"layout", std::move(layout)},
         {"params", vector_to_json(model.params)},
         {"table", table_to_json(model.table)}};
  if (model.has_proposal()) j["proposal_params"] = vector_to_json(model.proposal_params);
  return j;
}

TrainedModel model_from_json(const json& j) {
  TrainedModel model;
  model.config.family = family_from_name(j.at("family").get<std::string>());
  model.config.embedding.kind = embedding_kind_from_name(j.at("embedding").get<std::string>());
  model.config.potential = potential_kind_from_name(j.at("potential").get<std::string>());
  model.config.embedding.k = j.at("k").get<int>();
  model.config.embedding.r = j.at("r").get<int>();
  model.config.embedding.d = j.at("d").get<int>();
  model.table = table_from_json(j.at("table"));
  model.config.embedding.n_vowels =
      model.config.embedding.kind == EmbeddingKind::Tabular ? model.table.size() : 0;
  model.params = vector_from_json(j.at("params"));
  if (j.contains("proposal_params")) {
    model.proposal_params = vector_from_json(j.at("proposal_params"));
  }
  if (j.contains("layout")) {
    // the stored descriptor must agree with the layout the tags derive
    const ParamLayout layout = model_layout(model.config);
    const json& stored = j["layout"];
    if (stored.size() != layout.segments.size()) {
      throw ParseError("checkpoint layout does not match its model tags");
    }
    for (std::size_t i = 0; i < stored.size(); ++i) {
      const ParamSegment& s = layout.segments[i];
      if (stored[i].at("name") != s.name || stored[i].at("rows") != s.rows ||
          stored[i].at("cols") != s.cols) {
        throw ParseError("checkpoint layout does not match its model tags");
      }
    }
  }
  model.rebuild_cache();
  return model;
}

void save_checkpoint(const TrainedModel& model, const std::string& path) {
  write_text_file(path, model_to_json(model).dump(2) + "\n");
}

TrainedModel load_checkpoint(const std::string& path) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw ParseError("checkpoint " + path + ": " + e.what());
  }
  return model_from_json(j);
}

json train_config_to_json(const TrainConfig& config) {
  return json{{"family", family_name(config.model.family)},
              {"embedding", embedding_kind_name(config.model.embedding.kind)},
              {"potential", potential_kind_name(config.model.potential)},
              {"k", config.model.embedding.k},
              {"r", config.model.embedding.r},
              {"d", config.model.embedding.d},
              {"lambda", config.lambda},
              {"mpp_surrogate_samples", config.mpp_surrogate_samples},
              {"seed", config.seed},
              {"optimizer",
               {{"memory", config.optimizer.memory},
                {"grad_tol", config.optimizer.grad_tol},
                {"max_iterations", config.optimizer.max_iterations}}}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig config;
  config.model.family = family_from_name(j.at("family").get<std::string>());
  config.model.embedding.kind =
      embedding_kind_from_name(j.at("embedding").get<std::string>());
  if (j.contains("potential")) {
    config.model.potential = potential_kind_from_name(j.at("potential").get<std::string>());
  } else if (config.model.embedding.kind == EmbeddingKind::Prototype &&
             config.model.family != Family::DPP) {
    config.model.potential = PotentialKind::Mixture;
  }
  config.model.embedding.k = j.value("k", 2);
  config.model.embedding.r = j.value("r", config.model.embedding.k);
  config.model.embedding.d = j.value("d", 0);
  config.model.embedding.n_vowels = j.value("n_vowels", 0);
  config.lambda = j.value("lambda", 0.0);
  config.mpp_surrogate_samples = j.value("mpp_surrogate_samples", 10000LL);
  config.seed = j.value("seed", std::uint64_t{1});
  if (j.contains("optimizer")) {
    const json& o = j["optimizer"];
    config.optimizer.memory = o.value("memory", 10);
    config.optimizer.grad_tol = o.value("grad_tol", 1e-6);
    config.optimizer.max_iterations = o.value("max_iterations", 500);
  }
  return config;
}

std::vector<TrainConfig> grid_from_json(const json& j) {
  if (!j.is_array()) throw ParseError("grid file must be an array of blocks");

  auto as_list = [](const json& node) {
    return node.is_array() ? node : json::array({node});
  };

  std::vector<TrainConfig> grid;
  for (const auto& block : j) {
    json base = block;
    const json rs = block.contains("r") ? as_list(block["r"]) : json::array({2});
    const json ds = block.contains("d") ? as_list(block["d"]) : json::array({0});
    const json lambdas =
        block.contains("lambda") ? as_list(block["lambda"]) : json::array({0.0});
    for (const auto& r : rs) {
      for (const auto& d : ds) {
        for (const auto& lambda : lambdas) {
          base["r"] = r;
          base["d"] = d;
          base["lambda"] = lambda;
          grid.push_back(train_config_from_json(base));
        }
      }
    }
  }
  if (grid.empty()) throw ParseError("grid file expands to zero configurations");
  return grid;
}

std::vector<TrainConfig> load_grid_file(const std::string& path) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw ParseError("grid file " + path + ": " + e.what());
  }
  return grid_from_json(j);
}

json cv_report_to_json(const CvReport& report) {
  json folds = json::array();
  for (const auto& row : report.folds) {
    folds.push_back({{"fold", row.fold},
                     {"selected", train_config_to_json(row.selected)},
                     {"dev_metric", row.dev_metric},
                     {"test_metric", row.test_metric}});
  }
  return json{{"metric", metric_name(report.metric)},
              {"num_folds", report.num_folds},
              {"seed", report.seed},
              {"folds", std::move(folds)},
              {"mean_test_metric", report.mean_test_metric}};
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write file: " + path);
  out << content;
  if (!out) throw DataError("write failed: " + path);
}

}  // namespace vpp
