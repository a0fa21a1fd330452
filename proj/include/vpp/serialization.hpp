#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "vpp/corpus.hpp"
#include "vpp/pointprocess.hpp"
#include "vpp/training.hpp"

namespace vpp {

nlohmann::json table_to_json(const VowelTable& table);
VowelTable table_from_json(const nlohmann::json& j);

// Checkpoint: family/embedding/potential tags, hyperparameters, the flat
// parameter vector (with log_T when trained), the MPP's companion proposal,
// and the vowel table snapshot the model was trained against. Round-trips
// exactly (doubles serialize shortest-exact).
nlohmann::json model_to_json(const TrainedModel& model);
TrainedModel model_from_json(const nlohmann::json& j);
void save_checkpoint(const TrainedModel& model, const std::string& path);
TrainedModel load_checkpoint(const std::string& path);

nlohmann::json train_config_to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j);

// Grid file: an array of blocks, each expanding the cartesian product of its
// list-valued fields:
//   [{"family": "dpp", "embedding": "neural", "r": [10, 50], "d": [0, 1, 2],
//     "lambda": [0, 1e-3]}]
// Scalars are allowed wherever a list is. Optimizer fields take defaults.
std::vector<TrainConfig> grid_from_json(const nlohmann::json& j);
std::vector<TrainConfig> load_grid_file(const std::string& path);

nlohmann::json cv_report_to_json(const CvReport& report);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace vpp
