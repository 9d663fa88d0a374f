#pragma once

#include "confeval/calibration.hpp"
#include "confeval/classifiers.hpp"
#include "confeval/dataset.hpp"
#include "confeval/drift.hpp"
#include "confeval/evaluator.hpp"
#include "confeval/ncm.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include <json.hpp>

namespace confeval::cli {

struct RunConfig {
    std::filesystem::path base_dir;  // relative paths resolve against this

    std::optional<std::filesystem::path> data_path;
    std::string data_format = "dense-csv";  // dense-csv | sparse
    std::optional<std::int64_t> train_end;
    std::optional<std::int64_t> period_length;

    std::string classifier = "nearest-centroid";  // nearest-centroid | knn | linear-svm | external
    std::size_t knn_k = 5;
    LinearSvmParams svm;
    std::optional<std::filesystem::path> scores_path;
    std::optional<std::filesystem::path> votes_path;

    std::string ncm = "centroid";  // default follows the classifier
    NcmOptions ncm_options;

    EvaluatorKind kind = EvaluatorKind::Ice;
    std::size_t folds = 10;
    double calibration_fraction = 0.3;
    std::size_t quorum = 0;
    bool temporal_split = true;
    std::optional<double> grid_step;
    SearchSpec search;
    std::size_t threads = 1;

    std::optional<DriftConfig> simulate;

    std::optional<std::uint64_t> seed;
};

RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

// Sub-seeds fanned out from the run seed.
std::uint64_t partition_seed(const RunConfig& cfg);
std::uint64_t training_seed(const RunConfig& cfg);
std::uint64_t search_seed(const RunConfig& cfg);

ModelFactory make_factory(const RunConfig& cfg, const LabelSpace& labels);
Dataset load_data(const RunConfig& cfg);
TemporalSplit split_data(const RunConfig& cfg, const Dataset& d);
CalibratedEvaluator calibrate(const RunConfig& cfg, const Dataset& train);

void cmd_calibrate(const RunConfig& cfg, const std::filesystem::path& out_dir);
// Returns false when metrics were skipped because test labels are missing.
bool cmd_evaluate(const RunConfig& cfg, const std::filesystem::path& state_path, const std::filesystem::path& out_dir,
                  std::ostream& warn);
void cmd_simulate(const RunConfig& cfg, const std::filesystem::path& out_dir);
void cmd_assess(const std::filesystem::path& records_path, const std::filesystem::path& out_dir,
                bool label_conditional);

// Entry point: 0 success, 1 configuration error, 2 runtime or data error.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace confeval::cli
