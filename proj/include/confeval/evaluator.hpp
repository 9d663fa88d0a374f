#pragma once

#include "confeval/calibration.hpp"
#include "confeval/classifiers.hpp"
#include "confeval/dataset.hpp"
#include "confeval/ncm.hpp"
#include "confeval/pvalue.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace confeval {

enum class EvaluatorKind { Tce, ApproxTce, Ice, Cce };

EvaluatorKind evaluator_kind_from_name(std::string_view name);  // ConfigError
std::string evaluator_kind_name(EvaluatorKind k);

struct CalibrationOptions {
    std::uint64_t seed = 0;             // fold partition / shuffled ICE split
    std::size_t threads = 1;
    bool temporal_split = true;         // ICE: calibration set = newest examples
    bool search_thresholds = true;      // false leaves all thresholds at zero
    std::optional<double> grid_step;    // grid search instead of random search
    SearchSpec search;
};

// One scoring context: a fitted model, its NCM binding and frozen per-class
// pools (sorted ascending).
struct FoldState {
    ModelPtr model;
    NcmContextPtr context;
    std::vector<std::vector<double>> pools;
    RankNormalizer normalizer;            // raw-probability quality only
    std::optional<ThresholdSet> thresholds;  // CCE only
    std::optional<SearchResult> search;      // CCE only
};

struct Decision {
    std::string id;
    Label predicted = 0;
    double credibility = 0.0;
    double confidence = 0.0;
    bool kept = true;
    std::optional<std::size_t> s;  // CCE: folds that accepted
};

// Immutable after calibration; decide() is safe to call concurrently.
class CalibratedEvaluator {
public:
    CalibratedEvaluator() = default;

    bool calibrated() const noexcept { return !folds_.empty(); }
    EvaluatorKind kind() const noexcept { return kind_; }
    const LabelSpace& labels() const noexcept { return labels_; }
    std::size_t dimensionality() const noexcept { return dimensionality_; }
    const std::string& ncm_name() const noexcept { return ncm_name_; }
    QualityMetric quality() const noexcept { return quality_; }
    std::uint64_t seed() const noexcept { return seed_; }
    const std::vector<FoldState>& folds() const noexcept { return folds_; }
    // Non-CCE kinds: the global thresholds. CCE: unset.
    const std::optional<ThresholdSet>& thresholds() const noexcept { return thresholds_; }
    const std::optional<SearchResult>& search() const noexcept { return search_; }
    std::size_t quorum() const noexcept { return quorum_; }
    // Calibration p-value records in fold order (not persisted).
    const std::vector<PValueRecord>& records() const noexcept { return records_; }

    // Test-time record: p-values (or normalized raw scores for the
    // raw-probability quality) of z. CCE averages the folds' vectors and
    // reports the majority prediction.
    PValueRecord score(const Example& z) const;
    Decision decide(const Example& z) const;
    std::vector<Decision> decide_all(const Dataset& d, std::size_t threads = 1) const;

    // Copy with different thresholds / quorum (used to replay decisions).
    CalibratedEvaluator with_thresholds(ThresholdSet t) const;
    CalibratedEvaluator with_quorum(std::size_t quorum) const;

    nlohmann::json to_json() const;
    static CalibratedEvaluator from_json(const nlohmann::json& j);
    void save(const std::filesystem::path& path) const;
    static CalibratedEvaluator load(const std::filesystem::path& path);

private:
    friend struct EvaluatorBuilder;

    void check_input(const Example& z) const;
    // Quality vector of z under one fold (p-values or normalized raw scores).
    std::vector<double> fold_quality(const FoldState& f, const Example& z, Label& predicted,
                                     std::vector<double>& raw) const;

    EvaluatorKind kind_ = EvaluatorKind::Ice;
    LabelSpace labels_;
    std::size_t dimensionality_ = 0;
    std::string ncm_name_;
    nlohmann::json ncm_options_ = nlohmann::json::object();
    QualityMetric quality_ = QualityMetric::Credibility;
    std::uint64_t seed_ = 0;
    std::vector<FoldState> folds_;
    std::optional<ThresholdSet> thresholds_;
    std::optional<SearchResult> search_;
    std::size_t quorum_ = 0;
    std::vector<PValueRecord> records_;
};

inline constexpr std::string_view kStateFormat = "confeval-evaluator";
inline constexpr int kStateVersion = 1;

// k folds of sizes n/k + (j < n % k) from a seeded shuffle; members of
// each fold are sorted ascending.
std::vector<std::vector<std::size_t>> partition_folds(std::size_t n, std::size_t k, std::uint64_t seed);

// k = |train| is vanilla TCE, smaller k the approximate variant.
CalibratedEvaluator calibrate_tce(const Dataset& train, const NcmPtr& ncm, const ModelFactory& factory, std::size_t k,
                                  const CalibrationOptions& options = {});
CalibratedEvaluator calibrate_ice(const Dataset& train, const NcmPtr& ncm, const ModelFactory& factory,
                                  double calibration_fraction, const CalibrationOptions& options = {});
// quorum 0 means strict majority, k / 2 + 1.
CalibratedEvaluator calibrate_cce(const Dataset& train, const NcmPtr& ncm, const ModelFactory& factory, std::size_t k,
                                  std::size_t quorum = 0, const CalibrationOptions& options = {});

// Splits used by calibrate_ice: {proper training positions, calibration positions}.
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> ice_split(const Dataset& train, double fraction,
                                                                        bool temporal, std::uint64_t seed);

std::string format_decisions_csv(std::span<const Decision> decisions, const LabelSpace& labels);

}  // namespace confeval
